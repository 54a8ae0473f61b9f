#include "kgverify/span_verify.hpp"

#include <algorithm>

#include "kgverify/error.hpp"

namespace kgv {

std::vector<TokenSpan> enumerate_spans(const Document& doc, TokenSpan original, AlphaConfig alpha) {
  if (alpha.alpha < 0) throw ConfigError("alpha must be non-negative");
  if (!doc.in_bounds(original)) throw IntegrityError("entity span out of bounds in '" + doc.doc_id + "'");
  const int lo = std::max(0, original.beg - alpha.alpha);
  const int hi = std::min(doc.size() - 1, original.end + alpha.alpha);
  std::vector<TokenSpan> out;
  for (int b = lo; b <= original.end; ++b) {
    // e must reach the original span and start no earlier than b.
    for (int e = std::max(b, original.beg); e <= hi; ++e) out.push_back({b, e});
  }
  return out;
}

std::vector<CandidateSpan> prune_by_kb(const Document& doc, std::span<const TokenSpan> spans,
                                       const KbIndex& kb) {
  std::vector<CandidateSpan> out;
  for (const auto& s : spans) {
    std::string surface = doc.surface(s);
    if (const KnowledgeEntry* k = kb.lookup(surface)) out.push_back({s, std::move(surface), *k});
  }
  return out;
}

std::vector<CandidateSpan> unpruned_candidates(const Document& doc, std::span<const TokenSpan> spans) {
  std::vector<CandidateSpan> out;
  for (const auto& s : spans) {
    std::string surface = doc.surface(s);
    KnowledgeEntry k{surface, {}, {}};
    out.push_back({s, std::move(surface), std::move(k)});
  }
  return out;
}

}  // namespace kgv
