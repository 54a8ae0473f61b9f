#pragma once

#include <span>
#include <vector>

#include "kgverify/corpus.hpp"
#include "kgverify/kb.hpp"

namespace kgv {

/// Window extension, in tokens, on each side of a predicted span.
struct AlphaConfig {
  int alpha = 2;
};

/// A window sub-span that passed the KB check, with the knowledge found.
struct CandidateSpan {
  TokenSpan span;
  std::string surface;
  KnowledgeEntry knowledge;
};

/// Every contiguous (b, e) inside [beg - alpha, end + alpha], clipped to the
/// document, that shares at least one token with `original`. Ordered by
/// (b, e).
std::vector<TokenSpan> enumerate_spans(const Document& doc, TokenSpan original, AlphaConfig alpha);

/// Keeps the spans whose surface is a KB key, in input order.
std::vector<CandidateSpan> prune_by_kb(const Document& doc, std::span<const TokenSpan> spans,
                                       const KbIndex& kb);

/// Candidates without KB filtering; knowledge carries only the surface.
std::vector<CandidateSpan> unpruned_candidates(const Document& doc, std::span<const TokenSpan> spans);

}  // namespace kgv
