#include "kgverify/context_verify.hpp"

#include <algorithm>
#include <map>
#include <regex>
#include <tuple>

#include "kgverify/error.hpp"
#include "text_util.hpp"

namespace kgv {

void ReasoningConfig::validate() const {
  if (n_paths < 1) throw ConfigError("number of reasoning paths must be at least 1");
  if (temperature < 0.0) throw ConfigError("temperature must be non-negative");
}

std::string_view to_string(PathStatus status) {
  switch (status) {
    case PathStatus::selected: return "selected";
    case PathStatus::none: return "none";
    case PathStatus::discarded: return "discarded";
  }
  return "discarded";
}

std::string_view to_string(DecisionReason reason) {
  switch (reason) {
    case DecisionReason::selected: return "selected";
    case DecisionReason::no_factual_candidate: return "no_factual_candidate";
    case DecisionReason::majority_none: return "majority_none";
    case DecisionReason::unparseable: return "unparseable";
    case DecisionReason::fallback_tiebreak: return "fallback_tiebreak";
    case DecisionReason::duplicate: return "duplicate";
  }
  return "selected";
}

int VoteTally::total() const {
  int sum = none_count + discarded;
  for (const auto& c : counts) sum += c.count;
  return sum;
}

ChatRequest render_context_prompt(const PromptTemplate& tpl, std::string_view context,
                                  std::span<const CandidatePair> pairs, const RequestSettings& settings,
                                  bool include_evidence) {
  if (pairs.empty()) throw ConfigError("context prompt needs at least one candidate pair");
  std::string block;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i) block += '\n';
    const auto& p = pairs[i];
    const std::string& second = include_evidence ? p.evidence.text : p.etype;
    block += "['" + p.candidate.surface + "', '" + second + "']";
  }
  const std::map<std::string, std::string> values{{"context", std::string(context)},
                                                  {"candidates_block", block}};
  for (const auto& ph : tpl.placeholders()) {
    if (!values.count(ph)) throw TemplateError(tpl.name() + ": {" + ph + "} is not available in a context prompt");
  }
  return ChatRequest::user(tpl.render(values), settings.temperature, settings.model);
}

namespace {

constexpr const char* kOpenQuote = "(?:'|`|\"|\xE2\x80\x98|\xE2\x80\x99|\xE2\x80\x9C|\xE2\x80\x9D)";

std::string strip_markup(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c != '\\' && c != '*') out.push_back(c);
  }
  return std::string(trim(out));
}

const CandidatePair* find_pair(std::span<const CandidatePair> pairs, std::string_view surface,
                               const std::string* etype) {
  const std::string key = normalize(surface, Normalization::lower_ws);
  for (const auto& p : pairs) {
    if (normalize(p.candidate.surface, Normalization::lower_ws) != key) continue;
    if (etype && p.etype != *etype) continue;
    return &p;
  }
  return nullptr;
}

}  // namespace

PathAnswer parse_path_answer(std::string_view response, std::span<const CandidatePair> pairs,
                             const TypeSet& types) {
  PathAnswer ans;
  ans.raw = std::string(response);
  const std::string text(response);

  static const std::regex kNone(R"(\(\s*none\s*,\s*none\s*\))", std::regex::icase);
  static const std::regex kQuoted(std::string(R"(\(\s*)") + kOpenQuote + R"(\s*(.+?)\s*)" + kOpenQuote +
                                  R"(\s*,\s*)" + kOpenQuote + R"(?\s*([A-Za-z][A-Za-z_\\ \-]*?)\s*)" +
                                  kOpenQuote + R"(?\s*\))");
  static const std::regex kBare(R"(\(\s*([^()'"`,\n]+?)\s*,\s*([A-Za-z][A-Za-z_\\ \-]*?)\s*\))");
  static const std::regex kAnswerIs(std::string(R"(answer(?: entity)? is\s*)") + kOpenQuote + R"((.+?))" +
                                    kOpenQuote, std::regex::icase);

  // Last well-typed tuple wins.
  std::ptrdiff_t best_pos = -1;
  bool best_none = false;
  std::string best_surface, best_type;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kNone); it != std::sregex_iterator(); ++it) {
    if (it->position() > best_pos) {
      best_pos = it->position();
      best_none = true;
    }
  }
  for (const auto* re : {&kQuoted, &kBare}) {
    for (auto it = std::sregex_iterator(text.begin(), text.end(), *re); it != std::sregex_iterator(); ++it) {
      auto label = types.canonical(strip_markup((*it)[2].str()));
      if (!label || it->position() < best_pos) continue;
      if (it->position() == best_pos && !best_none) continue;  // quoted form already taken here
      const std::string surface = strip_markup((*it)[1].str());
      if (types.is_none(*label) && ascii_lowercase(surface) == "none") {
        best_none = true;
      } else {
        best_none = false;
        best_surface = surface;
        best_type = *label;
      }
      best_pos = it->position();
    }
  }

  if (best_pos < 0) {
    // "the most appropriate answer entity is 'X'": take the pair's own type.
    std::smatch m, last;
    bool any = false;
    for (auto it = text.cbegin(); std::regex_search(it, text.cend(), m, kAnswerIs); it = m.suffix().first) {
      last = m;
      any = true;
    }
    if (any) {
      if (const CandidatePair* p = find_pair(pairs, strip_markup(last[1].str()), nullptr)) {
        ans.selection = Selection{p->candidate.surface, p->etype};
        ans.status = PathStatus::selected;
      }
    }
    return ans;
  }
  if (best_none) {
    ans.status = PathStatus::none;
    return ans;
  }
  if (const CandidatePair* p = find_pair(pairs, best_surface, &best_type)) {
    ans.selection = Selection{p->candidate.surface, p->etype};
    ans.status = PathStatus::selected;
  }
  return ans;
}

namespace {

// Larger is better: (overlap, -|length delta|, -beg, -end).
auto preference(TokenSpan candidate, TokenSpan original) {
  return std::make_tuple(overlap_tokens(candidate, original),
                         -std::abs(candidate.length() - original.length()), -candidate.beg, -candidate.end);
}

const CandidatePair* best_pair(std::span<const CandidatePair* const> options, TokenSpan original) {
  const CandidatePair* best = nullptr;
  for (const auto* p : options) {
    if (!best || preference(p->candidate.span, original) > preference(best->candidate.span, original)) best = p;
  }
  return best;
}

}  // namespace

RevisedEntity consistency_vote(std::span<const PathAnswer> answers, std::span<const CandidatePair> pairs,
                               const ReasoningConfig& config, const Entity& original) {
  RevisedEntity out;
  out.original = original;
  out.span = original.span;
  out.etype = original.etype;
  out.surface = original.surface;
  out.tally.n_paths = static_cast<int>(answers.size());

  // (normalized surface, etype) -> votes
  std::map<std::pair<std::string, std::string>, int> votes;
  std::map<std::pair<std::string, std::string>, std::string> display;
  for (const auto& a : answers) {
    if (a.status == PathStatus::none) {
      ++out.tally.none_count;
    } else if (a.status == PathStatus::selected && a.selection &&
               find_pair(pairs, a.selection->surface, &a.selection->etype)) {
      auto key = std::make_pair(normalize(a.selection->surface, Normalization::lower_ws), a.selection->etype);
      ++votes[key];
      display.emplace(key, find_pair(pairs, a.selection->surface, &a.selection->etype)->candidate.surface);
    } else {
      ++out.tally.discarded;
    }
  }
  for (const auto& [key, n] : votes) out.tally.counts.push_back({display[key], key.second, n});

  auto resolve = [&](const std::string& norm_surface, const std::string& etype) {
    std::vector<const CandidatePair*> options;
    for (const auto& p : pairs) {
      if (p.etype == etype && normalize(p.candidate.surface, Normalization::lower_ws) == norm_surface) {
        options.push_back(&p);
      }
    }
    return best_pair(options, original.span);
  };

  int max_count = 0;
  for (const auto& [key, n] : votes) max_count = std::max(max_count, n);

  const CandidatePair* winner = nullptr;
  if (max_count > 0) {
    std::vector<const CandidatePair*> tied;
    for (const auto& [key, n] : votes) {
      if (n == max_count) tied.push_back(resolve(key.first, key.second));
    }
    winner = best_pair(tied, original.span);
  }

  if (config.allow_none && out.tally.none_count > max_count) {
    out.removed = true;
    out.reason = DecisionReason::majority_none;
    return out;
  }
  if (!winner) {
    if (!config.allow_none && out.tally.none_count > 0 && !pairs.empty()) {
      std::vector<const CandidatePair*> all;
      for (const auto& p : pairs) all.push_back(&p);
      winner = best_pair(all, original.span);
      out.reason = DecisionReason::fallback_tiebreak;
    } else {
      out.removed = true;
      out.reason = DecisionReason::unparseable;
      return out;
    }
  }
  out.span = winner->candidate.span;
  out.etype = winner->etype;
  out.surface = winner->candidate.surface;
  out.vote_share = out.tally.n_paths > 0 ? static_cast<double>(max_count) / out.tally.n_paths : 0.0;
  return out;
}

EntityTrace verify_entity(const Corpus& corpus, const Entity& entity, const KbIndex& kb,
                          const TypeSet& types, ChatBackend& backend, const VerifierSettings& settings,
                          VerifyCounters* counters) {
  settings.reasoning.validate();
  const Document& doc = corpus.document(entity.doc_id);
  const std::string context = doc.text();

  EntityTrace trace;
  trace.result.original = entity;
  trace.result.span = entity.span;
  trace.result.etype = entity.etype;
  trace.result.surface = entity.surface;

  trace.enumerated = enumerate_spans(doc, entity.span, settings.alpha);
  if (settings.use_kb) {
    trace.candidates = prune_by_kb(doc, trace.enumerated, kb);
    if (counters) counters->kb_lookups += trace.enumerated.size();
  } else {
    trace.candidates = unpruned_candidates(doc, trace.enumerated);
  }

  try {
    if (!trace.candidates.empty()) {
      TypeVerifyStats tstats;
      trace.pairs = verify_types(trace.candidates, types, backend, settings.type_prompt, context,
                                 RequestSettings{settings.model, settings.type_temperature}, &tstats);
      if (counters) {
        counters->type_requests += tstats.requests;
        counters->type_parse_failures += tstats.parse_failures;
      }
    }
    const std::vector<CandidatePair> survivors = surviving_pairs(trace.pairs, types);
    if (survivors.empty()) {
      trace.result.removed = true;
      trace.result.reason = DecisionReason::no_factual_candidate;
      return trace;
    }

    const ChatRequest req =
        render_context_prompt(settings.context_prompt, context, survivors,
                              RequestSettings{settings.model, settings.reasoning.temperature},
                              settings.reasoning.include_evidence);
    for (int i = 0; i < settings.reasoning.n_paths; ++i) {
      const ChatResponse resp = backend.complete(req, i);
      trace.paths.push_back(parse_path_answer(resp.content, survivors, types));
      if (counters) {
        ++counters->path_requests;
        if (trace.paths.back().status == PathStatus::discarded) ++counters->path_discards;
      }
    }
    trace.result = consistency_vote(trace.paths, survivors, settings.reasoning, entity);
  } catch (const BackendError&) {
    rethrow_backend_error("entity " + entity.doc_id + "[" + std::to_string(entity.span.beg) + "," +
                          std::to_string(entity.span.end) + "] '" + entity.surface + "': ");
  }
  return trace;
}

}  // namespace kgv
