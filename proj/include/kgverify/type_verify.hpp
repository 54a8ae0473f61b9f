#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgverify/corpus.hpp"
#include "kgverify/llm_backend.hpp"
#include "kgverify/prompt_template.hpp"
#include "kgverify/span_verify.hpp"

namespace kgv {

/// LLM explanation grounding a type assignment in the candidate's knowledge.
struct Evidence {
  std::string text;
  TokenSpan source_candidate;
};

struct CandidatePair {
  CandidateSpan candidate;
  /// A TypeSet label or the TypeSet's none label.
  std::string etype;
  Evidence evidence;
  /// The response had no recognizable class; etype was forced to none.
  bool parse_failed = false;
};

struct RequestSettings {
  std::string model;
  double temperature = 0.0;
};

/// "The definition of X is ['...']." or "The definition of X is not provided."
std::string definition_sentence(std::string_view entity, const std::vector<std::string>& definitions);
/// "The semantic type of X is ['A', 'B']." or "... is not provided."
std::string semantic_type_sentence(std::string_view entity, const std::vector<std::string>& types);

ChatRequest render_type_prompt(const PromptTemplate& tpl, const CandidateSpan& candidate,
                               const TypeSet& types, std::string_view context,
                               const RequestSettings& settings);

/// Finds the last "class of the entity ... is <label>" statement and returns
/// the canonical label (or the none label). nullopt when nothing parses.
std::optional<std::string> parse_assigned_type(std::string_view response, const TypeSet& types);

struct TypeVerifyStats {
  std::size_t requests = 0;
  std::size_t parse_failures = 0;
};

/// One request per candidate; output is index-aligned with `candidates`.
/// Backend errors are rethrown as BackendError naming the candidate.
std::vector<CandidatePair> verify_types(std::span<const CandidateSpan> candidates,
                                        const TypeSet& types, ChatBackend& backend,
                                        const PromptTemplate& tpl, std::string_view context,
                                        const RequestSettings& settings,
                                        TypeVerifyStats* stats = nullptr);

/// Pairs whose type is not the none label, in input order.
std::vector<CandidatePair> surviving_pairs(std::span<const CandidatePair> pairs, const TypeSet& types);

}  // namespace kgv
