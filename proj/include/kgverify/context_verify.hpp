#pragma once

#include <atomic>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgverify/corpus.hpp"
#include "kgverify/kb.hpp"
#include "kgverify/llm_backend.hpp"
#include "kgverify/prompt_template.hpp"
#include "kgverify/span_verify.hpp"
#include "kgverify/type_verify.hpp"

namespace kgv {

enum class TieBreak { overlap_then_position };

struct ReasoningConfig {
  int n_paths = 10;
  double temperature = 0.7;
  TieBreak tie_break = TieBreak::overlap_then_position;
  /// A strict majority of (None, None) answers removes the entity.
  bool allow_none = true;
  /// Candidate blocks carry the evidence text; when false, only the type.
  bool include_evidence = true;

  void validate() const;
};

struct Selection {
  std::string surface;
  std::string etype;

  friend bool operator==(const Selection&, const Selection&) = default;
};

enum class PathStatus { selected, none, discarded };

std::string_view to_string(PathStatus status);

struct PathAnswer {
  std::string raw;
  std::optional<Selection> selection;
  PathStatus status = PathStatus::discarded;
};

struct TallyEntry {
  std::string surface;
  std::string etype;
  int count = 0;
};

struct VoteTally {
  /// Sorted by (surface, etype).
  std::vector<TallyEntry> counts;
  int none_count = 0;
  int discarded = 0;
  /// Paths actually sampled (0 when the entity never reached voting).
  int n_paths = 0;

  int total() const;
  bool conserved() const { return total() == n_paths; }
};

enum class DecisionReason {
  selected,
  no_factual_candidate,
  majority_none,
  unparseable,
  /// allow_none=false and every parsed path said (None, None).
  fallback_tiebreak,
  /// Lost a post-revision duplicate/conflict merge on the same span.
  duplicate,
};

std::string_view to_string(DecisionReason reason);

struct RevisedEntity {
  Entity original;
  TokenSpan span;
  std::string etype;
  std::string surface;
  VoteTally tally;
  bool removed = false;
  DecisionReason reason = DecisionReason::selected;
  /// Winner votes / paths sampled.
  double vote_share = 0.0;

  Entity as_entity() const { return Entity{original.doc_id, span, etype, surface}; }
};

/// Fills {context} and {candidates_block}; one "['surface', 'evidence']"
/// line per pair, in pair order.
ChatRequest render_context_prompt(const PromptTemplate& tpl, std::string_view context,
                                  std::span<const CandidatePair> pairs, const RequestSettings& settings,
                                  bool include_evidence = true);

/// Reads the last ('SURFACE', TYPE) or (None, None) tuple. A selection must
/// name a pair's surface (case-insensitive) with that pair's type, else the
/// path is discarded.
PathAnswer parse_path_answer(std::string_view response, std::span<const CandidatePair> pairs,
                             const TypeSet& types);

/// Majority vote over path answers. Ties go to greater token overlap with
/// the original span, then smaller length difference, then earlier start.
RevisedEntity consistency_vote(std::span<const PathAnswer> answers, std::span<const CandidatePair> pairs,
                               const ReasoningConfig& config, const Entity& original);

struct VerifierSettings {
  AlphaConfig alpha;
  ReasoningConfig reasoning;
  PromptTemplate type_prompt;
  PromptTemplate context_prompt;
  std::string model;
  double type_temperature = 0.0;
  /// false: skip KB pruning, prompts get empty knowledge.
  bool use_kb = true;
};

struct VerifyCounters {
  std::atomic<std::size_t> kb_lookups{0};
  std::atomic<std::size_t> type_requests{0};
  std::atomic<std::size_t> type_parse_failures{0};
  std::atomic<std::size_t> path_requests{0};
  std::atomic<std::size_t> path_discards{0};
};

/// Everything produced while verifying one prediction.
struct EntityTrace {
  std::vector<TokenSpan> enumerated;
  std::vector<CandidateSpan> candidates;
  std::vector<CandidatePair> pairs;
  std::vector<PathAnswer> paths;
  RevisedEntity result;
};

/// enumerate -> prune -> type -> drop NONE -> sample paths -> vote.
EntityTrace verify_entity(const Corpus& corpus, const Entity& entity, const KbIndex& kb,
                          const TypeSet& types, ChatBackend& backend, const VerifierSettings& settings,
                          VerifyCounters* counters = nullptr);

}  // namespace kgv
