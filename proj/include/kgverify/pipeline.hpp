#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kgverify/baselines.hpp"
#include "kgverify/context_verify.hpp"
#include "kgverify/corpus.hpp"
#include "kgverify/eval.hpp"
#include "kgverify/kb.hpp"
#include "kgverify/llm_backend.hpp"
#include "kgverify/prompt_template.hpp"

namespace kgv {

struct AblationFlags {
  bool no_voting = false;    // one reasoning path
  bool no_evidence = false;  // context prompt lists (surface, type) only
  bool no_kb = false;        // no pruning, empty knowledge

  bool any() const { return no_voting || no_evidence || no_kb; }
};

enum class AugmentSource { none, gold, train_json };

AugmentSource parse_augment_source(std::string_view name);
std::string_view to_string(AugmentSource source);

struct RunConfig {
  DatasetProfile profile = DatasetProfile::genia;
  /// Label set for the custom profile.
  std::vector<std::string> labels;

  std::optional<std::filesystem::path> input_path;
  std::optional<std::filesystem::path> gold_path;
  TagRole conll_role = TagRole::prediction;

  int alpha = 2;
  int n_paths = 10;
  /// n_paths came from the user rather than the default.
  bool n_paths_explicit = false;
  double temperature = 0.7;
  double type_temperature = 0.0;
  bool allow_none = true;
  AblationFlags ablation;

  BackendConfig backend;
  std::string model = "gpt-3.5-turbo";

  std::optional<std::filesystem::path> kb_path;
  Normalization kb_normalize = Normalization::lower_ws;
  AugmentSource augment = AugmentSource::none;
  std::optional<std::filesystem::path> augment_path;
  /// JSON {"label": ["semantic type", ...]} for augmented entries.
  std::optional<std::filesystem::path> augment_types_path;

  std::optional<std::filesystem::path> type_prompt;
  std::optional<std::filesystem::path> context_prompt;

  std::filesystem::path out_dir = "kgverify-out";
  int workers = 4;
  /// No stochastic tie-breaking exists; recorded for completeness.
  std::uint64_t seed = 0;

  /// Throws ConfigError on out-of-range values and contradictory flags.
  void validate() const;

  int effective_paths() const { return ablation.no_voting ? 1 : n_paths; }
  /// "full" or the active ablations joined by '+'.
  std::string variant() const;
  TypeSet types() const;

  nlohmann::json to_json() const;
};

/// Everything a verification run needs, resolved from a RunConfig.
struct PreparedRun {
  RunConfig config;
  Corpus corpus;
  KbIndex kb;
  std::size_t kb_loaded = 0;
  std::size_t kb_augmented = 0;
  TypeSet types;
  VerifierSettings settings;
};

/// Loads the KB and templates, applies augmentation. Throws ConfigError,
/// FormatError, TemplateError.
PreparedRun prepare_run(const RunConfig& config, Corpus corpus);

struct CounterSnapshot {
  std::size_t kb_lookups = 0;
  std::size_t type_requests = 0;
  std::size_t type_parse_failures = 0;
  std::size_t path_requests = 0;
  std::size_t path_discards = 0;
};

struct RunResult {
  /// Input documents and gold; predictions replaced by the revision.
  Corpus revised;
  /// One per input prediction, in canonical order of the originals.
  std::vector<EntityTrace> traces;
  CounterSnapshot counters;
  std::map<DecisionReason, std::size_t> decisions;
  std::optional<EvalReport> report;
};

/// Verifies every prediction on a worker pool. The first error raised by a
/// worker is rethrown after all workers stop.
RunResult run_verification(const PreparedRun& run, ChatBackend& backend);

struct RunArtifacts {
  std::string revised_json;
  std::string audit_jsonl;
  std::string metadata_json;
  std::optional<std::string> report_json;
};

RunArtifacts render_artifacts(const PreparedRun& run, const RunResult& result);

/// revised.json, audit.jsonl, run_metadata.json, report.json.
void write_artifacts(const std::filesystem::path& dir, const RunArtifacts& artifacts);

/// prepare -> run -> render -> write into config.out_dir. Uses `backend`
/// when given, else builds one from config.backend.
RunArtifacts execute_run(const RunConfig& config, const Corpus& input, ChatBackend* backend = nullptr);

/// Problems found in an audit file: every input prediction exactly once,
/// tally conservation, n_paths in {0, N} (0 only without factual
/// candidates). Empty when the audit is sound.
std::vector<std::string> validate_audit(const std::string& audit_jsonl, const Corpus& input, int n_paths);

nlohmann::json trace_to_json(const EntityTrace& trace);

enum class BaselineKind { manual_map, llm_revision, llm_revision_cot };

BaselineKind parse_baseline_kind(std::string_view name);
std::string_view to_string(BaselineKind kind);

struct BaselineConfig {
  BaselineKind kind = BaselineKind::manual_map;
  DatasetProfile profile = DatasetProfile::genia;
  std::vector<std::string> labels;
  // manual_map
  std::optional<std::filesystem::path> kb_path;
  Normalization kb_normalize = Normalization::lower_ws;
  MapResolver resolver = MapResolver::majority;
  std::optional<std::filesystem::path> train_path;
  std::optional<std::filesystem::path> map_path;
  // llm_revision
  std::optional<std::filesystem::path> revision_prompt;
  BackendConfig backend;
  std::string model = "gpt-3.5-turbo";
  int workers = 4;

  void validate() const;
  TypeSet types() const;
};

struct BaselineResult {
  Corpus revised;
  std::vector<std::string> warnings;
  std::optional<SemanticTypeMap> map;
  std::size_t fallbacks = 0;
};

BaselineResult run_baseline(const BaselineConfig& config, const Corpus& input, ChatBackend* backend = nullptr);

}  // namespace kgv
