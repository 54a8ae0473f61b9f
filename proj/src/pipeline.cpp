#include "kgverify/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "kgverify/error.hpp"
#include "text_util.hpp"

namespace kgv {

using json = nlohmann::json;
namespace fs = std::filesystem;

AugmentSource parse_augment_source(std::string_view name) {
  if (name == "none") return AugmentSource::none;
  if (name == "gold") return AugmentSource::gold;
  if (name == "train-json" || name == "train_json") return AugmentSource::train_json;
  throw ConfigError("unknown augmentation source '" + std::string(name) + "' (expected gold or train-json)");
}

std::string_view to_string(AugmentSource source) {
  switch (source) {
    case AugmentSource::none: return "none";
    case AugmentSource::gold: return "gold";
    case AugmentSource::train_json: return "train-json";
  }
  return "none";
}

namespace {

std::string_view role_name(TagRole role) {
  switch (role) {
    case TagRole::gold: return "gold";
    case TagRole::prediction: return "prediction";
    case TagRole::both: return "both";
  }
  return "prediction";
}

json opt_path(const std::optional<fs::path>& p) { return p ? json(p->generic_string()) : json(nullptr); }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

void RunConfig::validate() const {
  if (alpha < 0) throw ConfigError("--alpha must be non-negative");
  if (n_paths < 1) throw ConfigError("--paths must be at least 1");
  if (temperature < 0.0 || type_temperature < 0.0) throw ConfigError("temperatures must be non-negative");
  if (workers < 1) throw ConfigError("--workers must be at least 1");
  if (ablation.no_voting && n_paths_explicit && n_paths != 1) {
    throw ConfigError("--no-voting samples one path; it contradicts --paths " + std::to_string(n_paths));
  }
  if (ablation.no_kb && augment != AugmentSource::none) {
    throw ConfigError("--no-kb contradicts --augment-from: there is no KB to augment");
  }
  if (!ablation.no_kb && !kb_path && augment == AugmentSource::none) {
    throw ConfigError("--kb is required unless --no-kb or --augment-from is given");
  }
  if (augment == AugmentSource::train_json && !augment_path) {
    throw ConfigError("--augment-from train-json needs a corpus path");
  }
  if (augment != AugmentSource::train_json && augment_path) {
    throw ConfigError("an augmentation path only applies to --augment-from train-json");
  }
  if (profile == DatasetProfile::custom) {
    if (labels.empty()) throw ConfigError("the custom profile requires --labels");
    if (!type_prompt || !context_prompt) {
      throw ConfigError("the custom profile requires --type-prompt and --context-prompt");
    }
  } else if (!labels.empty()) {
    throw ConfigError("--labels only applies to the custom profile");
  }
  backend.validate();
  (void)types();
}

std::string RunConfig::variant() const {
  std::vector<std::string> parts;
  if (ablation.no_voting) parts.push_back("no_voting");
  if (ablation.no_evidence) parts.push_back("no_evidence");
  if (ablation.no_kb) parts.push_back("no_kb");
  return parts.empty() ? "full" : join(parts, "+");
}

TypeSet RunConfig::types() const {
  return profile == DatasetProfile::custom ? TypeSet(labels) : profile_types(profile);
}

json RunConfig::to_json() const {
  return json{
      {"profile", std::string(kgv::to_string(profile))},
      {"labels", labels},
      {"input", opt_path(input_path)},
      {"gold", opt_path(gold_path)},
      {"conll_role", std::string(role_name(conll_role))},
      {"alpha", alpha},
      {"paths", n_paths},
      {"effective_paths", effective_paths()},
      {"temperature", temperature},
      {"type_temperature", type_temperature},
      {"allow_none", allow_none},
      {"tie_break", "overlap_then_position"},
      {"ablation", {{"no_voting", ablation.no_voting},
                    {"no_evidence", ablation.no_evidence},
                    {"no_kb", ablation.no_kb}}},
      {"backend", {{"kind", std::string(kgv::to_string(backend.kind))},
                   {"endpoint", backend.endpoint_url ? json(*backend.endpoint_url) : json(nullptr)},
                   {"api_key_env", backend.api_key_env},
                   {"max_in_flight", backend.max_in_flight},
                   {"max_attempts", backend.retry.max_attempts},
                   {"base_backoff_ms", backend.retry.base_backoff_ms},
                   {"timeout_s", backend.timeout_s},
                   {"cache", opt_path(backend.cache_path)},
                   {"script", opt_path(backend.script_path)}}},
      {"model", model},
      {"kb", opt_path(kb_path)},
      {"kb_normalize", std::string(kgv::to_string(kb_normalize))},
      {"augment_from", std::string(kgv::to_string(augment))},
      {"augment_path", opt_path(augment_path)},
      {"augment_types", opt_path(augment_types_path)},
      {"type_prompt", opt_path(type_prompt)},
      {"context_prompt", opt_path(context_prompt)},
      {"out_dir", out_dir.generic_string()},
      {"workers", workers},
      {"seed", seed},
  };
}

namespace {

DefaultSemanticTypes load_default_types(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "-", "cannot open file");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw FormatError(path.string(), "byte " + std::to_string(e.byte), e.what());
  }
  if (!j.is_object()) throw FormatError(path.string(), "/", "expected an object of label -> [semantic types]");
  DefaultSemanticTypes out;
  for (const auto& [label, list] : j.items()) {
    if (!list.is_array()) throw FormatError(path.string(), "/" + label, "expected an array of strings");
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (!list[i].is_string()) {
        throw FormatError(path.string(), "/" + label + "/" + std::to_string(i), "expected a string");
      }
      out[label].push_back(list[i].get<std::string>());
    }
  }
  return out;
}

PromptTemplate resolve_prompt(const std::optional<fs::path>& override_path, DatasetProfile profile,
                              PromptKind kind) {
  if (override_path) return PromptTemplate::load(*override_path);
  auto builtin = builtin_prompt(profile, kind);
  if (!builtin) throw ConfigError("no built-in prompt for the custom profile");
  return *builtin;
}

}  // namespace

PreparedRun prepare_run(const RunConfig& config, Corpus corpus) {
  config.validate();
  corpus.validate();
  PreparedRun run{config, std::move(corpus), KbIndex(config.kb_normalize), 0, 0, config.types(), {}};

  // Spelling variants ("cell-type", "CHEMICAL") are folded onto the label set.
  for (auto* list : {&run.corpus.gold, &run.corpus.predicted}) {
    for (auto& e : *list) {
      auto label = run.types.canonical(e.etype);
      if (!label || run.types.is_none(*label)) {
        throw IntegrityError("entity in " + e.doc_id + " has type '" + e.etype + "' outside the label set");
      }
      e.etype = *label;
    }
  }

  if (!config.ablation.no_kb) {
    if (config.kb_path) run.kb = load_kb(*config.kb_path, config.kb_normalize);
    run.kb_loaded = run.kb.size();
    if (config.augment != AugmentSource::none) {
      DefaultSemanticTypes defaults;
      if (config.augment_types_path) defaults = load_default_types(*config.augment_types_path);
      const std::vector<Entity> source =
          config.augment == AugmentSource::gold ? run.corpus.gold : load_corpus(*config.augment_path, TagRole::gold).gold;
      run.kb = augment_kb(run.kb, source, defaults);
      run.kb_augmented = run.kb.size() - run.kb_loaded;
    }
  }

  auto& s = run.settings;
  s.alpha.alpha = config.alpha;
  s.reasoning.n_paths = config.effective_paths();
  s.reasoning.temperature = config.temperature;
  s.reasoning.allow_none = config.allow_none;
  s.reasoning.include_evidence = !config.ablation.no_evidence;
  s.type_prompt = resolve_prompt(config.type_prompt, config.profile, PromptKind::type);
  s.context_prompt = resolve_prompt(config.context_prompt, config.profile, PromptKind::context);
  s.model = config.model;
  s.type_temperature = config.type_temperature;
  s.use_kb = !config.ablation.no_kb;
  return run;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// stops the remaining work and is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto work = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        failed = true;
      }
    }
  };
  const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Post-revision merge of entities landing on the same span of a document.
void deduplicate(std::vector<EntityTrace>& traces) {
  std::map<std::tuple<std::string, int, int>, std::vector<std::size_t>> by_span;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& r = traces[i].result;
    if (!r.removed) by_span[{r.original.doc_id, r.span.beg, r.span.end}].push_back(i);
  }
  for (auto& [key, idx] : by_span) {
    if (idx.size() < 2) continue;
    // idx is in canonical order of the originals, so stable_sort keeps the
    // earlier original first among equal vote shares.
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return traces[a].result.vote_share > traces[b].result.vote_share;
    });
    for (std::size_t k = 1; k < idx.size(); ++k) {
      traces[idx[k]].result.removed = true;
      traces[idx[k]].result.reason = DecisionReason::duplicate;
    }
  }
}

}  // namespace

RunResult run_verification(const PreparedRun& run, ChatBackend& backend) {
  std::vector<Entity> inputs = run.corpus.predicted;
  sort_canonical(inputs);

  RunResult result;
  result.traces.resize(inputs.size());
  VerifyCounters counters;

  parallel_for(inputs.size(), run.config.workers, [&](std::size_t i) {
    result.traces[i] = verify_entity(run.corpus, inputs[i], run.kb, run.types, backend, run.settings, &counters);
  });

  deduplicate(result.traces);

  result.revised.documents = run.corpus.documents;
  result.revised.gold = run.corpus.gold;
  sort_canonical(result.revised.gold);
  for (const auto& t : result.traces) {
    ++result.decisions[t.result.reason];
    if (!t.result.removed) result.revised.predicted.push_back(t.result.as_entity());
  }
  sort_canonical(result.revised.predicted);

  result.counters = {counters.kb_lookups.load(), counters.type_requests.load(), counters.type_parse_failures.load(),
                     counters.path_requests.load(), counters.path_discards.load()};
  if (!run.corpus.gold.empty()) {
    result.report = evaluate(run.corpus.gold, result.revised.predicted, &inputs);
  }
  return result;
}

json trace_to_json(const EntityTrace& trace) {
  json candidates = json::array();
  for (const auto& c : trace.candidates) {
    candidates.push_back({{"beg", c.span.beg},
                          {"end", c.span.end},
                          {"surface", c.surface},
                          {"definitions", c.knowledge.definitions},
                          {"semantic_types", c.knowledge.semantic_types}});
  }
  json evidences = json::array();
  for (const auto& p : trace.pairs) {
    evidences.push_back({{"beg", p.candidate.span.beg},
                         {"end", p.candidate.span.end},
                         {"surface", p.candidate.surface},
                         {"type", p.etype},
                         {"evidence", p.evidence.text},
                         {"parse_failed", p.parse_failed}});
  }
  json paths = json::array();
  for (const auto& a : trace.paths) {
    json pj{{"status", std::string(to_string(a.status))}, {"raw", a.raw}};
    if (a.selection) {
      pj["surface"] = a.selection->surface;
      pj["type"] = a.selection->etype;
    }
    paths.push_back(std::move(pj));
  }
  const RevisedEntity& r = trace.result;
  json counts = json::array();
  for (const auto& c : r.tally.counts) counts.push_back({{"surface", c.surface}, {"type", c.etype}, {"count", c.count}});
  json decision{{"removed", r.removed}, {"reason", std::string(to_string(r.reason))}, {"vote_share", r.vote_share}};
  if (!r.removed) {
    decision["beg"] = r.span.beg;
    decision["end"] = r.span.end;
    decision["type"] = r.etype;
    decision["surface"] = r.surface;
  }
  return json{{"original", entity_to_json(r.original)},
              {"enumerated", trace.enumerated.size()},
              {"candidates", candidates},
              {"evidences", evidences},
              {"paths", paths},
              {"tally", {{"counts", counts},
                         {"none", r.tally.none_count},
                         {"discarded", r.tally.discarded},
                         {"n_paths", r.tally.n_paths}}},
              {"decision", decision}};
}

RunArtifacts render_artifacts(const PreparedRun& run, const RunResult& result) {
  RunArtifacts out;
  out.revised_json = dump(corpus_to_json(result.revised));

  std::ostringstream audit;
  for (const auto& t : result.traces) audit << trace_to_json(t).dump() << '\n';
  out.audit_jsonl = audit.str();

  const json cfg = run.config.to_json();
  json decisions = json::object();
  for (const auto& [reason, n] : result.decisions) decisions[std::string(to_string(reason))] = n;
  json kb{{"entries", run.kb.size()},
          {"loaded", run.kb_loaded},
          {"augmented", run.kb_augmented},
          {"normalization", std::string(to_string(run.kb.normalization()))}};
  if (!run.corpus.gold.empty()) kb["gold_coverage"] = run.kb.coverage(run.corpus.gold);
  json meta{
      {"config", cfg},
      {"config_hash", sha256_hex(cfg.dump())},
      {"variant", run.config.variant()},
      {"templates", {{"type", {{"name", run.settings.type_prompt.name()}, {"sha256", run.settings.type_prompt.hash()}}},
                     {"context", {{"name", run.settings.context_prompt.name()},
                                  {"sha256", run.settings.context_prompt.hash()}}}}},
      {"kb", kb},
      {"counters", {{"kb_lookups", result.counters.kb_lookups},
                    {"type_requests", result.counters.type_requests},
                    {"type_parse_failures", result.counters.type_parse_failures},
                    {"path_requests", result.counters.path_requests},
                    {"path_discards", result.counters.path_discards}}},
      {"decisions", decisions},
      {"entities", {{"input", result.traces.size()}, {"output", result.revised.predicted.size()}}},
      {"warnings", run.corpus.warnings},
  };
  out.metadata_json = dump(meta);
  if (result.report) out.report_json = dump(result.report->to_json());
  return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  // Write-then-rename so a crash never leaves a truncated artifact.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

void write_artifacts(const fs::path& dir, const RunArtifacts& a) {
  fs::create_directories(dir);
  write_text(dir / "revised.json", a.revised_json);
  write_text(dir / "audit.jsonl", a.audit_jsonl);
  write_text(dir / "run_metadata.json", a.metadata_json);
  if (a.report_json) write_text(dir / "report.json", *a.report_json);
}

RunArtifacts execute_run(const RunConfig& config, const Corpus& input, ChatBackend* backend) {
  const PreparedRun run = prepare_run(config, input);
  std::shared_ptr<ChatBackend> owned;
  if (!backend) {
    owned = make_backend(config.backend);
    backend = owned.get();
  }
  const RunResult result = run_verification(run, *backend);
  RunArtifacts artifacts = render_artifacts(run, result);
  write_artifacts(config.out_dir, artifacts);
  return artifacts;
}

std::vector<std::string> validate_audit(const std::string& audit_jsonl, const Corpus& input, int n_paths) {
  std::vector<std::string> problems;
  std::map<std::tuple<std::string, int, int, std::string>, int> expected;
  for (const auto& e : input.predicted) ++expected[{e.doc_id, e.span.beg, e.span.end, e.etype}];

  std::istringstream in(audit_jsonl);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = "audit line " + std::to_string(lineno) + ": ";
    json j;
    try {
      j = json::parse(line);
      const json& o = j.at("original");
      auto key = std::make_tuple(o.at("doc_id").get<std::string>(), o.at("beg").get<int>(), o.at("end").get<int>(),
                                 o.at("type").get<std::string>());
      if (--expected[key] < 0) problems.push_back(where + "prediction not in input or listed twice");

      const json& t = j.at("tally");
      int sum = t.at("none").get<int>() + t.at("discarded").get<int>();
      for (const auto& c : t.at("counts")) sum += c.at("count").get<int>();
      const int np = t.at("n_paths").get<int>();
      const std::string reason = j.at("decision").at("reason").get<std::string>();
      if (sum != np) {
        problems.push_back(where + "tally sums to " + std::to_string(sum) + ", expected " + std::to_string(np));
      }
      if (np != 0 && np != n_paths) problems.push_back(where + "n_paths " + std::to_string(np));
      if (np == 0 && reason != "no_factual_candidate") problems.push_back(where + "no paths sampled but reason " + reason);
      if (static_cast<int>(j.at("paths").size()) != np) problems.push_back(where + "path list length differs from n_paths");
      if (!j.at("decision").at("removed").get<bool>()) {
        const json& d = j.at("decision");
        bool found = false;
        for (const auto& ev : j.at("evidences")) {
          if (ev.at("beg") == d.at("beg") && ev.at("end") == d.at("end") && ev.at("type") == d.at("type")) found = true;
        }
        if (!found) problems.push_back(where + "kept entity is not a surviving candidate");
      }
    } catch (const json::exception& e) {
      problems.push_back(where + e.what());
    }
  }
  for (const auto& [key, n] : expected) {
    if (n > 0) problems.push_back("prediction " + std::get<0>(key) + "[" + std::to_string(std::get<1>(key)) + "," +
                                  std::to_string(std::get<2>(key)) + "] missing from audit");
  }
  return problems;
}

BaselineKind parse_baseline_kind(std::string_view name) {
  if (name == "manual_map") return BaselineKind::manual_map;
  if (name == "llm_revision") return BaselineKind::llm_revision;
  if (name == "llm_revision_cot") return BaselineKind::llm_revision_cot;
  throw ConfigError("unknown baseline '" + std::string(name) + "'");
}

std::string_view to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::manual_map: return "manual_map";
    case BaselineKind::llm_revision: return "llm_revision";
    case BaselineKind::llm_revision_cot: return "llm_revision_cot";
  }
  return "manual_map";
}

void BaselineConfig::validate() const {
  if (profile == DatasetProfile::custom && labels.empty()) throw ConfigError("the custom profile requires --labels");
  if (profile != DatasetProfile::custom && !labels.empty()) {
    throw ConfigError("--labels only applies to the custom profile");
  }
  if (kind == BaselineKind::manual_map) {
    if (!kb_path) throw ConfigError("manual_map needs --kb");
    if (resolver == MapResolver::majority && !train_path) throw ConfigError("the majority resolver needs --train");
    if (resolver == MapResolver::manual_file && !map_path) throw ConfigError("the manual_file resolver needs --map");
  } else {
    if (profile == DatasetProfile::custom && !revision_prompt) {
      throw ConfigError("the custom profile requires --revision-prompt");
    }
    if (workers < 1) throw ConfigError("--workers must be at least 1");
  }
  (void)types();
}

TypeSet BaselineConfig::types() const {
  return profile == DatasetProfile::custom ? TypeSet(labels) : profile_types(profile);
}

BaselineResult run_baseline(const BaselineConfig& config, const Corpus& input, ChatBackend* backend) {
  config.validate();
  input.validate();
  const TypeSet types = config.types();
  BaselineResult out;
  out.revised.documents = input.documents;
  out.revised.gold = input.gold;

  if (config.kind == BaselineKind::manual_map) {
    const KbIndex kb = load_kb(*config.kb_path, config.kb_normalize);
    out.map = config.resolver == MapResolver::majority
                  ? build_semantic_map(load_corpus(*config.train_path, TagRole::gold).gold, kb)
                  : load_semantic_map(*config.map_path, types);
    out.revised.predicted = apply_manual_mapping(input.predicted, kb, *out.map);
  } else {
    const PromptTemplate tpl = config.revision_prompt ? PromptTemplate::load(*config.revision_prompt)
                                                      : *builtin_prompt(config.profile, PromptKind::revision);
    const TagScheme scheme = profile_tag_scheme(config.profile, types);
    scheme.validate();
    std::shared_ptr<ChatBackend> owned;
    if (!backend) {
      owned = make_backend(config.backend);
      backend = owned.get();
    }
    std::vector<const Document*> docs;
    for (const auto& [id, doc] : input.documents) docs.push_back(&doc);
    std::vector<RevisionResult> results(docs.size());
    parallel_for(docs.size(), config.workers, [&](std::size_t i) {
      results[i] = llm_revision(*docs[i], input.predicted, scheme, *backend, tpl, config.model,
                                config.kind == BaselineKind::llm_revision_cot);
    });
    for (auto& r : results) {
      if (r.fell_back) ++out.fallbacks;
      out.revised.predicted.insert(out.revised.predicted.end(), r.entities.begin(), r.entities.end());
      out.warnings.insert(out.warnings.end(), r.warnings.begin(), r.warnings.end());
    }
  }
  sort_canonical(out.revised.predicted);
  sort_canonical(out.revised.gold);
  return out;
}

}  // namespace kgv
