// kgverify: post-hoc verification of NER predictions against a knowledge base.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kgverify/baselines.hpp"
#include "kgverify/corpus.hpp"
#include "kgverify/error.hpp"
#include "kgverify/eval.hpp"
#include "kgverify/kb.hpp"
#include "kgverify/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kInputError = 2, kBackendError = 3, kConfigError = 4 };

/// TOML (CLI11's own reader) or, when the file starts with '{', JSON.
/// Nested JSON objects name subcommand sections like TOML tables do.
class TomlOrJsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool defaults, bool descriptions, std::string prefix) const override {
    return toml_.to_config(app, defaults, descriptions, std::move(prefix));
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos || text[first] != '{') {
      std::istringstream again(text);
      return scoped(toml_.from_config(again));
    }
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw CLI::ConversionError(std::string("config file: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return scoped(std::move(items));
  }

  /// Subcommand path of the command line; top-level keys belong to it.
  std::vector<std::string> scope;

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void flatten(const json& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        auto sub = parents;
        sub.push_back(key);
        flatten(value, sub, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else if (!value.is_null()) {
        item.inputs.push_back(scalar(value));
      }
      out.push_back(std::move(item));
    }
  }

  std::vector<CLI::ConfigItem> scoped(std::vector<CLI::ConfigItem> items) const {
    for (auto& item : items) {
      if (!scope.empty() && (item.parents.empty() || item.parents.front() != scope.front())) {
        item.parents.insert(item.parents.begin(), scope.begin(), scope.end());
      }
    }
    return items;
  }

  CLI::ConfigTOML toml_;
};

/// "verify", or "kb augment": the leading non-option arguments.
std::vector<std::string> command_path(int argc, char** argv) {
  std::vector<std::string> out;
  for (int i = 1; i < argc && argv[i][0] != '-'; ++i) out.push_back(argv[i]);
  return out;
}

struct BackendArgs {
  std::string kind = "http";
  std::string endpoint;
  std::string cache;
  std::string script;
};

void add_backend_options(CLI::App* cmd, kgv::BackendConfig& cfg, BackendArgs& args) {
  cmd->add_option("--backend", args.kind, "Chat backend")
      ->check(CLI::IsMember({"http", "scripted", "cache_only"}))
      ->capture_default_str();
  cmd->add_option("--endpoint", args.endpoint, "Base URL of an OpenAI-compatible API, e.g. https://host/v1");
  cmd->add_option("--api-key-env", cfg.api_key_env, "Environment variable holding the API key")->capture_default_str();
  cmd->add_option("--max-in-flight", cfg.max_in_flight, "Concurrent request limit")->capture_default_str();
  cmd->add_option("--max-attempts", cfg.retry.max_attempts, "Attempts per request on 429/5xx")->capture_default_str();
  cmd->add_option("--backoff-ms", cfg.retry.base_backoff_ms, "Base retry backoff")->capture_default_str();
  cmd->add_option("--timeout", cfg.timeout_s, "Request timeout in seconds")->capture_default_str();
  cmd->add_option("--cache", args.cache, "JSON-lines response cache (replay and resume)");
  cmd->add_option("--script", args.script, "Response script for --backend scripted");
}

void finish_backend(kgv::BackendConfig& cfg, const BackendArgs& args) {
  cfg.kind = kgv::parse_backend_kind(args.kind);
  if (!args.endpoint.empty()) cfg.endpoint_url = args.endpoint;
  if (!args.cache.empty()) cfg.cache_path = args.cache;
  if (!args.script.empty()) cfg.script_path = args.script;
}

std::vector<std::string> split_labels(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& r : raw) {
    std::stringstream ss(r);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

kgv::TagRole parse_role(const std::string& s) {
  if (s == "prediction") return kgv::TagRole::prediction;
  if (s == "gold") return kgv::TagRole::gold;
  return kgv::TagRole::both;
}

kgv::Corpus load_input(const fs::path& input, kgv::TagRole role, const std::string& gold) {
  kgv::Corpus corpus = kgv::load_corpus(input, role);
  if (!gold.empty()) {
    kgv::Corpus g = kgv::load_corpus(gold, kgv::TagRole::gold);
    corpus = kgv::merge_annotations(g, corpus);
  }
  return corpus;
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw kgv::Error("cannot write " + path);
  out << text;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Verify NER predictions against a knowledge base with an LLM"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "kgverify 0.1.0");
  auto config_reader = std::make_shared<TomlOrJsonConfig>();
  config_reader->scope = command_path(argc, argv);
  app.config_formatter(config_reader);
  app.set_config("--config", "", "TOML or JSON file supplying options of the chosen command");
  app.fallthrough();

  // verify
  kgv::RunConfig run;
  BackendArgs run_backend;
  std::string input, gold, role = "prediction", profile = "genia", kb_norm = "lower_ws";
  std::string kb, type_prompt, context_prompt, augment_types, out_dir = run.out_dir.string();
  std::vector<std::string> labels, augment_from;
  auto* verify = app.add_subcommand("verify", "Verify and revise predicted entities");
  verify->add_option("--input", input, "Predictions: JSON corpus or CoNLL")->required();
  verify->add_option("--gold", gold, "Gold annotations for the same documents");
  verify->add_option("--conll-role", role, "Tag columns of a CoNLL --input")
      ->check(CLI::IsMember({"prediction", "both"}))
      ->capture_default_str();
  verify->add_option("--profile", profile, "Dataset profile")
      ->check(CLI::IsMember({"genia", "bc5cdr", "custom"}))
      ->capture_default_str();
  verify->add_option("--labels", labels, "Label set for --profile custom (comma separated)");
  verify->add_option("--alpha", run.alpha, "Window extension in tokens")->capture_default_str();
  auto* paths_opt = verify->add_option("--paths", run.n_paths, "Reasoning paths per entity")->capture_default_str();
  verify->add_option("--temperature", run.temperature, "Sampling temperature for reasoning paths")
      ->capture_default_str();
  verify->add_option("--type-temperature", run.type_temperature, "Temperature for evidence generation")
      ->capture_default_str();
  verify->add_option("--allow-none", run.allow_none, "Let a (None, None) majority remove the entity")
      ->capture_default_str();
  verify->add_flag("--no-voting", run.ablation.no_voting, "Ablation: one reasoning path");
  verify->add_flag("--no-evidence", run.ablation.no_evidence, "Ablation: no evidence text in the context prompt");
  verify->add_flag("--no-kb", run.ablation.no_kb, "Ablation: no KB pruning, no knowledge in prompts");
  add_backend_options(verify, run.backend, run_backend);
  verify->add_option("--model", run.model, "Model name sent to the backend")->capture_default_str();
  verify->add_option("--kb", kb, "Knowledge base (JSON-lines)");
  verify->add_option("--kb-normalize", kb_norm, "KB key normalization")
      ->check(CLI::IsMember({"lower_ws", "exact"}))
      ->capture_default_str();
  verify->add_option("--augment-from", augment_from, "gold | train-json <path>")->expected(1, 2);
  verify->add_option("--augment-types", augment_types, "JSON label -> semantic types for augmented entries");
  verify->add_option("--type-prompt", type_prompt, "Type verification template");
  verify->add_option("--context-prompt", context_prompt, "Context verification template");
  verify->add_option("--out", out_dir, "Output directory")->capture_default_str();
  verify->add_option("--workers", run.workers, "Entities verified concurrently")->capture_default_str();
  verify->add_option("--seed", run.seed, "Recorded in metadata; nothing is random")->capture_default_str();

  // evaluate
  std::string ev_gold, ev_pred, ev_before, ev_out, ev_csv;
  auto* evaluate = app.add_subcommand("evaluate", "Exact-match metrics and error taxonomy");
  evaluate->add_option("--gold", ev_gold, "Gold corpus (JSON or CoNLL)")->required();
  evaluate->add_option("--pred", ev_pred, "Predicted corpus")->required();
  evaluate->add_option("--before", ev_before, "Predictions before revision (enables correction rates)");
  evaluate->add_option("--out", ev_out, "Report JSON path (default stdout)");
  evaluate->add_option("--csv", ev_csv, "Deviation histogram CSV path");

  // analyze
  std::string an_gold, an_pred, an_audit, an_csv;
  int an_paths = 10;
  auto* analyze = app.add_subcommand("analyze", "Error ratios, span deviations, audit checks");
  analyze->add_option("--gold", an_gold, "Gold corpus");
  analyze->add_option("--pred", an_pred, "Predicted corpus")->required();
  analyze->add_option("--audit", an_audit, "Audit JSON-lines to validate against --pred");
  analyze->add_option("--paths", an_paths, "Paths per entity expected in the audit")->capture_default_str();
  analyze->add_option("--csv", an_csv, "Deviation histogram CSV path");

  // baseline
  kgv::BaselineConfig base;
  BackendArgs base_backend;
  std::string b_kind = "manual_map", b_input, b_gold, b_role = "prediction", b_profile = "genia", b_kb, b_norm = "lower_ws";
  std::string b_resolver = "majority", b_train, b_map, b_prompt, b_out = "kgverify-baseline";
  std::vector<std::string> b_labels;
  auto* baseline = app.add_subcommand("baseline", "Run a revision baseline");
  baseline->add_option("--baseline", b_kind, "Baseline")
      ->check(CLI::IsMember({"manual_map", "llm_revision", "llm_revision_cot"}))
      ->capture_default_str();
  baseline->add_option("--input", b_input, "Predictions")->required();
  baseline->add_option("--gold", b_gold, "Gold annotations");
  baseline->add_option("--conll-role", b_role, "Tag columns of a CoNLL --input")
      ->check(CLI::IsMember({"prediction", "both"}))
      ->capture_default_str();
  baseline->add_option("--profile", b_profile, "Dataset profile")
      ->check(CLI::IsMember({"genia", "bc5cdr", "custom"}))
      ->capture_default_str();
  baseline->add_option("--labels", b_labels, "Label set for --profile custom");
  baseline->add_option("--kb", b_kb, "Knowledge base (JSON-lines)");
  baseline->add_option("--kb-normalize", b_norm, "KB key normalization")
      ->check(CLI::IsMember({"lower_ws", "exact"}))
      ->capture_default_str();
  baseline->add_option("--resolver", b_resolver, "Semantic type map construction")
      ->check(CLI::IsMember({"majority", "manual_file"}))
      ->capture_default_str();
  baseline->add_option("--train", b_train, "Training corpus with gold for the majority resolver");
  baseline->add_option("--map", b_map, "Semantic type map JSON for the manual_file resolver");
  baseline->add_option("--revision-prompt", b_prompt, "Revision template");
  add_backend_options(baseline, base.backend, base_backend);
  baseline->add_option("--model", base.model, "Model name")->capture_default_str();
  baseline->add_option("--workers", base.workers, "Documents revised concurrently")->capture_default_str();
  baseline->add_option("--out", b_out, "Output directory")->capture_default_str();

  // kb augment
  std::string ka_kb, ka_from, ka_types, ka_out, ka_norm = "lower_ws";
  auto* kbcmd = app.add_subcommand("kb", "Knowledge base utilities");
  kbcmd->require_subcommand(1);
  auto* augment = kbcmd->add_subcommand("augment", "Add definition-less entries for corpus gold surfaces");
  augment->add_option("--kb", ka_kb, "Existing KB (omit to start empty)");
  augment->add_option("--from", ka_from, "Corpus whose gold entities are added")->required();
  augment->add_option("--types", ka_types, "JSON label -> semantic types");
  augment->add_option("--kb-normalize", ka_norm, "KB key normalization")
      ->check(CLI::IsMember({"lower_ws", "exact"}))
      ->capture_default_str();
  augment->add_option("--out", ka_out, "Output KB path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (verify->parsed()) {
      run.profile = kgv::parse_profile(profile);
      run.labels = split_labels(labels);
      run.input_path = input;
      if (!gold.empty()) run.gold_path = gold;
      run.conll_role = parse_role(role);
      run.n_paths_explicit = paths_opt->count() > 0;
      finish_backend(run.backend, run_backend);
      if (!kb.empty()) run.kb_path = kb;
      run.kb_normalize = kgv::parse_normalization(kb_norm);
      if (!augment_from.empty()) {
        run.augment = kgv::parse_augment_source(augment_from[0]);
        if (augment_from.size() > 1) run.augment_path = augment_from[1];
      }
      if (!augment_types.empty()) run.augment_types_path = augment_types;
      if (!type_prompt.empty()) run.type_prompt = type_prompt;
      if (!context_prompt.empty()) run.context_prompt = context_prompt;
      run.out_dir = out_dir;
      run.validate();

      const kgv::Corpus corpus = load_input(input, run.conll_role, gold);
      print_warnings(corpus.warnings);
      const kgv::RunArtifacts artifacts = kgv::execute_run(run, corpus);
      std::cerr << "wrote " << (run.out_dir / "revised.json").string() << ", audit.jsonl, run_metadata.json"
                << (artifacts.report_json ? ", report.json" : "") << '\n';
    } else if (evaluate->parsed()) {
      const kgv::Corpus g = kgv::load_corpus(ev_gold, kgv::TagRole::gold);
      const kgv::Corpus p = kgv::load_corpus(ev_pred, kgv::TagRole::prediction);
      std::optional<kgv::Corpus> before;
      if (!ev_before.empty()) before = kgv::load_corpus(ev_before, kgv::TagRole::prediction);
      const kgv::EvalReport rep = kgv::evaluate(g.gold, p.predicted, before ? &before->predicted : nullptr);
      write_or_print(ev_out, rep.to_json().dump(2) + "\n");
      if (!ev_csv.empty()) write_or_print(ev_csv, kgv::histogram_csv(rep.deviation_hist));
    } else if (analyze->parsed()) {
      const kgv::Corpus p = kgv::load_corpus(an_pred, kgv::TagRole::prediction);
      int status = kOk;
      if (!an_gold.empty()) {
        const kgv::Corpus g = kgv::load_corpus(an_gold, kgv::TagRole::gold);
        const kgv::ErrorRatios r = kgv::error_ratio_report(p.predicted, g.gold);
        std::printf("errors %zu\n", r.total_errors);
        std::printf("Type %.2f  Span %.2f  Type&Span %.2f  Spurious %.2f  |  FP %.2f  FN %.2f\n", r.type, r.span,
                    r.type_span, r.spurious, r.fp, r.fn);
        const auto hist = kgv::deviation_histogram(p.predicted, g.gold);
        std::printf("token length deviation (pred - gold):\n");
        for (const auto& [d, n] : hist) std::printf("  %+d\t%zu\n", d, n);
        if (!an_csv.empty()) write_or_print(an_csv, kgv::histogram_csv(hist));
      }
      if (!an_audit.empty()) {
        std::ifstream in(an_audit, std::ios::binary);
        if (!in) throw kgv::FormatError(an_audit, "open", "cannot read file");
        std::stringstream buf;
        buf << in.rdbuf();
        const auto problems = kgv::validate_audit(buf.str(), p, an_paths);
        for (const auto& pr : problems) std::printf("audit: %s\n", pr.c_str());
        std::printf("audit %s (%zu problems)\n", problems.empty() ? "ok" : "FAILED", problems.size());
        if (!problems.empty()) status = kInputError;
      }
      return status;
    } else if (baseline->parsed()) {
      base.kind = kgv::parse_baseline_kind(b_kind);
      base.profile = kgv::parse_profile(b_profile);
      base.labels = split_labels(b_labels);
      if (!b_kb.empty()) base.kb_path = b_kb;
      base.kb_normalize = kgv::parse_normalization(b_norm);
      base.resolver = kgv::parse_map_resolver(b_resolver);
      if (!b_train.empty()) base.train_path = b_train;
      if (!b_map.empty()) base.map_path = b_map;
      if (!b_prompt.empty()) base.revision_prompt = b_prompt;
      finish_backend(base.backend, base_backend);
      base.validate();

      const kgv::Corpus corpus = load_input(b_input, parse_role(b_role), b_gold);
      print_warnings(corpus.warnings);
      const kgv::BaselineResult res = kgv::run_baseline(base, corpus);
      print_warnings(res.warnings);
      fs::create_directories(b_out);
      kgv::save_json(fs::path(b_out) / "revised.json", res.revised);
      if (res.map) write_or_print((fs::path(b_out) / "semantic_map.json").string(), res.map->serialize());
      if (!corpus.gold.empty()) {
        const auto rep = kgv::evaluate(corpus.gold, res.revised.predicted, &corpus.predicted);
        write_or_print((fs::path(b_out) / "report.json").string(), rep.to_json().dump(2) + "\n");
      }
      if (res.fallbacks) std::cerr << res.fallbacks << " document(s) kept their original predictions\n";
    } else if (augment->parsed()) {
      const auto mode = kgv::parse_normalization(ka_norm);
      kgv::KbIndex base_kb = ka_kb.empty() ? kgv::KbIndex(mode) : kgv::load_kb(ka_kb, mode);
      kgv::DefaultSemanticTypes defaults;
      if (!ka_types.empty()) {
        std::ifstream in(ka_types);
        const json j = json::parse(in);
        for (const auto& [label, list] : j.items()) defaults[label] = list.get<std::vector<std::string>>();
      }
      const kgv::Corpus from = kgv::load_corpus(ka_from, kgv::TagRole::gold);
      const kgv::KbIndex out = kgv::augment_kb(base_kb, from.gold, defaults);
      std::ofstream os(ka_out, std::ios::binary);
      if (!os) throw kgv::Error("cannot write " + ka_out);
      kgv::write_kb(os, out);
      std::cerr << "kb entries " << base_kb.size() << " -> " << out.size() << ", gold coverage "
                << out.coverage(from.gold) << '\n';
    }
  } catch (const kgv::BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\nrerun with the same --cache to resume\n";
    return kBackendError;
  } catch (const kgv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const kgv::TemplateError& e) {
    std::cerr << "template error: " << e.what() << '\n';
    return kConfigError;
  } catch (const kgv::Error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const json::exception& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInputError;
  }
  return kOk;
}
