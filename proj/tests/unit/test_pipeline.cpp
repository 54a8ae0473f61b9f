#include <doctest.h>

#include <nlohmann/json.hpp>

#include "kgverify/error.hpp"
#include "kgverify/pipeline.hpp"
#include "test_support.hpp"

using namespace kgv;
using json = nlohmann::json;

namespace {

struct Fixture {
  test::TempDir dir;
  test::GoldenCase c;
  RunConfig config;

  explicit Fixture(test::GoldenCase gc) : c(std::move(gc)) {
    test::write_kb_file(dir / "kb.jsonl", c.kb);
    test::spit(dir / "script.jsonl", test::golden_script(c));
    config = test::fixture_config(c.profile, dir / "kb.jsonl", dir / "script.jsonl", dir / "out");
  }

  RunArtifacts run() {
    auto backend = test::golden_backend(c);
    return execute_run(config, c.corpus, backend.get());
  }
};

json metadata(const RunArtifacts& a) { return json::parse(a.metadata_json); }

std::vector<json> audit_lines(const RunArtifacts& a) {
  std::vector<json> out;
  std::istringstream in(a.audit_jsonl);
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}


std::unique_ptr<ScriptedBackend> responder_backend(test::Responder r) {
  auto b = std::make_unique<ScriptedBackend>();
  b->add_rule([r = std::move(r)](const ChatRequest& req, int) -> std::optional<std::string> { return r(req); });
  return b;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config validation") {
    RunConfig c;
    c.kb_path = "kb.jsonl";
    c.backend.script_path = "s.jsonl";
    c.backend.kind = BackendKind::scripted;
    CHECK_NOTHROW(c.validate());

    auto bad = c;
    bad.ablation.no_voting = true;
    bad.n_paths = 5;
    bad.n_paths_explicit = true;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.n_paths = 1;
    CHECK_NOTHROW(bad.validate());
    bad.n_paths = 5;
    bad.n_paths_explicit = false;
    CHECK_NOTHROW(bad.validate());
    CHECK(bad.effective_paths() == 1);

    bad = c;
    bad.ablation.no_kb = true;
    bad.augment = AugmentSource::gold;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = c;
    bad.kb_path.reset();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.augment = AugmentSource::gold;
    CHECK_NOTHROW(bad.validate());
    bad.augment = AugmentSource::train_json;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = c;
    bad.labels = {"gene"};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.profile = DatasetProfile::custom;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.type_prompt = "t.txt";
    bad.context_prompt = "c.txt";
    CHECK_NOTHROW(bad.validate());

    for (int v : {-1}) {
      bad = c;
      bad.alpha = v;
      CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
    bad = c;
    bad.n_paths = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.workers = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(parse_augment_source("web"), ConfigError);
  }

  TEST_CASE("variant names") {
    RunConfig c;
    CHECK(c.variant() == "full");
    c.ablation.no_voting = true;
    c.ablation.no_kb = true;
    CHECK(c.variant() == "no_voting+no_kb");
  }

  TEST_CASE("prepare_run canonicalizes types") {
    Fixture f(test::leukocytes_case());
    Corpus input = f.c.corpus;
    input.predicted[0].etype = "Cell-Type";
    const PreparedRun run = prepare_run(f.config, input);
    CHECK(run.corpus.predicted[0].etype == "cell_type");
    CHECK(run.kb_loaded == f.c.kb.size());
    CHECK(run.settings.reasoning.n_paths == 10);
    input.predicted[0].etype = "organ";
    CHECK_THROWS_AS(prepare_run(f.config, input), IntegrityError);
  }

  TEST_CASE("augmentation from gold") {
    Fixture f(test::lymphocytes_case());
    f.config.kb_path.reset();
    f.config.augment = AugmentSource::gold;
    const PreparedRun run = prepare_run(f.config, f.c.corpus);
    CHECK(run.kb_loaded == 0);
    CHECK(run.kb_augmented == 1);
    CHECK(run.kb.contains("human lymphocytes"));
  }

  TEST_CASE("golden runs are correct and byte-stable") {
    for (const auto& gc : test::golden_cases()) {
      CAPTURE(gc.name);
      Fixture f(gc);
      const RunArtifacts a = f.run();
      const RunArtifacts b = f.run();
      CHECK(a.revised_json == b.revised_json);
      CHECK(a.audit_jsonl == b.audit_jsonl);
      CHECK(a.metadata_json == b.metadata_json);
      CHECK(a.report_json == b.report_json);
      CHECK(test::slurp(f.dir / "out" / "revised.json") == a.revised_json);

      const Corpus revised = corpus_from_json(json::parse(a.revised_json));
      CHECK(revised.predicted == std::vector<Entity>{gc.expected});
      CHECK(validate_audit(a.audit_jsonl, gc.corpus, 10).empty());
      CHECK(json::parse(*a.report_json)["precision"] == 1.0);

      // The script file drives the same run as the in-process backend.
      const RunArtifacts from_file = execute_run(f.config, gc.corpus);
      CHECK(from_file.audit_jsonl == a.audit_jsonl);
    }
  }

  TEST_CASE("worker count does not change the output") {
    const auto suite = test::make_oracle_suite(11, 30);
    test::TempDir dir;
    test::write_kb_file(dir / "kb.jsonl", suite.kb);
    auto cfg = test::fixture_config(DatasetProfile::genia, dir / "kb.jsonl", dir / "none.jsonl", dir / "o1");
    cfg.workers = 1;
    auto b1 = responder_backend(test::omniscient_responder(suite.corpus));
    const auto one = execute_run(cfg, suite.corpus, b1.get());
    cfg.workers = 4;
    cfg.out_dir = dir / "o4";
    auto b4 = responder_backend(test::omniscient_responder(suite.corpus));
    const auto four = execute_run(cfg, suite.corpus, b4.get());
    CHECK(one.revised_json == four.revised_json);
    CHECK(one.audit_jsonl == four.audit_jsonl);
    CHECK(json::parse(*one.report_json)["precision"] == 1.0);
  }

  TEST_CASE("audit validation catches damage") {
    Fixture f(test::leukocytes_case());
    const RunArtifacts a = f.run();
    CHECK(validate_audit(a.audit_jsonl, f.c.corpus, 10).empty());
    CHECK_FALSE(validate_audit(a.audit_jsonl, f.c.corpus, 5).empty());
    CHECK_FALSE(validate_audit("", f.c.corpus, 10).empty());
    CHECK_FALSE(validate_audit(a.audit_jsonl + a.audit_jsonl, f.c.corpus, 10).empty());
    auto j = json::parse(a.audit_jsonl);
    j["tally"]["none"] = j["tally"]["none"].get<int>() + 1;
    CHECK_FALSE(validate_audit(j.dump() + "\n", f.c.corpus, 10).empty());
  }

  TEST_CASE("predictions converging on one span are merged") {
    Fixture f(test::leukocytes_case());
    Corpus input = f.c.corpus;
    input.predicted.push_back(input.make_entity("leuk", {11, 11}, "cell_type"));
    const RunArtifacts a = execute_run(f.config, input, test::golden_backend(f.c).get());
    const auto meta = metadata(a);
    CHECK(meta["decisions"]["duplicate"] == 1);
    CHECK(meta["entities"]["output"] == 1);
    const auto lines = audit_lines(a);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0]["decision"]["removed"] == false);
    CHECK(lines[1]["decision"]["reason"] == "duplicate");
    CHECK(validate_audit(a.audit_jsonl, input, 10).empty());
  }

  TEST_CASE("ablation counters") {
    Fixture full(test::leukocytes_case());
    const auto m = metadata(full.run());
    CHECK(m["variant"] == "full");
    CHECK(m["counters"]["kb_lookups"].get<int>() > 0);
    CHECK(m["counters"]["type_requests"] == 4);
    CHECK(m["counters"]["path_requests"] == 10);

    Fixture nv(test::leukocytes_case());
    nv.config.ablation.no_voting = true;
    const auto a = nv.run();
    CHECK(metadata(a)["counters"]["path_requests"] == 1);
    CHECK(audit_lines(a)[0]["tally"]["n_paths"] == 1);
    CHECK(validate_audit(a.audit_jsonl, nv.c.corpus, 1).empty());

    Fixture nk(test::leukocytes_case());
    nk.config.ablation.no_kb = true;
    nk.config.kb_path.reset();
    const auto k = nk.run();
    const auto km = metadata(k);
    CHECK(km["counters"]["kb_lookups"] == 0);
    CHECK(km["counters"]["type_requests"] == audit_lines(k)[0]["enumerated"]);
    CHECK(km["kb"]["entries"] == 0);

    Fixture ne(test::leukocytes_case());
    ne.config.ablation.no_evidence = true;
    auto backend = test::golden_backend(ne.c);
    execute_run(ne.config, ne.c.corpus, backend.get());
    bool saw_context = false;
    for (const auto& r : backend->log()) {
      if (!test::is_context_request(r)) continue;
      saw_context = true;
      CHECK(r.messages.back().content.find("['mononuclear leukocytes', 'cell_type']") != std::string::npos);
    }
    CHECK(saw_context);
  }

  TEST_CASE("manual-map baseline") {
    test::TempDir dir;
    KbIndex kb;
    kb.insert(test::kb_entry("aspirin", {}, {"Organic Chemical"}));
    kb.insert(test::kb_entry("fever", {}, {"Sign or Symptom"}));
    test::write_kb_file(dir / "kb.jsonl", kb);

    Corpus train;
    train.add_document(test::make_doc("tr", "aspirin for fever"));
    train.gold = {train.make_entity("tr", {0, 0}, "Chemical"), train.make_entity("tr", {2, 2}, "Disease")};
    save_json(dir / "train.json", train);

    Corpus input;
    input.add_document(test::make_doc("d", "fever after aspirin"));
    input.predicted = {input.make_entity("d", {0, 0}, "Chemical"), input.make_entity("d", {2, 2}, "Disease")};

    BaselineConfig cfg;
    cfg.profile = DatasetProfile::bc5cdr;
    cfg.kb_path = dir / "kb.jsonl";
    cfg.train_path = dir / "train.json";
    const auto out = run_baseline(cfg, input);
    REQUIRE(out.map);
    CHECK(out.revised.predicted ==
          std::vector<Entity>{input.make_entity("d", {0, 0}, "Disease"), input.make_entity("d", {2, 2}, "Chemical")});

    cfg.train_path.reset();
    CHECK_THROWS_AS(run_baseline(cfg, input), ConfigError);
    cfg.resolver = MapResolver::manual_file;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    test::spit(dir / "map.json", "{\"Organic Chemical\": \"Chemical\"}");
    cfg.map_path = dir / "map.json";
    CHECK(run_baseline(cfg, input).revised.predicted.size() == 1);
  }

  TEST_CASE("LLM-revision baseline") {
    Corpus input;
    input.add_document(test::make_doc("a", "x y z"));
    input.add_document(test::make_doc("b", "p q"));
    input.predicted = {input.make_entity("a", {1, 1}, "Chemical"), input.make_entity("b", {0, 0}, "Disease")};
    auto backend = responder_backend([](const ChatRequest& r) -> std::string {
      const std::string& text = r.messages.back().content;
      if (text.find("x <C>y</C> z") != std::string::npos) return "The labeled sentence: x <C>y z</C>";
      return "no idea";
    });
    BaselineConfig cfg;
    cfg.kind = BaselineKind::llm_revision;
    cfg.profile = DatasetProfile::bc5cdr;
    cfg.workers = 2;
    const auto out = run_baseline(cfg, input, backend.get());
    CHECK(out.fallbacks == 1);
    CHECK(out.revised.predicted ==
          std::vector<Entity>{input.make_entity("a", {1, 2}, "Chemical"), input.make_entity("b", {0, 0}, "Disease")});
    CHECK(parse_baseline_kind("llm_revision_cot") == BaselineKind::llm_revision_cot);
    CHECK_THROWS_AS(parse_baseline_kind("rules"), ConfigError);
  }
}
