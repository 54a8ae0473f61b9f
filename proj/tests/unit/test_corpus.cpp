#include <doctest.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "kgverify/corpus.hpp"
#include "kgverify/error.hpp"
#include "test_support.hpp"

using namespace kgv;
using kgv::test::Rng;

namespace {

Corpus conll(const std::string& text, TagRole role = TagRole::gold) {
  std::istringstream in(text);
  return parse_conll(in, role, "test.conll");
}

// Independent run scanner: a run starts at B-X, or at I-X not continuing an
// X run, and extends over following I-X tags.
std::vector<std::tuple<int, int, std::string>> scan_runs(const std::vector<std::string>& tags) {
  std::vector<std::tuple<int, int, std::string>> out;
  int i = 0;
  const int n = static_cast<int>(tags.size());
  while (i < n) {
    if (tags[i] == "O") {
      ++i;
      continue;
    }
    const std::string type = tags[i].substr(2);
    int j = i + 1;
    while (j < n && tags[j] == "I-" + type) ++j;
    out.emplace_back(i, j - 1, type);
    i = j;
  }
  return out;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("single-token run") {
    Corpus c = conll("IL-2\tB-protein\nbinds\tO\n");
    REQUIRE(c.gold.size() == 1);
    CHECK(c.gold[0].span == TokenSpan{0, 0});
    CHECK(c.gold[0].etype == "protein");
    CHECK(c.gold[0].surface == "IL-2");
  }

  TEST_CASE("two-token run") {
    Corpus c = conll("kappa\tB-DNA\nB\tI-DNA\nsite\tO\n");
    REQUIRE(c.gold.size() == 1);
    CHECK(c.gold[0].span == TokenSpan{0, 1});
  }

  TEST_CASE("documents split on blank lines, doc_id comments respected") {
    Corpus c = conll("# doc_id = first\na\tO\n\nb\tB-RNA\n");
    REQUIRE(c.documents.size() == 2);
    CHECK(c.documents.count("first") == 1);
    CHECK(c.documents.count("doc000001") == 1);
    CHECK(c.gold[0].doc_id == "doc000001");
  }

  TEST_CASE("orphan I- tag is repaired with a warning") {
    Corpus c = conll("x\tO\ny\tI-protein\n");
    REQUIRE(c.gold.size() == 1);
    CHECK(c.gold[0].span == TokenSpan{1, 1});
    CHECK(c.warnings.size() == 1);
  }

  TEST_CASE("prediction and both roles") {
    Corpus p = conll("a\tB-Chemical\n", TagRole::prediction);
    CHECK(p.gold.empty());
    CHECK(p.predicted.size() == 1);
    Corpus b = conll("a\tB-Chemical\tO\nb\tO\tB-Disease\n", TagRole::both);
    CHECK(b.gold.size() == 1);
    CHECK(b.predicted.size() == 1);
    CHECK(b.predicted[0].span == TokenSpan{1, 1});
  }

  TEST_CASE("malformed input") {
    CHECK_THROWS_AS(conll("a\n"), FormatError);
    CHECK_THROWS_AS(conll("a\tX-foo\n"), FormatError);
    CHECK_THROWS_AS(conll("a\tO\n", TagRole::both), FormatError);
    try {
      conll("a\tO\nb\tB\n");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.where() == "line 2");
    }
  }

  TEST_CASE("random BIO corpus matches the run scanner") {
    Rng rng(11);
    const std::vector<std::string> labels = {"protein", "DNA", "RNA"};
    std::string text;
    std::vector<std::vector<std::string>> all_tags;
    for (int d = 0; d < 100; ++d) {
      const int n = rng.uniform(1, 25);
      std::vector<std::string> tags;
      for (int i = 0; i < n; ++i) {
        const int r = rng.uniform(0, 4);
        tags.push_back(r < 2 ? "O" : (r == 2 ? "B-" : "I-") + rng.pick(labels));
        text += "t" + std::to_string(i) + "\t" + tags.back() + "\n";
      }
      text += "\n";
      all_tags.push_back(tags);
    }
    Corpus c = conll(text);
    REQUIRE(c.documents.size() == 100);
    std::vector<std::tuple<std::string, int, int, std::string>> got, want;
    for (const auto& e : c.gold) got.emplace_back(e.doc_id, e.span.beg, e.span.end, e.etype);
    for (std::size_t d = 0; d < all_tags.size(); ++d) {
      char id[16];
      std::snprintf(id, sizeof id, "doc%06zu", d);
      for (auto [b, e, t] : scan_runs(all_tags[d])) want.emplace_back(id, b, e, t);
    }
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    CHECK(got == want);
  }

  TEST_CASE("CoNLL round trip, overlapping entities become extra instances") {
    Corpus c;
    c.add_document(test::make_doc("d", "a b c d"));
    c.gold.push_back(c.make_entity("d", {0, 1}, "DNA"));
    c.gold.push_back(c.make_entity("d", {3, 3}, "RNA"));
    std::ostringstream out;
    write_conll(out, c, TagRole::gold);
    std::istringstream in(out.str());
    CHECK(parse_conll(in, TagRole::gold) == c);

    c.gold.push_back(c.make_entity("d", {1, 2}, "protein"));
    std::ostringstream out2;
    write_conll(out2, c, TagRole::gold);
    CHECK(out2.str().find("# doc_id = d#2") != std::string::npos);
  }

  TEST_CASE("JSON load") {
    const auto j = nlohmann::json::parse(R"({"documents":[{"doc_id":"d1","tokens":["cyproterone","acetate"]}],
      "gold":[{"doc_id":"d1","beg":0,"end":1,"type":"Chemical"}],"predicted":[]})");
    Corpus c = corpus_from_json(j);
    REQUIRE(c.gold.size() == 1);
    CHECK(c.gold[0].surface == "cyproterone acetate");
    CHECK(c.gold[0].etype == "Chemical");
  }

  TEST_CASE("JSON errors carry a pointer") {
    auto bad = nlohmann::json::parse(R"({"documents":[{"doc_id":"d1","tokens":["a"]}],
      "gold":[{"doc_id":"d1","beg":0,"end":3,"type":"X"}],"predicted":[]})");
    try {
      corpus_from_json(bad);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.where() == "/gold/0");
    }
    auto missing = nlohmann::json::parse(R"({"documents":[{"doc_id":"d1"}]})");
    try {
      corpus_from_json(missing);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.where() == "/documents/0/tokens");
    }
    auto dangling = nlohmann::json::parse(R"({"documents":[{"doc_id":"d1","tokens":["a"]}],
      "gold":[],"predicted":[{"doc_id":"zz","beg":0,"end":0,"type":"X"}]})");
    try {
      corpus_from_json(dangling);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.where() == "/predicted/0/doc_id");
    }
  }

  TEST_CASE("JSON round trip of random corpora") {
    Rng rng(5);
    for (int round = 0; round < 50; ++round) {
      Corpus c;
      const int n_docs = rng.uniform(1, 5);
      for (int d = 0; d < n_docs; ++d) {
        Document doc;
        doc.doc_id = "d" + std::to_string(d);
        for (int t = rng.uniform(1, 12); t > 0; --t) doc.tokens.push_back("tok" + std::to_string(rng.uniform(0, 9)));
        c.add_document(doc);
        for (int k = rng.uniform(0, 4); k > 0; --k) {
          const int b = rng.uniform(0, doc.size() - 1);
          const int e = rng.uniform(b, doc.size() - 1);
          auto& list = rng.chance(0.5) ? c.gold : c.predicted;
          list.push_back(c.make_entity(doc.doc_id, {b, e}, rng.chance(0.5) ? "Chemical" : "Disease"));
        }
      }
      CHECK(corpus_from_json(corpus_to_json(c)) == c);
    }
  }

  TEST_CASE("a GENIA-sized corpus loads") {
    test::TempDir dir;
    Rng rng(3);
    Corpus c;
    for (int d = 0; d < 500; ++d) {
      c.add_document(test::make_doc("g" + std::to_string(d), "w1 w2 w3 w4 w5 w6 w7 w8"));
    }
    for (int k = 0; k < 1472; ++k) {
      const int b = rng.uniform(0, 7);
      c.gold.push_back(c.make_entity("g" + std::to_string(k % 500), {b, std::min(7, b + rng.uniform(0, 2))}, "protein"));
    }
    save_json(dir / "genia.json", c);
    Corpus back = load_json(dir / "genia.json");
    CHECK(back.documents.size() == 500);
    CHECK(back.gold.size() == 1472);
  }

  TEST_CASE("entity context is the document text") {
    Corpus c;
    c.add_document(test::make_doc("d", "a b"));
    CHECK(entity_context(c, c.make_entity("d", {0, 0}, "X")) == "a b");
    auto lc = test::leukocytes_case();
    const Document& doc = lc.corpus.documents.begin()->second;
    const std::string ctx = entity_context(lc.corpus, lc.corpus.predicted[0]);
    CHECK(ctx == doc.text());
    CHECK(ctx.find("from human mononuclear leukocytes") != std::string::npos);
    CHECK(entity_context(lc.corpus, lc.corpus.gold[0]) == ctx);
  }

  TEST_CASE("surface reproduces the token join") {
    Document d = test::make_doc("d", "a bb ccc");
    for (int b = 0; b < 3; ++b) {
      for (int e = b; e < 3; ++e) {
        std::string want;
        for (int i = b; i <= e; ++i) want += (i > b ? " " : "") + d.tokens[i];
        CHECK(d.surface({b, e}) == want);
      }
    }
  }

  TEST_CASE("document and corpus invariants") {
    Corpus c;
    CHECK_THROWS_AS(c.add_document(Document{"e", {}}), IntegrityError);
    CHECK_THROWS_AS(c.add_document(Document{"e", {"a", ""}}), IntegrityError);
    c.add_document(test::make_doc("d", "a"));
    CHECK_THROWS_AS(c.add_document(test::make_doc("d", "b")), IntegrityError);
    CHECK_THROWS_AS(c.make_entity("d", {0, 1}, "X"), IntegrityError);
    CHECK_THROWS_AS(c.document("nope"), IntegrityError);
  }

  TEST_CASE("type set") {
    TypeSet t = TypeSet::genia();
    CHECK(t.canonical("Cell-Type") == std::optional<std::string>("cell_type"));
    CHECK(t.canonical("none") == std::optional<std::string>("None"));
    CHECK_FALSE(t.canonical("organ").has_value());
    CHECK(t.is_none("NONE"));
    CHECK_THROWS_AS(TypeSet(std::vector<std::string>{}), ConfigError);
    CHECK_THROWS_AS(TypeSet({"a", "A"}), ConfigError);
    CHECK_THROWS_AS(TypeSet({"a", "none"}), ConfigError);
  }

  TEST_CASE("merge annotations") {
    Corpus g;
    g.add_document(test::make_doc("d", "a b"));
    g.gold.push_back(g.make_entity("d", {0, 0}, "X"));
    Corpus p;
    p.add_document(test::make_doc("d", "a b"));
    p.predicted.push_back(p.make_entity("d", {1, 1}, "X"));
    Corpus m = merge_annotations(g, p);
    CHECK(m.gold.size() == 1);
    CHECK(m.predicted.size() == 1);
    Corpus other;
    other.add_document(test::make_doc("d", "a c"));
    CHECK_THROWS_AS(merge_annotations(g, other), IntegrityError);
  }
}
