#include <doctest.h>

#include <sstream>

#include "kgverify/error.hpp"
#include "kgverify/kb.hpp"
#include "test_support.hpp"

using namespace kgv;
using kgv::test::Rng;

namespace {

KbIndex kb_from(const std::string& text, Normalization mode = Normalization::lower_ws) {
  std::istringstream in(text);
  return parse_kb(in, mode, "test.jsonl");
}

std::string random_text(Rng& rng) {
  static const std::vector<std::string> pieces = {"a", "B", " ", "  ", "\t", "NF", "-", "kappa", "\xc3\x89", "\xc3\xa9",
                                                  "\xce\x91", "x", "\n", "Zz"};
  std::string s;
  for (int k = rng.uniform(0, 10); k > 0; --k) s += rng.pick(pieces);
  return s;
}

}  // namespace

TEST_SUITE("kb") {
  TEST_CASE("normalize") {
    CHECK(normalize("NF-kappa  B", Normalization::lower_ws) == "nf-kappa b");
    CHECK(normalize("", Normalization::lower_ws).empty());
    CHECK(normalize("  IL-2\t receptor ", Normalization::lower_ws) == "il-2 receptor");
    CHECK(normalize("\xc3\x89tat", Normalization::lower_ws) == "\xc3\xa9tat");
    CHECK(normalize("NF-kappa  B", Normalization::exact) == "NF-kappa  B");
  }

  TEST_CASE("normalize is idempotent") {
    Rng rng(17);
    for (int i = 0; i < 2000; ++i) {
      const std::string s = random_text(rng);
      for (auto mode : {Normalization::lower_ws, Normalization::exact}) {
        const std::string once = normalize(s, mode);
        CHECK(normalize(once, mode) == once);
      }
    }
  }

  TEST_CASE("normalization names") {
    CHECK(parse_normalization("exact") == Normalization::exact);
    CHECK(to_string(Normalization::lower_ws) == "lower_ws");
    CHECK_THROWS_AS(parse_normalization("fold"), ConfigError);
  }

  TEST_CASE("duplicate terms merge by union") {
    KbIndex kb = kb_from(R"({"term":"aspirin","definitions":["An analgesic."],"semantic_types":["Organic Chemical"]}
{"term":"Aspirin","definitions":["An analgesic."],"semantic_types":["Pharmacologic Substance"]}
)");
    REQUIRE(kb.size() == 1);
    const KnowledgeEntry* e = kb.lookup("ASPIRIN");
    REQUIRE(e != nullptr);
    CHECK(e->definitions.size() == 1);
    CHECK(e->semantic_types == std::vector<std::string>{"Organic Chemical", "Pharmacologic Substance"});
  }

  TEST_CASE("entry without definitions loads") {
    KbIndex kb = kb_from(R"({"term":"GRalpha","definitions":[],"semantic_types":["Receptor"]})");
    REQUIRE(kb.lookup("gralpha") != nullptr);
    CHECK(kb.lookup("gralpha")->definitions.empty());
  }

  TEST_CASE("malformed KB lines") {
    CHECK_THROWS_AS(kb_from("{not json}\n"), FormatError);
    CHECK_THROWS_AS(kb_from(R"({"definitions":[]})"), FormatError);
    CHECK_THROWS_AS(kb_from(R"({"term":"  "})"), FormatError);
    CHECK_THROWS_AS(kb_from(R"({"term":"a","definitions":[""]})"), FormatError);
    try {
      kb_from("{\"term\":\"a\"}\n\n{bad\n");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.where() == "line 3");
    }
  }

  TEST_CASE("10k synthetic entries") {
    std::string text;
    for (int i = 0; i < 10000; ++i) text += R"({"term":"term )" + std::to_string(i) + R"(","semantic_types":["T"]})" "\n";
    CHECK(kb_from(text).size() == 10000);
  }

  TEST_CASE("leukocyte KB lookups") {
    const KbIndex kb = test::leukocytes_case().kb;
    CHECK(kb.lookup("human mononuclear") == nullptr);
    const KnowledgeEntry* e = kb.lookup("mononuclear leukocytes");
    REQUIRE(e != nullptr);
    REQUIRE_FALSE(e->definitions.empty());
    CHECK(e->definitions[0].rfind("A white blood cell that lacks cytoplasmic granules", 0) == 0);
  }

  TEST_CASE("empty index finds nothing") {
    KbIndex kb;
    Rng rng(2);
    for (int i = 0; i < 200; ++i) CHECK(kb.lookup(random_text(rng)) == nullptr);
  }

  TEST_CASE("every entry is found under its own term") {
    Rng rng(8);
    KbIndex kb;
    std::vector<std::string> terms;
    for (int i = 0; i < 300; ++i) {
      std::string t = random_text(rng);
      if (normalize(t, Normalization::lower_ws).empty()) continue;
      terms.push_back(t);
      kb.insert(test::kb_entry(t));
    }
    for (const auto& [key, entry] : kb.entries()) CHECK(normalize(entry.term, kb.normalization()) == key);
    for (const auto& t : terms) CHECK(kb.lookup(t) != nullptr);
  }

  TEST_CASE("write then parse round trip") {
    KbIndex kb = test::leukocytes_case().kb;
    std::ostringstream out;
    write_kb(out, kb);
    KbIndex back = kb_from(out.str());
    CHECK(back.entries() == kb.entries());
  }

  TEST_CASE("augmentation") {
    Corpus c;
    c.add_document(test::make_doc("d", "IL-2 binds aspirin"));
    const Entity il2 = c.make_entity("d", {0, 0}, "protein");
    const Entity asp = c.make_entity("d", {2, 2}, "Chemical");
    KbIndex kb;
    kb.insert(test::kb_entry("aspirin", {"An analgesic."}, {"Organic Chemical"}));

    KbIndex aug = augment_kb(kb, {il2, asp}, {{"protein", {"Amino Acid, Peptide, or Protein"}}});
    REQUIRE(aug.lookup("il-2") != nullptr);
    CHECK(aug.entries().count("il-2") == 1);
    CHECK(aug.lookup("il-2")->semantic_types == std::vector<std::string>{"Amino Acid, Peptide, or Protein"});
    CHECK(aug.lookup("aspirin")->definitions == std::vector<std::string>{"An analgesic."});
    CHECK(augment_kb(aug, {il2, asp, il2}).entries() == aug.entries());
    CHECK(kb.lookup("il-2") == nullptr);
  }

  TEST_CASE("augmenting with the gold surfaces covers them") {
    auto suite = test::make_oracle_suite(21, 100);
    KbIndex partial;
    for (std::size_t i = 0; i < suite.corpus.gold.size(); i += 3) {
      partial.insert(test::kb_entry(suite.corpus.gold[i].surface));
    }
    CHECK(partial.coverage(suite.corpus.gold) < 0.9);
    KbIndex full = augment_kb(partial, suite.corpus.gold);
    CHECK(full.coverage(suite.corpus.gold) >= 0.9);
    CHECK(KbIndex().coverage({}) == 0.0);
  }
}
