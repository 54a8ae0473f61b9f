#include <doctest.h>

#include <algorithm>
#include <set>

#include "kgverify/error.hpp"
#include "kgverify/span_verify.hpp"
#include "test_support.hpp"

using namespace kgv;
using kgv::test::Rng;

namespace {

Document sized_doc(int n) {
  Document d;
  d.doc_id = "d";
  for (int i = 0; i < n; ++i) d.tokens.push_back("t" + std::to_string(i));
  return d;
}

// Every sub-span of the document, filtered by the window and overlap rules.
std::vector<TokenSpan> oracle(int n, TokenSpan s, int alpha) {
  std::vector<TokenSpan> out;
  for (int b = 0; b < n; ++b) {
    for (int e = b; e < n; ++e) {
      const bool in_window = b >= s.beg - alpha && e <= s.end + alpha;
      bool shares = false;
      for (int t = b; t <= e; ++t) shares = shares || (t >= s.beg && t <= s.end);
      if (in_window && shares) out.push_back({b, e});
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("span_verify") {
  TEST_CASE("span [2,3] with alpha 1 gives 8 candidates") {
    const auto got = enumerate_spans(sized_doc(6), {2, 3}, {1});
    const std::vector<TokenSpan> want = {{1, 2}, {1, 3}, {1, 4}, {2, 2}, {2, 3}, {2, 4}, {3, 3}, {3, 4}};
    CHECK(got == want);
  }

  TEST_CASE("alpha 0 keeps sub-spans of the original") {
    const auto got = enumerate_spans(sized_doc(9), {3, 5}, {0});
    for (const auto& s : got) CHECK((s.beg >= 3 && s.end <= 5));
    CHECK(got.size() == 6);
    CHECK(enumerate_spans(sized_doc(9), {4, 4}, {0}) == std::vector<TokenSpan>{{4, 4}});
  }

  TEST_CASE("window is clipped at document edges") {
    const auto got = enumerate_spans(sized_doc(3), {0, 0}, {4});
    CHECK(got == std::vector<TokenSpan>{{0, 0}, {0, 1}, {0, 2}});
  }

  TEST_CASE("enumeration equals the brute-force oracle") {
    Rng rng(1234);
    for (int i = 0; i < 500; ++i) {
      const int n = rng.uniform(1, 40);
      const int b = rng.uniform(0, n - 1);
      const int e = rng.uniform(b, std::min(n - 1, b + 6));
      const int alpha = rng.uniform(0, 4);
      const auto got = enumerate_spans(sized_doc(n), {b, e}, {alpha});
      REQUIRE(got == oracle(n, {b, e}, alpha));
      REQUIRE(std::is_sorted(got.begin(), got.end()));
    }
  }

  TEST_CASE("enumeration is monotone in alpha") {
    Rng rng(99);
    for (int i = 0; i < 200; ++i) {
      const int n = rng.uniform(1, 30);
      const int b = rng.uniform(0, n - 1);
      const int e = rng.uniform(b, n - 1);
      const Document d = sized_doc(n);
      const auto small = enumerate_spans(d, {b, e}, {rng.uniform(0, 3)});
      const auto large = enumerate_spans(d, {b, e}, {4});
      const std::set<TokenSpan> big(large.begin(), large.end());
      for (const auto& s : small) CHECK(big.count(s) == 1);
    }
  }

  TEST_CASE("bad inputs") {
    CHECK_THROWS_AS(enumerate_spans(sized_doc(3), {0, 0}, {-1}), ConfigError);
    CHECK_THROWS_AS(enumerate_spans(sized_doc(3), {2, 3}, {1}), IntegrityError);
  }

  TEST_CASE("leukocyte candidates and pruning") {
    const auto lc = test::leukocytes_case();
    const Document& doc = lc.corpus.documents.begin()->second;
    const auto spans = enumerate_spans(doc, lc.corpus.predicted[0].span, {2});
    std::set<std::string> surfaces;
    for (const auto& s : spans) surfaces.insert(doc.surface(s));
    for (const char* want : {"human", "from human", "mononuclear", "mononuclear leukocytes",
                             "human mononuclear leukocytes", "human mononuclear"}) {
      CHECK(surfaces.count(want) == 1);
    }

    const auto kept = prune_by_kb(doc, spans, lc.kb);
    std::vector<std::string> names;
    for (const auto& c : kept) names.push_back(c.surface);
    CHECK(names == std::vector<std::string>{"human", "human mononuclear leukocytes", "mononuclear",
                                            "mononuclear leukocytes"});
    for (const auto& c : kept) CHECK(overlaps(c.span, lc.corpus.predicted[0].span));
    CHECK(kept.back().knowledge.semantic_types == std::vector<std::string>{"Quantitative Concept", "Blood Cell"});
  }

  TEST_CASE("pruning extremes") {
    const Document d = sized_doc(8);
    const auto spans = enumerate_spans(d, {3, 4}, {2});
    CHECK(prune_by_kb(d, spans, KbIndex()).empty());
    KbIndex all;
    for (const auto& s : spans) all.insert(test::kb_entry(d.surface(s)));
    CHECK(prune_by_kb(d, spans, all).size() == spans.size());
    const auto raw = unpruned_candidates(d, spans);
    CHECK(raw.size() == spans.size());
    CHECK(raw[0].knowledge.definitions.empty());
  }
}
