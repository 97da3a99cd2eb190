#include <doctest.h>

#include <map>

#include "spen/eval.hpp"
#include "../support/span_oracle.hpp"

using namespace spen;

TEST_CASE("span extraction on well-formed and malformed sequences") {
  std::vector<std::string> a{"B-PER", "E-PER", "O", "S-LOC", "B-ORG", "I-ORG", "E-ORG"};
  auto s = extract_spans(a);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == Span{0, 1, "PER"});
  CHECK(s[1] == Span{3, 3, "LOC"});
  CHECK(s[2] == Span{4, 6, "ORG"});

  // An I- after O starts a chunk; a type change closes one; E- closes.
  std::vector<std::string> b{"O", "I-PER", "E-PER", "E-PER", "B-LOC", "I-PER"};
  auto t = extract_spans(b);
  REQUIRE(t.size() == 4);
  CHECK(t[0] == Span{1, 2, "PER"});
  CHECK(t[1] == Span{3, 3, "PER"});
  CHECK(t[2] == Span{4, 4, "LOC"});
  CHECK(t[3] == Span{5, 5, "PER"});
}

TEST_CASE("two of three spans right gives 66.67") {
  LabelStrings gold{{"S-PER", "O", "B-LOC", "E-LOC", "S-ORG"}};
  LabelStrings pred{{"S-PER", "O", "B-LOC", "E-LOC", "S-PER"}};
  auto s = span_f1(pred, gold);
  CHECK(s.n_correct == 2);
  CHECK(round2(s.precision) == 66.67);
  CHECK(round2(s.recall) == 66.67);
  CHECK(round2(s.f1) == 66.67);
}

TEST_CASE("span F1 conventions for empty sides") {
  LabelStrings none{{"O", "O"}};
  LabelStrings one{{"S-X", "O"}};
  CHECK(span_f1(none, none).f1 == 100.0);
  CHECK(span_f1(none, one).f1 == 0.0);
  CHECK(span_f1(one, none).f1 == 0.0);
  CHECK(span_f1(one, none).precision == 0.0);
}

TEST_CASE("span F1 equals the brute-force oracle on random sequences") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    LabelStrings pred, gold;
    const std::size_t n = 1 + rng.index(4);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t len = 1 + rng.index(12);
      gold.push_back(oracle::random_bioes(rng, len));
      pred.push_back(oracle::random_bioes(rng, len));
      if (rng.bernoulli(0.3)) pred.back() = gold.back();
    }
    auto a = span_f1(pred, gold);
    auto b = oracle::score(pred, gold);
    CHECK(a.n_gold == b.n_gold);
    CHECK(a.n_pred == b.n_pred);
    CHECK(a.n_correct == b.n_correct);
    CHECK(a.f1 == b.f1);
  }
}

TEST_CASE("token accuracy and its alignment checks") {
  LabelSeqs gold{{0, 1, 2}, {1}};
  LabelSeqs pred{{0, 2, 2}, {1}};
  CHECK(token_accuracy(pred, gold) == doctest::Approx(75.0));
  LabelSeqs ragged{{0, 1}, {1}};
  CHECK_THROWS(token_accuracy(ragged, gold));
}

TEST_CASE("disagreement counts match a direct recount") {
  Rng rng(5);
  LabelSeqs a, f, g;
  for (int i = 0; i < 50; ++i) {
    const std::size_t len = 1 + rng.index(10);
    std::vector<std::size_t> x, y, z;
    for (std::size_t t = 0; t < len; ++t) {
      z.push_back(rng.index(4));
      x.push_back(rng.bernoulli(0.7) ? z.back() : rng.index(4));
      y.push_back(rng.bernoulli(0.8) ? x.back() : rng.index(4));
    }
    a.push_back(x);
    f.push_back(y);
    g.push_back(z);
  }
  std::size_t n = 0, differ = 0, correct = 0, differ_correct = 0;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> pairs;
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t t = 0; t < g[i].size(); ++t) {
      ++n;
      differ += a[i][t] != f[i][t];
      if (a[i][t] == g[i][t]) {
        ++correct;
        if (a[i][t] != f[i][t]) {
          ++differ_correct;
          ++pairs[{a[i][t], f[i][t]}];
        }
      }
    }
  }
  auto r = disagreement(a, f, g);
  CHECK(r.n_positions == n);
  CHECK(r.n_differ == differ);
  CHECK(r.n_test_correct == correct);
  CHECK(r.n_differ_test_correct == differ_correct);
  CHECK(r.test_correct_rate() == doctest::Approx(100.0 * differ_correct / correct));
  std::size_t total = 0;
  for (std::size_t k = 0; k < r.pairs.size(); ++k) {
    CHECK(r.pairs[k].count == pairs[{r.pairs[k].test_label, r.pairs[k].cost_label}]);
    if (k > 0) CHECK(r.pairs[k - 1].count >= r.pairs[k].count);
    total += r.pairs[k].count;
  }
  CHECK(total == differ_correct);
}

TEST_CASE("metrics JSON") {
  LabelStrings gold{{"S-PER", "O", "B-LOC", "E-LOC", "S-ORG"}};
  LabelStrings pred{{"S-PER", "O", "B-LOC", "E-LOC", "S-PER"}};
  auto m = compute_metrics(pred, gold, true);
  CHECK(metrics_json(m) ==
        "{\"accuracy\":80.00,\"precision\":66.67,\"recall\":66.67,\"f1\":66.67,"
        "\"n_tokens\":5,\"n_spans_gold\":3,\"n_spans_pred\":3}");
  auto plain = compute_metrics(pred, gold, false);
  CHECK(metrics_json(plain) ==
        "{\"accuracy\":80.00,\"precision\":null,\"recall\":null,\"f1\":null,"
        "\"n_tokens\":5,\"n_spans_gold\":0,\"n_spans_pred\":0}");
  CHECK(round2(66.666666) == 66.67);
}
