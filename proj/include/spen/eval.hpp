#pragma once

#include <compare>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spen {

using LabelSeqs = std::vector<std::vector<std::size_t>>;
using LabelStrings = std::vector<std::vector<std::string>>;

// Percentage of positions where pred equals gold.
double token_accuracy(const LabelSeqs& pred, const LabelSeqs& gold);

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  std::string type;

  auto operator<=>(const Span&) const = default;
};

// Chunks of a BIOES sequence with conlleval boundaries. An I-/E- that does
// not continue an open chunk of its type starts a new one; chunks left open
// close before the next boundary.
std::vector<Span> extract_spans(std::span<const std::string> labels);

struct SpanScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t n_gold = 0;
  std::size_t n_pred = 0;
  std::size_t n_correct = 0;
};

// Micro-averaged over all sequences, percentages.
SpanScores span_f1(const LabelStrings& pred, const LabelStrings& gold);

struct LabelPairCount {
  std::size_t test_label = 0;
  std::size_t cost_label = 0;
  std::size_t count = 0;
};

struct DisagreementReport {
  std::size_t n_positions = 0;
  std::size_t n_differ = 0;
  std::size_t n_test_correct = 0;
  std::size_t n_differ_test_correct = 0;
  std::vector<LabelPairCount> pairs;  // A correct, F differs; most frequent first

  double rate() const;               // % of all positions
  double test_correct_rate() const;  // % of A-correct positions
};

DisagreementReport disagreement(const LabelSeqs& test_pred, const LabelSeqs& cost_pred,
                                const LabelSeqs& gold);

struct Metrics {
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::size_t n_tokens = 0;
  std::size_t n_spans_gold = 0;
  std::size_t n_spans_pred = 0;
};

// Span fields are filled only when `bioes`.
Metrics compute_metrics(const LabelStrings& pred, const LabelStrings& gold, bool bioes);

// {"accuracy":..,"precision":..,"recall":..,"f1":..,"n_tokens":..,
//  "n_spans_gold":..,"n_spans_pred":..} with two-decimal scores.
std::string metrics_json(const Metrics& m);

double round2(double v);

}  // namespace spen
