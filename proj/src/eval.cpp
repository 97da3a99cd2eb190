#include "spen/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "spen/error.hpp"

namespace spen {

namespace {

void check_aligned(std::size_t a, std::size_t b, const char* what, std::size_t seq = 0,
                   bool inner = false) {
  if (a == b) return;
  std::string msg = std::string(what) + ": ";
  if (inner) msg += "sequence " + std::to_string(seq) + " has ";
  msg += std::to_string(a) + " vs " + std::to_string(b) + (inner ? " positions" : " sequences");
  throw Error(ErrorKind::kShape, msg);
}

struct Tag {
  char prefix = 'O';
  std::string type;
};

Tag parse_tag(const std::string& label) {
  if (label == "O") return {};
  if (label.size() < 3 || label[1] != '-' ||
      std::string_view("BIES").find(label[0]) == std::string_view::npos) {
    throw Error(ErrorKind::kFormat, "label '" + label + "' is not BIOES");
  }
  return {label[0], label.substr(2)};
}

double pct(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double token_accuracy(const LabelSeqs& pred, const LabelSeqs& gold) {
  check_aligned(pred.size(), gold.size(), "token_accuracy");
  std::size_t total = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check_aligned(pred[i].size(), gold[i].size(), "token_accuracy", i, true);
    for (std::size_t t = 0; t < pred[i].size(); ++t) correct += pred[i][t] == gold[i][t];
    total += pred[i].size();
  }
  return pct(correct, total);
}

std::vector<Span> extract_spans(std::span<const std::string> labels) {
  std::vector<Span> spans;
  std::optional<Span> open;
  auto close = [&](std::size_t end) {
    if (open) {
      open->end = end;
      spans.push_back(std::move(*open));
      open.reset();
    }
  };
  for (std::size_t t = 0; t < labels.size(); ++t) {
    Tag tag = parse_tag(labels[t]);
    const bool continues = open && open->type == tag.type;
    switch (tag.prefix) {
      case 'O':
        close(t - 1);
        break;
      case 'S':
        close(t - 1);
        spans.push_back({t, t, tag.type});
        break;
      case 'B':
        close(t - 1);
        open = Span{t, t, tag.type};
        break;
      case 'I':
        if (!continues) {
          close(t - 1);
          open = Span{t, t, tag.type};
        }
        break;
      case 'E':
        if (!continues) {
          close(t - 1);
          open = Span{t, t, tag.type};
        }
        close(t);
        break;
    }
  }
  if (!labels.empty()) close(labels.size() - 1);
  return spans;
}

SpanScores span_f1(const LabelStrings& pred, const LabelStrings& gold) {
  check_aligned(pred.size(), gold.size(), "span_f1");
  SpanScores s;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check_aligned(pred[i].size(), gold[i].size(), "span_f1", i, true);
    auto p = extract_spans(pred[i]);
    auto g = extract_spans(gold[i]);
    std::sort(p.begin(), p.end());
    std::sort(g.begin(), g.end());
    std::vector<Span> common;
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(common));
    s.n_pred += p.size();
    s.n_gold += g.size();
    s.n_correct += common.size();
  }
  if (s.n_pred == 0 && s.n_gold == 0) {
    s.precision = s.recall = s.f1 = 100.0;
    return s;
  }
  s.precision = pct(s.n_correct, s.n_pred);
  s.recall = pct(s.n_correct, s.n_gold);
  s.f1 = s.precision + s.recall > 0.0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

double DisagreementReport::rate() const { return pct(n_differ, n_positions); }

double DisagreementReport::test_correct_rate() const {
  return pct(n_differ_test_correct, n_test_correct);
}

DisagreementReport disagreement(const LabelSeqs& test_pred, const LabelSeqs& cost_pred,
                                const LabelSeqs& gold) {
  check_aligned(test_pred.size(), cost_pred.size(), "disagreement");
  check_aligned(test_pred.size(), gold.size(), "disagreement");
  DisagreementReport r;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> pairs;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    check_aligned(test_pred[i].size(), gold[i].size(), "disagreement", i, true);
    check_aligned(cost_pred[i].size(), gold[i].size(), "disagreement", i, true);
    for (std::size_t t = 0; t < gold[i].size(); ++t) {
      const std::size_t a = test_pred[i][t];
      const std::size_t f = cost_pred[i][t];
      ++r.n_positions;
      if (a != f) ++r.n_differ;
      if (a == gold[i][t]) {
        ++r.n_test_correct;
        if (a != f) {
          ++r.n_differ_test_correct;
          ++pairs[{a, f}];
        }
      }
    }
  }
  for (const auto& [key, count] : pairs) r.pairs.push_back({key.first, key.second, count});
  std::stable_sort(r.pairs.begin(), r.pairs.end(),
                   [](const auto& x, const auto& y) { return x.count > y.count; });
  return r;
}

Metrics compute_metrics(const LabelStrings& pred, const LabelStrings& gold, bool bioes) {
  check_aligned(pred.size(), gold.size(), "metrics");
  Metrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check_aligned(pred[i].size(), gold[i].size(), "metrics", i, true);
    for (std::size_t t = 0; t < pred[i].size(); ++t) correct += pred[i][t] == gold[i][t];
    m.n_tokens += pred[i].size();
  }
  m.accuracy = pct(correct, m.n_tokens);
  if (bioes) {
    SpanScores s = span_f1(pred, gold);
    m.precision = s.precision;
    m.recall = s.recall;
    m.f1 = s.f1;
    m.n_spans_gold = s.n_gold;
    m.n_spans_pred = s.n_pred;
  }
  return m;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::string metrics_json(const Metrics& m) {
  auto num = [](std::optional<double> v) {
    if (!v) return std::string("null");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", round2(*v));
    return std::string(buf);
  };
  return "{\"accuracy\":" + num(m.accuracy) + ",\"precision\":" + num(m.precision) +
         ",\"recall\":" + num(m.recall) + ",\"f1\":" + num(m.f1) +
         ",\"n_tokens\":" + std::to_string(m.n_tokens) +
         ",\"n_spans_gold\":" + std::to_string(m.n_spans_gold) +
         ",\"n_spans_pred\":" + std::to_string(m.n_spans_pred) + "}";
}

}  // namespace spen
