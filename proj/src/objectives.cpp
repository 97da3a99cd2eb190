#include "spen/objectives.hpp"

#include <algorithm>

namespace spen {

const char* mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::kMarginRescaled: return "margin-rescaled";
    case TrainMode::kPerceptron: return "perceptron";
    case TrainMode::kCompound: return "compound";
    case TrainMode::kCrossEntropy: return "ce-baseline";
  }
  return "?";
}

std::optional<TrainMode> mode_from_name(std::string_view name) {
  for (auto m : {TrainMode::kMarginRescaled, TrainMode::kPerceptron, TrainMode::kCompound,
                 TrainMode::kCrossEntropy}) {
    if (name == mode_name(m)) return m;
  }
  return std::nullopt;
}

Tensor cost_delta(Tensor p, Tensor gold) { return l1_distance(p, gold); }

Tensor local_ce(Tensor p, std::span<const std::size_t> gold) {
  if (p.rows() != gold.size()) {
    throw Error(ErrorKind::kShape, "local_ce: output " + p.shape().str() + " vs " +
                                       std::to_string(gold.size()) + " gold labels");
  }
  RelaxedLabelSeq y = one_hot(gold, p.cols());
  Tensor mask = p.tape().constant(p.shape(), std::move(y.probs));
  return -sum(mask * log(p, kCeLogFloor));
}

Tensor margin_rescaled_loss(const EnergyContext& energy, Tensor gold, Tensor p_cost,
                            bool truncate) {
  Tensor h = cost_delta(p_cost, gold) - energy(p_cost) + energy(gold);
  return truncate ? hinge(h) : h;
}

Tensor perceptron_loss(const EnergyContext& energy, Tensor gold, Tensor p_test, bool truncate) {
  Tensor h = energy(gold) - energy(p_test);
  return truncate ? hinge(h) : h;
}

LossItem::LossItem(EnergyContext energy, std::span<const std::size_t> gold,
                   std::optional<Tensor> cost_output, std::optional<Tensor> test_output)
    : energy_(energy),
      gold_labels_(gold),
      cost_output_(cost_output),
      test_output_(test_output) {}

Tensor LossItem::gold() {
  if (!gold_) {
    Tensor any = cost_output_ ? *cost_output_ : test_output();
    RelaxedLabelSeq y = one_hot(gold_labels_, any.cols());
    gold_ = any.tape().constant(Shape::matrix(y.length, y.num_labels), std::move(y.probs));
  }
  return *gold_;
}

Tensor LossItem::cost_output() const {
  if (!cost_output_) throw Error(ErrorKind::kState, "loss needs the cost-augmented output");
  return *cost_output_;
}

Tensor LossItem::test_output() const {
  if (!test_output_) throw Error(ErrorKind::kState, "loss needs the test-time output");
  return *test_output_;
}

Tensor LossItem::energy_gold() {
  if (!energy_gold_) energy_gold_ = energy_(gold());
  return *energy_gold_;
}

Tensor LossItem::energy_cost() {
  if (!energy_cost_) energy_cost_ = energy_(cost_output());
  return *energy_cost_;
}

Tensor LossItem::energy_test() {
  if (!energy_test_) energy_test_ = energy_(test_output());
  return *energy_test_;
}

Tensor LossItem::delta_cost() {
  if (!delta_cost_) delta_cost_ = cost_delta(cost_output(), gold());
  return *delta_cost_;
}

namespace {

Tensor margin_term(LossItem& item, bool truncate) {
  Tensor h = item.delta_cost() - item.energy_cost() + item.energy_gold();
  return truncate ? hinge(h) : h;
}

Tensor perceptron_term(LossItem& item, bool truncate) {
  Tensor h = item.energy_gold() - item.energy_test();
  return truncate ? hinge(h) : h;
}

Tensor accumulate(std::span<LossItem> batch, auto&& term) {
  if (batch.empty()) throw Error(ErrorKind::kState, "empty batch");
  Tensor total = term(batch[0]);
  for (std::size_t i = 1; i < batch.size(); ++i) total = total + term(batch[i]);
  return total;
}

}  // namespace

Tensor energy_step_loss(std::span<LossItem> batch, const LossConfig& cfg) {
  const bool trunc = cfg.truncate_energy_step;
  switch (cfg.mode) {
    case TrainMode::kMarginRescaled:
      return accumulate(batch, [&](LossItem& it) { return margin_term(it, trunc); });
    case TrainMode::kPerceptron:
      return accumulate(batch, [&](LossItem& it) { return perceptron_term(it, trunc); });
    case TrainMode::kCompound:
      return accumulate(batch, [&](LossItem& it) {
        Tensor loss = margin_term(it, trunc);
        if (cfg.lambda != 0.0) loss = loss + scale(perceptron_term(it, trunc), cfg.lambda);
        return loss;
      });
    case TrainMode::kCrossEntropy:
      break;
  }
  throw Error(ErrorKind::kState, "mode ce-baseline has no energy step");
}

Tensor inference_step_loss(std::span<LossItem> batch, const LossConfig& cfg) {
  const bool trunc = cfg.truncate_inference_step;
  const double ce = cfg.ce_weight;
  auto cost_part = [&](LossItem& it) {
    Tensor v = trunc ? margin_term(it, true) : it.delta_cost() - it.energy_cost();
    if (ce != 0.0) v = v - scale(local_ce(it.cost_output(), it.gold_labels()), ce);
    return v;
  };
  auto test_part = [&](LossItem& it, double weight) {
    Tensor v = trunc ? perceptron_term(it, true) : -it.energy_test();
    if (weight != 1.0) v = scale(v, weight);
    if (ce != 0.0) v = v - scale(local_ce(it.test_output(), it.gold_labels()), ce);
    return v;
  };
  switch (cfg.mode) {
    case TrainMode::kMarginRescaled:
      return accumulate(batch, cost_part);
    case TrainMode::kPerceptron:
      return accumulate(batch, [&](LossItem& it) { return test_part(it, 1.0); });
    case TrainMode::kCompound:
      return accumulate(batch, [&](LossItem& it) {
        return cost_part(it) + test_part(it, cfg.lambda);
      });
    case TrainMode::kCrossEntropy:
      return accumulate(batch, [&](LossItem& it) {
        return -local_ce(it.test_output(), it.gold_labels());
      });
  }
  throw Error(ErrorKind::kState, "unknown training mode");
}

Diagnostics diagnostics(std::span<LossItem> batch) {
  Diagnostics d;
  if (batch.empty()) return d;
  for (auto& it : batch) {
    const double l1 = it.delta_cost().value() - it.energy_cost().value();
    d.l1 += l1;
    d.l0 += std::max(0.0, l1 + it.energy_gold().value());
  }
  d.l0 /= static_cast<double>(batch.size());
  d.l1 /= static_cast<double>(batch.size());
  return d;
}

}  // namespace spen
