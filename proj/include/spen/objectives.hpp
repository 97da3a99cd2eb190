#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "spen/data.hpp"
#include "spen/energy.hpp"

namespace spen {

// kCrossEntropy trains only the test-time network with the local CE loss
// (the BiLSTM tagger baseline).
enum class TrainMode { kMarginRescaled, kPerceptron, kCompound, kCrossEntropy };

const char* mode_name(TrainMode m);
std::optional<TrainMode> mode_from_name(std::string_view name);

struct LossConfig {
  TrainMode mode = TrainMode::kCompound;
  double lambda = 1.0;
  double ce_weight = 1.0;
  bool truncate_energy_step = true;
  bool truncate_inference_step = false;
};

inline constexpr double kCeLogFloor = 1e-12;

// L1 distance sum_t sum_j |p_tj - y_tj|.
Tensor cost_delta(Tensor p, Tensor gold);

// -sum_t log p[t, gold_t], floored at 1e-12.
Tensor local_ce(Tensor p, std::span<const std::size_t> gold);

// Energy of relaxed outputs for one example: the energy features b(x, .)
// are computed once and reused across every E(x, .) evaluation.
struct EnergyContext {
  const EnergyModel* model = nullptr;
  Tensor features;
  std::span<const std::size_t> tokens;

  Tensor operator()(Tensor y) const { return total_energy(features, y, tokens, *model); }
};

// h = Delta(p_F, y) - E(x, p_F) + E(x, y), truncated at zero when asked.
Tensor margin_rescaled_loss(const EnergyContext& energy, Tensor gold, Tensor p_cost,
                            bool truncate);

// h = -E(x, p_A) + E(x, y), truncated at zero when asked.
Tensor perceptron_loss(const EnergyContext& energy, Tensor gold, Tensor p_test, bool truncate);

// One training pair with the network outputs of the current step. Energies
// and costs are memoized so that losses and diagnostics share tape nodes.
class LossItem {
 public:
  LossItem(EnergyContext energy, std::span<const std::size_t> gold,
           std::optional<Tensor> cost_output, std::optional<Tensor> test_output);

  std::span<const std::size_t> gold_labels() const { return gold_labels_; }
  Tensor gold();
  Tensor cost_output() const;
  Tensor test_output() const;
  Tensor energy_gold();
  Tensor energy_cost();
  Tensor energy_test();
  Tensor delta_cost();

 private:
  EnergyContext energy_;
  std::span<const std::size_t> gold_labels_;
  std::optional<Tensor> cost_output_;
  std::optional<Tensor> test_output_;
  std::optional<Tensor> gold_;
  std::optional<Tensor> energy_gold_;
  std::optional<Tensor> energy_cost_;
  std::optional<Tensor> energy_test_;
  std::optional<Tensor> delta_cost_;
};

// Loss minimized over the energy parameters. Compound:
//   sum [Delta(F) - E(F) + E(y)]+ + lambda [-E(A) + E(y)]+
// margin-rescaled and perceptron keep their single term; truncation follows
// cfg.truncate_energy_step.
Tensor energy_step_loss(std::span<LossItem> batch, const LossConfig& cfg);

// Objective maximized over the inference networks. Compound:
//   sum Delta(F) - E(F) - lambda E(A) - ce_weight (CE(F) + CE(A))
// With cfg.truncate_inference_step the hinge terms (gold energy included)
// are used instead, truncated at zero.
Tensor inference_step_loss(std::span<LossItem> batch, const LossConfig& cfg);

struct Diagnostics {
  double l0 = 0.0;  // mean [Delta(F) - E(F) + E(y)]+
  double l1 = 0.0;  // mean Delta(F) - E(F)
};

Diagnostics diagnostics(std::span<LossItem> batch);

}  // namespace spen
