#pragma once

#include <optional>
#include <string_view>

#include "spen/param_store.hpp"

namespace spen {

enum class OptimizerKind { kSgdMomentum, kAdam };

const char* optimizer_name(OptimizerKind k);
std::optional<OptimizerKind> optimizer_from_name(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 5e-4;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// v <- mu v + g; theta <- theta - lr v. Momentum buffers live in moment1.
void sgd_momentum_step(ParamStore& store, GroupSet groups, double lr, double momentum);

// Bias-corrected Adam; per-parameter step counters.
void adam_step(ParamStore& store, GroupSet groups, double lr, double beta1, double beta2,
               double eps);

void optimizer_step(ParamStore& store, GroupSet groups, const OptimizerConfig& cfg);

// Drops momentum/moment buffers and step counters of `groups`.
void reset_optimizer_state(ParamStore& store, GroupSet groups);

}  // namespace spen
