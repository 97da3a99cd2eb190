#include "spen/optim.hpp"

#include <cmath>

#include "spen/error.hpp"

namespace spen {

const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::kAdam ? "adam" : "sgd-momentum";
}

std::optional<OptimizerKind> optimizer_from_name(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd-momentum") return OptimizerKind::kSgdMomentum;
  return std::nullopt;
}

namespace {

template <class F>
void for_each_trained(ParamStore& store, GroupSet groups, F&& update) {
  for (auto& p : store.params()) {
    if (!groups.contains(p.group)) continue;
    if (!p.has_grad()) {
      throw Error(ErrorKind::kState, "parameter " + p.name + " has no gradient");
    }
    update(p);
  }
}

}  // namespace

void sgd_momentum_step(ParamStore& store, GroupSet groups, double lr, double momentum) {
  for_each_trained(store, groups, [&](Param& p) {
    if (p.moment1.size() != p.size()) p.moment1.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p.moment1[i] = momentum * p.moment1[i] + p.grad[i];
      p.value[i] -= lr * p.moment1[i];
    }
  });
}

void adam_step(ParamStore& store, GroupSet groups, double lr, double beta1, double beta2,
               double eps) {
  for_each_trained(store, groups, [&](Param& p) {
    if (p.moment1.size() != p.size()) p.moment1.assign(p.size(), 0.0);
    if (p.moment2.size() != p.size()) p.moment2.assign(p.size(), 0.0);
    ++p.step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(p.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(p.step));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      p.moment1[i] = beta1 * p.moment1[i] + (1.0 - beta1) * g;
      p.moment2[i] = beta2 * p.moment2[i] + (1.0 - beta2) * g * g;
      const double m = p.moment1[i] / c1;
      const double v = p.moment2[i] / c2;
      p.value[i] -= lr * m / (std::sqrt(v) + eps);
    }
  });
}

void optimizer_step(ParamStore& store, GroupSet groups, const OptimizerConfig& cfg) {
  if (cfg.kind == OptimizerKind::kAdam) {
    adam_step(store, groups, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
  } else {
    sgd_momentum_step(store, groups, cfg.lr, cfg.momentum);
  }
}

void reset_optimizer_state(ParamStore& store, GroupSet groups) {
  for (auto& p : store.params()) {
    if (!groups.contains(p.group)) continue;
    p.moment1.clear();
    p.moment2.clear();
    p.step = 0;
  }
}

}  // namespace spen
