#pragma once

#include <functional>
#include <string>
#include <vector>

#include "spen/autodiff.hpp"

namespace spen {

// Absolute tolerance used near zero, where a relative error is meaningless.
inline constexpr double kGradCheckAbsFloor = 1e-7;

struct ParamCheck {
  std::string name;
  std::size_t entries = 0;
  double max_error = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_error = 0.0;
  bool pass = true;
};

// |a - n| / max(|a|, |n|, abs_floor / tol): a relative error that degrades to
// an absolute check at `abs_floor` for entries smaller than abs_floor / tol.
double grad_error(double analytic, double numeric, double tol,
                  double abs_floor = kGradCheckAbsFloor);

using ScalarFn = std::function<Tensor(Tape&)>;

// Compares analytic gradients of f with central differences
// (f(p + eps) - f(p - eps)) / 2 eps for every entry of every parameter in
// `groups`. `f` builds its loss on the tape it is given, which is bound to
// `store`. The store's values are restored on return.
GradCheckReport grad_check(const ScalarFn& f, ParamStore& store, double eps,
                           double tol, GroupSet groups = GroupSet::all());

}  // namespace spen
