#include "spen/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace spen {

double grad_error(double analytic, double numeric, double tol,
                  double abs_floor) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), abs_floor / tol});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const ScalarFn& f, ParamStore& store, const std::string& name) {
  Tape tape(&store, GroupSet::none());
  double v = f(tape).value();
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::kDomain,
                "grad_check: non-finite objective while perturbing " + name);
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, ParamStore& store, double eps,
                           double tol, GroupSet groups) {
  if (!(eps > 0.0)) throw Error(ErrorKind::kDomain, "grad_check: eps must be > 0");

  {
    Tape tape(&store, groups);
    Tensor loss = f(tape);
    if (!std::isfinite(loss.value())) {
      throw Error(ErrorKind::kDomain, "grad_check: non-finite objective");
    }
    backward(loss, store, groups);
  }

  GradCheckReport report;
  for (auto& p : store.params()) {
    if (!groups.contains(p.group)) continue;
    ParamCheck check;
    check.name = p.name;
    check.entries = p.size();
    const std::vector<double> analytic =
        p.has_grad() ? p.grad : std::vector<double>(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double up = evaluate(f, store, p.name);
      p.value[i] = orig - eps;
      const double down = evaluate(f, store, p.name);
      p.value[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = grad_error(analytic[i], numeric, tol);
      if (err > check.max_error) {
        check.max_error = err;
        check.worst_analytic = analytic[i];
        check.worst_numeric = numeric;
      }
    }
    check.pass = check.max_error <= tol;
    report.max_error = std::max(report.max_error, check.max_error);
    report.pass = report.pass && check.pass;
    report.params.push_back(std::move(check));
  }
  return report;
}

}  // namespace spen
