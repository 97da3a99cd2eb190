#include <doctest.h>

#include <cmath>

#include "spen/optim.hpp"

using namespace spen;

namespace {

ParamStore two_groups() {
  ParamStore s;
  s.add("energy/a", Group::kEnergy, Shape::vector(3), {1.0, -2.0, 0.5});
  s.add("test/b", Group::kTestTime, Shape::vector(2), {0.25, 4.0});
  return s;
}

void set_grad(ParamStore& s, const std::string& name, std::vector<double> g) {
  s.get(name).grad = std::move(g);
}

}  // namespace

TEST_CASE("SGD with momentum: the second velocity is 1.9 g") {
  ParamStore s = two_groups();
  const std::vector<double> g{0.5, -1.0, 2.0};
  const double lr = 0.1;
  set_grad(s, "energy/a", g);
  sgd_momentum_step(s, GroupSet{Group::kEnergy}, lr, 0.9);
  set_grad(s, "energy/a", g);
  sgd_momentum_step(s, GroupSet{Group::kEnergy}, lr, 0.9);
  const std::vector<double> start{1.0, -2.0, 0.5};
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s.get("energy/a").moment1[i] == doctest::Approx(1.9 * g[i]));
    CHECK(s.get("energy/a").value[i] == doctest::Approx(start[i] - lr * 2.9 * g[i]));
  }
  CHECK(s.get("test/b").value == std::vector<double>{0.25, 4.0});
}

TEST_CASE("Adam: the first step moves every entry by lr in the descent direction") {
  for (double scale : {1e-3, 1.0, 1e6}) {
    ParamStore s = two_groups();
    set_grad(s, "energy/a", {0.5 * scale, -1.0 * scale, 2.0 * scale});
    adam_step(s, GroupSet{Group::kEnergy}, 0.01, 0.9, 0.999, 1e-8);
    const auto& v = s.get("energy/a").value;
    CHECK(v[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-5));
    CHECK(v[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-5));
    CHECK(v[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-5));
    CHECK(s.get("energy/a").step == 1);
  }
}

TEST_CASE("Adam matches a scalar reference over several steps") {
  ParamStore s;
  s.add("energy/x", Group::kEnergy, Shape::vector(1), {3.0});
  double x = 3.0, m = 0.0, v = 0.0;
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int k = 1; k <= 20; ++k) {
    const double g = 2.0 * x - 1.0;
    set_grad(s, "energy/x", {2.0 * s.get("energy/x").value[0] - 1.0});
    adam_step(s, GroupSet{Group::kEnergy}, lr, b1, b2, eps);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    x -= lr * (m / (1 - std::pow(b1, k))) / (std::sqrt(v / (1 - std::pow(b2, k))) + eps);
    CHECK(s.get("energy/x").value[0] == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("a missing gradient is an error; reset clears state") {
  ParamStore s = two_groups();
  OptimizerConfig cfg;
  CHECK_THROWS_AS(optimizer_step(s, GroupSet{Group::kEnergy}, cfg), Error);
  set_grad(s, "energy/a", {1.0, 1.0, 1.0});
  optimizer_step(s, GroupSet{Group::kEnergy}, cfg);
  reset_optimizer_state(s, GroupSet{Group::kEnergy});
  CHECK(s.get("energy/a").step == 0);
  CHECK(s.get("energy/a").moment1.empty());
  CHECK(optimizer_from_name("adam") == OptimizerKind::kAdam);
  CHECK(optimizer_from_name("sgd-momentum") == OptimizerKind::kSgdMomentum);
  CHECK_FALSE(optimizer_from_name("rmsprop"));
}
