#include <doctest.h>

#include <cmath>

#include "spen/grad_check.hpp"
#include "spen/infnet.hpp"

using namespace spen;

namespace {

struct Fixture {
  ParamStore store;
  InferenceNetPair nets;

  explicit Fixture(Parameterization kind, std::size_t L = 3) {
    Rng rng(21);
    nets = add_inference_nets(store, kind, 9, 3, 4, L, rng);
  }

  void zero(const std::string& name) {
    auto& v = store.get(name).value;
    std::fill(v.begin(), v.end(), 0.0);
  }
};

const std::vector<std::size_t> kTokens{2, 5, 8, 3};
const std::vector<std::size_t> kGold{0, 2, 2, 1};

Tensor weighted(Tensor p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(p.shape().size());
  for (auto& v : w) v = rng.uniform(-1.0, 1.0);
  return sum(p * p.tape().constant(p.shape(), w));
}

}  // namespace

TEST_CASE("outputs are row-stochastic for every parameterization") {
  for (auto kind : {Parameterization::kSeparated, Parameterization::kShared,
                    Parameterization::kStacked}) {
    CAPTURE(parameterization_name(kind));
    Fixture fx(kind);
    Tape t(&fx.store);
    auto out = run_inference_nets(t, kTokens, kGold, fx.nets, true, true);
    REQUIRE(out.test);
    REQUIRE(out.cost);
    CHECK(to_relaxed(*out.test).is_stochastic(1e-12));
    CHECK(to_relaxed(*out.cost).is_stochastic(1e-12));
    CHECK(out.test->rows() == kTokens.size());
  }
}

TEST_CASE("a zeroed head outputs the uniform distribution") {
  Fixture fx(Parameterization::kSeparated);
  fx.zero(fx.nets.test_head.weight);
  Tape t(&fx.store);
  Tensor p = infer(t, kTokens, fx.nets);
  for (double v : p.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("stacked cost net copies gold as the gold weight grows") {
  Fixture fx(Parameterization::kStacked);
  const std::size_t L = 3;
  auto& q = fx.store.get(fx.nets.q_weight).value;
  std::fill(q.begin(), q.end(), 0.0);
  const double kappa = 50.0;
  for (std::size_t j = 0; j < L; ++j) q[(L + j) * L + j] = kappa;
  Tape t(&fx.store);
  Tensor f = cost_augmented_infer(t, kTokens, kGold, fx.nets);
  for (std::size_t r = 0; r < kTokens.size(); ++r) {
    for (std::size_t j = 0; j < L; ++j) {
      const double target = j == kGold[r] ? 1.0 : 0.0;
      CHECK(std::abs(f.at(r, j) - target) <= L * std::exp(-kappa));
    }
  }
  CHECK(discretize(f) == kGold);
}

TEST_CASE("stacked cost net with only the A block reproduces A's argmax") {
  Fixture fx(Parameterization::kStacked);
  const std::size_t L = 3;
  auto& q = fx.store.get(fx.nets.q_weight).value;
  std::fill(q.begin(), q.end(), 0.0);
  for (std::size_t j = 0; j < L; ++j) q[j * L + j] = 1e3;
  Tape t(&fx.store);
  auto out = run_inference_nets(t, kTokens, kGold, fx.nets, true, true);
  CHECK(discretize(*out.cost) == discretize(*out.test));
}

TEST_CASE("separated and shared cost nets ignore gold") {
  for (auto kind : {Parameterization::kSeparated, Parameterization::kShared}) {
    Fixture fx(kind);
    Tape t(&fx.store);
    std::vector<std::size_t> other{1, 1, 0, 2};
    Tensor a = cost_augmented_infer(t, kTokens, kGold, fx.nets);
    Tensor b = cost_augmented_infer(t, kTokens, other, fx.nets);
    CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  }
  Fixture st(Parameterization::kStacked);
  Tape t(&st.store);
  std::vector<std::size_t> short_gold{0};
  CHECK_THROWS_AS(cost_augmented_infer(t, kTokens, short_gold, st.nets), Error);
}

TEST_CASE("the stacked cost net sends no gradient into the test network") {
  Fixture fx(Parameterization::kStacked);
  Tape t(&fx.store);
  Tensor f = cost_augmented_infer(t, kTokens, kGold, fx.nets);
  backward(weighted(f, 3), fx.store, GroupSet::all());
  for (const auto& p : fx.store.params()) {
    if (p.group != Group::kTestTime) continue;
    double m = 0.0;
    for (double g : p.grad) m = std::max(m, std::abs(g));
    CHECK(m == 0.0);
  }
  CHECK(fx.store.grad_norm(GroupSet{Group::kCostAugmented}) > 0.0);
}

TEST_CASE("inference-network gradients match central differences") {
  for (auto kind : {Parameterization::kSeparated, Parameterization::kShared,
                    Parameterization::kStacked}) {
    std::string name = parameterization_name(kind);
    CAPTURE(name);
    Fixture fx(kind);
    auto test = [&](Tape& t) { return weighted(infer(t, kTokens, fx.nets), 4); };
    auto cost = [&](Tape& t) {
      return weighted(cost_augmented_infer(t, kTokens, kGold, fx.nets), 5);
    };
    CHECK(grad_check(test, fx.store, 1e-5, 1e-6).pass);
    // The stacked cost net treats A as a constant, so only Phi is checked.
    const GroupSet cost_groups = kind == Parameterization::kStacked
                                     ? GroupSet{Group::kCostAugmented}
                                     : GroupSet::all();
    CHECK(grad_check(cost, fx.store, 1e-5, 1e-6, cost_groups).pass);
  }
}

TEST_CASE("discretize breaks ties toward the lowest label") {
  std::vector<double> p{0.4, 0.4, 0.2, 0.1, 0.45, 0.45, 1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(discretize(p, 3) == std::vector<std::size_t>{0, 1, 0});
}

TEST_CASE("parameter counts: hand arithmetic and ordering") {
  // V = 10, embed 3, energy hidden 2, inference hidden 4, L = 3.
  const std::size_t V = 10, e = 3, he = 2, hi = 4, L = 3;
  auto lstm = [](std::size_t in, std::size_t h) { return 4 * h * (in + h + 1); };
  const std::size_t energy = V * e + 2 * lstm(e, he) + 2 * he * L + L * L;
  const std::size_t encoder = V * e + 2 * lstm(e, hi);
  const std::size_t head = 2 * hi * L + L;
  REQUIRE(energy == 147);
  REQUIRE(encoder + head == 313);

  std::vector<ParamCounts> counts;
  for (auto kind : {Parameterization::kSeparated, Parameterization::kShared,
                    Parameterization::kStacked}) {
    ParamStore s;
    Rng rng(1);
    EnergyModel m;
    m.chain = add_chain_energy(s, V, e, he, L, rng);
    auto nets = add_inference_nets(s, kind, V, e, hi, L, rng);
    auto c = count_params(nets, m);
    CHECK(c.trained == s.count(GroupSet::all()));
    CHECK(c.inference == s.count(GroupSet{Group::kTestTime}));
    counts.push_back(c);
  }
  CHECK(counts[0].trained == energy + 2 * (encoder + head));
  CHECK(counts[1].trained == energy + encoder + 2 * head);
  CHECK(counts[2].trained == energy + encoder + head + 2 * L * L + L);
  CHECK(counts[0].trained == 773);
  CHECK(counts[1].trained == 487);
  CHECK(counts[2].trained == 481);
  for (const auto& c : counts) CHECK(c.inference == encoder + head);
}
