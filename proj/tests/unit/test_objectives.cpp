#include <doctest.h>

#include <cmath>

#include "spen/grad_check.hpp"
#include "spen/infnet.hpp"
#include "spen/objectives.hpp"

using namespace spen;

namespace {

struct Example2 {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> gold;
};

const std::vector<Example2> kBatch{{{2, 5, 7}, {0, 2, 1}}, {{3, 4, 6, 2}, {1, 1, 0, 2}}};
constexpr std::size_t kL = 3;

struct Fixture {
  ParamStore store;
  EnergyModel energy;
  InferenceNetPair nets;

  explicit Fixture(Parameterization kind = Parameterization::kSeparated) {
    Rng rng(31);
    energy.chain = add_chain_energy(store, 8, 3, 2, kL, rng);
    nets = add_inference_nets(store, kind, 8, 3, 2, kL, rng);
  }
};

// Plain-double pieces of one example, computed outside the loss code.
struct Pieces {
  double e_gold, e_cost, e_test, delta, ce_cost, ce_test;
};

double l1_to_gold(Tensor p, const std::vector<std::size_t>& gold) {
  double d = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    for (std::size_t j = 0; j < p.cols(); ++j) d += std::abs(p.at(r, j) - (gold[r] == j));
  }
  return d;
}

double ce_of(Tensor p, const std::vector<std::size_t>& gold) {
  double c = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) c -= std::log(p.at(r, gold[r]));
  return c;
}

struct Built {
  std::vector<LossItem> items;
  std::vector<Pieces> pieces;
};

Built build(Tape& t, Fixture& fx) {
  Built b;
  for (const auto& ex : kBatch) {
    auto out = run_inference_nets(t, ex.tokens, ex.gold, fx.nets, true, true);
    Tensor feats = energy_features(t, ex.tokens, fx.energy);
    EnergyContext ctx{&fx.energy, feats, ex.tokens};
    b.items.emplace_back(ctx, ex.gold, out.cost, out.test);
    auto oh = one_hot(ex.gold, kL);
    Tensor gold = t.constant(Shape::matrix(ex.gold.size(), kL), oh.probs);
    Tensor U = t.param(fx.energy.chain.unary), W = t.param(fx.energy.chain.transition);
    b.pieces.push_back({chain_energy(feats, gold, U, W).value(),
                        chain_energy(feats, *out.cost, U, W).value(),
                        chain_energy(feats, *out.test, U, W).value(),
                        l1_to_gold(*out.cost, ex.gold), ce_of(*out.cost, ex.gold),
                        ce_of(*out.test, ex.gold)});
  }
  return b;
}

double pos(double x) { return std::max(0.0, x); }

}  // namespace

TEST_CASE("local CE and the L1 cost against hand formulas") {
  Tape t;
  Tensor p = t.constant(Shape::matrix(2, 3), {0.2, 0.5, 0.3, 0.6, 0.1, 0.3});
  std::vector<std::size_t> gold{1, 2};
  CHECK(local_ce(p, gold).value() == doctest::Approx(-std::log(0.5) - std::log(0.3)));
  auto oh = one_hot(gold, 3);
  Tensor g = t.constant(Shape::matrix(2, 3), oh.probs);
  // For stochastic rows the L1 distance to a one-hot row is 2 (1 - p_gold).
  CHECK(cost_delta(p, g).value() == doctest::Approx(2 * 0.5 + 2 * 0.7));
  CHECK(cost_delta(g, g).value() == 0.0);
  Tensor zero = t.constant(Shape::matrix(1, 2), {0.0, 1.0});
  std::vector<std::size_t> g0{0};
  CHECK(local_ce(zero, g0).value() == doctest::Approx(-std::log(kCeLogFloor)));
}

TEST_CASE("energy-step losses compose from their parts") {
  Fixture fx;
  Tape t(&fx.store);
  auto b = build(t, fx);
  const double lambda = 0.7;
  double mr = 0, mr_raw = 0, perc = 0, perc_raw = 0;
  for (const auto& p : b.pieces) {
    mr += pos(p.delta - p.e_cost + p.e_gold);
    mr_raw += p.delta - p.e_cost + p.e_gold;
    perc += pos(p.e_gold - p.e_test);
    perc_raw += p.e_gold - p.e_test;
  }
  LossConfig cfg;
  cfg.lambda = lambda;
  cfg.mode = TrainMode::kCompound;
  CHECK(energy_step_loss(b.items, cfg).value() == doctest::Approx(mr + lambda * perc));
  cfg.mode = TrainMode::kMarginRescaled;
  CHECK(energy_step_loss(b.items, cfg).value() == doctest::Approx(mr));
  cfg.mode = TrainMode::kPerceptron;
  CHECK(energy_step_loss(b.items, cfg).value() == doctest::Approx(perc));
  cfg.truncate_energy_step = false;
  CHECK(energy_step_loss(b.items, cfg).value() == doctest::Approx(perc_raw));
  cfg.mode = TrainMode::kMarginRescaled;
  CHECK(energy_step_loss(b.items, cfg).value() == doctest::Approx(mr_raw));
  cfg.mode = TrainMode::kCrossEntropy;
  CHECK_THROWS_AS(energy_step_loss(b.items, cfg), Error);

  EnergyContext ctx{&fx.energy, energy_features(t, kBatch[0].tokens, fx.energy),
                    kBatch[0].tokens};
  auto oh = one_hot(kBatch[0].gold, kL);
  Tensor gold = t.constant(Shape::matrix(3, kL), oh.probs);
  const auto& p0 = b.pieces[0];
  CHECK(margin_rescaled_loss(ctx, gold, b.items[0].cost_output(), false).value() ==
        doctest::Approx(p0.delta - p0.e_cost + p0.e_gold));
  CHECK(perceptron_loss(ctx, gold, b.items[0].test_output(), true).value() ==
        doctest::Approx(pos(p0.e_gold - p0.e_test)));
}

TEST_CASE("inference-step objectives compose from their parts") {
  Fixture fx;
  Tape t(&fx.store);
  auto b = build(t, fx);
  const double lambda = 0.5, ce = 2.0;
  double compound = 0, trunc = 0, mr = 0, perc = 0, base = 0;
  for (const auto& p : b.pieces) {
    compound += p.delta - p.e_cost - lambda * p.e_test - ce * (p.ce_cost + p.ce_test);
    trunc += pos(p.delta - p.e_cost + p.e_gold) + lambda * pos(p.e_gold - p.e_test) -
             ce * (p.ce_cost + p.ce_test);
    mr += p.delta - p.e_cost - ce * p.ce_cost;
    perc += -p.e_test - ce * p.ce_test;
    base -= p.ce_test;
  }
  LossConfig cfg{TrainMode::kCompound, lambda, ce, true, false};
  CHECK(inference_step_loss(b.items, cfg).value() == doctest::Approx(compound));
  cfg.truncate_inference_step = true;
  CHECK(inference_step_loss(b.items, cfg).value() == doctest::Approx(trunc));
  cfg.truncate_inference_step = false;
  cfg.mode = TrainMode::kMarginRescaled;
  CHECK(inference_step_loss(b.items, cfg).value() == doctest::Approx(mr));
  cfg.mode = TrainMode::kPerceptron;
  CHECK(inference_step_loss(b.items, cfg).value() == doctest::Approx(perc));
  cfg.mode = TrainMode::kCrossEntropy;
  CHECK(inference_step_loss(b.items, cfg).value() == doctest::Approx(base));
}

TEST_CASE("the CE baseline needs no energy and no cost output") {
  Fixture fx;
  Tape t(&fx.store);
  std::vector<LossItem> items;
  double expect = 0.0;
  for (const auto& ex : kBatch) {
    Tensor a = infer(t, ex.tokens, fx.nets);
    expect -= ce_of(a, ex.gold);
    items.emplace_back(EnergyContext{}, ex.gold, std::nullopt, a);
  }
  LossConfig cfg;
  cfg.mode = TrainMode::kCrossEntropy;
  CHECK(inference_step_loss(items, cfg).value() == doctest::Approx(expect));
  CHECK_THROWS_AS(items[0].cost_output(), Error);
}

TEST_CASE("diagnostics report the truncated and raw margin terms") {
  Fixture fx;
  Tape t(&fx.store);
  auto b = build(t, fx);
  double l0 = 0, l1 = 0;
  for (const auto& p : b.pieces) {
    l0 += pos(p.delta - p.e_cost + p.e_gold);
    l1 += p.delta - p.e_cost;
  }
  auto d = diagnostics(b.items);
  CHECK(d.l0 == doctest::Approx(l0 / 2));
  CHECK(d.l1 == doctest::Approx(l1 / 2));
}

TEST_CASE("objective gradients match central differences") {
  for (auto kind : {Parameterization::kSeparated, Parameterization::kShared}) {
    Fixture fx(kind);
    LossConfig cfg{TrainMode::kCompound, 0.5, 1.0, false, false};
    auto inference = [&](Tape& t) {
      auto b = build(t, fx);
      return inference_step_loss(b.items, cfg);
    };
    CHECK(grad_check(inference, fx.store, 1e-5, 1e-5,
                     GroupSet{Group::kCostAugmented, Group::kTestTime})
              .pass);
    auto energy = [&](Tape& t) {
      auto b = build(t, fx);
      return energy_step_loss(b.items, cfg);
    };
    CHECK(grad_check(energy, fx.store, 1e-5, 1e-5, GroupSet{Group::kEnergy}).pass);
  }
}

TEST_CASE("mode names round-trip") {
  for (auto m : {TrainMode::kMarginRescaled, TrainMode::kPerceptron, TrainMode::kCompound,
                 TrainMode::kCrossEntropy}) {
    CHECK(mode_from_name(mode_name(m)) == m);
  }
  CHECK_FALSE(mode_from_name("hinge"));
}
