#include <doctest.h>

#include <cmath>

#include "spen/encoder.hpp"
#include "spen/grad_check.hpp"

using namespace spen;

namespace {

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill(ParamStore& s, const std::string& name, double v) {
  auto& p = s.get(name);
  std::fill(p.value.begin(), p.value.end(), v);
}

}  // namespace

TEST_CASE("one LSTM step against a scalar hand computation") {
  ParamStore s;
  Rng rng(1);
  auto lstm = add_lstm(s, "energy/l", Group::kEnergy, 1, 1, rng);
  // Gate order: input, forget, output, candidate.
  s.get(lstm.wx()).value = {0.5, -0.3, 0.8, 1.2};
  s.get(lstm.wh()).value = {0.1, 0.2, -0.4, 0.7};
  s.get(lstm.bias()).value = {0.05, 1.0, -0.1, 0.2};
  const double x = 0.9, h0 = 0.3, c0 = -0.6;

  Tape t(&s);
  LstmState st{t.constant(Shape::matrix(1, 1), {h0}), t.constant(Shape::matrix(1, 1), {c0})};
  auto next = lstm_step(t.constant(Shape::matrix(1, 1), {x}), st, lstm);

  const double i = sigm(0.5 * x + 0.1 * h0 + 0.05);
  const double f = sigm(-0.3 * x + 0.2 * h0 + 1.0);
  const double o = sigm(0.8 * x - 0.4 * h0 - 0.1);
  const double g = std::tanh(1.2 * x + 0.7 * h0 + 0.2);
  const double c = f * c0 + i * g;
  CHECK(next.c.value() == doctest::Approx(c).epsilon(1e-14));
  CHECK(next.h.value() == doctest::Approx(o * std::tanh(c)).epsilon(1e-14));
}

TEST_CASE("initialization: forget bias 1, weights within range") {
  ParamStore s;
  Rng rng(2);
  auto lstm = add_lstm(s, "energy/l", Group::kEnergy, 3, 4, rng);
  const auto& b = s.get(lstm.bias()).value;
  for (std::size_t j = 0; j < 16; ++j) CHECK(b[j] == (j >= 4 && j < 8 ? 1.0 : 0.0));
  for (double w : s.get(lstm.wx()).value) CHECK(std::abs(w) <= 0.5);
  CHECK(s.count_prefix("energy/l") == lstm.num_params());
}

TEST_CASE("all-zero weights give all-zero features") {
  ParamStore s;
  Rng rng(3);
  auto enc = add_bi_encoder(s, "energy/enc", Group::kEnergy, 10, 4, 3, rng);
  for (auto& p : s.params()) {
    if (p.name != enc.embedding) std::fill(p.value.begin(), p.value.end(), 0.0);
  }
  Tape t(&s);
  std::vector<std::size_t> tokens{2, 5, 9};
  Tensor f = encode(t, tokens, enc);
  CHECK(f.rows() == 3);
  CHECK(f.cols() == 6);
  for (double v : f.values()) CHECK(v == 0.0);
}

TEST_CASE("tied directions: reversing the input mirrors the two halves") {
  ParamStore s;
  Rng rng(4);
  auto enc = add_bi_encoder(s, "energy/enc", Group::kEnergy, 10, 4, 3, rng);
  for (const auto* suffix : {"/wx", "/wh", "/b"}) {
    s.get(enc.backward.prefix + suffix).value = s.get(enc.forward.prefix + suffix).value;
  }
  std::vector<std::size_t> tokens{2, 7, 3, 9, 4};
  std::vector<std::size_t> rev(tokens.rbegin(), tokens.rend());
  Tape t(&s);
  Tensor a = encode(t, tokens, enc);
  Tensor b = encode(t, rev, enc);
  const std::size_t T = tokens.size(), h = 3;
  for (std::size_t r = 0; r < T; ++r) {
    for (std::size_t c = 0; c < h; ++c) {
      CHECK(a.at(r, c) == doctest::Approx(b.at(T - 1 - r, h + c)).epsilon(1e-14));
      CHECK(a.at(r, h + c) == doctest::Approx(b.at(T - 1 - r, c)).epsilon(1e-14));
    }
  }
}

TEST_CASE("encoder gradients match central differences") {
  ParamStore s;
  Rng rng(5);
  auto enc = add_bi_encoder(s, "energy/enc", Group::kEnergy, 6, 3, 2, rng);
  std::vector<std::size_t> tokens{2, 4, 5, 2};
  auto f = [&](Tape& t) {
    Tensor feat = encode(t, tokens, enc);
    Tensor w = t.constant(feat.shape(), std::vector<double>{0.3, -0.7, 1.1, 0.2, -0.5, 0.9, 0.4,
                                                            -0.2, 0.6, -1.0, 0.8, 0.1, -0.3, 0.5,
                                                            0.7, -0.9});
    return sum(tanh(feat) * w);
  };
  auto r = grad_check(f, s, 1e-5, 1e-6);
  CHECK(r.pass);
}

TEST_CASE("dropout: inverted scaling, inactive without an rng") {
  Tape t;
  Tensor x = t.constant(Shape::matrix(200, 50), std::vector<double>(10000, 1.0));
  Dropout none;
  CHECK_FALSE(none.active());
  CHECK(none.apply(x).id() == x.id());

  Rng rng(6);
  Dropout d{&rng, 0.7};
  Tensor y = d.apply(x);
  double total = 0.0;
  std::size_t kept = 0;
  for (double v : y.values()) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.7)));
    total += v;
    kept += v != 0.0;
  }
  CHECK(static_cast<double>(kept) / 10000.0 == doctest::Approx(0.7).epsilon(0.05));
  CHECK(total / 10000.0 == doctest::Approx(1.0).epsilon(0.05));
}
