#include <doctest.h>

#include <cmath>
#include <cstring>

#include "spen/data.hpp"
#include "spen/energy.hpp"
#include "spen/grad_check.hpp"

using namespace spen;

namespace {

std::vector<double> draw(Rng& rng, std::size_t n, double r) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-r, r);
  return v;
}

Tensor one_hot_tensor(Tape& t, const std::vector<std::size_t>& y, std::size_t L) {
  auto oh = one_hot(y, L);
  return t.constant(Shape::matrix(y.size(), L), oh.probs);
}

Tensor relaxed(Tape& t, std::size_t T, std::size_t L, Rng& rng) {
  std::vector<double> v(T * L);
  for (std::size_t r = 0; r < T; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < L; ++j) s += v[r * L + j] = rng.uniform(0.05, 1.0);
    for (std::size_t j = 0; j < L; ++j) v[r * L + j] /= s;
  }
  return t.constant(Shape::matrix(T, L), v);
}

bool next_sequence(std::vector<std::size_t>& y, std::size_t L) {
  for (auto& v : y) {
    if (++v < L) return true;
    v = 0;
  }
  return false;
}

bool bitwise_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("chain energy on a hand example") {
  Tape t;
  // d = 1, L = 2, T = 2; features 1 and 2.
  Tensor f = t.constant(Shape::matrix(2, 1), {1.0, 2.0});
  Tensor U = t.constant(Shape::matrix(1, 2), {0.5, -1.0});
  Tensor W = t.constant(Shape::matrix(2, 2), {0.0, 0.25, -0.5, 0.75});
  // y = (0, 1): unary 0.5 * 1 + (-1) * 2 = -1.5, transition W[0][1] = 0.25.
  Tensor y = one_hot_tensor(t, {0, 1}, 2);
  CHECK(chain_energy(f, y, U, W).value() == doctest::Approx(1.25));
  // y = (0, 0): unary 0.5 + 1 = 1.5, transition 0; E = -1.5.
  CHECK(chain_energy(f, one_hot_tensor(t, {0, 0}, 2), U, W).value() == doctest::Approx(-1.5));
  // Relaxed rows mix linearly in the unary part.
  Tensor half = t.constant(Shape::matrix(2, 2), {0.5, 0.5, 1.0, 0.0});
  // unary 0.5*(0.5*1) + 0.5*(-1*1) + 1*(0.5*2) = 0.75; transition 0.5*0 + 0.5*(-0.5) = -0.25
  CHECK(chain_energy(f, half, U, W).value() == doctest::Approx(-0.5));
}

TEST_CASE("chain energy equals the enumerated score of every discrete sequence") {
  Rng rng(7);
  for (std::size_t L : {2u, 3u}) {
    for (std::size_t T : {1u, 2u, 3u, 4u}) {
      const std::size_t d = 3;
      auto fv = draw(rng, T * d, 1.0), uv = draw(rng, d * L, 1.0), wv = draw(rng, L * L, 1.0);
      std::vector<std::size_t> y(T, 0);
      do {
        Tape t;
        double oracle = 0.0;
        for (std::size_t s = 0; s < T; ++s) {
          for (std::size_t k = 0; k < d; ++k) oracle += fv[s * d + k] * uv[k * L + y[s]];
          if (s > 0) oracle += wv[y[s - 1] * L + y[s]];
        }
        Tensor e = chain_energy(t.constant(Shape::matrix(T, d), fv), one_hot_tensor(t, y, L),
                                t.constant(Shape::matrix(d, L), uv),
                                t.constant(Shape::matrix(L, L), wv));
        CHECK(e.value() == doctest::Approx(-oracle).epsilon(1e-12));
      } while (next_sequence(y, L));
    }
  }
}

TEST_CASE("chain energy is non-increasing in every transition weight") {
  Rng rng(8);
  const std::size_t T = 5, L = 3, d = 2;
  Tape t;
  Tensor f = t.constant(Shape::matrix(T, d), draw(rng, T * d, 1.0));
  Tensor U = t.constant(Shape::matrix(d, L), draw(rng, d * L, 1.0));
  auto wv = draw(rng, L * L, 1.0);
  Tensor y = relaxed(t, T, L, rng);
  const double base = chain_energy(f, y, U, t.constant(Shape::matrix(L, L), wv)).value();
  for (std::size_t k = 0; k < L * L; ++k) {
    auto w2 = wv;
    w2[k] += 0.3;
    CHECK(chain_energy(f, y, U, t.constant(Shape::matrix(L, L), w2)).value() < base);
  }
}

TEST_CASE("chain energy is covariant under a relabeling") {
  Rng rng(9);
  const std::size_t T = 4, L = 3, d = 2;
  const std::vector<std::size_t> perm{2, 0, 1};
  auto fv = draw(rng, T * d, 1.0), uv = draw(rng, d * L, 1.0), wv = draw(rng, L * L, 1.0);
  Tape t;
  Tensor y = relaxed(t, T, L, rng);
  std::vector<double> up(d * L), wp(L * L), yp(T * L);
  for (std::size_t j = 0; j < L; ++j) {
    for (std::size_t k = 0; k < d; ++k) up[k * L + perm[j]] = uv[k * L + j];
    for (std::size_t i = 0; i < L; ++i) wp[perm[i] * L + perm[j]] = wv[i * L + j];
    for (std::size_t s = 0; s < T; ++s) yp[s * L + perm[j]] = y.at(s, j);
  }
  Tensor f = t.constant(Shape::matrix(T, d), fv);
  const double a = chain_energy(f, y, t.constant(Shape::matrix(d, L), uv),
                                t.constant(Shape::matrix(L, L), wv)).value();
  const double b = chain_energy(f, t.constant(Shape::matrix(T, L), yp),
                                t.constant(Shape::matrix(d, L), up),
                                t.constant(Shape::matrix(L, L), wp)).value();
  CHECK(a == doctest::Approx(b).epsilon(1e-13));
}

TEST_CASE("a TLM with zero output layer is uniform: (T + 1) log(L + 2)") {
  ParamStore s;
  Rng rng(10);
  const std::size_t L = 5;
  auto tlm = add_tlm(s, "energy/tlm_fwd", L, 4, 6, rng);
  std::fill(s.get(tlm.out_weight()).value.begin(), s.get(tlm.out_weight()).value.end(), 0.0);
  for (std::size_t T : {1u, 3u, 7u}) {
    Tape t(&s);
    Tensor y = relaxed(t, T, L, rng);
    const double expect = static_cast<double>(T + 1) * std::log(static_cast<double>(L + 2));
    CHECK(tlm_energy(y, tlm, TlmDirection::kForward).value() == doctest::Approx(expect));
    CHECK(tlm_energy(y, tlm, TlmDirection::kBackward).value() == doctest::Approx(expect));
  }
}

TEST_CASE("TLM energy equals the summed negative log-probabilities of a one-hot sequence") {
  ParamStore s;
  Rng rng(11);
  const std::size_t L = 3;
  auto tlm = add_tlm(s, "energy/tlm_fwd", L, 2, 3, rng);
  std::vector<std::size_t> y{2, 0, 1};
  Tape t(&s);
  const double e = tlm_energy(one_hot_tensor(t, y, L), tlm, TlmDirection::kForward).value();

  // Step-by-step rollout of the same LSTM on embedding rows.
  Tensor emb = t.param(tlm.label_embedding());
  LstmState st = zero_state(t, 3);
  double nll = 0.0;
  std::size_t prev = L;  // start symbol
  std::vector<std::size_t> targets{2, 0, 1, L + 1};
  for (auto target : targets) {
    std::vector<std::size_t> row{prev};
    st = lstm_step(embedding_lookup(emb, row), st, tlm.lstm);
    Tensor p = row_softmax(add(matmul(st.h, t.param(tlm.out_weight())), t.param(tlm.out_bias())));
    nll -= std::log(p.at(0, target));
    prev = target;
  }
  CHECK(e == doctest::Approx(nll).epsilon(1e-12));
}

TEST_CASE("the backward TLM reads the reversed sequence") {
  ParamStore s;
  Rng rng(12);
  const std::size_t L = 4, V = 9;
  auto tlm = add_tlm(s, "energy/tlm_word_fwd", L, 3, 4, rng, V, 2);
  std::vector<std::size_t> words{2, 8, 5, 3, 6};
  std::vector<std::size_t> rwords(words.rbegin(), words.rend());
  Tape t(&s);
  Tensor y = relaxed(t, 5, L, rng);
  std::vector<double> rv(5 * L);
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t j = 0; j < L; ++j) rv[r * L + j] = y.at(4 - r, j);
  }
  Tensor yr = t.constant(Shape::matrix(5, L), rv);
  CHECK(tlm_energy(y, tlm, TlmDirection::kBackward, words).value() ==
        doctest::Approx(tlm_energy(yr, tlm, TlmDirection::kForward, rwords).value())
            .epsilon(1e-13));

  // A palindrome scores the same in both directions.
  std::vector<std::size_t> pal{1, 3, 0, 3, 1};
  std::vector<std::size_t> pal_words{4, 2, 7, 2, 4};
  Tensor p = one_hot_tensor(t, pal, L);
  CHECK(tlm_energy(p, tlm, TlmDirection::kForward, pal_words).value() ==
        doctest::Approx(tlm_energy(p, tlm, TlmDirection::kBackward, pal_words).value())
            .epsilon(1e-13));
}

TEST_CASE("TLM energy is invariant under a consistent relabeling") {
  ParamStore s;
  Rng rng(13);
  const std::size_t L = 3, H = 4, E = 2;
  auto tlm = add_tlm(s, "energy/tlm_fwd", L, E, H, rng);
  s.get(tlm.out_bias()).value = draw(rng, L + 2, 0.5);
  const std::vector<std::size_t> perm{1, 2, 0};

  Tape t(&s);
  Tensor y = relaxed(t, 4, L, rng);
  const double a = tlm_energy(y, tlm, TlmDirection::kForward).value();

  ParamStore q = s;
  auto& emb = q.get(tlm.label_embedding()).value;
  auto& ow = q.get(tlm.out_weight()).value;
  auto& ob = q.get(tlm.out_bias()).value;
  const auto emb0 = emb, ow0 = ow, ob0 = ob;
  std::vector<double> yp(4 * L);
  for (std::size_t j = 0; j < L; ++j) {
    for (std::size_t k = 0; k < E; ++k) emb[perm[j] * E + k] = emb0[j * E + k];
    for (std::size_t h = 0; h < H; ++h) ow[h * (L + 2) + perm[j]] = ow0[h * (L + 2) + j];
    ob[perm[j]] = ob0[j];
    for (std::size_t r = 0; r < 4; ++r) yp[r * L + perm[j]] = y.at(r, j);
  }
  Tape tq(&q);
  const double b = tlm_energy(tq.constant(Shape::matrix(4, L), yp), tlm, TlmDirection::kForward)
                       .value();
  CHECK(a == doctest::Approx(b).epsilon(1e-13));
}

TEST_CASE("global energy variants compose") {
  ParamStore s;
  Rng rng(14);
  const std::size_t L = 3, V = 8;
  auto ge = add_global_energy(s, {GlobalEnergyVariant::kC, 0.0}, L, V, 3, 2, 4, rng);
  REQUIRE(ge.forward);
  REQUIRE(ge.word_backward);
  CHECK(s.contains("energy/tlm_word_bwd/word_emb"));
  std::vector<std::size_t> words{2, 5, 7, 3};

  Tape t(&s);
  Tensor y = relaxed(t, 4, L, rng);
  GlobalEnergy a = ge, b = ge;
  a.config.variant = GlobalEnergyVariant::kA;
  b.config.variant = GlobalEnergyVariant::kB;
  const double fwd = tlm_energy(y, *ge.forward, TlmDirection::kForward).value();
  const double bwd = tlm_energy(y, *ge.backward, TlmDirection::kBackward).value();
  const double wf = tlm_energy(y, *ge.word_forward, TlmDirection::kForward, words).value();
  const double wb = tlm_energy(y, *ge.word_backward, TlmDirection::kBackward, words).value();

  CHECK(global_energy(y, words, a).value() == fwd);
  CHECK(global_energy(y, words, b).value() == doctest::Approx(fwd + bwd));
  CHECK(bitwise_equal(global_energy(y, words, ge).value(), global_energy(y, words, b).value()));
  GlobalEnergy c = ge;
  c.config.gamma = 0.5;
  CHECK(global_energy(y, words, c).value() == doctest::Approx(fwd + bwd + 0.5 * (wf + wb)));

  GlobalEnergy none;
  CHECK(global_energy(y, words, none).value() == 0.0);
  CHECK(global_variant_from_name("GE-b") == GlobalEnergyVariant::kB);
  CHECK_FALSE(global_variant_from_name("GE-d"));
}

TEST_CASE("energy gradients match central differences") {
  ParamStore s;
  Rng rng(15);
  const std::size_t L = 3, V = 7;
  EnergyModel m;
  m.chain = add_chain_energy(s, V, 3, 2, L, rng);
  m.global = add_global_energy(s, {GlobalEnergyVariant::kC, 0.7}, L, V, 2, 2, 3, rng);
  std::vector<std::size_t> words{2, 6, 4};
  Rng yr(16);
  std::vector<double> yv(3 * L);
  for (auto& v : yv) v = yr.uniform(0.1, 1.0);
  auto f = [&](Tape& t) {
    Tensor feats = energy_features(t, words, m);
    return total_energy(feats, row_softmax(t.constant(Shape::matrix(3, L), yv)), words, m);
  };
  auto r = grad_check(f, s, 1e-5, 1e-5);
  CHECK(r.pass);
  CHECK(m.num_params() == s.count(GroupSet{Group::kEnergy}));
}
