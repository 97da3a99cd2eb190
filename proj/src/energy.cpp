#include "spen/energy.hpp"

#include <cmath>

#include "spen/data.hpp"

namespace spen {

namespace {

std::vector<double> uniform_values(std::size_t n, double r, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-r, r);
  return v;
}

void check_labels(Tensor y, std::size_t num_labels, const char* who) {
  if (y.cols() != num_labels || y.rows() == 0) {
    throw Error(ErrorKind::kShape, std::string(who) + ": relaxed output " +
                                       y.shape().str() + " does not have " +
                                       std::to_string(num_labels) + " label columns");
  }
}

}  // namespace

ChainEnergyParams add_chain_energy(ParamStore& store, std::size_t vocab_size,
                                   std::size_t embed_dim, std::size_t hidden,
                                   std::size_t num_labels, Rng& rng) {
  ChainEnergyParams p;
  p.num_labels = num_labels;
  p.encoder = add_bi_encoder(store, "energy/enc", Group::kEnergy, vocab_size, embed_dim,
                             hidden, rng);
  const std::size_t d = p.encoder.output_dim();
  store.add(p.unary, Group::kEnergy, Shape::matrix(d, num_labels),
            uniform_values(d * num_labels, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  store.add(p.transition, Group::kEnergy, Shape::matrix(num_labels, num_labels),
            uniform_values(num_labels * num_labels, 0.1, rng));
  return p;
}

Tensor chain_energy(Tensor features, Tensor y, Tensor unary, Tensor transition) {
  if (features.rows() != y.rows()) {
    throw Error(ErrorKind::kShape, "chain_energy: features " + features.shape().str() +
                                       " vs output " + y.shape().str());
  }
  check_labels(y, unary.cols(), "chain_energy");
  Tensor score = sum(y * matmul(features, unary));
  const std::size_t T = y.rows();
  if (T >= 2) {
    Tensor prev = slice_rows(y, 0, T - 1);
    Tensor next = slice_rows(y, 1, T);
    score = score + sum(matmul(prev, transition) * next);
  }
  return -score;
}

Tensor chain_energy(Tensor features, Tensor y, const ChainEnergyParams& params) {
  Tape& tape = y.tape();
  return chain_energy(features, y, tape.param(params.unary), tape.param(params.transition));
}

// ---------------------------------------------------------------- TLM

std::size_t TlmParams::num_params() const {
  const std::size_t symbols = num_labels + 2;
  std::size_t n = symbols * label_embed + lstm.num_params() + lstm.hidden * symbols + symbols;
  if (word_conditioned()) n += vocab_size * word_embed;
  return n;
}

TlmParams add_tlm(ParamStore& store, std::string prefix, std::size_t num_labels,
                  std::size_t label_embed, std::size_t hidden, Rng& rng,
                  std::size_t vocab_size, std::size_t word_embed) {
  TlmParams p;
  p.prefix = std::move(prefix);
  p.num_labels = num_labels;
  p.label_embed = label_embed;
  p.word_embed = word_embed;
  p.vocab_size = word_embed > 0 ? vocab_size : 0;
  const std::size_t symbols = num_labels + 2;
  store.add(p.label_embedding(), Group::kEnergy, Shape::matrix(symbols, label_embed),
            uniform_values(symbols * label_embed, 0.1, rng));
  if (p.word_conditioned()) {
    store.add(p.word_embedding(), Group::kEnergy, Shape::matrix(vocab_size, word_embed),
              uniform_values(vocab_size * word_embed, 0.1, rng));
  }
  p.lstm = add_lstm(store, p.prefix + "/lstm", Group::kEnergy, label_embed + word_embed,
                    hidden, rng);
  const double r = 1.0 / std::sqrt(static_cast<double>(hidden));
  store.add(p.out_weight(), Group::kEnergy, Shape::matrix(hidden, symbols),
            uniform_values(hidden * symbols, r, rng));
  store.add(p.out_bias(), Group::kEnergy, Shape::vector(symbols),
            std::vector<double>(symbols, 0.0));
  return p;
}

Tensor tlm_energy(Tensor y, const TlmParams& tlm, TlmDirection direction,
                  std::span<const std::size_t> words) {
  const std::size_t L = tlm.num_labels;
  check_labels(y, L, "tlm_energy");
  const std::size_t T = y.rows();
  if (tlm.word_conditioned() && words.size() != T) {
    throw Error(ErrorKind::kShape, "tlm_energy: word-conditioned model needs " +
                                       std::to_string(T) + " words, got " +
                                       std::to_string(words.size()));
  }
  Tape& tape = y.tape();
  const std::size_t symbols = L + 2;
  const std::size_t start = L;
  const std::size_t end = L + 1;
  const bool reverse = direction == TlmDirection::kBackward;

  // seq[k] is the k-th label vector in reading order.
  auto source_row = [&](std::size_t k) { return reverse ? T - 1 - k : k; };

  // Input at step t (t = 0..T) is seq[t-1], with the start symbol at t = 0.
  std::vector<double> shift((T + 1) * T, 0.0);
  for (std::size_t t = 1; t <= T; ++t) shift[t * T + source_row(t - 1)] = 1.0;
  std::vector<double> start_rows((T + 1) * symbols, 0.0);
  start_rows[start] = 1.0;

  Tensor emb = tape.param(tlm.label_embedding());
  Tensor shifted = matmul(tape.constant(Shape::matrix(T + 1, T), std::move(shift)), y);
  Tensor inputs =
      matmul(shifted, slice_rows(emb, 0, L)) +
      matmul(tape.constant(Shape::matrix(T + 1, symbols), std::move(start_rows)), emb);
  if (tlm.word_conditioned()) {
    std::vector<std::size_t> prev_words(T + 1, Vocabulary::kPad);
    for (std::size_t t = 1; t <= T; ++t) prev_words[t] = words[source_row(t - 1)];
    inputs = concat_cols({embedding_lookup(tape.param(tlm.word_embedding()), prev_words),
                          inputs});
  }

  auto hs = run_lstm(inputs, tlm.lstm, false);
  Tensor logits = add(matmul(stack_rows(hs), tape.param(tlm.out_weight())),
                      tape.param(tlm.out_bias()));
  Tensor predicted = row_softmax(logits);  // (T+1) x (L+2)

  // Targets for steps 0..T-1 are seq[0..T-1]; step T predicts the end symbol.
  Tensor targets = y;
  if (reverse) {
    std::vector<double> rev(T * T, 0.0);
    for (std::size_t k = 0; k < T; ++k) rev[k * T + (T - 1 - k)] = 1.0;
    targets = matmul(tape.constant(Shape::matrix(T, T), std::move(rev)), y);
  }
  Tensor label_probs = slice_cols(slice_rows(predicted, 0, T), 0, L);
  Tensor ones = tape.constant(Shape::matrix(L, 1), std::vector<double>(L, 1.0));
  Tensor step_probs = matmul(targets * label_probs, ones);  // T x 1
  Tensor end_prob = slice_cols(slice_rows(predicted, T, T + 1), end, end + 1);
  Tensor loglik = sum(log(step_probs, kTlmLogFloor)) + sum(log(end_prob, kTlmLogFloor));
  return -loglik;
}

const char* variant_name(GlobalEnergyVariant v) {
  switch (v) {
    case GlobalEnergyVariant::kNone: return "none";
    case GlobalEnergyVariant::kA: return "GE-a";
    case GlobalEnergyVariant::kB: return "GE-b";
    case GlobalEnergyVariant::kC: return "GE-c";
  }
  return "?";
}

std::optional<GlobalEnergyVariant> global_variant_from_name(std::string_view name) {
  for (auto v : {GlobalEnergyVariant::kNone, GlobalEnergyVariant::kA, GlobalEnergyVariant::kB,
                 GlobalEnergyVariant::kC}) {
    if (name == variant_name(v)) return v;
  }
  return std::nullopt;
}

std::size_t GlobalEnergy::num_params() const {
  std::size_t n = 0;
  for (const auto* t : {&forward, &backward, &word_forward, &word_backward}) {
    if (t->has_value()) n += (*t)->num_params();
  }
  return n;
}

GlobalEnergy add_global_energy(ParamStore& store, const GlobalEnergyConfig& config,
                               std::size_t num_labels, std::size_t vocab_size,
                               std::size_t label_embed, std::size_t word_embed,
                               std::size_t hidden, Rng& rng) {
  if (config.gamma < 0.0) throw Error(ErrorKind::kConfig, "gamma must be >= 0");
  GlobalEnergy ge;
  ge.config = config;
  const auto v = config.variant;
  if (v == GlobalEnergyVariant::kNone) return ge;
  ge.forward = add_tlm(store, "energy/tlm_fwd", num_labels, label_embed, hidden, rng);
  if (v == GlobalEnergyVariant::kB || v == GlobalEnergyVariant::kC) {
    ge.backward = add_tlm(store, "energy/tlm_bwd", num_labels, label_embed, hidden, rng);
  }
  if (v == GlobalEnergyVariant::kC) {
    ge.word_forward = add_tlm(store, "energy/tlm_word_fwd", num_labels, label_embed, hidden,
                              rng, vocab_size, word_embed);
    ge.word_backward = add_tlm(store, "energy/tlm_word_bwd", num_labels, label_embed, hidden,
                               rng, vocab_size, word_embed);
  }
  return ge;
}

Tensor global_energy(Tensor y, std::span<const std::size_t> words, const GlobalEnergy& ge) {
  auto need = [&](const std::optional<TlmParams>& t, const char* what) -> const TlmParams& {
    if (!t) {
      throw Error(ErrorKind::kState, std::string("global energy ") +
                                         variant_name(ge.config.variant) + " needs the " +
                                         what + " TLM");
    }
    return *t;
  };
  switch (ge.config.variant) {
    case GlobalEnergyVariant::kNone:
      return y.tape().scalar(0.0);
    case GlobalEnergyVariant::kA:
      return tlm_energy(y, need(ge.forward, "forward"), TlmDirection::kForward);
    case GlobalEnergyVariant::kB:
    case GlobalEnergyVariant::kC: {
      Tensor e = tlm_energy(y, need(ge.forward, "forward"), TlmDirection::kForward) +
                 tlm_energy(y, need(ge.backward, "backward"), TlmDirection::kBackward);
      if (ge.config.variant == GlobalEnergyVariant::kB) return e;
      Tensor words_term =
          tlm_energy(y, need(ge.word_forward, "word forward"), TlmDirection::kForward, words) +
          tlm_energy(y, need(ge.word_backward, "word backward"), TlmDirection::kBackward,
                     words);
      return e + scale(words_term, ge.config.gamma);
    }
  }
  return y.tape().scalar(0.0);
}

Tensor energy_features(Tape& tape, std::span<const std::size_t> tokens,
                       const EnergyModel& model, const Dropout& dropout) {
  return encode(tape, tokens, model.chain.encoder, dropout);
}

Tensor total_energy(Tensor features, Tensor y, std::span<const std::size_t> words,
                    const EnergyModel& model) {
  Tensor e = chain_energy(features, y, model.chain);
  if (model.global.config.variant == GlobalEnergyVariant::kNone) return e;
  return e + global_energy(y, words, model.global);
}

}  // namespace spen
