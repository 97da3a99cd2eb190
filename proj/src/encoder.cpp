#include "spen/encoder.hpp"

#include <cmath>

namespace spen {

LstmParams add_lstm(ParamStore& store, std::string prefix, Group group,
                    std::size_t input_dim, std::size_t hidden, Rng& rng) {
  LstmParams p{std::move(prefix), input_dim, hidden};
  const double r = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto uniform = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-r, r);
    return v;
  };
  store.add(p.wx(), group, Shape::matrix(input_dim, 4 * hidden), uniform(input_dim * 4 * hidden));
  store.add(p.wh(), group, Shape::matrix(hidden, 4 * hidden), uniform(hidden * 4 * hidden));
  std::vector<double> b(4 * hidden, 0.0);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;
  store.add(p.bias(), group, Shape::vector(4 * hidden), std::move(b));
  return p;
}

LstmState zero_state(Tape& tape, std::size_t hidden) {
  return {tape.constant(Shape::matrix(1, hidden), std::vector<double>(hidden, 0.0)),
          tape.constant(Shape::matrix(1, hidden), std::vector<double>(hidden, 0.0))};
}

namespace {

LstmState cell(Tensor pre, const LstmState& state, std::size_t h) {
  Tensor sig = sigmoid(slice_cols(pre, 0, 3 * h));
  Tensor in_gate = slice_cols(sig, 0, h);
  Tensor forget_gate = slice_cols(sig, h, 2 * h);
  Tensor out_gate = slice_cols(sig, 2 * h, 3 * h);
  Tensor candidate = tanh(slice_cols(pre, 3 * h, 4 * h));
  Tensor c = forget_gate * state.c + in_gate * candidate;
  return {out_gate * tanh(c), c};
}

void check_input(Tensor x, const LstmParams& p) {
  if (x.cols() != p.input_dim) {
    throw Error(ErrorKind::kShape, "lstm " + p.prefix + ": input width " +
                                       std::to_string(x.cols()) + ", expected " +
                                       std::to_string(p.input_dim));
  }
}

}  // namespace

LstmState lstm_step(Tensor x, const LstmState& state, const LstmParams& params) {
  check_input(x, params);
  if (state.h.cols() != params.hidden || state.c.cols() != params.hidden) {
    throw Error(ErrorKind::kShape, "lstm " + params.prefix + ": state width mismatch");
  }
  Tape& tape = x.tape();
  Tensor pre = matmul(x, tape.param(params.wx())) + tape.param(params.bias()) +
               matmul(state.h, tape.param(params.wh()));
  return cell(pre, state, params.hidden);
}

std::vector<Tensor> run_lstm(Tensor inputs, const LstmParams& params, bool reverse) {
  check_input(inputs, params);
  Tape& tape = inputs.tape();
  const std::size_t steps = inputs.rows();
  Tensor projected = add(matmul(inputs, tape.param(params.wx())), tape.param(params.bias()));
  Tensor wh = tape.param(params.wh());
  LstmState state = zero_state(tape, params.hidden);
  std::vector<Tensor> hs(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    Tensor pre = slice_rows(projected, t, t + 1);
    if (k > 0) pre = pre + matmul(state.h, wh);
    state = cell(pre, state, params.hidden);
    hs[t] = state.h;
  }
  return hs;
}

Tensor Dropout::apply(Tensor x) const {
  if (!active()) return x;
  std::vector<double> mask(x.shape().size());
  const double s = 1.0 / keep_prob;
  for (auto& m : mask) m = rng->bernoulli(keep_prob) ? s : 0.0;
  return x * x.tape().constant(x.shape(), std::move(mask));
}

BiEncoder add_bi_encoder(ParamStore& store, const std::string& prefix, Group group,
                         std::size_t vocab_size, std::size_t embed_dim,
                         std::size_t hidden, Rng& rng) {
  BiEncoder enc;
  enc.embedding = prefix + "/emb";
  enc.vocab_size = vocab_size;
  enc.embed_dim = embed_dim;
  std::vector<double> emb(vocab_size * embed_dim);
  for (auto& v : emb) v = rng.uniform(-0.1, 0.1);
  store.add(enc.embedding, group, Shape::matrix(vocab_size, embed_dim), std::move(emb));
  enc.forward = add_lstm(store, prefix + "/fwd", group, embed_dim, hidden, rng);
  enc.backward = add_lstm(store, prefix + "/bwd", group, embed_dim, hidden, rng);
  return enc;
}

Tensor encode(Tape& tape, std::span<const std::size_t> tokens, const BiEncoder& enc,
              const Dropout& dropout) {
  if (tokens.empty()) throw Error(ErrorKind::kShape, "encode: empty sequence");
  Tensor x = embedding_lookup(tape.param(enc.embedding), tokens);
  auto fwd = run_lstm(x, enc.forward, false);
  auto bwd = run_lstm(x, enc.backward, true);
  Tensor out = concat_cols({stack_rows(fwd), stack_rows(bwd)});
  return dropout.apply(out);
}

}  // namespace spen
