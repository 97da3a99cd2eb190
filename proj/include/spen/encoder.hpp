#pragma once

#include <span>
#include <string>
#include <vector>

#include "spen/autodiff.hpp"
#include "spen/random.hpp"

namespace spen {

// Parameter names for one LSTM layer. The four gates are fused column-wise
// in the order input, forget, output, candidate:
//   <prefix>/wx  input_dim x 4h
//   <prefix>/wh  h x 4h
//   <prefix>/b   4h (forget slice initialized to 1)
struct LstmParams {
  std::string prefix;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;

  std::string wx() const { return prefix + "/wx"; }
  std::string wh() const { return prefix + "/wh"; }
  std::string bias() const { return prefix + "/b"; }
  std::size_t num_params() const { return 4 * hidden * (input_dim + hidden + 1); }
};

// Registers the layer in `store`, weights uniform in [-1/sqrt(h), 1/sqrt(h)].
LstmParams add_lstm(ParamStore& store, std::string prefix, Group group,
                    std::size_t input_dim, std::size_t hidden, Rng& rng);

struct LstmState {
  Tensor h;  // 1 x hidden
  Tensor c;
};

LstmState zero_state(Tape& tape, std::size_t hidden);

// One recurrence step on a 1 x input_dim row.
LstmState lstm_step(Tensor x, const LstmState& state, const LstmParams& params);

// Runs the layer over the rows of `inputs` (T x input_dim), right to left
// when `reverse`. Returns the hidden states in input order.
std::vector<Tensor> run_lstm(Tensor inputs, const LstmParams& params, bool reverse);

// Inverted dropout; a null rng disables it (evaluation, gradient checks).
struct Dropout {
  Rng* rng = nullptr;
  double keep_prob = 1.0;

  bool active() const { return rng != nullptr && keep_prob < 1.0; }
  Tensor apply(Tensor x) const;
};

// Embedding table plus forward and backward LSTMs; output dim 2h.
struct BiEncoder {
  std::string embedding;
  LstmParams forward;
  LstmParams backward;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;

  std::size_t output_dim() const { return forward.hidden + backward.hidden; }
  std::size_t num_params() const {
    return vocab_size * embed_dim + forward.num_params() + backward.num_params();
  }
};

// Embeddings uniform in [-0.1, 0.1].
BiEncoder add_bi_encoder(ParamStore& store, const std::string& prefix, Group group,
                         std::size_t vocab_size, std::size_t embed_dim,
                         std::size_t hidden, Rng& rng);

// T x 2h feature matrix b(x, .): row t = [forward h_t ; backward h_t].
Tensor encode(Tape& tape, std::span<const std::size_t> tokens,
              const BiEncoder& enc, const Dropout& dropout = {});

}  // namespace spen
