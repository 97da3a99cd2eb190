#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "spen/encoder.hpp"

namespace spen {

// Linear-chain energy over relaxed outputs y (T x L):
//   E(x, y) = -( sum_t sum_j y_tj U_j . b(x, t) + sum_{t>=2} y_{t-1}' W y_t )
// U is d x L (column j is U_j), W is L x L. There is no transition term into
// the first position.
struct ChainEnergyParams {
  BiEncoder encoder;
  std::string unary = "energy/U";
  std::string transition = "energy/W";
  std::size_t num_labels = 0;

  std::size_t num_params() const {
    return encoder.num_params() + encoder.output_dim() * num_labels +
           num_labels * num_labels;
  }
};

ChainEnergyParams add_chain_energy(ParamStore& store, std::size_t vocab_size,
                                   std::size_t embed_dim, std::size_t hidden,
                                   std::size_t num_labels, Rng& rng);

Tensor chain_energy(Tensor features, Tensor y, Tensor unary, Tensor transition);
Tensor chain_energy(Tensor features, Tensor y, const ChainEnergyParams& params);

enum class TlmDirection { kForward, kBackward };

// LSTM tag language model over L + 2 symbols (labels, start, end). Relaxed
// label vectors enter as distribution-weighted mixtures of label embeddings.
// A word-conditioned model also reads the previous word (a boundary
// embedding, the padding row, before the first word).
struct TlmParams {
  std::string prefix;
  std::size_t num_labels = 0;
  std::size_t label_embed = 0;
  std::size_t word_embed = 0;  // 0: label-only
  std::size_t vocab_size = 0;
  LstmParams lstm;

  bool word_conditioned() const { return word_embed > 0; }
  std::string label_embedding() const { return prefix + "/label_emb"; }
  std::string word_embedding() const { return prefix + "/word_emb"; }
  std::string out_weight() const { return prefix + "/out_w"; }
  std::string out_bias() const { return prefix + "/out_b"; }
  std::size_t num_params() const;
};

TlmParams add_tlm(ParamStore& store, std::string prefix, std::size_t num_labels,
                  std::size_t label_embed, std::size_t hidden, Rng& rng,
                  std::size_t vocab_size = 0, std::size_t word_embed = 0);

// Floor applied to y_t . yhat_t before the log.
inline constexpr double kTlmLogFloor = 1e-12;

// -sum_{t=1}^{T+1} log(y_t . yhat_t) with y_0 = start and y_{T+1} = end. The
// backward direction applies the same recurrence to the reversed sequence
// (start/end are relative to the reading direction).
Tensor tlm_energy(Tensor y, const TlmParams& tlm, TlmDirection direction,
                  std::span<const std::size_t> words = {});

enum class GlobalEnergyVariant { kNone, kA, kB, kC };

const char* variant_name(GlobalEnergyVariant v);
std::optional<GlobalEnergyVariant> global_variant_from_name(std::string_view name);

struct GlobalEnergyConfig {
  GlobalEnergyVariant variant = GlobalEnergyVariant::kNone;
  double gamma = 0.0;  // weight of the word-conditioned terms (variant C)
};

struct GlobalEnergy {
  GlobalEnergyConfig config;
  std::optional<TlmParams> forward;        // h
  std::optional<TlmParams> backward;       // h'
  std::optional<TlmParams> word_forward;   // g
  std::optional<TlmParams> word_backward;  // g'

  std::size_t num_params() const;
};

// Registers the TLMs required by `config` under "energy/tlm_*".
GlobalEnergy add_global_energy(ParamStore& store, const GlobalEnergyConfig& config,
                               std::size_t num_labels, std::size_t vocab_size,
                               std::size_t label_embed, std::size_t word_embed,
                               std::size_t hidden, Rng& rng);

// GE(a): forward label TLM. GE(b): + backward label TLM. GE(c): GE(b) +
// gamma * (forward + backward word-conditioned TLMs). kNone: 0.
Tensor global_energy(Tensor y, std::span<const std::size_t> words,
                     const GlobalEnergy& ge);

struct EnergyModel {
  ChainEnergyParams chain;
  GlobalEnergy global;

  std::size_t num_params() const { return chain.num_params() + global.num_params(); }
};

// Input features b(x, .) for the energy.
Tensor energy_features(Tape& tape, std::span<const std::size_t> tokens,
                       const EnergyModel& model, const Dropout& dropout = {});

// chain_energy + global_energy on a single tape.
Tensor total_energy(Tensor features, Tensor y, std::span<const std::size_t> words,
                    const EnergyModel& model);

}  // namespace spen
