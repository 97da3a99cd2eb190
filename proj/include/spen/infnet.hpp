#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spen/data.hpp"
#include "spen/energy.hpp"

namespace spen {

enum class Parameterization { kSeparated, kShared, kStacked };

const char* parameterization_name(Parameterization p);
std::optional<Parameterization> parameterization_from_name(std::string_view name);

// Affine map d -> L followed by row-softmax.
struct OutputHead {
  std::string weight;  // d x L
  std::string bias;    // L
  std::size_t input_dim = 0;
  std::size_t num_labels = 0;

  std::size_t num_params() const { return input_dim * num_labels + num_labels; }
};

// Test-time network A (group Psi) and cost-augmented network F (group Phi).
//   separated: test/enc + test/head, cost/enc + cost/head
//   shared:    test/enc (trunk, fed by both nets) + test/head, cost/head
//   stacked:   test/enc + test/head, cost/q_w (2L x L) + cost/q_b (L);
//              F_t = softmax([A_t ; gold_t] q_w + q_b) with A blocked.
struct InferenceNetPair {
  Parameterization kind = Parameterization::kSeparated;
  std::size_t num_labels = 0;
  BiEncoder test_encoder;
  OutputHead test_head;
  std::optional<BiEncoder> cost_encoder;
  std::optional<OutputHead> cost_head;
  std::string q_weight;
  std::string q_bias;
};

InferenceNetPair add_inference_nets(ParamStore& store, Parameterization kind,
                                    std::size_t vocab_size, std::size_t embed_dim,
                                    std::size_t hidden, std::size_t num_labels, Rng& rng);

struct InfNetOutputs {
  std::optional<Tensor> test;  // A(x), T x L
  std::optional<Tensor> cost;  // F(x), T x L
};

// Computes the requested outputs on one tape, sharing the trunk where the
// parameterization allows. `gold` is required for the stacked cost net.
InfNetOutputs run_inference_nets(Tape& tape, std::span<const std::size_t> tokens,
                                 std::span<const std::size_t> gold,
                                 const InferenceNetPair& nets, bool want_test,
                                 bool want_cost, const Dropout& dropout = {});

Tensor infer(Tape& tape, std::span<const std::size_t> tokens, const InferenceNetPair& nets,
             const Dropout& dropout = {});

Tensor cost_augmented_infer(Tape& tape, std::span<const std::size_t> tokens,
                            std::span<const std::size_t> gold, const InferenceNetPair& nets,
                            const Dropout& dropout = {});

// Row-wise argmax, ties to the lowest label index.
std::vector<std::size_t> discretize(std::span<const double> probs, std::size_t num_labels);
std::vector<std::size_t> discretize(Tensor p);
std::vector<std::size_t> discretize(const RelaxedLabelSeq& p);

RelaxedLabelSeq to_relaxed(Tensor p);

struct ParamCounts {
  std::size_t trained = 0;    // |T|: energy + cost + test
  std::size_t inference = 0;  // |I|: what discretize(infer(x)) reads
};

ParamCounts count_params(const InferenceNetPair& nets, const EnergyModel& energy);

}  // namespace spen
