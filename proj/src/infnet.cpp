#include "spen/infnet.hpp"

#include <cmath>

namespace spen {

const char* parameterization_name(Parameterization p) {
  switch (p) {
    case Parameterization::kSeparated: return "separated";
    case Parameterization::kShared: return "shared";
    case Parameterization::kStacked: return "stacked";
  }
  return "?";
}

std::optional<Parameterization> parameterization_from_name(std::string_view name) {
  for (auto p : {Parameterization::kSeparated, Parameterization::kShared,
                 Parameterization::kStacked}) {
    if (name == parameterization_name(p)) return p;
  }
  return std::nullopt;
}

namespace {

OutputHead add_head(ParamStore& store, const std::string& prefix, Group group,
                    std::size_t input_dim, std::size_t num_labels, Rng& rng) {
  OutputHead head{prefix + "/w", prefix + "/b", input_dim, num_labels};
  const double r = 1.0 / std::sqrt(static_cast<double>(input_dim));
  std::vector<double> w(input_dim * num_labels);
  for (auto& v : w) v = rng.uniform(-r, r);
  store.add(head.weight, group, Shape::matrix(input_dim, num_labels), std::move(w));
  store.add(head.bias, group, Shape::vector(num_labels));
  return head;
}

Tensor apply_head(Tensor features, const OutputHead& head) {
  Tape& tape = features.tape();
  return row_softmax(add(matmul(features, tape.param(head.weight)), tape.param(head.bias)));
}

}  // namespace

InferenceNetPair add_inference_nets(ParamStore& store, Parameterization kind,
                                    std::size_t vocab_size, std::size_t embed_dim,
                                    std::size_t hidden, std::size_t num_labels, Rng& rng) {
  InferenceNetPair nets;
  nets.kind = kind;
  nets.num_labels = num_labels;
  nets.test_encoder =
      add_bi_encoder(store, "test/enc", Group::kTestTime, vocab_size, embed_dim, hidden, rng);
  const std::size_t d = nets.test_encoder.output_dim();
  nets.test_head = add_head(store, "test/head", Group::kTestTime, d, num_labels, rng);
  switch (kind) {
    case Parameterization::kSeparated:
      nets.cost_encoder = add_bi_encoder(store, "cost/enc", Group::kCostAugmented, vocab_size,
                                         embed_dim, hidden, rng);
      nets.cost_head = add_head(store, "cost/head", Group::kCostAugmented, d, num_labels, rng);
      break;
    case Parameterization::kShared:
      nets.cost_head = add_head(store, "cost/head", Group::kCostAugmented, d, num_labels, rng);
      break;
    case Parameterization::kStacked: {
      nets.q_weight = "cost/q_w";
      nets.q_bias = "cost/q_b";
      const double r = 1.0 / std::sqrt(static_cast<double>(2 * num_labels));
      std::vector<double> w(2 * num_labels * num_labels);
      for (auto& v : w) v = rng.uniform(-r, r);
      store.add(nets.q_weight, Group::kCostAugmented, Shape::matrix(2 * num_labels, num_labels),
                std::move(w));
      store.add(nets.q_bias, Group::kCostAugmented, Shape::vector(num_labels));
      break;
    }
  }
  return nets;
}

InfNetOutputs run_inference_nets(Tape& tape, std::span<const std::size_t> tokens,
                                 std::span<const std::size_t> gold,
                                 const InferenceNetPair& nets, bool want_test,
                                 bool want_cost, const Dropout& dropout) {
  InfNetOutputs out;
  if (!want_test && !want_cost) return out;
  const std::size_t L = nets.num_labels;

  if (nets.kind == Parameterization::kSeparated) {
    if (want_test) out.test = apply_head(encode(tape, tokens, nets.test_encoder, dropout),
                                         nets.test_head);
    if (want_cost) out.cost = apply_head(encode(tape, tokens, *nets.cost_encoder, dropout),
                                         *nets.cost_head);
    return out;
  }

  if (nets.kind == Parameterization::kStacked && want_cost && gold.size() != tokens.size()) {
    throw Error(ErrorKind::kState,
                "stacked cost-augmented network needs a gold sequence of length " +
                    std::to_string(tokens.size()));
  }

  Tensor features = encode(tape, tokens, nets.test_encoder, dropout);
  if (nets.kind == Parameterization::kShared) {
    if (want_test) out.test = apply_head(features, nets.test_head);
    if (want_cost) out.cost = apply_head(features, *nets.cost_head);
    return out;
  }

  Tensor test = apply_head(features, nets.test_head);
  if (want_test) out.test = test;
  if (want_cost) {
    RelaxedLabelSeq g = one_hot(gold, L);
    Tensor gold_t = tape.constant(Shape::matrix(g.length, L), std::move(g.probs));
    Tensor input = concat_cols({tape.stop_gradient(test), gold_t});
    out.cost = row_softmax(add(matmul(input, tape.param(nets.q_weight)),
                               tape.param(nets.q_bias)));
  }
  return out;
}

Tensor infer(Tape& tape, std::span<const std::size_t> tokens, const InferenceNetPair& nets,
             const Dropout& dropout) {
  return *run_inference_nets(tape, tokens, {}, nets, true, false, dropout).test;
}

Tensor cost_augmented_infer(Tape& tape, std::span<const std::size_t> tokens,
                            std::span<const std::size_t> gold, const InferenceNetPair& nets,
                            const Dropout& dropout) {
  return *run_inference_nets(tape, tokens, gold, nets, false, true, dropout).cost;
}

std::vector<std::size_t> discretize(std::span<const double> probs, std::size_t num_labels) {
  if (num_labels == 0 || probs.size() % num_labels != 0) {
    throw Error(ErrorKind::kShape, "discretize: " + std::to_string(probs.size()) +
                                       " values do not form rows of " +
                                       std::to_string(num_labels));
  }
  const std::size_t T = probs.size() / num_labels;
  std::vector<std::size_t> labels(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double* row = probs.data() + t * num_labels;
    std::size_t best = 0;
    for (std::size_t j = 1; j < num_labels; ++j) {
      if (row[j] > row[best]) best = j;
    }
    labels[t] = best;
  }
  return labels;
}

std::vector<std::size_t> discretize(Tensor p) { return discretize(p.values(), p.cols()); }

std::vector<std::size_t> discretize(const RelaxedLabelSeq& p) {
  return discretize(p.probs, p.num_labels);
}

RelaxedLabelSeq to_relaxed(Tensor p) {
  auto v = p.values();
  return {p.rows(), p.cols(), std::vector<double>(v.begin(), v.end())};
}

ParamCounts count_params(const InferenceNetPair& nets, const EnergyModel& energy) {
  ParamCounts c;
  const std::size_t test_net = nets.test_encoder.num_params() + nets.test_head.num_params();
  std::size_t cost_net = 0;
  if (nets.cost_encoder) cost_net += nets.cost_encoder->num_params();
  if (nets.cost_head) cost_net += nets.cost_head->num_params();
  if (nets.kind == Parameterization::kStacked) {
    cost_net += 2 * nets.num_labels * nets.num_labels + nets.num_labels;
  }
  c.trained = energy.num_params() + test_net + cost_net;
  c.inference = test_net;
  return c;
}

}  // namespace spen
