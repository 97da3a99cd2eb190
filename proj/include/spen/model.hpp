#pragma once

#include <filesystem>

#include "spen/eval.hpp"
#include "spen/infnet.hpp"

namespace spen {

struct ModelConfig {
  Parameterization parameterization = Parameterization::kStacked;
  GlobalEnergyConfig global;
  std::size_t embed_dim = 100;
  std::size_t hidden = 100;         // energy BiLSTM
  std::size_t infnet_hidden = 100;  // inference-network BiLSTMs
  std::size_t tlm_hidden = 32;
  std::size_t tlm_label_embed = 16;
  std::size_t tlm_word_embed = 16;
};

struct Model {
  ModelConfig config;
  Vocabulary vocab;
  LabelSet labels;
  ParamStore store;
  EnergyModel energy;
  InferenceNetPair nets;

  std::size_t num_labels() const { return labels.size(); }
};

Model build_model(const ModelConfig& config, Vocabulary vocab, LabelSet labels, Rng& rng);

// Copies `table` (vocab x embed_dim) into every encoder embedding matrix.
void set_word_embeddings(Model& model, const EmbeddingTable& table);

// Parameters go to `path` (binary container); config, vocabulary and labels
// to `path` + ".json".
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

enum class NetChoice { kTest, kCost };

// Discretized outputs without dropout. The cost net reads gold labels when
// the parameterization needs them.
LabelSeqs predict_labels(Model& model, const Dataset& data, NetChoice which = NetChoice::kTest);

LabelSeqs gold_labels(const Dataset& data);
LabelStrings label_names(const LabelSet& labels, const LabelSeqs& seqs);

Metrics evaluate(Model& model, const Dataset& data, NetChoice which = NetChoice::kTest);

// Dev selection score: token accuracy, or span F1 for BIOES label sets.
enum class DevMetric { kAccuracy, kSpanF1 };
double dev_score(Model& model, const Dataset& data, DevMetric metric,
                 NetChoice which = NetChoice::kTest);

// Mean over examples of E(x, A(x)) (or F(x)).
double mean_energy(Model& model, const Dataset& data, NetChoice which = NetChoice::kTest);

// Mean over examples of the global (TLM) energy of the gold sequence.
double mean_gold_tlm_energy(Model& model, const Dataset& data);

DisagreementReport compare_nets(Model& model, const Dataset& data);

}  // namespace spen
