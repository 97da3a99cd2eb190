#include "spen/model.hpp"

#include <fstream>

#include <json.hpp>

namespace spen {

using nlohmann::json;

Model build_model(const ModelConfig& config, Vocabulary vocab, LabelSet labels, Rng& rng) {
  if (labels.size() < 2) throw Error(ErrorKind::kConfig, "need at least 2 labels");
  Model m;
  m.config = config;
  m.vocab = std::move(vocab);
  m.labels = std::move(labels);
  const std::size_t V = m.vocab.size();
  const std::size_t L = m.labels.size();
  m.energy.chain = add_chain_energy(m.store, V, config.embed_dim, config.hidden, L, rng);
  m.energy.global = add_global_energy(m.store, config.global, L, V, config.tlm_label_embed,
                                      config.tlm_word_embed, config.tlm_hidden, rng);
  m.nets = add_inference_nets(m.store, config.parameterization, V, config.embed_dim,
                              config.infnet_hidden, L, rng);
  return m;
}

void set_word_embeddings(Model& model, const EmbeddingTable& table) {
  for (auto& p : model.store.params()) {
    if (!p.name.ends_with("/enc/emb")) continue;
    if (p.shape.rows() != table.rows || p.shape.cols() != table.dim) {
      throw Error(ErrorKind::kShape, "embedding table " + std::to_string(table.rows) + "x" +
                                         std::to_string(table.dim) + " does not fit " +
                                         p.name + " " + p.shape.str());
    }
    p.value = table.values;
  }
}

namespace {

json config_to_json(const ModelConfig& c) {
  return {{"parameterization", parameterization_name(c.parameterization)},
          {"global_energy", variant_name(c.global.variant)},
          {"gamma", c.global.gamma},
          {"embed_dim", c.embed_dim},
          {"hidden", c.hidden},
          {"infnet_hidden", c.infnet_hidden},
          {"tlm_hidden", c.tlm_hidden},
          {"tlm_label_embed", c.tlm_label_embed},
          {"tlm_word_embed", c.tlm_word_embed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  auto p = parameterization_from_name(j.at("parameterization").get<std::string>());
  auto g = global_variant_from_name(j.at("global_energy").get<std::string>());
  if (!p || !g) throw Error(ErrorKind::kFormat, "model sidecar: unknown variant name");
  c.parameterization = *p;
  c.global.variant = *g;
  c.global.gamma = j.at("gamma").get<double>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.infnet_hidden = j.at("infnet_hidden").get<std::size_t>();
  c.tlm_hidden = j.at("tlm_hidden").get<std::size_t>();
  c.tlm_label_embed = j.at("tlm_label_embed").get<std::size_t>();
  c.tlm_word_embed = j.at("tlm_word_embed").get<std::size_t>();
  return c;
}

std::filesystem::path sidecar(const std::filesystem::path& path) {
  auto s = path;
  s += ".json";
  return s;
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
  save_params(model.store, path);
  json j = {{"format", "spen-model"},
            {"version", 1},
            {"config", config_to_json(model.config)},
            {"vocab", model.vocab.tokens()},
            {"labels", model.labels.names()}};
  std::ofstream out(sidecar(path));
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + sidecar(path).string());
  out << j.dump(1) << '\n';
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + sidecar(path).string());
}

Model load_model(const std::filesystem::path& path) {
  const auto meta_path = sidecar(path);
  std::ifstream in(meta_path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + meta_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, meta_path.string() + ": " + e.what());
  }
  ModelConfig config;
  Vocabulary vocab;
  LabelSet labels;
  try {
    config = config_from_json(j.at("config"));
    const auto tokens = j.at("vocab").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i < 2) {
        if (tokens[i] != vocab.token(i)) {
          throw Error(ErrorKind::kFormat, meta_path.string() + ": reserved vocabulary entry " +
                                              std::to_string(i) + " is '" + tokens[i] + "'");
        }
        continue;
      }
      vocab.add(tokens[i]);
    }
    for (const auto& l : j.at("labels").get<std::vector<std::string>>()) labels.add(l);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, meta_path.string() + ": " + e.what());
  }

  Rng rng(0);
  Model m = build_model(config, std::move(vocab), std::move(labels), rng);
  ParamStore loaded = load_params(path);
  if (loaded.size() != m.store.size()) {
    throw Error(ErrorKind::kFormat, path.string() + ": " + std::to_string(loaded.size()) +
                                        " parameters, model needs " +
                                        std::to_string(m.store.size()));
  }
  for (auto& p : m.store.params()) {
    if (!loaded.contains(p.name)) {
      throw Error(ErrorKind::kFormat, path.string() + ": missing parameter " + p.name);
    }
    const Param& src = loaded.get(p.name);
    if (!(src.shape == p.shape)) {
      throw Error(ErrorKind::kFormat, path.string() + ": parameter " + p.name + " has shape " +
                                          src.shape.str() + ", expected " + p.shape.str());
    }
    p.value = src.value;
  }
  return m;
}

LabelSeqs predict_labels(Model& model, const Dataset& data, NetChoice which) {
  LabelSeqs out;
  out.reserve(data.size());
  for (const auto& ex : data.examples) {
    Tape tape(&model.store, GroupSet::none());
    Tensor p = which == NetChoice::kTest
                   ? infer(tape, ex.tokens, model.nets)
                   : cost_augmented_infer(tape, ex.tokens, ex.gold, model.nets);
    out.push_back(discretize(p));
  }
  return out;
}

LabelSeqs gold_labels(const Dataset& data) {
  LabelSeqs out;
  out.reserve(data.size());
  for (const auto& ex : data.examples) out.push_back(ex.gold);
  return out;
}

LabelStrings label_names(const LabelSet& labels, const LabelSeqs& seqs) {
  LabelStrings out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) {
    std::vector<std::string> names;
    names.reserve(s.size());
    for (auto l : s) names.push_back(labels.name(l));
    out.push_back(std::move(names));
  }
  return out;
}

Metrics evaluate(Model& model, const Dataset& data, NetChoice which) {
  const bool bioes = model.labels.scheme() == LabelScheme::kBioes;
  return compute_metrics(label_names(model.labels, predict_labels(model, data, which)),
                         label_names(model.labels, gold_labels(data)), bioes);
}

double dev_score(Model& model, const Dataset& data, DevMetric metric, NetChoice which) {
  if (metric == DevMetric::kAccuracy) {
    return token_accuracy(predict_labels(model, data, which), gold_labels(data));
  }
  if (model.labels.scheme() != LabelScheme::kBioes) {
    throw Error(ErrorKind::kConfig, "span-f1 needs BIOES labels; '" +
                                        model.labels.first_non_bioes() + "' is not");
  }
  return span_f1(label_names(model.labels, predict_labels(model, data, which)),
                 label_names(model.labels, gold_labels(data)))
      .f1;
}

double mean_energy(Model& model, const Dataset& data, NetChoice which) {
  if (data.size() == 0) return 0.0;
  double total = 0.0;
  for (const auto& ex : data.examples) {
    Tape tape(&model.store, GroupSet::none());
    Tensor p = which == NetChoice::kTest
                   ? infer(tape, ex.tokens, model.nets)
                   : cost_augmented_infer(tape, ex.tokens, ex.gold, model.nets);
    Tensor f = energy_features(tape, ex.tokens, model.energy);
    total += total_energy(f, p, ex.tokens, model.energy).value();
  }
  return total / static_cast<double>(data.size());
}

double mean_gold_tlm_energy(Model& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const std::size_t L = model.num_labels();
  double total = 0.0;
  for (const auto& ex : data.examples) {
    Tape tape(&model.store, GroupSet::none());
    RelaxedLabelSeq y = one_hot(ex.gold, L);
    Tensor gold = tape.constant(Shape::matrix(y.length, L), std::move(y.probs));
    total += global_energy(gold, ex.tokens, model.energy.global).value();
  }
  return total / static_cast<double>(data.size());
}

DisagreementReport compare_nets(Model& model, const Dataset& data) {
  return disagreement(predict_labels(model, data, NetChoice::kTest),
                      predict_labels(model, data, NetChoice::kCost), gold_labels(data));
}

}  // namespace spen
