#include "spen/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>

namespace spen {

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw Error(ErrorKind::kConfig, "bad value '" + std::string(value) + "' for key '" +
                                      std::string(key) + "': expected " + std::string(want));
}

std::size_t parse_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

int parse_int(std::string_view key, std::string_view v) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true or false");
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }

struct KeyHandler {
  ConfigKey key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SPEN_SIZE_KEY(name, field, def, help)                                        \
  KeyHandler {                                                                       \
    {name, def, help}, [](RunConfig& c, std::string_view v) {                        \
      c.field = parse_size(name, v);                                                 \
    },                                                                               \
        [](const RunConfig& c) { return fmt(static_cast<std::size_t>(c.field)); } \
  }
#define SPEN_DOUBLE_KEY(name, field, def, help)                                                 \
  KeyHandler {                                                                                  \
    {name, def, help}, [](RunConfig& c, std::string_view v) { c.field = parse_double(name, v); }, \
        [](const RunConfig& c) { return fmt(c.field); }                                         \
  }
#define SPEN_BOOL_KEY(name, field, def, help)                                                 \
  KeyHandler {                                                                                \
    {name, def, help}, [](RunConfig& c, std::string_view v) { c.field = parse_bool(name, v); }, \
        [](const RunConfig& c) { return fmt(c.field); }                                       \
  }
#define SPEN_STRING_KEY(name, field, def, help)                                         \
  KeyHandler {                                                                          \
    {name, def, help}, [](RunConfig& c, std::string_view v) { c.field = std::string(v); }, \
        [](const RunConfig& c) { return c.field; }                                      \
  }

const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> table = {
      // data
      SPEN_STRING_KEY("train_path", train_path, "",
                      "Training corpus (CoNLL columns). Empty: generate the synthetic corpus."),
      SPEN_STRING_KEY("dev_path", dev_path, "", "Development corpus (required with train_path)."),
      SPEN_STRING_KEY("test_path", test_path, "", "Test corpus (optional with train_path)."),
      SPEN_SIZE_KEY("token_column", conll.token_column, "0", "Column holding the token."),
      KeyHandler{{"label_column", "-1", "Column holding the label; negative counts from the end."},
                 [](RunConfig& c, std::string_view v) {
                   c.conll.label_column = parse_int("label_column", v);
                 },
                 [](const RunConfig& c) { return fmt(c.conll.label_column); }},
      SPEN_BOOL_KEY("lowercase", conll.lowercase, "false", "Lowercase tokens on load."),
      SPEN_BOOL_KEY("bioes", bioes, "false", "Convert BIO labels to BIOES on load."),
      SPEN_STRING_KEY("embeddings_path", embeddings_path, "",
                      "Text embeddings \"token v1 ... vd\" (d = embed_dim) for all encoders."),
      SPEN_SIZE_KEY("synth_labels", synth_labels, "8", "Synthetic corpus: number of labels L."),
      SPEN_SIZE_KEY("synth_vocab", synth_vocab, "50", "Synthetic corpus: vocabulary size V."),
      SPEN_SIZE_KEY("synth_train", synth_train, "2000", "Synthetic corpus: training sentences."),
      SPEN_SIZE_KEY("synth_dev", synth_dev, "500", "Synthetic corpus: dev sentences."),
      SPEN_SIZE_KEY("synth_test", synth_test, "500", "Synthetic corpus: test sentences."),
      SPEN_SIZE_KEY("synth_min_len", synth_min_len, "5", "Synthetic corpus: minimum length."),
      SPEN_SIZE_KEY("synth_max_len", synth_max_len, "20", "Synthetic corpus: maximum length."),
      // outputs
      SPEN_STRING_KEY("model_out", model_out, "model.bin",
                      "Model parameters; the sidecar <model_out>.json holds config and vocabulary."),
      SPEN_STRING_KEY("log_out", log_out, "train_log.jsonl", "Per-epoch trajectory log (JSONL)."),
      SPEN_STRING_KEY("metrics_out", metrics_out, "metrics.json", "Final dev/test metrics (JSON)."),
      // objective
      KeyHandler{{"mode", "compound",
                  "compound | margin-rescaled | perceptron | ce-baseline (local CE only)."},
                 [](RunConfig& c, std::string_view v) {
                   auto m = mode_from_name(v);
                   if (!m) bad_value("mode", v,
                                     "compound, margin-rescaled, perceptron or ce-baseline");
                   c.train.loss.mode = *m;
                 },
                 [](const RunConfig& c) { return std::string(mode_name(c.train.loss.mode)); }},
      KeyHandler{{"parameterization", "stacked", "separated | shared | stacked."},
                 [](RunConfig& c, std::string_view v) {
                   auto p = parameterization_from_name(v);
                   if (!p) bad_value("parameterization", v, "separated, shared or stacked");
                   c.train.model.parameterization = *p;
                 },
                 [](const RunConfig& c) {
                   return std::string(parameterization_name(c.train.model.parameterization));
                 }},
      SPEN_DOUBLE_KEY("lambda", train.loss.lambda, "1", "Weight of the perceptron term."),
      SPEN_DOUBLE_KEY("ce_weight", train.loss.ce_weight, "1",
                      "Weight of the local cross-entropy term on both inference networks."),
      SPEN_BOOL_KEY("truncate_energy_step", train.loss.truncate_energy_step, "true",
                    "Truncate hinge terms at zero in the energy step."),
      SPEN_BOOL_KEY("truncate_inference_step", train.loss.truncate_inference_step, "false",
                    "Truncate hinge terms at zero in the inference step."),
      // schedule
      SPEN_SIZE_KEY("k", train.k, "1", "Inference steps per energy step."),
      SPEN_SIZE_KEY("epochs", train.max_epochs, "50", "Maximum epochs."),
      SPEN_SIZE_KEY("batch_size", train.batch_size, "32", "Minibatch size."),
      SPEN_SIZE_KEY("patience", train.patience, "10",
                    "Early stopping: epochs without dev improvement."),
      KeyHandler{{"dev_metric", "accuracy", "accuracy | span-f1 (BIOES labels)."},
                 [](RunConfig& c, std::string_view v) {
                   if (v == "accuracy") c.train.dev_metric = DevMetric::kAccuracy;
                   else if (v == "span-f1") c.train.dev_metric = DevMetric::kSpanF1;
                   else bad_value("dev_metric", v, "accuracy or span-f1");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.train.dev_metric == DevMetric::kAccuracy ? "accuracy"
                                                                                  : "span-f1");
                 }},
      SPEN_SIZE_KEY("finetune_epochs", train.finetune_epochs, "10",
                    "margin-rescaled: epochs of test-network fine-tuning."),
      SPEN_SIZE_KEY("probe_size", train.probe_size, "100",
                    "Training examples used for grad_norm_psi."),
      // architecture
      SPEN_SIZE_KEY("embed_dim", train.model.embed_dim, "100", "Word embedding size."),
      SPEN_SIZE_KEY("hidden", train.model.hidden, "100", "Energy BiLSTM hidden size."),
      SPEN_SIZE_KEY("infnet_hidden", train.model.infnet_hidden, "100",
                    "Inference-network BiLSTM hidden size."),
      SPEN_DOUBLE_KEY("keep_prob", train.keep_prob, "0.7", "Dropout keep probability (training)."),
      KeyHandler{{"global_energy", "none", "none | GE-a | GE-b | GE-c."},
                 [](RunConfig& c, std::string_view v) {
                   auto g = global_variant_from_name(v);
                   if (!g) bad_value("global_energy", v, "none, GE-a, GE-b or GE-c");
                   c.train.model.global.variant = *g;
                 },
                 [](const RunConfig& c) {
                   return std::string(variant_name(c.train.model.global.variant));
                 }},
      SPEN_DOUBLE_KEY("gamma", train.model.global.gamma, "0",
                      "GE-c: weight of the word-conditioned tag language models."),
      SPEN_SIZE_KEY("tlm_hidden", train.model.tlm_hidden, "32", "Tag language model hidden size."),
      SPEN_SIZE_KEY("tlm_label_embed", train.model.tlm_label_embed, "16",
                    "Tag language model label embedding size."),
      SPEN_SIZE_KEY("tlm_word_embed", train.model.tlm_word_embed, "16",
                    "Word-conditioned tag language model word embedding size."),
      // optimizers
      KeyHandler{{"energy_optimizer", "adam", "adam | sgd-momentum."},
                 [](RunConfig& c, std::string_view v) {
                   auto o = optimizer_from_name(v);
                   if (!o) bad_value("energy_optimizer", v, "adam or sgd-momentum");
                   c.train.energy_optimizer.kind = *o;
                 },
                 [](const RunConfig& c) {
                   return std::string(optimizer_name(c.train.energy_optimizer.kind));
                 }},
      SPEN_DOUBLE_KEY("energy_lr", train.energy_optimizer.lr, "0.0005", "Energy learning rate."),
      KeyHandler{{"infnet_optimizer", "auto",
                  "auto | adam | sgd-momentum. auto: sgd-momentum when ce_weight > 0, else adam."},
                 [](RunConfig& c, std::string_view v) {
                   if (v == "auto") {
                     c.train.infnet_optimizer.reset();
                     return;
                   }
                   auto o = optimizer_from_name(v);
                   if (!o) bad_value("infnet_optimizer", v, "auto, adam or sgd-momentum");
                   c.train.infnet_optimizer = *o;
                 },
                 [](const RunConfig& c) {
                   return c.train.infnet_optimizer
                              ? std::string(optimizer_name(*c.train.infnet_optimizer))
                              : std::string("auto");
                 }},
      KeyHandler{{"infnet_lr", "auto", "Inference-network learning rate. auto: 0.005 for "
                                       "sgd-momentum, 0.0005 for adam."},
                 [](RunConfig& c, std::string_view v) {
                   if (v == "auto") {
                     c.train.infnet_lr.reset();
                     return;
                   }
                   c.train.infnet_lr = parse_double("infnet_lr", v);
                 },
                 [](const RunConfig& c) {
                   return c.train.infnet_lr ? fmt(*c.train.infnet_lr) : std::string("auto");
                 }},
      SPEN_DOUBLE_KEY("momentum", train.momentum, "0.9", "SGD momentum coefficient."),
      KeyHandler{{"adam_beta1", "0.9", "Adam beta1 (all Adam optimizers)."},
                 [](RunConfig& c, std::string_view v) {
                   c.train.energy_optimizer.beta1 = parse_double("adam_beta1", v);
                 },
                 [](const RunConfig& c) { return fmt(c.train.energy_optimizer.beta1); }},
      KeyHandler{{"adam_beta2", "0.999", "Adam beta2."},
                 [](RunConfig& c, std::string_view v) {
                   c.train.energy_optimizer.beta2 = parse_double("adam_beta2", v);
                 },
                 [](const RunConfig& c) { return fmt(c.train.energy_optimizer.beta2); }},
      KeyHandler{{"adam_eps", "1e-08", "Adam epsilon."},
                 [](RunConfig& c, std::string_view v) {
                   c.train.energy_optimizer.eps = parse_double("adam_eps", v);
                 },
                 [](const RunConfig& c) { return fmt(c.train.energy_optimizer.eps); }},
      // run
      SPEN_BOOL_KEY("log_timing", train.log_timing, "true",
                    "Record wall-clock fields in the log; false writes 0 for byte-stable logs."),
      KeyHandler{{"seed", "0", "Seed for corpus generation, initialization, batching, dropout."},
                 [](RunConfig& c, std::string_view v) { c.train.seed = parse_u64("seed", v); },
                 [](const RunConfig& c) { return std::to_string(c.train.seed); }},
  };
  return table;
}

#undef SPEN_SIZE_KEY
#undef SPEN_DOUBLE_KEY
#undef SPEN_BOOL_KEY
#undef SPEN_STRING_KEY

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& h : handlers()) out.push_back(h.key);
    return out;
  }();
  return keys;
}

std::string config_reference() {
  std::string out =
      "# Configuration keys\n\n"
      "Generated by `spen config-keys`. Config files hold one `key = value` per line; `#` "
      "starts a comment. Command-line `key=value` arguments override the file. Unknown keys "
      "are rejected.\n\n"
      "| key | default | description |\n|---|---|---|\n";
  for (const auto& k : config_keys()) {
    out += "| `" + k.name + "` | `" + (k.default_value.empty() ? "\"\"" : k.default_value) +
           "` | " + k.help + " |\n";
  }
  return out;
}

void apply_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& h : handlers()) {
    if (h.key.name == key) {
      h.set(cfg, trim(value));
      return;
    }
  }
  throw Error(ErrorKind::kConfig, "unknown config key '" + std::string(key) + "'");
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read config " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::kConfig, where + "expected 'key = value'");
    }
    try {
      apply_config_value(cfg, trim(s.substr(0, eq)), s.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(e.kind(), where + e.what());
    }
  }
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kConfig, "override '" + o + "' is not key=value");
    }
    apply_config_value(cfg, trim(std::string_view(o).substr(0, eq)),
                       std::string_view(o).substr(eq + 1));
  }
}

RunConfig default_run_config() {
  RunConfig cfg;
  for (const auto& h : handlers()) h.set(cfg, h.key.default_value);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
  RunConfig cfg = default_run_config();
  if (!path.empty()) apply_config_file(cfg, path);
  apply_overrides(cfg, overrides);
  return cfg;
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& h : handlers()) out += h.key.name + " = " + h.get(cfg) + "\n";
  return out;
}

}  // namespace spen
