#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spen/data.hpp"
#include "spen/trainer.hpp"

namespace spen {

// Everything a command needs: training settings, data sources and outputs.
// Parsed from flat "key = value" files plus command-line overrides.
struct RunConfig {
  TrainConfig train;

  std::string train_path;  // empty: synthetic corpus from the synth_* keys
  std::string dev_path;
  std::string test_path;
  std::string embeddings_path;
  ConllOptions conll;
  bool bioes = false;  // convert BIO labels to BIOES on load

  std::size_t synth_labels = 8;
  std::size_t synth_vocab = 50;
  std::size_t synth_train = 2000;
  std::size_t synth_dev = 500;
  std::size_t synth_test = 500;
  std::size_t synth_min_len = 5;
  std::size_t synth_max_len = 20;

  std::string model_out = "model.bin";
  std::string log_out = "train_log.jsonl";
  std::string metrics_out = "metrics.json";
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

// Every accepted key with its default, in documentation order.
const std::vector<ConfigKey>& config_keys();

// Markdown table of config_keys().
std::string config_reference();

// Applies one key; unknown keys and malformed values throw ErrorKind::kConfig
// naming the key.
void apply_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

// "key = value" lines; '#' starts a comment. Errors carry path:line.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

// "key=value" tokens.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

RunConfig default_run_config();
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides);

// Canonical "key = value" text for every key (round-trips through the parser).
std::string dump_config(const RunConfig& cfg);

}  // namespace spen
