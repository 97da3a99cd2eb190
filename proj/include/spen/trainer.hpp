#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spen/model.hpp"
#include "spen/objectives.hpp"
#include "spen/optim.hpp"

namespace spen {

struct TrainConfig {
  ModelConfig model;
  LossConfig loss;
  std::size_t k = 1;  // I steps per E step, on the same minibatch
  std::size_t max_epochs = 50;
  std::size_t batch_size = 32;
  std::size_t patience = 10;
  DevMetric dev_metric = DevMetric::kAccuracy;
  double keep_prob = 0.7;
  OptimizerConfig energy_optimizer{OptimizerKind::kAdam, 5e-4};
  // Unset: SGD with momentum when the CE term is on, Adam otherwise.
  std::optional<OptimizerKind> infnet_optimizer;
  std::optional<double> infnet_lr;
  double momentum = 0.9;
  std::size_t finetune_epochs = 10;  // margin-rescaled: test-net fine-tuning
  std::size_t probe_size = 100;      // examples used for grad_norm_psi
  bool log_timing = true;
  std::uint64_t seed = 0;
};

inline constexpr double kDefaultSgdLr = 0.005;
inline constexpr double kDefaultAdamLr = 5e-4;

OptimizerConfig infnet_optimizer_config(const TrainConfig& cfg);

// Throws ErrorKind::kConfig on inconsistent settings.
void validate_config(const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  std::optional<double> l0;  // absent when the mode has no cost-augmented net
  std::optional<double> l1;
  double grad_norm_theta = 0.0;  // mean over the epoch's E steps
  double grad_norm_psi = 0.0;    // |d sum E(x, A(x)) / d Psi| on the probe set
  double dev_metric = 0.0;
  double examples_per_sec = 0.0;
  double wallclock_s = 0.0;
  std::optional<double> grad_norm_tlm;        // global energy only
  std::optional<double> dev_gold_tlm_energy;  // global energy only
};

struct TrajectoryLog {
  std::vector<EpochRecord> records;

  std::string to_jsonl() const;
  void write(const std::filesystem::path& path) const;
};

struct TrainResult {
  Model model;  // best-dev snapshot (after fine-tuning in margin-rescaled mode)
  TrajectoryLog log;
  std::size_t best_epoch = 0;
  double best_dev = 0.0;
  std::size_t epochs_run = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const Dataset& train_data, const Dataset& dev_data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// Same as above, starting from an already built model.
TrainResult train_model(Model model, const Dataset& train_data, const Dataset& dev_data,
                        const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct FineTuneResult {
  std::size_t best_epoch = 0;  // 0: the copied cost network was kept
  double best_dev = 0.0;
};

// Psi <- Phi, then minimizes sum E(x, A(x)) (+ ce_weight * CE) over Psi with
// Theta and Phi frozen. With `dev`, keeps the best dev epoch (0 = the copy).
FineTuneResult fine_tune_test_net(Model& model, const Dataset& train_data,
                                  const TrainConfig& cfg, std::size_t epochs, Rng& rng,
                                  const Dataset* dev = nullptr);

// sqrt of the sum of squared gradient entries over names starting with prefix.
double grad_norm_prefix(const ParamStore& store, std::string_view prefix);

}  // namespace spen
