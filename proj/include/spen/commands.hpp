#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spen/config.hpp"
#include "spen/grad_check.hpp"

namespace spen {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitDivergence = 2;
inline constexpr int kExitGradCheck = 3;

int exit_code_for(const Error& e);

struct Corpora {
  Dataset train;
  Dataset dev;
  std::optional<Dataset> test;
};

// Files when train_path is set (vocabulary from train, labels from all
// splits), otherwise the synthetic corpus split into train/dev/test.
Corpora load_corpora(const RunConfig& cfg);

Dataset synthetic_corpus(const RunConfig& cfg);

struct TrainSummary {
  TrainResult result;
  Metrics dev;
  std::optional<Metrics> test;
  std::optional<DisagreementReport> disagreement;  // dev set, when a cost network was trained
  std::optional<double> accuracy_gap;              // |acc(A) - acc(F)| on dev
  std::string metrics_json;
};

// Trains, then writes model_out (+ sidecar), log_out and metrics_out.
// Progress lines go to `progress` when given.
TrainSummary run_train(const RunConfig& cfg, std::ostream* progress = nullptr);

// Reads sentences and encodes them against the model's vocabulary.
Dataset load_for_model(const Model& model, const std::filesystem::path& path,
                       const ConllOptions& opts, bool bioes, bool with_labels);

enum class EvalMetric { kAccuracy, kSpanF1 };

Metrics run_evaluate(const std::filesystem::path& model_path,
                     const std::filesystem::path& data_path, EvalMetric metric,
                     const ConllOptions& opts = {}, bool bioes = false);

void run_predict(const std::filesystem::path& model_path, const std::filesystem::path& data_path,
                 const std::filesystem::path& out_path, const ConllOptions& opts = {});

// Writes `count` synthetic sentences (synth_* keys and seed) as CoNLL.
void run_gen_synth(const RunConfig& cfg, std::size_t count, const std::filesystem::path& out);

struct ComponentCheck {
  std::string name;
  GradCheckReport report;
};

inline constexpr double kGradCheckEps = 1e-5;
inline constexpr double kGradCheckTol = 1e-4;

// Finite-difference checks of every energy, inference-network output and
// objective on tiny models (hidden 4, T <= 4).
std::vector<ComponentCheck> run_gradcheck(std::uint64_t seed, double eps = kGradCheckEps,
                                          double tol = kGradCheckTol);

}  // namespace spen
