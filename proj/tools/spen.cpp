#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "spen/commands.hpp"

namespace {

using namespace spen;

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_config_args(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "Config file (key = value lines)");
  cmd->add_option("overrides", args.overrides, "key=value overrides");
}

ConllOptions conll_options(const RunConfig& cfg) { return cfg.conll; }

int train_cmd(const ConfigArgs& args, bool quiet) {
  RunConfig cfg = load_run_config(args.config_path, args.overrides);
  TrainSummary s = run_train(cfg, quiet ? nullptr : &std::cerr);
  std::cout << s.metrics_json;
  return kExitOk;
}

int gradcheck_cmd(const ConfigArgs& args, const std::string& fault) {
  RunConfig cfg = load_run_config(args.config_path, args.overrides);
  if (!fault.empty()) {
    auto op = op_from_name(fault);
    if (!op) throw Error(ErrorKind::kConfig, "unknown op '" + fault + "'");
    set_backward_fault(*op);
  }
  auto checks = run_gradcheck(cfg.train.seed);
  std::vector<std::string> failed;
  for (const auto& c : checks) {
    std::printf("%-40s max_rel_err %.3e  %s\n", c.name.c_str(), c.report.max_error,
                c.report.pass ? "ok" : "FAIL");
    if (!c.report.pass) failed.push_back(c.name);
  }
  if (failed.empty()) {
    std::printf("gradcheck passed: %zu components, tol %.0e\n", checks.size(), kGradCheckTol);
    return kExitOk;
  }
  std::string list;
  for (const auto& f : failed) list += (list.empty() ? "" : ", ") + f;
  std::fprintf(stderr, "gradcheck failed: %s\n", list.c_str());
  return kExitGradCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured prediction energy networks with inference networks"};
  app.require_subcommand(1);

  ConfigArgs train_args;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Train a model; writes model, log and metrics");
  add_config_args(train, train_args);
  train->add_flag("-q,--quiet", quiet, "No per-epoch progress on stderr");

  std::string model_path, data_path, out_path, metric = "accuracy";
  ConfigArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Score a model on a labeled CoNLL file");
  evaluate->add_option("-m,--model", model_path, "Model file")->required();
  evaluate->add_option("-d,--data", data_path, "CoNLL file")->required();
  evaluate->add_option("--metric", metric, "accuracy | span-f1")
      ->check(CLI::IsMember({"accuracy", "span-f1"}));
  add_config_args(evaluate, eval_args);

  ConfigArgs predict_args;
  auto* predict = app.add_subcommand("predict", "Write token<TAB>label predictions");
  predict->add_option("-m,--model", model_path, "Model file")->required();
  predict->add_option("-d,--data", data_path, "CoNLL file (labels optional)")->required();
  predict->add_option("-o,--out", out_path, "Output file")->required();
  add_config_args(predict, predict_args);

  ConfigArgs check_args;
  std::string fault;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_config_args(gradcheck, check_args);
  gradcheck->add_option("--inject-fault", fault, "Corrupt one backward rule (test fixture)")
      ->group("");

  ConfigArgs synth_args;
  std::size_t count = 0;
  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic CoNLL corpus");
  gen->add_option("-o,--out", out_path, "Output file")->required();
  gen->add_option("-n,--count", count,
                  "Sentences (default synth_train + synth_dev + synth_test)");
  add_config_args(gen, synth_args);

  auto* keys = app.add_subcommand("config-keys", "Print the config key reference (markdown)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return train_cmd(train_args, quiet);
    if (*evaluate) {
      RunConfig cfg = load_run_config(eval_args.config_path, eval_args.overrides);
      Metrics m = run_evaluate(model_path, data_path,
                               metric == "span-f1" ? EvalMetric::kSpanF1 : EvalMetric::kAccuracy,
                               conll_options(cfg), cfg.bioes);
      std::cout << metrics_json(m) << "\n";
      return kExitOk;
    }
    if (*predict) {
      RunConfig cfg = load_run_config(predict_args.config_path, predict_args.overrides);
      run_predict(model_path, data_path, out_path, conll_options(cfg));
      return kExitOk;
    }
    if (*gradcheck) return gradcheck_cmd(check_args, fault);
    if (*gen) {
      RunConfig cfg = load_run_config(synth_args.config_path, synth_args.overrides);
      if (count == 0) count = cfg.synth_train + cfg.synth_dev + cfg.synth_test;
      run_gen_synth(cfg, count, out_path);
      return kExitOk;
    }
    if (*keys) {
      std::cout << config_reference();
      return kExitOk;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
