#include "spen/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace spen {

OptimizerConfig infnet_optimizer_config(const TrainConfig& cfg) {
  OptimizerConfig o;
  o.kind = cfg.infnet_optimizer.value_or(cfg.loss.ce_weight > 0.0 ? OptimizerKind::kSgdMomentum
                                                                  : OptimizerKind::kAdam);
  o.lr = cfg.infnet_lr.value_or(o.kind == OptimizerKind::kAdam ? kDefaultAdamLr : kDefaultSgdLr);
  o.momentum = cfg.momentum;
  o.beta1 = cfg.energy_optimizer.beta1;
  o.beta2 = cfg.energy_optimizer.beta2;
  o.eps = cfg.energy_optimizer.eps;
  return o;
}

void validate_config(const TrainConfig& cfg) {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::kConfig, msg); };
  if (cfg.k < 1) fail("k must be >= 1");
  if (cfg.batch_size < 1) fail("batch_size must be >= 1");
  if (cfg.max_epochs < 1) fail("epochs must be >= 1");
  if (!(cfg.keep_prob > 0.0 && cfg.keep_prob <= 1.0)) fail("keep_prob must be in (0, 1]");
  if (!(cfg.energy_optimizer.lr > 0.0)) fail("energy_lr must be > 0");
  if (cfg.infnet_lr && !(*cfg.infnet_lr > 0.0)) fail("infnet_lr must be > 0");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) fail("momentum must be in [0, 1)");
  if (cfg.loss.lambda < 0.0) fail("lambda must be >= 0");
  if (cfg.loss.ce_weight < 0.0) fail("ce_weight must be >= 0");
  if (cfg.model.global.gamma < 0.0) fail("gamma must be >= 0");
  if (cfg.model.embed_dim == 0 || cfg.model.hidden == 0 || cfg.model.infnet_hidden == 0) {
    fail("embed_dim, hidden and infnet_hidden must be > 0");
  }
  if (cfg.model.global.variant != GlobalEnergyVariant::kNone &&
      (cfg.model.tlm_hidden == 0 || cfg.model.tlm_label_embed == 0 ||
       (cfg.model.global.variant == GlobalEnergyVariant::kC && cfg.model.tlm_word_embed == 0))) {
    fail("tag language model sizes must be > 0");
  }
  if (cfg.loss.mode == TrainMode::kMarginRescaled &&
      cfg.model.parameterization != Parameterization::kSeparated) {
    fail("mode margin-rescaled needs parameterization=separated (the test network is "
         "initialized from the cost-augmented network)");
  }
}

double grad_norm_prefix(const ParamStore& store, std::string_view prefix) {
  double sq = 0.0;
  for (const auto& p : store.params()) {
    if (!p.name.starts_with(prefix)) continue;
    for (double g : p.grad) sq += g * g;
  }
  return std::sqrt(sq);
}

// ---------------------------------------------------------------- log

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json opt(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

}  // namespace

std::string TrajectoryLog::to_jsonl() const {
  std::string out;
  for (const auto& r : records) {
    ordered_json j;
    j["epoch"] = r.epoch;
    j["l0"] = opt(r.l0);
    j["l1"] = opt(r.l1);
    j["grad_norm_theta"] = r.grad_norm_theta;
    j["grad_norm_psi"] = r.grad_norm_psi;
    j["dev_metric"] = r.dev_metric;
    j["examples_per_sec"] = r.examples_per_sec;
    j["wallclock_s"] = r.wallclock_s;
    if (r.grad_norm_tlm) j["grad_norm_tlm"] = *r.grad_norm_tlm;
    if (r.dev_gold_tlm_energy) j["dev_gold_tlm_energy"] = *r.dev_gold_tlm_energy;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void TrajectoryLog::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << to_jsonl();
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

// ---------------------------------------------------------------- training

namespace {

struct ModeLayout {
  GroupSet inference_groups;
  bool want_test = false;
  bool want_cost = false;
  bool has_energy_step = true;
};

ModeLayout layout_for(TrainMode mode) {
  switch (mode) {
    case TrainMode::kCompound:
      return {{Group::kCostAugmented, Group::kTestTime}, true, true, true};
    case TrainMode::kMarginRescaled:
      return {{Group::kCostAugmented}, false, true, true};
    case TrainMode::kPerceptron:
      return {{Group::kTestTime}, true, false, true};
    case TrainMode::kCrossEntropy:
      return {{Group::kTestTime}, true, false, false};
  }
  return {};
}

void check_finite(double v, const char* what, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::kDivergence, std::string("non-finite ") + what + " at epoch " +
                                            std::to_string(epoch) + ", batch " +
                                            std::to_string(batch));
  }
}

struct CachedFeatures {
  Shape shape;
  std::vector<double> values;
};

CachedFeatures cache_features(Model& model, const Example& ex, const Dropout& dropout) {
  Tape tape(&model.store, GroupSet::none());
  Tensor f = energy_features(tape, ex.tokens, model.energy, dropout);
  auto v = f.values();
  return {f.shape(), std::vector<double>(v.begin(), v.end())};
}

double probe_psi_norm(Model& model, std::span<const Example> probe) {
  const GroupSet psi{Group::kTestTime};
  Tape tape(&model.store, psi);
  std::optional<Tensor> total;
  for (const auto& ex : probe) {
    Tensor a = infer(tape, ex.tokens, model.nets);
    Tensor f = energy_features(tape, ex.tokens, model.energy);
    Tensor e = total_energy(f, a, ex.tokens, model.energy);
    total = total ? *total + e : e;
  }
  if (!total) return 0.0;
  backward(*total, model.store, psi);
  return model.store.grad_norm(psi);
}

std::vector<std::vector<double>> group_values(const ParamStore& store, Group g) {
  std::vector<std::vector<double>> out;
  for (const auto& p : store.params()) {
    if (p.group == g) out.push_back(p.value);
  }
  return out;
}

void restore_group_values(ParamStore& store, Group g,
                          const std::vector<std::vector<double>>& values) {
  std::size_t i = 0;
  for (auto& p : store.params()) {
    if (p.group == g) p.value = values.at(i++);
  }
}

}  // namespace

TrainResult train(const Dataset& train_data, const Dataset& dev_data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  validate_config(cfg);
  Rng init(cfg.seed);
  Model model = build_model(cfg.model, train_data.vocab, train_data.labels, init);
  return train_model(std::move(model), train_data, dev_data, cfg, on_epoch);
}

TrainResult train_model(Model model, const Dataset& train_data, const Dataset& dev_data,
                        const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate_config(cfg);
  if (train_data.size() == 0 || dev_data.size() == 0) {
    throw Error(ErrorKind::kState, "training and dev sets must be nonempty");
  }
  if (!(train_data.labels == model.labels) || !(dev_data.labels == model.labels)) {
    throw Error(ErrorKind::kState, "datasets and model disagree on the label set");
  }
  if (cfg.dev_metric == DevMetric::kSpanF1 && model.labels.scheme() != LabelScheme::kBioes) {
    throw Error(ErrorKind::kConfig, "dev_metric span-f1 needs BIOES labels; '" +
                                        model.labels.first_non_bioes() + "' is not");
  }

  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();
  Rng root(cfg.seed ^ 0x5bd1e995ull);
  Rng batch_rng = root.fork();
  Rng energy_drop_rng = root.fork();
  Rng infnet_drop_rng = root.fork();
  Rng finetune_rng = root.fork();
  const Dropout energy_dropout{&energy_drop_rng, cfg.keep_prob};
  const Dropout infnet_dropout{&infnet_drop_rng, cfg.keep_prob};

  const ModeLayout layout = layout_for(cfg.loss.mode);
  const GroupSet theta{Group::kEnergy};
  const OptimizerConfig inf_opt = infnet_optimizer_config(cfg);
  const bool global = cfg.model.global.variant != GlobalEnergyVariant::kNone;
  const NetChoice dev_net =
      cfg.loss.mode == TrainMode::kMarginRescaled ? NetChoice::kCost : NetChoice::kTest;
  const std::span<const Example> probe(
      train_data.examples.data(), std::min(cfg.probe_size, train_data.examples.size()));

  TrainResult result;
  ParamStore best_store = model.store;
  double best_dev = -1.0;
  std::size_t best_epoch = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t_epoch = clock::now();
    const auto batches = make_batches(train_data, cfg.batch_size, batch_rng);
    double l0_sum = 0.0;
    double l1_sum = 0.0;
    std::size_t diag_count = 0;
    double theta_norm_sum = 0.0;
    double tlm_norm_sum = 0.0;
    std::size_t e_steps = 0;

    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b];
      std::vector<CachedFeatures> features;
      if (layout.has_energy_step || layout.want_cost) {
        features.reserve(batch.size());
        for (auto i : batch) {
          features.push_back(cache_features(model, train_data.examples[i], energy_dropout));
        }
      }

      for (std::size_t step = 0; step < cfg.k; ++step) {
        Tape tape(&model.store, layout.inference_groups);
        std::vector<LossItem> items;
        items.reserve(batch.size());
        for (std::size_t n = 0; n < batch.size(); ++n) {
          const Example& ex = train_data.examples[batch[n]];
          auto outs = run_inference_nets(tape, ex.tokens, ex.gold, model.nets, layout.want_test,
                                         layout.want_cost, infnet_dropout);
          EnergyContext ctx{&model.energy, {}, ex.tokens};
          if (!features.empty()) {
            ctx.features = tape.constant(features[n].shape, features[n].values);
          }
          items.emplace_back(ctx, ex.gold, outs.cost, outs.test);
        }
        Tensor objective = inference_step_loss(items, cfg.loss);
        check_finite(objective.value(), "inference-step objective", epoch, b);
        backward(-objective, model.store, layout.inference_groups);
        check_finite(model.store.grad_norm(layout.inference_groups), "inference-step gradient",
                     epoch, b);
        optimizer_step(model.store, layout.inference_groups, inf_opt);
      }

      if (!layout.has_energy_step) continue;
      Tape tape(&model.store, theta);
      std::vector<LossItem> items;
      items.reserve(batch.size());
      for (auto i : batch) {
        const Example& ex = train_data.examples[i];
        auto outs = run_inference_nets(tape, ex.tokens, ex.gold, model.nets, layout.want_test,
                                       layout.want_cost, infnet_dropout);
        EnergyContext ctx{&model.energy,
                          energy_features(tape, ex.tokens, model.energy, energy_dropout),
                          ex.tokens};
        items.emplace_back(ctx, ex.gold, outs.cost, outs.test);
      }
      Tensor loss = energy_step_loss(items, cfg.loss);
      check_finite(loss.value(), "energy-step loss", epoch, b);
      if (layout.want_cost) {
        Diagnostics d = diagnostics(items);
        l0_sum += d.l0 * static_cast<double>(items.size());
        l1_sum += d.l1 * static_cast<double>(items.size());
        diag_count += items.size();
      }
      backward(loss, model.store, theta);
      const double norm = model.store.grad_norm(theta);
      check_finite(norm, "energy-step gradient", epoch, b);
      theta_norm_sum += norm;
      if (global) tlm_norm_sum += grad_norm_prefix(model.store, "energy/tlm_");
      ++e_steps;
      optimizer_step(model.store, theta, cfg.energy_optimizer);
    }

    const double epoch_seconds =
        std::chrono::duration<double>(clock::now() - t_epoch).count();
    EpochRecord rec;
    rec.epoch = epoch;
    if (diag_count > 0) {
      rec.l0 = l0_sum / static_cast<double>(diag_count);
      rec.l1 = l1_sum / static_cast<double>(diag_count);
    }
    if (e_steps > 0) rec.grad_norm_theta = theta_norm_sum / static_cast<double>(e_steps);
    rec.grad_norm_psi = probe_psi_norm(model, probe);
    rec.dev_metric = dev_score(model, dev_data, cfg.dev_metric, dev_net);
    if (global) {
      rec.grad_norm_tlm = e_steps > 0 ? tlm_norm_sum / static_cast<double>(e_steps) : 0.0;
      rec.dev_gold_tlm_energy = mean_gold_tlm_energy(model, dev_data);
    }
    if (cfg.log_timing) {
      rec.examples_per_sec =
          epoch_seconds > 0.0 ? static_cast<double>(train_data.size()) / epoch_seconds : 0.0;
      rec.wallclock_s = std::chrono::duration<double>(clock::now() - t_start).count();
    }
    result.log.records.push_back(rec);
    if (on_epoch) on_epoch(rec);
    result.epochs_run = epoch;

    if (rec.dev_metric > best_dev) {
      best_dev = rec.dev_metric;
      best_epoch = epoch;
      best_store = model.store;
    } else if (epoch - best_epoch >= cfg.patience) {
      break;
    }
  }

  model.store = std::move(best_store);
  if (cfg.loss.mode == TrainMode::kMarginRescaled) {
    fine_tune_test_net(model, train_data, cfg, cfg.finetune_epochs, finetune_rng, &dev_data);
  }
  result.model = std::move(model);
  result.best_epoch = best_epoch;
  result.best_dev = best_dev;
  return result;
}

FineTuneResult fine_tune_test_net(Model& model, const Dataset& train_data,
                                  const TrainConfig& cfg, std::size_t epochs, Rng& rng,
                                  const Dataset* dev) {
  if (model.nets.kind != Parameterization::kSeparated) {
    throw Error(ErrorKind::kShape,
                std::string("fine-tuning copies the cost network into the test network; "
                            "parameterization ") +
                    parameterization_name(model.nets.kind) + " has different architectures");
  }
  const GroupSet psi{Group::kTestTime};
  model.store.copy_values("cost/", "test/");
  reset_optimizer_state(model.store, psi);

  FineTuneResult result;
  if (epochs == 0) return result;
  if (dev) result.best_dev = dev_score(model, *dev, cfg.dev_metric, NetChoice::kTest);
  auto best_values = group_values(model.store, Group::kTestTime);

  const OptimizerConfig opt = infnet_optimizer_config(cfg);
  const Dropout dropout{&rng, cfg.keep_prob};
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const auto batches = make_batches(train_data, cfg.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Tape tape(&model.store, psi);
      std::optional<Tensor> loss;
      for (auto i : batches[b]) {
        const Example& ex = train_data.examples[i];
        Tensor a = infer(tape, ex.tokens, model.nets, dropout);
        Tensor term =
            total_energy(energy_features(tape, ex.tokens, model.energy), a, ex.tokens,
                         model.energy);
        if (cfg.loss.ce_weight > 0.0) {
          term = term + scale(local_ce(a, ex.gold), cfg.loss.ce_weight);
        }
        loss = loss ? *loss + term : term;
      }
      check_finite(loss->value(), "fine-tuning loss", epoch, b);
      backward(*loss, model.store, psi);
      optimizer_step(model.store, psi, opt);
    }
    if (dev) {
      const double score = dev_score(model, *dev, cfg.dev_metric, NetChoice::kTest);
      if (score > result.best_dev) {
        result.best_dev = score;
        result.best_epoch = epoch;
        best_values = group_values(model.store, Group::kTestTime);
      }
    }
  }
  if (dev) {
    restore_group_values(model.store, Group::kTestTime, best_values);
  } else {
    result.best_epoch = epochs;
  }
  return result;
}

}  // namespace spen
