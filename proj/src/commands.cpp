#include "spen/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include <json.hpp>

namespace spen {

using ordered_json = nlohmann::ordered_json;

int exit_code_for(const Error& e) {
  return e.kind() == ErrorKind::kDivergence ? kExitDivergence : kExitError;
}

// ---------------------------------------------------------------- corpora

Dataset synthetic_corpus(const RunConfig& cfg) {
  SynthSpec spec = standard_synth_spec(cfg.synth_labels, cfg.synth_vocab, cfg.synth_min_len,
                                       cfg.synth_max_len, cfg.train.seed);
  return gen_synthetic(spec, cfg.synth_train + cfg.synth_dev + cfg.synth_test);
}

namespace {

std::vector<Sentence> read_sentences(const std::string& path, const RunConfig& cfg,
                                     std::size_t& repairs) {
  auto sentences = read_conll(path, cfg.conll);
  if (cfg.bioes) {
    for (auto& s : sentences) {
      auto conv = to_bioes(s.labels);
      s.labels = std::move(conv.labels);
      repairs += conv.repairs;
    }
  }
  return sentences;
}

}  // namespace

Corpora load_corpora(const RunConfig& cfg) {
  Corpora c;
  if (cfg.train_path.empty()) {
    if (!cfg.dev_path.empty() || !cfg.test_path.empty()) {
      throw Error(ErrorKind::kConfig, "dev_path/test_path need train_path");
    }
    Dataset all = synthetic_corpus(cfg);
    const std::size_t sizes[] = {cfg.synth_train, cfg.synth_dev, cfg.synth_test};
    auto parts = split_dataset(all, sizes);
    c.train = std::move(parts[0]);
    c.dev = std::move(parts[1]);
    if (cfg.synth_test > 0) c.test = std::move(parts[2]);
    return c;
  }
  if (cfg.dev_path.empty()) throw Error(ErrorKind::kConfig, "train_path needs dev_path");

  std::size_t repairs = 0;
  auto train = read_sentences(cfg.train_path, cfg, repairs);
  auto dev = read_sentences(cfg.dev_path, cfg, repairs);
  std::vector<Sentence> test;
  if (!cfg.test_path.empty()) test = read_sentences(cfg.test_path, cfg, repairs);

  Vocabulary vocab;
  LabelSet labels;
  for (const auto& s : train) {
    for (const auto& w : s.words) vocab.add(w);
  }
  for (const auto* part : {&train, &dev, &test}) {
    for (const auto& s : *part) {
      for (const auto& l : s.labels) labels.add(l);
    }
  }
  c.train = encode_sentences(train, vocab, labels);
  c.dev = encode_sentences(dev, vocab, labels);
  if (!cfg.test_path.empty()) c.test = encode_sentences(test, vocab, labels);
  c.train.validate();
  c.dev.validate();
  return c;
}

// ---------------------------------------------------------------- train

namespace {

ordered_json metrics_object(const Metrics& m) {
  auto opt = [](const std::optional<double>& v) {
    return v ? ordered_json(round2(*v)) : ordered_json(nullptr);
  };
  ordered_json j;
  j["accuracy"] = round2(m.accuracy);
  j["precision"] = opt(m.precision);
  j["recall"] = opt(m.recall);
  j["f1"] = opt(m.f1);
  j["n_tokens"] = m.n_tokens;
  j["n_spans_gold"] = m.n_spans_gold;
  j["n_spans_pred"] = m.n_spans_pred;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

}  // namespace

TrainSummary run_train(const RunConfig& cfg, std::ostream* progress) {
  validate_config(cfg.train);
  Corpora data = load_corpora(cfg);
  Rng init(cfg.train.seed);
  Model model = build_model(cfg.train.model, data.train.vocab, data.train.labels, init);
  if (!cfg.embeddings_path.empty()) {
    EmbeddingTable table = load_embeddings(cfg.embeddings_path, model.vocab,
                                           cfg.train.model.embed_dim, cfg.train.seed);
    set_word_embeddings(model, table);
    if (progress) *progress << "embeddings: coverage " << table.coverage << "\n";
  }

  EpochCallback cb;
  if (progress) {
    cb = [progress](const EpochRecord& r) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %zu  dev %.2f  l0 %s  grad_theta %.4g  grad_psi %.4g",
                    r.epoch, r.dev_metric, r.l0 ? std::to_string(*r.l0).c_str() : "-",
                    r.grad_norm_theta, r.grad_norm_psi);
      *progress << buf << "\n" << std::flush;
    };
  }

  TrainSummary s;
  s.result = train_model(std::move(model), data.train, data.dev, cfg.train, cb);
  Model& trained = s.result.model;
  s.dev = evaluate(trained, data.dev);
  if (data.test) s.test = evaluate(trained, *data.test);
  const TrainMode mode = cfg.train.loss.mode;
  if (mode == TrainMode::kCompound || mode == TrainMode::kMarginRescaled) {
    s.disagreement = compare_nets(trained, data.dev);
    s.accuracy_gap = std::abs(s.dev.accuracy - evaluate(trained, data.dev, NetChoice::kCost).accuracy);
  }

  ordered_json j;
  j["mode"] = mode_name(mode);
  j["parameterization"] = parameterization_name(cfg.train.model.parameterization);
  j["best_epoch"] = s.result.best_epoch;
  j["epochs_run"] = s.result.epochs_run;
  j["dev"] = metrics_object(s.dev);
  j["test"] = s.test ? metrics_object(*s.test) : ordered_json(nullptr);
  if (s.disagreement) {
    j["disagreement"] = {{"rate", round2(s.disagreement->rate())},
                         {"test_correct_rate", round2(s.disagreement->test_correct_rate())},
                         {"accuracy_gap", round2(*s.accuracy_gap)}};
  }
  s.metrics_json = j.dump(2) + "\n";

  save_model(trained, cfg.model_out);
  s.result.log.write(cfg.log_out);
  write_text(cfg.metrics_out, s.metrics_json);
  return s;
}

// ---------------------------------------------------------------- evaluate / predict

Dataset load_for_model(const Model& model, const std::filesystem::path& path,
                       const ConllOptions& opts, bool bioes, bool with_labels) {
  auto sentences = read_conll(path, opts);
  Dataset d;
  d.vocab = model.vocab;
  d.labels = model.labels;
  for (auto& s : sentences) {
    Example e;
    for (const auto& w : s.words) e.tokens.push_back(model.vocab.lookup(w));
    if (with_labels) {
      if (bioes) s.labels = to_bioes(s.labels).labels;
      for (const auto& l : s.labels) {
        if (!model.labels.contains(l)) {
          throw Error(ErrorKind::kFormat,
                      path.string() + ": label '" + l + "' is not in the model's label set");
        }
        e.gold.push_back(model.labels.index(l));
      }
    } else {
      e.gold.assign(e.tokens.size(), 0);
    }
    d.examples.push_back(std::move(e));
  }
  return d;
}

Metrics run_evaluate(const std::filesystem::path& model_path,
                     const std::filesystem::path& data_path, EvalMetric metric,
                     const ConllOptions& opts, bool bioes) {
  Model model = load_model(model_path);
  if (metric == EvalMetric::kSpanF1) {
    for (const auto& s : read_conll(data_path, opts)) {
      const auto labels = bioes ? to_bioes(s.labels).labels : s.labels;
      for (const auto& l : labels) {
        LabelSet one;
        one.add(l);
        if (one.scheme() != LabelScheme::kBioes) {
          throw Error(ErrorKind::kFormat,
                      "span-f1 needs BIOES labels; '" + l + "' in " + data_path.string() +
                          " is not");
        }
      }
    }
    if (model.labels.scheme() != LabelScheme::kBioes) {
      throw Error(ErrorKind::kFormat, "span-f1 needs BIOES labels; model label '" +
                                          model.labels.first_non_bioes() + "' is not");
    }
  }
  Dataset data = load_for_model(model, data_path, opts, bioes, true);
  return evaluate(model, data);
}

void run_predict(const std::filesystem::path& model_path, const std::filesystem::path& data_path,
                 const std::filesystem::path& out_path, const ConllOptions& opts) {
  Model model = load_model(model_path);
  auto sentences = read_conll(data_path, opts);
  Dataset data = load_for_model(model, data_path, opts, false, false);
  LabelSeqs pred = predict_labels(model, data);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    sentences[i].labels.clear();
    for (auto l : pred[i]) sentences[i].labels.push_back(model.labels.name(l));
  }
  write_conll(out_path, sentences);
}

void run_gen_synth(const RunConfig& cfg, std::size_t count, const std::filesystem::path& out) {
  SynthSpec spec = standard_synth_spec(cfg.synth_labels, cfg.synth_vocab, cfg.synth_min_len,
                                       cfg.synth_max_len, cfg.train.seed);
  write_conll(out, decode_dataset(gen_synthetic(spec, count)));
}

// ---------------------------------------------------------------- gradcheck

namespace {

constexpr std::size_t kCheckLabels = 3;
constexpr std::size_t kCheckDim = 4;
constexpr std::size_t kCheckEmbed = 3;

struct CheckFixture {
  Dataset data;  // 2 sentences, length 2..4
  Rng rng;

  explicit CheckFixture(std::uint64_t seed) : rng(seed) {
    SynthSpec spec = standard_synth_spec(kCheckLabels, 6, 2, 4, seed);
    data = gen_synthetic(spec, 2);
  }
  std::size_t vocab() const { return data.vocab.size(); }
  const Example& ex(std::size_t i) const { return data.examples[i]; }

  std::vector<double> random(std::size_t n, double r = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-r, r);
    return v;
  }
  // Relaxed output probe: softmax of free logits in the test-time group.
  std::string add_probe(ParamStore& s, std::size_t T, const std::string& name = "test/y") {
    s.add(name, Group::kTestTime, Shape::matrix(T, kCheckLabels), random(T * kCheckLabels, 2.0));
    return name;
  }
  Tensor weights(Tape& tape, Tensor like) {
    return tape.constant(like.shape(), random(like.shape().size()));
  }
};

GlobalEnergy add_check_global(ParamStore& s, GlobalEnergyVariant v, std::size_t vocab,
                              Rng& rng) {
  return add_global_energy(s, {v, 0.5}, kCheckLabels, vocab, kCheckEmbed, kCheckEmbed,
                           kCheckDim, rng);
}

}  // namespace

std::vector<ComponentCheck> run_gradcheck(std::uint64_t seed, double eps, double tol) {
  std::vector<ComponentCheck> out;
  CheckFixture fx(seed);
  const Example& e0 = fx.ex(0);
  const std::size_t T = e0.length();
  auto check = [&](std::string name, ParamStore& store, const ScalarFn& f,
                   GroupSet groups = GroupSet::all()) {
    out.push_back({std::move(name), grad_check(f, store, eps, tol, groups)});
  };

  {  // chain energy w.r.t. Theta and y
    ParamStore s;
    auto chain = add_chain_energy(s, fx.vocab(), kCheckEmbed, kCheckDim, kCheckLabels, fx.rng);
    auto y = fx.add_probe(s, T);
    check("chain-energy", s, [&](Tape& t) {
      return chain_energy(encode(t, e0.tokens, chain.encoder), row_softmax(t.param(y)), chain);
    });
  }
  for (bool words : {false, true}) {
    for (auto dir : {TlmDirection::kForward, TlmDirection::kBackward}) {
      ParamStore s;
      auto tlm = add_tlm(s, "energy/tlm", kCheckLabels, kCheckEmbed, kCheckDim, fx.rng,
                         words ? fx.vocab() : 0, words ? kCheckEmbed : 0);
      auto y = fx.add_probe(s, T);
      std::string name = std::string(words ? "tlm-word-" : "tlm-") +
                         (dir == TlmDirection::kForward ? "forward" : "backward");
      check(name, s, [&](Tape& t) {
        std::span<const std::size_t> w;
        if (words) w = e0.tokens;
        return tlm_energy(row_softmax(t.param(y)), tlm, dir, w);
      });
    }
  }
  for (auto v : {GlobalEnergyVariant::kA, GlobalEnergyVariant::kB, GlobalEnergyVariant::kC}) {
    ParamStore s;
    EnergyModel em;
    em.chain = add_chain_energy(s, fx.vocab(), kCheckEmbed, kCheckDim, kCheckLabels, fx.rng);
    em.global = add_check_global(s, v, fx.vocab(), fx.rng);
    auto y = fx.add_probe(s, T);
    check(std::string("total-energy-") + variant_name(v), s, [&](Tape& t) {
      Tensor f = energy_features(t, e0.tokens, em);
      return total_energy(f, row_softmax(t.param(y)), e0.tokens, em);
    });
  }
  for (auto kind : {Parameterization::kSeparated, Parameterization::kShared,
                    Parameterization::kStacked}) {
    ParamStore s;
    auto nets = add_inference_nets(s, kind, fx.vocab(), kCheckEmbed, kCheckDim, kCheckLabels,
                                   fx.rng);
    auto wa = fx.random(T * kCheckLabels);
    auto wf = fx.random(T * kCheckLabels);
    const Shape shape = Shape::matrix(T, kCheckLabels);
    const std::string base = std::string("infnet-") + parameterization_name(kind);
    check(base + "-test", s, [&](Tape& t) {
      return sum(infer(t, e0.tokens, nets) * t.constant(shape, wa));
    });
    // The stacked cost network treats A as a constant, so only Phi is checked.
    const GroupSet cost_groups = kind == Parameterization::kStacked
                                     ? GroupSet{Group::kCostAugmented}
                                     : GroupSet::all();
    check(base + "-cost", s, [&](Tape& t) {
      return sum(cost_augmented_infer(t, e0.tokens, e0.gold, nets) * t.constant(shape, wf));
    }, cost_groups);
  }

  // Objectives on a two-sentence minibatch with a GE-b energy.
  for (auto kind : {Parameterization::kSeparated, Parameterization::kShared,
                    Parameterization::kStacked}) {
    ParamStore s;
    EnergyModel em;
    em.chain = add_chain_energy(s, fx.vocab(), kCheckEmbed, kCheckDim, kCheckLabels, fx.rng);
    em.global = add_check_global(s, GlobalEnergyVariant::kB, fx.vocab(), fx.rng);
    auto nets = add_inference_nets(s, kind, fx.vocab(), kCheckEmbed, kCheckDim, kCheckLabels,
                                   fx.rng);
    auto items_for = [&](Tape& t) {
      std::vector<LossItem> items;
      for (const auto& ex : fx.data.examples) {
        auto outs = run_inference_nets(t, ex.tokens, ex.gold, nets, true, true);
        EnergyContext ctx{&em, energy_features(t, ex.tokens, em), ex.tokens};
        items.emplace_back(ctx, ex.gold, outs.cost, outs.test);
      }
      return items;
    };
    const std::string p = parameterization_name(kind);
    const GroupSet theta{Group::kEnergy};
    const GroupSet phi{Group::kCostAugmented};
    const GroupSet psi{Group::kTestTime};

    if (kind == Parameterization::kSeparated) {
      check("margin-rescaled-loss", s, [&](Tape& t) {
        auto items = items_for(t);
        Tensor total = t.scalar(0.0);
        for (std::size_t i = 0; i < items.size(); ++i) {
          EnergyContext ctx{&em, energy_features(t, fx.ex(i).tokens, em), fx.ex(i).tokens};
          total = total +
                  margin_rescaled_loss(ctx, items[i].gold(), items[i].cost_output(), false);
        }
        return total;
      }, {Group::kEnergy, Group::kCostAugmented});
      check("perceptron-loss", s, [&](Tape& t) {
        auto items = items_for(t);
        Tensor total = t.scalar(0.0);
        for (std::size_t i = 0; i < items.size(); ++i) {
          EnergyContext ctx{&em, energy_features(t, fx.ex(i).tokens, em), fx.ex(i).tokens};
          total = total + perceptron_loss(ctx, items[i].gold(), items[i].test_output(), false);
        }
        return total;
      }, {Group::kEnergy, Group::kTestTime});
      check("local-ce", s, [&](Tape& t) {
        return local_ce(infer(t, e0.tokens, nets), e0.gold);
      }, psi);
    }

    LossConfig untruncated{TrainMode::kCompound, 1.0, 1.0, false, false};
    check("compound-energy-step-" + p, s, [&](Tape& t) {
      auto items = items_for(t);
      return energy_step_loss(items, untruncated);
    }, theta);
    check("compound-inference-step-" + p, s, [&](Tape& t) {
      auto items = items_for(t);
      return inference_step_loss(items, untruncated);
    }, kind == Parameterization::kStacked ? phi : GroupSet{Group::kCostAugmented,
                                                           Group::kTestTime});
    if (kind == Parameterization::kStacked) {
      // With F blocked at A, Psi sees only the lambda and CE terms on A.
      check("compound-inference-step-stacked-psi", s, [&](Tape& t) {
        std::vector<LossItem> items;
        for (const auto& ex : fx.data.examples) {
          auto outs = run_inference_nets(t, ex.tokens, ex.gold, nets, true, false);
          EnergyContext ctx{&em, energy_features(t, ex.tokens, em), ex.tokens};
          items.emplace_back(ctx, ex.gold, std::nullopt, outs.test);
        }
        LossConfig perceptron_part = untruncated;
        perceptron_part.mode = TrainMode::kPerceptron;
        return inference_step_loss(items, perceptron_part);
      }, psi);
    }
  }
  return out;
}

}  // namespace spen
