#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "spen/commands.hpp"

namespace py = pybind11;
using namespace spen;

namespace {

RunConfig config_from(const py::dict& overrides) {
  std::vector<std::string> args;
  for (auto item : overrides) {
    std::string value = py::str(item.second);
    if (py::isinstance<py::bool_>(item.second)) value = item.second.cast<bool>() ? "true" : "false";
    args.push_back(py::str(item.first).cast<std::string>() + "=" + value);
  }
  return load_run_config("", args);
}

py::dict scores_dict(const Metrics& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["precision"] = m.precision ? py::cast(*m.precision) : py::none();
  d["recall"] = m.recall ? py::cast(*m.recall) : py::none();
  d["f1"] = m.f1 ? py::cast(*m.f1) : py::none();
  d["n_tokens"] = m.n_tokens;
  return d;
}

class PyModel {
 public:
  explicit PyModel(const std::filesystem::path& path) : model_(load_model(path)) {}

  std::vector<std::vector<std::string>> predict(
      const std::vector<std::vector<std::string>>& sentences) {
    std::vector<Sentence> s;
    for (const auto& words : sentences) {
      s.push_back({words, std::vector<std::string>(words.size(), model_.labels.name(0))});
    }
    Dataset d = encode_sentences(s, model_.vocab, model_.labels);
    return label_names(model_.labels, predict_labels(model_, d));
  }

  std::vector<std::string> labels() const { return model_.labels.names(); }
  std::size_t vocab_size() const { return model_.vocab.size(); }
  std::string parameterization() const {
    return parameterization_name(model_.config.parameterization);
  }
  py::dict param_counts() const {
    auto c = count_params(model_.nets, model_.energy);
    py::dict d;
    d["trained"] = c.trained;
    d["inference"] = c.inference;
    return d;
  }

 private:
  Model model_;
};

}  // namespace

PYBIND11_MODULE(_spen, m) {
  m.doc() = "Energy networks with jointly trained inference networks for sequence labeling";

  py::register_exception<Error>(m, "SpenError");

  m.def(
      "train",
      [](const py::dict& overrides) {
        RunConfig cfg = config_from(overrides);
        py::gil_scoped_release release;
        return run_train(cfg).metrics_json;
      },
      py::arg("overrides") = py::dict(),
      "Train with key=value overrides; writes model, log and metrics. Returns metrics JSON.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& model, const std::filesystem::path& data,
         const std::string& metric, bool bioes) {
        EvalMetric which = metric == "span-f1" ? EvalMetric::kSpanF1 : EvalMetric::kAccuracy;
        return scores_dict(run_evaluate(model, data, which, {}, bioes));
      },
      py::arg("model"), py::arg("data"), py::arg("metric") = "accuracy", py::arg("bioes") = false);

  m.def(
      "predict",
      [](const std::filesystem::path& model, const std::filesystem::path& data,
         const std::filesystem::path& out) { run_predict(model, data, out); },
      py::arg("model"), py::arg("data"), py::arg("out"));

  m.def(
      "gen_synth",
      [](const std::filesystem::path& out, std::size_t count, const py::dict& overrides) {
        RunConfig cfg = config_from(overrides);
        run_gen_synth(cfg, count, out);
      },
      py::arg("out"), py::arg("count"), py::arg("overrides") = py::dict());

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        std::vector<std::tuple<std::string, double, bool>> out;
        for (const auto& c : run_gradcheck(seed)) {
          out.emplace_back(c.name, c.report.max_error, c.report.pass);
        }
        return out;
      },
      py::arg("seed") = 0, "Finite-difference checks: (component, max error, passed) tuples.");

  m.def(
      "span_f1",
      [](const LabelStrings& pred, const LabelStrings& gold) {
        auto s = span_f1(pred, gold);
        py::dict d;
        d["precision"] = s.precision;
        d["recall"] = s.recall;
        d["f1"] = s.f1;
        d["n_gold"] = s.n_gold;
        d["n_pred"] = s.n_pred;
        d["n_correct"] = s.n_correct;
        return d;
      },
      py::arg("pred"), py::arg("gold"));

  m.def("extract_spans", [](const std::vector<std::string>& labels) {
    std::vector<std::tuple<std::size_t, std::size_t, std::string>> out;
    for (const auto& s : extract_spans(labels)) out.emplace_back(s.start, s.end, s.type);
    return out;
  });

  m.def("config_keys", [] {
    std::vector<std::tuple<std::string, std::string, std::string>> out;
    for (const auto& k : config_keys()) out.emplace_back(k.name, k.default_value, k.help);
    return out;
  });

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::filesystem::path&>(), py::arg("path"))
      .def("predict", &PyModel::predict, py::arg("sentences"))
      .def_property_readonly("labels", &PyModel::labels)
      .def_property_readonly("vocab_size", &PyModel::vocab_size)
      .def_property_readonly("parameterization", &PyModel::parameterization)
      .def("param_counts", &PyModel::param_counts);
}
