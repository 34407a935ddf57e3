#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "mmselect/cli.hpp"
#include "mmselect/curate.hpp"
#include "mmselect/error.hpp"
#include "mmselect/indicators.hpp"
#include "mmselect/numerics.hpp"
#include "mmselect/selector.hpp"
#include "mmselect/synth.hpp"

namespace py = pybind11;
using namespace mmselect;

namespace {

selector::SelectorModel make_selector(const std::string& kind, Index input_dim, int layers, Index d_model,
                                      std::uint64_t seed) {
  selector::SelectorShape shape;
  shape.kind = selector::parse_kind(kind);
  shape.input_dim = input_dim;
  shape.layers = layers;
  shape.d_model = d_model;
  return selector::init_selector(shape, seed);
}

py::dict train_selector(const selector::SelectorModel& model, const std::vector<Matrix>& sequences,
                        const std::vector<double>& labels, int epochs, double lr, std::uint64_t seed,
                        const std::string& optimizer) {
  if (sequences.size() != labels.size()) throw Error(Errc::DimensionMismatch, "one label per sequence");
  std::vector<selector::Sample> samples;
  for (std::size_t i = 0; i < sequences.size(); ++i) samples.push_back({sequences[i], labels[i]});
  selector::TrainConfig config;
  config.epochs = epochs;
  config.learning_rate = lr;
  config.seed = seed;
  config.optimizer = optimizer == "sgd" ? selector::Optimizer::GradientDescent : selector::Optimizer::Adam;
  auto result = selector::train(model, samples, config);
  py::dict out;
  out["model"] = std::move(result.model);
  out["losses"] = result.losses;
  out["final_loss"] = result.final_loss;
  return out;
}

py::dict curate_scored(const std::vector<std::string>& ids, const Matrix& image, const std::vector<double>& scores,
                       Index alpha, int clusters, std::uint64_t seed, bool clustering) {
  curate::CurationConfig config;
  config.alpha = alpha;
  config.clusters = clusters;
  config.seed = seed;
  config.clustering_enabled = clustering;
  const auto r = curate::curate_scored(ids, image, scores, config);
  py::dict out;
  out["selected"] = r.selected;
  out["labels"] = r.labels;
  out["cluster_sizes"] = r.cluster_sizes;
  out["quotas"] = r.quotas;
  out["per_cluster"] = r.per_cluster;
  return out;
}

curate::Judgment judgment(const std::string& s) { return curate::parse_judgment(s); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multimodal instruction-data selection: indicators, clustering, learned selector, curation.";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result([&]() { return py::exception<Error>(m, "Error", PyExc_RuntimeError); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const py::object& type = error_type.get_stored();
      py::object exc = type(py::str(e.what()));
      py::setattr(exc, "code", py::str(std::string(errc_name(e.code()))));
      PyErr_SetObject(type.ptr(), exc.ptr());
    }
  });

  m.def("clip_score", [](const Vector& a, const Vector& b) { return indicators::clip_score(a, b); },
        py::arg("image_vec"), py::arg("text_vec"));
  m.def("length_score", &indicators::length_score, py::arg("response"));
  m.def(
      "render_gpt_prompt",
      [](const std::string& instruction, const std::string& response) {
        const auto r = indicators::render_gpt_prompt(indicators::PromptTemplate::rating_default(), instruction, response);
        return py::make_tuple(r.system, r.user);
      },
      py::arg("instruction"), py::arg("response"));
  m.def("parse_gpt_reply", &indicators::parse_gpt_reply, py::arg("body"));

  py::class_<numerics::PcaModel>(m, "PcaModel")
      .def_readonly("mean", &numerics::PcaModel::mean)
      .def_readonly("components", &numerics::PcaModel::components)
      .def_readonly("explained_variance", &numerics::PcaModel::explained_variance)
      .def("transform", [](const numerics::PcaModel& p, const Matrix& x) { return numerics::pca_transform(p, x); })
      .def("inverse_transform",
           [](const numerics::PcaModel& p, const Matrix& z) { return numerics::pca_inverse_transform(p, z); });
  m.def("pca_fit", &numerics::pca_fit, py::arg("data"), py::arg("m"));

  m.def(
      "kmeans_pp",
      [](const Matrix& data, int k, std::uint64_t seed, bool balanced, std::optional<Index> capacity) {
        numerics::KMeansOptions options;
        options.balanced = balanced;
        options.capacity = capacity;
        const auto r = numerics::kmeans_pp(data, k, seed, options);
        py::dict out;
        out["labels"] = r.labels;
        out["centroids"] = r.centroids;
        out["sizes"] = r.sizes;
        out["inertia"] = r.inertia;
        return out;
      },
      py::arg("data"), py::arg("k"), py::arg("seed") = 0, py::arg("balanced") = false,
      py::arg("capacity") = py::none());
  m.def(
      "spectral_cluster",
      [](const Matrix& data, int k, std::uint64_t seed) {
        return numerics::spectral_cluster(data, k, seed).assignment.labels;
      },
      py::arg("data"), py::arg("k"), py::arg("seed") = 0);

  m.def(
      "allocate", [](const std::vector<Index>& sizes, Index alpha) { return curate::allocate(sizes, alpha); },
      py::arg("cluster_sizes"), py::arg("alpha"));
  m.def(
      "select_topk",
      [](const std::vector<double>& scores, Index k) { return curate::select_topk_positions(scores, k); },
      py::arg("scores"), py::arg("k"));
  m.def("curate_scored", &curate_scored, py::arg("ids"), py::arg("image_features"), py::arg("scores"),
        py::arg("alpha") = 200, py::arg("clusters") = 10, py::arg("seed") = 0, py::arg("clustering") = true);
  m.def(
      "aggregate_judgments",
      [](const std::string& first, const std::string& second) {
        return std::string(curate::outcome_name(curate::aggregate_judgments(judgment(first), judgment(second))));
      },
      py::arg("first_order"), py::arg("second_order"));

  py::class_<selector::SelectorModel>(m, "SelectorModel")
      .def_property_readonly("kind", [](const selector::SelectorModel& s) { return std::string(selector::kind_name(s.shape.kind)); })
      .def_property_readonly("parameter_count", &selector::SelectorModel::parameter_count)
      .def_readwrite("params", &selector::SelectorModel::params)
      .def("predict", [](const selector::SelectorModel& s, const Matrix& seq) { return selector::predict(s, seq); })
      .def("predict_items",
           [](const selector::SelectorModel& s, const Matrix& items) { return selector::predict_items(s, items); })
      .def("save", [](const selector::SelectorModel& s, const std::filesystem::path& dir) { selector::save_selector(s, dir); });
  m.def("init_selector", &make_selector, py::arg("kind") = "attention", py::arg("input_dim") = 10,
        py::arg("layers") = 2, py::arg("d_model") = 16, py::arg("seed") = 0);
  m.def(
      "load_selector", [](const std::filesystem::path& dir) { return selector::load_selector(dir); }, py::arg("dir"));
  m.def("train_selector", &train_selector, py::arg("model"), py::arg("sequences"), py::arg("labels"),
        py::arg("epochs") = 20, py::arg("lr") = 0.01, py::arg("seed") = 0, py::arg("optimizer") = "adam");

  m.def(
      "synthesize",
      [](const std::filesystem::path& dir, Index n, std::uint64_t seed) {
        synth::SynthConfig config;
        config.n = n;
        config.seed = seed;
        synth::write_synth(synth::synthesize(config), dir);
      },
      py::arg("dir"), py::arg("n") = 3439, py::arg("seed") = 0);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one mmselect subcommand; returns (exit_code, stdout, stderr).");
}
