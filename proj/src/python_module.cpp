// Python bindings. JSON-shaped values (configs, specs, reports) cross the
// boundary as strings; the package wrapper turns them into dicts.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "mmdyn/checkpoint.hpp"
#include "mmdyn/cli.hpp"
#include "mmdyn/error.hpp"
#include "mmdyn/evaluation.hpp"
#include "mmdyn/experiments.hpp"

namespace py = pybind11;
using namespace mmdyn;
using nlohmann::json;

namespace {

py::array_t<double> modality_array(const ModalityView& v) {
  std::vector<py::ssize_t> shape{v.samples};
  if (v.kind == ModalityKind::tabular) {
    shape.push_back(v.features);
  } else {
    shape.insert(shape.end(), {v.height, v.width, v.channels});
  }
  py::array_t<double> out(shape);
  std::copy(v.data.begin(), v.data.end(), out.mutable_data());
  return out;
}

std::vector<int> all_indices(const MultimodalDataset& d) {
  std::vector<int> idx(static_cast<std::size_t>(d.sample_count()));
  for (int i = 0; i < d.sample_count(); ++i) idx[static_cast<std::size_t>(i)] = i;
  return idx;
}

json inference_json(const TrainedModel& model, const Inference& inf) {
  json mods = json::array();
  for (std::size_t m = 0; m < inf.modalities.size(); ++m) {
    const auto& mi = inf.modalities[m];
    const auto& shape = model.model.spec().modalities[m];
    json entry{{"name", shape.name}, {"tcp", mi.tcp}, {"tcp_hat", mi.tcp_hat}};
    if (!mi.gates.empty()) entry["mean_gates"] = mean_gates(mi);
    if (!mi.maps.empty()) entry["mean_map"] = mean_informativeness_map(mi.maps).values;
    mods.push_back(entry);
  }
  return {{"indices", inf.indices},
          {"labels", inf.labels},
          {"predictions", inf.predictions},
          {"probs", inf.probs},
          {"modalities", mods}};
}

std::vector<AblationVariant> variants_from(const std::vector<std::string>& names) {
  std::vector<AblationVariant> out;
  for (const auto& n : names) out.push_back(ablation_variant_from_string(n));
  return out;
}

}  // namespace

PYBIND11_MODULE(_mmdyn, m) {
  m.doc() = "MM Dynamics multimodal classification core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<DataError>(m, "DataError", base);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<TrainingError>(m, "TrainingError", base);

  py::class_<MultimodalDataset>(m, "Dataset")
      .def_static("read", &read_dataset, py::arg("directory"))
      .def("write", [](const MultimodalDataset& d, const std::filesystem::path& dir) { write_dataset(d, dir); })
      .def_property_readonly("sample_count", &MultimodalDataset::sample_count)
      .def_readonly("class_count", &MultimodalDataset::class_count)
      .def_readonly("labels", &MultimodalDataset::labels)
      .def_readonly("patient_ids", &MultimodalDataset::patient_ids)
      .def_property_readonly("modality_names",
                             [](const MultimodalDataset& d) {
                               std::vector<std::string> names;
                               for (const auto& v : d.modalities) names.push_back(v.name);
                               return names;
                             })
      .def("modality_kind", [](const MultimodalDataset& d, const std::string& name) { return to_string(d.modality(name).kind); })
      .def("modality", [](const MultimodalDataset& d, const std::string& name) { return modality_array(d.modality(name)); },
           "Copy of one modality: (N, d) for tabular data, (N, H, W, C) for images.")
      .def("masked", [](const MultimodalDataset& d, const std::string& name, double intensity) {
        MultimodalDataset out = d;
        auto& v = out.modalities[static_cast<std::size_t>(out.modality_index(name))];
        v = mask_image_modality(v, intensity);
        return out;
      }, py::arg("modality"), py::arg("intensity") = 0.5);

  py::class_<SplitSpec>(m, "Split")
      .def(py::init([](std::vector<int> train, std::vector<int> val, std::vector<int> test) {
             return SplitSpec{std::move(train), std::move(val), std::move(test), 0};
           }),
           py::arg("train"), py::arg("val"), py::arg("test"))
      .def_readonly("train", &SplitSpec::train_indices)
      .def_readonly("val", &SplitSpec::val_indices)
      .def_readonly("test", &SplitSpec::test_indices)
      .def_readonly("seed", &SplitSpec::seed);

  m.def("_synthesize", [](const std::string& spec, std::uint64_t seed) {
    SyntheticResult r = synthesize_dataset(synthetic_spec_from_json(json::parse(spec)), seed);
    return py::make_tuple(std::move(r.dataset), to_json(r.truth).dump());
  });
  m.def("load_tabular", &load_tabular_modality, py::arg("path"), py::arg("name"));
  m.def("patient_split", &patient_split, py::arg("dataset"), py::arg("test_patients"), py::arg("val_fraction") = 0.2,
        py::arg("seed") = 0);

  py::class_<TrainedModel>(m, "TrainedModel")
      .def_readonly("best_epoch", &TrainedModel::best_epoch)
      .def_property_readonly("_config", [](const TrainedModel& t) { return to_json(t.config).dump(); })
      .def_property_readonly("_history", [](const TrainedModel& t) { return to_json(t.history).dump(); })
      .def("save", [](const TrainedModel& t, const std::filesystem::path& p) { save_checkpoint(t, p); })
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("_evaluate", [](const TrainedModel& t, const MultimodalDataset& d, std::vector<int> idx) {
        return to_json(evaluate(t, d, idx)).dump();
      })
      .def("_evaluate_masked", [](const TrainedModel& t, const MultimodalDataset& d, const SplitSpec& s,
                                  const std::string& name, double intensity) {
        return to_json(evaluate_masked(t, d, s, name, intensity)).dump();
      })
      .def("_infer", [](const TrainedModel& t, const MultimodalDataset& d, std::optional<std::vector<int>> idx) {
        return inference_json(t, run_inference(t, d, idx ? *idx : all_indices(d))).dump();
      });

  m.def("_train", [](const std::string& config, const MultimodalDataset& d, const SplitSpec& s) {
    py::gil_scoped_release release;
    return train(train_config_from_json(json::parse(config)), d, s);
  });
  m.def("_train_early_fusion", [](const std::string& config, const MultimodalDataset& d, const SplitSpec& s) {
    py::gil_scoped_release release;
    return train_early_fusion_baseline(d, s, train_config_from_json(json::parse(config)));
  });
  m.def("_run_ablation", [](const std::string& config, const MultimodalDataset& d, const SplitSpec& s,
                            const std::vector<std::string>& variants, const std::vector<std::uint64_t>& seeds) {
    py::gil_scoped_release release;
    return to_json(run_ablation(train_config_from_json(json::parse(config)), d, s, variants_from(variants), seeds)).dump();
  });
  m.def("_run_sweep", [](const std::string& config, const std::string& axis, const std::vector<std::vector<double>>& values,
                         const MultimodalDataset& d, const SplitSpec& s, const std::vector<std::uint64_t>& seeds) {
    py::gil_scoped_release release;
    return to_json(run_sweep(train_config_from_json(json::parse(config)), sweep_axis_from_string(axis), values, d, s,
                             seeds))
        .dump();
  });

  m.def("_compute_metrics", [](const std::vector<int>& pred, const std::vector<int>& labels, int classes) {
    return to_json(compute_metrics(pred, labels, classes)).dump();
  });
  m.def("tcp_error_curve", [](const std::vector<double>& tcps, const std::vector<double>& hats,
                              const std::vector<double>& thresholds) {
    const TcpErrorCurve c = tcp_error_curve(tcps, hats, thresholds);
    return py::make_tuple(c.fractions, c.excluded_zero_tcp);
  }, "Fractions with x*tcp + tcp <= tcp_hat per threshold, and the count of excluded zero-tcp samples.");
  m.def("rank_features", [](const std::vector<double>& gates, int k, const std::vector<std::string>& names) {
    std::vector<py::tuple> out;
    for (const auto& r : rank_features(gates, k, names)) out.push_back(py::make_tuple(r.index, r.name, r.mean_gate));
    return out;
  }, py::arg("mean_gates"), py::arg("k"), py::arg("names") = std::vector<std::string>{});

  m.def("cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = cli::dispatch(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, "Runs one command-line invocation in-process; returns (exit_code, stdout, stderr).");
}
