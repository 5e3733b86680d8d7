#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "massl/checkpoint.hpp"
#include "massl/commands.hpp"
#include "massl/config.hpp"
#include "massl/errors.hpp"
#include "massl/evalkit.hpp"
#include "massl/memory.hpp"
#include "massl/objective.hpp"
#include "massl/trainer.hpp"

namespace py = pybind11;
using namespace massl;

namespace {

TrainConfig config_arg(const py::object& cfg) {
  if (py::isinstance<py::dict>(cfg)) {
    TrainConfig c;
    for (auto item : cfg.cast<py::dict>()) {
      apply_key_value(c, py::str(item.first).cast<std::string>(), py::str(item.second).cast<std::string>());
    }
    c.validate();
    return c;
  }
  const auto text = cfg.cast<std::string>();
  TrainConfig c = text.find('=') == std::string::npos ? load_config(text) : parse_config_text(text);
  c.validate();
  return c;
}

py::dict config_dict(const TrainConfig& c) {
  py::dict d;
  for (const auto& [k, v] : to_key_values(c)) d[py::str(k)] = v;
  return d;
}

py::dict diagnostics_dict(const Diagnostics& d) {
  py::dict out;
  out["feature_std"] = d.feature_std;
  out["mean_target_entropy"] = d.mean_target_entropy;
  out["entropy_ratio"] = d.entropy_ratio;
  out["effective_rank"] = d.effective_rank;
  out["collapsed"] = d.collapsed;
  return out;
}

py::dict record_dict(const MetricsRecord& r) {
  py::dict out;
  out["step"] = r.step;
  out["epoch"] = r.epoch;
  out["loss"] = r.loss;
  out["lr"] = r.lr;
  out["wd"] = r.wd;
  out["tau_t"] = r.tau_t;
  out["ema_momentum"] = r.ema_momentum;
  out["diagnostics"] = diagnostics_dict(r.diagnostics);
  return out;
}

}  // namespace

PYBIND11_MODULE(_massl, m) {
  m.doc() = "Multi-block memory self-distillation: core operations";

  static py::exception<Error> error(m, "MasslError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error;
      PyErr_SetObject(exc.ptr(), py::make_tuple(py::str(e.what()), std::string(to_string(e.kind()))).ptr());
    }
  });

  m.def("load_config", [](const py::object& cfg) { return config_dict(config_arg(cfg)); }, py::arg("config"),
        "Parse a config file path, config text or key/value dict into a validated dict.");
  m.def("full_scale_config", [] { return config_dict(full_scale_preset()); });

  m.def("make_blobs",
        [](int classes, std::size_t per_class, std::size_t dim, double separation, double noise, std::uint64_t seed) {
          Dataset d = make_blobs(classes, per_class, dim, separation, noise, seed);
          return py::make_tuple(d.features, d.labels);
        },
        py::arg("classes"), py::arg("per_class"), py::arg("dim"), py::arg("separation") = 4.0,
        py::arg("noise") = 1.0, py::arg("seed") = 0);

  py::class_<Memory>(m, "Memory")
      .def(py::init<std::size_t, std::size_t, std::uint64_t>(), py::arg("capacity"), py::arg("dim"),
           py::arg("seed") = 0)
      .def("enqueue", [](Memory& mem, const Mat& batch) { mem.enqueue(batch); }, py::arg("batch"))
      .def_property_readonly("slots", [](const Memory& mem) { return mem.slots(); })
      .def_property_readonly("ages", &Memory::ages)
      .def_property_readonly("cursor", &Memory::cursor)
      .def_property_readonly("inserted", &Memory::inserted)
      .def_property_readonly("capacity", &Memory::capacity)
      .def_property_readonly("dim", &Memory::dim);

  m.def("sample_blocks",
        [](std::size_t capacity, std::size_t block_size, const std::string& strategy, std::uint64_t seed) {
          Rng rng = make_rng(seed);
          return sample_blocks(capacity, block_size, parse_sampling_strategy(strategy), rng).blocks;
        },
        py::arg("capacity"), py::arg("block_size"), py::arg("strategy") = "stochastic", py::arg("seed") = 0);

  m.def("massl_loss",
        [](const std::vector<Mat>& student, const std::vector<Mat>& teacher, const Memory& memory,
           const std::vector<std::vector<std::size_t>>& blocks, double tau_s, double tau_t) {
          BlockPlan plan;
          plan.blocks = blocks;
          LossConfig cfg{tau_s, tau_t, plan.block_size()};
          LossReport r = massl_loss(student, teacher, memory, plan, cfg);
          py::dict out;
          out["loss"] = r.loss;
          out["grads"] = r.grads;
          out["mean_target_entropy"] = r.mean_target_entropy;
          out["pair_count"] = r.pair_count;
          return out;
        },
        py::arg("student_views"), py::arg("teacher_views"), py::arg("memory"), py::arg("blocks"),
        py::arg("tau_s") = 0.1, py::arg("tau_t") = 0.04);

  m.def("knn_predict",
        [](const Mat& train, const std::vector<int>& labels, const Mat& test, int k, double temperature) {
          return knn_predict(train, labels, test, KnnConfig{k, temperature});
        },
        py::arg("train"), py::arg("labels"), py::arg("test"), py::arg("k") = 20, py::arg("temperature") = 0.07);
  m.def("compare_labelings",
        [](const std::vector<int>& truth, const std::vector<int>& predicted) {
          const ClusterScores s = compare_labelings(truth, predicted);
          py::dict out;
          out["nmi"] = s.nmi;
          out["ami"] = s.ami;
          out["ari"] = s.ari;
          return out;
        },
        py::arg("truth"), py::arg("predicted"));

  m.def("train",
        [](const py::object& cfg, const std::string& out_dir, const std::string& resume, bool write_files) {
          TrainConfig c = config_arg(cfg);
          if (!out_dir.empty()) c.out_dir = out_dir;
          TrainOptions opts;
          opts.resume_path = resume;
          opts.write_files = write_files;
          TrainResult r;
          {
            py::gil_scoped_release release;
            r = run_training(c, opts);
          }
          py::list records;
          for (const auto& rec : r.records) records.append(record_dict(rec));
          py::dict out;
          out["records"] = records;
          out["knn"] = r.knn;
          out["final_diagnostics"] = diagnostics_dict(r.final_diagnostics);
          out["collapsed_any"] = r.collapsed_any;
          out["wall_seconds"] = r.wall_seconds;
          return out;
        },
        py::arg("config"), py::arg("out_dir") = "", py::arg("resume") = "", py::arg("write_files") = true,
        "Train from a config (path, text or dict); returns logged records and the final evaluation.");

  m.def("evaluate",
        [](const std::string& checkpoint, const std::string& data, const std::string& reference,
           const std::vector<int>& knn_k, bool linear, bool cluster) {
          EvalRequest req;
          req.checkpoint = checkpoint;
          req.data = data;
          req.reference = reference;
          req.knn_k = knn_k;
          req.linear = linear;
          req.cluster = cluster;
          const MetricsTable t = run_eval(req);
          py::dict out;
          for (std::size_t i = 0; i < t.columns.size(); ++i) out[py::str(t.columns[i])] = t.values[i];
          return out;
        },
        py::arg("checkpoint"), py::arg("data") = "test", py::arg("reference") = "train",
        py::arg("knn_k") = std::vector<int>{10, 20, 100, 200}, py::arg("linear") = false, py::arg("cluster") = false);

  m.def("embed",
        [](const std::string& checkpoint, const Mat& features, bool teacher) {
          const Checkpoint c = load_checkpoint(checkpoint);
          return embed(teacher ? c.teacher : c.student, features);
        },
        py::arg("checkpoint"), py::arg("features"), py::arg("teacher") = true);

  m.def("export_embeddings", &run_export, py::arg("checkpoint"), py::arg("data"), py::arg("out_path"));
}
