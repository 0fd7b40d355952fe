// Python bindings: array-level numerics plus the staged workflow.

#include "mhdshred/pipeline.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace mhdshred;

namespace {

pipeline::PipelineConfig config_from(const std::optional<std::string>& path, const std::string& text) {
  if (path) return pipeline::load_config(*path);
  if (!text.empty()) return pipeline::PipelineConfig::from_manifest(io::Manifest::parse(text, "config text"));
  return {};
}

py::dict trajectory_dict(const SnapshotTrajectory& t) {
  py::dict d;
  d["b0"] = t.param_value;
  d["save_dt"] = t.save_dt;
  d["T"] = t.T;
  d["u"] = t.u;
  d["p"] = t.p;
  return d;
}

/// Output directory plus configuration; each method runs one stage.
class Workflow {
 public:
  Workflow(const std::string& out, const std::optional<std::string>& config, const std::string& config_text,
           int workers) {
    ctx_.out = out;
    ctx_.config = config_from(config, config_text);
    ctx_.config.validate();
    ctx_.workers = ensemble::resolve_workers(workers);
  }

  std::string config_text() const { return ctx_.config.to_manifest().serialize(); }

  py::dict sweep(const std::vector<double>& values) {
    py::gil_scoped_release release;
    const auto r = pipeline::run_sweep(ctx_, values);
    py::gil_scoped_acquire acquire;
    py::dict d;
    d["computed"] = r.computed;
    d["skipped"] = r.skipped;
    d["failed"] = r.failed;
    return d;
  }

  py::dict compress() {
    const auto r = pipeline::run_compress(ctx_);
    py::dict d, ranks, discarded;
    for (FieldKind f : kAllFields) {
      ranks[py::str(std::string(field_label(f)))] = r.ranks[static_cast<int>(f)];
      discarded[py::str(std::string(field_label(f)))] = r.discarded[static_cast<int>(f)];
    }
    d["train"] = r.split.train;
    d["validation"] = r.split.validation;
    d["test"] = r.split.test;
    d["ranks"] = ranks;
    d["discarded_energy"] = discarded;
    return d;
  }

  py::dict train() {
    pipeline::TrainReport r;
    {
      py::gil_scoped_release release;
      r = pipeline::run_train(ctx_);
    }
    py::list members;
    for (const auto& m : r.members) {
      py::dict e;
      e["index"] = m.index;
      e["sensors"] = m.config.cells;
      e["seed"] = m.seed;
      e["trained"] = m.model.has_value();
      e["error"] = m.error;
      if (m.model) {
        e["best_epoch"] = m.model->history.best_epoch;
        e["best_val_loss"] = m.model->history.best_val_loss;
      }
      members.append(e);
    }
    py::dict d;
    d["members"] = members;
    d["parameter_count"] = r.parameter_count;
    return d;
  }

  py::list evaluate(const std::vector<double>& values) {
    const auto r = pipeline::run_evaluate(ctx_, values);
    py::list out;
    for (const auto& p : r.parameters)
      for (FieldKind f : kAllFields) {
        const auto& e = p.fields[static_cast<int>(f)];
        py::dict row;
        row["b0"] = p.b0;
        row["field"] = std::string(field_label(f));
        row["error_mean"] = e.error.over_time.mean;
        row["error_std"] = e.error.over_time.std;
        row["error_series"] = e.error.series;
        row["member_cv"] = e.error.member_cv;
        row["lower_bound_violations"] = e.lower_bound_violations;
        out.append(row);
      }
    return out;
  }

  py::dict trajectory(double b0) const { return trajectory_dict(pipeline::load_trajectory(ctx_, b0)); }
  std::string report() const { return pipeline::run_report(ctx_); }

 private:
  pipeline::Context ctx_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Stepped-channel MHD snapshots, truncated-SVD compression and SHRED ensembles";

  py::register_exception<Error>(m, "Error");

  // Reduction.
  m.def(
      "truncated_svd",
      [](const Matrix& X, int rank) {
        const auto s = reduction::truncated_svd(X, rank);
        return py::make_tuple(s.U, s.spectrum.sigma, s.V);
      },
      py::arg("X"), py::arg("rank"), "Rank-r factors (U, sigma, V) by the method of snapshots.");
  m.def(
      "select_rank",
      [](const Vector& sigma, double threshold, int r_min) {
        return reduction::select_rank(reduction::SingularSpectrum{sigma}, threshold, r_min);
      },
      py::arg("sigma"), py::arg("threshold") = 1e-3, py::arg("r_min") = 1);
  m.def(
      "discarded_energy", [](const Vector& sigma) { return reduction::SingularSpectrum{sigma}.discarded_energy(); },
      py::arg("sigma"));

  // Dataset.
  m.def(
      "lagged_windows",
      [](const Matrix& measurements, Eigen::Index block_length, int lag) {
        return dataset::build_lagged_sequences(measurements, block_length, lag).windows;
      },
      py::arg("measurements"), py::arg("block_length"), py::arg("lag"));
  m.def(
      "minmax_scale",
      [](const Matrix& X, double lo, double hi) { return dataset::minmax_scale(X, {lo, hi}); },
      py::arg("X"), py::arg("field_min"), py::arg("field_max"));
  m.def(
      "minmax_unscale",
      [](const Matrix& X, double lo, double hi) { return dataset::minmax_unscale(X, {lo, hi}); },
      py::arg("X"), py::arg("field_min"), py::arg("field_max"));
  m.def("log_spaced", &dataset::log_spaced, py::arg("lo"), py::arg("hi"), py::arg("count"));
  m.def(
      "sensor_triplets",
      [](int cells, int count, std::uint64_t seed) {
        std::vector<std::array<int, 3>> out;
        for (const auto& c : dataset::sample_sensor_triplets(cells, count, seed)) out.push_back(c.cells);
        return out;
      },
      py::arg("cells"), py::arg("count"), py::arg("seed"));

  // Metrics.
  m.def(
      "relative_l2_error",
      [](const Vector& truth, const Vector& prediction) { return metrics::relative_l2_error(truth, prediction); },
      py::arg("truth"), py::arg("prediction"));
  m.def("relative_l2_series", &metrics::relative_l2_series, py::arg("truth"), py::arg("prediction"));

  // SHRED network.
  py::class_<shred::ShredNet>(m, "ShredNet")
      .def(py::init([](int inputs, int hidden, int layers, std::vector<int> decoder, int outputs) {
             shred::ShredArch a;
             a.inputs = inputs;
             a.hidden = hidden;
             a.layers = layers;
             a.decoder = std::move(decoder);
             a.outputs = outputs;
             a.validate();
             return shred::ShredNet(a);
           }),
           py::arg("inputs") = 3, py::arg("hidden") = 64, py::arg("layers") = 2,
           py::arg("decoder") = std::vector<int>{350, 400}, py::arg("outputs") = 3)
      .def("initialize", &shred::ShredNet::initialize, py::arg("seed"))
      .def_property(
          "params", [](const shred::ShredNet& n) { return n.params(); },
          [](shred::ShredNet& n, const Vector& v) {
            if (v.size() != n.parameter_count()) fail(ErrorKind::ShapeMismatch, "parameter vector length differs");
            n.params() = v;
          })
      .def_property_readonly("parameter_count", &shred::ShredNet::parameter_count)
      .def(
          "forward", [](const shred::ShredNet& n, const Matrix& windows) { return shred::forward(n, windows); },
          py::arg("windows"), "windows: (lag * inputs) x batch, oldest lag first")
      .def(
          "loss_and_gradient",
          [](const shred::ShredNet& n, const Matrix& windows, const Matrix& targets) {
            shred::ForwardCache cache;
            const Matrix y = shred::forward(n, windows, &cache);
            return py::make_tuple(shred::loss(y, targets), shred::backward(n, cache, y, targets));
          },
          py::arg("windows"), py::arg("targets"));

  // Solver.
  m.def(
      "simulate",
      [](double b0, int nx, int ny, double t_end, double save_every, std::uint64_t seed) {
        solver::PhysicalParams p;
        p.B0 = b0;
        const auto geo = solver::Geometry::stepped_channel();
        SnapshotTrajectory t;
        {
          py::gil_scoped_release release;
          t = solver::run_trajectory(p, geo, solver::build_grid(geo, nx, ny), t_end, save_every, seed);
        }
        return trajectory_dict(t);
      },
      py::arg("b0"), py::arg("nx") = 120, py::arg("ny") = 24, py::arg("t_end") = 3.0, py::arg("save_every") = 0.025,
      py::arg("seed") = 0, "Stepped-channel trajectory with default physical parameters.");

  // Artifact files.
  m.def(
      "read_matrix",
      [](const std::string& path) {
        auto [h, mat] = io::read_matrix(path);
        py::dict meta;
        meta["label"] = h.label;
        meta["param_value"] = h.param_value;
        meta["save_dt"] = h.save_dt;
        return py::make_tuple(mat, meta);
      },
      py::arg("path"));
  m.def(
      "write_matrix",
      [](const std::string& path, const Matrix& mat, const std::string& label, double param_value, double save_dt) {
        return io::write_matrix(path, mat, {label, 0, 0, param_value, save_dt});
      },
      py::arg("path"), py::arg("matrix"), py::arg("label") = "", py::arg("param_value") = 0.0,
      py::arg("save_dt") = 0.0, "Returns the SHA-256 of the written file.");
  m.def("sha256_file", [](const std::string& path) { return io::sha256_file(path); }, py::arg("path"));

  // Workflow.
  py::class_<Workflow>(m, "Workflow")
      .def(py::init<const std::string&, const std::optional<std::string>&, const std::string&, int>(),
           py::arg("out"), py::arg("config") = py::none(), py::arg("config_text") = "", py::arg("workers") = 0)
      .def_property_readonly("config_text", &Workflow::config_text)
      .def("sweep", &Workflow::sweep, py::arg("values") = std::vector<double>{})
      .def("compress", &Workflow::compress)
      .def("train", &Workflow::train)
      .def("evaluate", &Workflow::evaluate, py::arg("values") = std::vector<double>{})
      .def("trajectory", &Workflow::trajectory, py::arg("b0"))
      .def("report", &Workflow::report);
}
