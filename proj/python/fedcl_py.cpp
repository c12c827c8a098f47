#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <sstream>

#include "fedcl/config.hpp"
#include "fedcl/curriculum.hpp"
#include "fedcl/data.hpp"
#include "fedcl/errors.hpp"
#include "fedcl/federation.hpp"
#include "fedcl/gmm.hpp"
#include "fedcl/metrics.hpp"
#include "fedcl/sync.hpp"

namespace py = pybind11;
using namespace fedcl;

namespace {

RunConfig make_config(const py::dict& overrides) {
  std::vector<std::pair<std::string, std::string>> ov;
  for (const auto& [k, v] : overrides) {
    std::string value;
    if (py::isinstance<py::bool_>(v)) value = v.cast<bool>() ? "true" : "false";
    else if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
      for (const auto& item : v) value += (value.empty() ? "" : ",") + py::str(item).cast<std::string>();
    } else value = py::str(v).cast<std::string>();
    ov.emplace_back(k.cast<std::string>(), value);
  }
  return resolve_config({}, ov);
}

py::dict row_dict(const MetricsRow& r) {
  py::dict d;
  d["round"] = r.round;
  d["z"] = r.state_index;
  d["algorithm"] = r.algorithm;
  d["test_accuracy"] = r.test_accuracy;
  d["mean_client_loss"] = r.mean_client_loss;
  d["generator_loss"] = r.generator_loss;
  d["frozen_count"] = r.frozen_count;
  d["wall_seconds"] = r.wall_seconds;
  d["seed"] = r.seed;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fedcl, m) {
  m.doc() = "Federated curriculum learning core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

  m.def("config_keys", &config_keys);
  m.def(
      "default_config",
      [](const py::dict& overrides) { return serialize_config(make_config(overrides)); },
      py::arg("overrides") = py::dict(), "Resolved configuration as key = value text.");

  m.def(
      "cl_loss",
      [](double loss, double tau, double lam) {
        CurriculumConfig c;
        c.tau = tau;
        c.lambda = lam;
        auto s = cl_loss(loss, c);
        return py::make_tuple(s.cl_loss, s.confidence, s.difficulty_score);
      },
      py::arg("loss"), py::arg("tau") = 10.0, py::arg("lam") = 0.5,
      "Returns (curriculum loss, optimal confidence, difficulty score).");

  m.def(
      "fit_gmm",
      [](const std::vector<double>& xs, std::size_t components, std::uint64_t seed) {
        EmOptions o;
        o.components = components;
        auto r = fit_em(xs, o, seed);
        py::list comps;
        for (const auto& c : r.gmm.components) comps.append(py::make_tuple(c.weight, c.mean, c.variance));
        return py::make_tuple(comps, r.trace);
      },
      py::arg("scores"), py::arg("components") = 3, py::arg("seed") = 0,
      "Returns ([(weight, mean, variance)], log-likelihood trace).");

  m.def(
      "threshold",
      [](std::vector<double> samples, double level) {
        std::sort(samples.begin(), samples.end());
        GlobalPool pool{samples, {samples.size()}};
        return threshold_lookup(pool, level);
      },
      py::arg("samples"), py::arg("level"));
  m.def(
      "should_freeze",
      [](const std::vector<double>& samples, double threshold, double v) {
        return freeze_decision(samples, threshold, v);
      },
      py::arg("samples"), py::arg("threshold"), py::arg("v"));

  m.def(
      "partition",
      [](std::size_t classes, std::size_t per_class, std::size_t clients, double alpha, std::uint64_t seed) {
        auto d = make_blobs(classes, per_class, 2, 1.0, seed);
        auto p = dirichlet_partition(d, clients, alpha, seed);
        return py::make_tuple(p.clients, d.labels);
      },
      py::arg("classes"), py::arg("per_class"), py::arg("clients"), py::arg("alpha"), py::arg("seed") = 1,
      "Dirichlet split of a blobs dataset: (client index lists, labels).");

  m.def(
      "run",
      [](const py::dict& overrides) {
        const auto cfg = make_config(overrides);
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_training(cfg);
        }
        py::list rows;
        for (const auto& row : r.history) rows.append(row_dict(row));
        std::ostringstream csv;
        write_metrics_csv(csv, r.history);
        py::dict out;
        out["history"] = rows;
        out["csv"] = csv.str();
        out["partition_hash"] = r.partition_hash;
        out["init_hash"] = r.init_hash;
        out["model_hash"] = model_hash(r.final_model);
        return out;
      },
      py::arg("overrides") = py::dict(),
      "Trains with the given config overrides (dotted keys) and returns metrics.");
}
