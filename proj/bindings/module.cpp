#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "ampe/harness.hpp"
#include "ampe/objectives.hpp"

namespace py = pybind11;
using namespace ampe;

namespace {

ModelSpec make_spec(const std::string& family, int d_max, int k_clusters,
                    int n_classes, int hidden_layers, int hidden_units,
                    const std::string& activation, double sigma2, double tau) {
  ModelSpec spec;
  spec.family = family_from_name(family);
  spec.d_max = d_max;
  spec.k_clusters = k_clusters;
  spec.n_classes = n_classes;
  spec.hidden_layers = hidden_layers;
  spec.hidden_units = hidden_units;
  spec.activation = activation == "tanh" ? Activation::Tanh : Activation::Relu;
  spec.sigma2 = sigma2;
  spec.tau = tau;
  spec.validate();
  return spec;
}

Dataset dataset_from_arrays(const ModelSpec& spec, const Mat& x,
                            const std::vector<double>& y,
                            const std::vector<int>& y_class,
                            const std::vector<int>& obs_mask,
                            const std::vector<int>& feat_mask) {
  Dataset d;
  d.x = x;
  if (!y.empty()) d.y = Eigen::Map<const Vec>(y.data(), static_cast<long>(y.size()));
  d.y_class = y_class;
  d.obs_mask.assign(obs_mask.begin(), obs_mask.end());
  d.feat_mask.assign(feat_mask.begin(), feat_mask.end());
  for (auto m : d.obs_mask) d.n_active += m ? 1 : 0;
  for (auto m : d.feat_mask) d.d_active += m ? 1 : 0;
  validate_dataset(spec, d);
  return d;
}

py::dict dataset_to_dict(const Dataset& d) {
  py::dict out;
  out["x"] = d.x;
  if (d.y.size() > 0) out["y"] = Vec(d.y);
  if (!d.y_class.empty()) out["y_class"] = d.y_class;
  out["obs_mask"] = std::vector<int>(d.obs_mask.begin(), d.obs_mask.end());
  out["feat_mask"] = std::vector<int>(d.feat_mask.begin(), d.feat_mask.end());
  out["n_active"] = d.n_active;
  out["d_active"] = d.d_active;
  return out;
}

ExperimentConfig config_from_string(const std::string& text) {
  return config_from_json(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Amortized in-context Bayesian posterior estimation";

  py::register_exception<ValidationError>(m, "ValidationError");
  py::register_exception<DivergenceError>(m, "DivergenceError");

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init(&make_spec), py::arg("family"), py::arg("d_max") = 1,
           py::arg("k_clusters") = 2, py::arg("n_classes") = 2,
           py::arg("hidden_layers") = 1, py::arg("hidden_units") = 32,
           py::arg("activation") = "relu", py::arg("sigma2") = 0.25,
           py::arg("tau") = 0.1)
      .def_property_readonly("family",
                             [](const ModelSpec& s) { return family_name(s.family); })
      .def_readonly("d_max", &ModelSpec::d_max)
      .def_readonly("sigma2", &ModelSpec::sigma2)
      .def_readonly("tau", &ModelSpec::tau)
      .def("theta_dim", [](const ModelSpec& s) { return theta_dim(s); });

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&dataset_from_arrays), py::arg("spec"), py::arg("x"),
           py::arg("y") = std::vector<double>{},
           py::arg("y_class") = std::vector<int>{}, py::arg("obs_mask"),
           py::arg("feat_mask"))
      .def("to_dict", &dataset_to_dict)
      .def_property_readonly("n_active", [](const Dataset& d) { return d.n_active; })
      .def_property_readonly("d_active", [](const Dataset& d) { return d.d_active; });

  m.def("theta_layout", [](const ModelSpec& spec) {
    py::list out;
    for (const auto& e : theta_layout(spec)) {
      py::dict entry;
      entry["name"] = e.name;
      entry["offset"] = e.offset;
      entry["shape"] = py::make_tuple(e.rows, e.cols);
      out.append(entry);
    }
    return out;
  });

  m.def(
      "log_prior",
      [](const ModelSpec& spec, const Vec& theta) {
        return log_prior(spec, make_theta(spec, theta));
      },
      py::arg("spec"), py::arg("theta"));
  m.def(
      "log_likelihood",
      [](const ModelSpec& spec, const Vec& theta, const Dataset& data) {
        return log_likelihood(spec, make_theta(spec, theta), data);
      },
      py::arg("spec"), py::arg("theta"), py::arg("data"));
  m.def(
      "log_joint",
      [](const ModelSpec& spec, const Vec& theta, const Dataset& data) {
        return log_joint(spec, make_theta(spec, theta), data);
      },
      py::arg("spec"), py::arg("theta"), py::arg("data"));
  m.def(
      "sample_theta",
      [](const ModelSpec& spec, uint64_t seed) {
        Rng rng(seed);
        return Vec(sample_theta(spec, rng).values);
      },
      py::arg("spec"), py::arg("seed"));
  m.def(
      "sample_dataset",
      [](const ModelSpec& spec, const Vec& theta, int n, uint64_t seed,
         const std::string& x_dist, int n_max) {
        Rng rng(seed);
        return sample_dataset(spec, make_theta(spec, theta), n, rng,
                              x_dist == "uniform_pm1" ? XDist::UniformPm1
                                                      : XDist::StdNormal,
                              n_max);
      },
      py::arg("spec"), py::arg("theta"), py::arg("n"), py::arg("seed"),
      py::arg("x_dist") = "std_normal", py::arg("n_max") = 128);
  m.def(
      "predict_mode",
      [](const ModelSpec& spec, const Vec& theta, const Vec& x) {
        return predict_mode(spec, make_theta(spec, theta), x);
      },
      py::arg("spec"), py::arg("theta"), py::arg("x"));

  m.def(
      "analytic_posterior",
      [](const ModelSpec& spec, const Dataset& data) {
        GaussianDist g = spec.family == Family::GM
                             ? analytic_posterior_gm(spec, data)
                             : analytic_posterior_lr(spec, data);
        return py::make_tuple(Vec(g.mean), Mat(g.cov));
      },
      py::arg("spec"), py::arg("data"));
  m.def(
      "log_evidence",
      [](const ModelSpec& spec, const Dataset& data) {
        return spec.family == Family::GM ? log_evidence_gm(spec, data)
                                         : log_evidence_lr(spec, data);
      },
      py::arg("spec"), py::arg("data"));
  m.def(
      "langevin_sample",
      [](const ModelSpec& spec, const Dataset& data, double step_size,
         long total_steps, long burn_in, long thin_interval, int chains,
         uint64_t seed) {
        McmcConfig cfg;
        cfg.step_size = step_size;
        cfg.total_steps = total_steps;
        cfg.burn_in = burn_in;
        cfg.thin_interval = thin_interval;
        cfg.chains = chains;
        Rng rng(seed);
        return langevin_sample(spec, data, cfg, rng);
      },
      py::arg("spec"), py::arg("data"), py::arg("step_size") = 1e-3,
      py::arg("total_steps") = 21000, py::arg("burn_in") = 1000,
      py::arg("thin_interval") = 10, py::arg("chains") = 4, py::arg("seed") = 0);
  m.def(
      "map_optimize",
      [](const ModelSpec& spec, const Dataset& data, double lr, long iters,
         uint64_t seed) {
        Rng rng(seed);
        MapResult res =
            map_optimize(spec, data, MapInit::PriorSample, nullptr, lr, iters, rng);
        return Vec(res.theta);
      },
      py::arg("spec"), py::arg("data"), py::arg("lr") = 0.01,
      py::arg("iters") = 1000, py::arg("seed") = 0);

  m.def("w2_squared", &w2_squared_empirical, py::arg("a"), py::arg("b"));
  m.def(
      "symmetric_kl_gaussian",
      [](const Vec& mean_p, const Mat& cov_p, const Vec& mean_q, const Mat& cov_q) {
        return symmetric_kl_gaussian(GaussianDist{mean_p, cov_p},
                                     GaussianDist{mean_q, cov_q});
      },
      py::arg("mean_p"), py::arg("cov_p"), py::arg("mean_q"), py::arg("cov_q"));

  m.def("ingest_csv", [](const std::string& path, const std::string& kind) {
    return ingest_csv(path, kind == "binary_classification"
                                ? TargetKind::BinaryClassification
                                : TargetKind::Regression);
  });

  m.def("preset_names", &preset_names);
  m.def("preset_config", [](const std::string& name) {
    return preset_json(name).dump(2);
  });

  m.def(
      "train",
      [](const std::string& config_text, long scale_divisor) {
        ExperimentConfig cfg = config_from_string(config_text);
        apply_scale_divisor(cfg, scale_divisor);
        RunPaths p = cmd_train(cfg);
        py::dict out;
        out["checkpoint"] = p.checkpoint_path;
        out["trace"] = p.trace_path;
        out["output_dir"] = p.output_dir;
        return out;
      },
      py::arg("config"), py::arg("scale_divisor") = 1);
  m.def(
      "evaluate",
      [](const std::string& config_text, const std::string& checkpoint,
         long scale_divisor) {
        ExperimentConfig cfg = config_from_string(config_text);
        apply_scale_divisor(cfg, scale_divisor);
        RunPaths p = cmd_eval(cfg, checkpoint);
        py::dict out;
        out["results"] = p.results_path;
        out["summary"] = p.summary_path;
        return out;
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("scale_divisor") = 1);
  m.def(
      "baseline",
      [](const std::string& config_text, const std::string& kind,
         long scale_divisor) {
        ExperimentConfig cfg = config_from_string(config_text);
        apply_scale_divisor(cfg, scale_divisor);
        RunPaths p = cmd_baseline(cfg, baseline_from_name(kind));
        py::dict out;
        out["results"] = p.results_path;
        out["summary"] = p.summary_path;
        return out;
      },
      py::arg("config"), py::arg("kind"), py::arg("scale_divisor") = 1);
}
