#include "ampe/harness.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ampe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << v;
  return os.str();
}

RunPaths make_paths(const ExperimentConfig& cfg) {
  RunPaths p;
  p.output_dir = cfg.output_dir;
  fs::create_directories(cfg.output_dir);
  p.config_path = (fs::path(cfg.output_dir) / "config.json").string();
  p.checkpoint_path = (fs::path(cfg.output_dir) / "checkpoint.bin").string();
  p.trace_path = (fs::path(cfg.output_dir) / "trace.jsonl").string();
  p.results_path = (fs::path(cfg.output_dir) / "results.jsonl").string();
  p.summary_path = (fs::path(cfg.output_dir) / "summary.csv").string();
  p.meta_path = (fs::path(cfg.output_dir) / "run_meta.json").string();
  return p;
}

void write_config(const RunPaths& paths, const ExperimentConfig& cfg) {
  std::ofstream out(paths.config_path);
  out << config_to_json(cfg).dump(2) << "\n";
}

// Wall-clock lives only in run_meta.json; every other artifact is a pure
// function of (config, seed).
void write_meta(const RunPaths& paths, const ExperimentConfig& cfg,
                const ParamStore* params, double wall_sec) {
  json meta;
  meta["config_hash"] = hex64(config_hash(cfg));
  if (params) meta["checkpoint_hash"] = hex64(params->content_hash());
  meta["wall_clock_sec"] = wall_sec;
  meta["trace"] = paths.trace_path;
  std::ofstream out(paths.meta_path);
  out << meta.dump(2) << "\n";
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

GaussianDist analytic_posterior(const ExperimentConfig& cfg, const Dataset& data) {
  if (cfg.model.family == Family::GM) return analytic_posterior_gm(cfg.model, data);
  if (cfg.model.family == Family::LR) return analytic_posterior_lr(cfg.model, data);
  throw ValidationError(
      "closed-form posteriors exist only for the gm and lr families");
}

MetricReport run_metric(const ExperimentConfig& cfg, const std::string& name,
                        const PosteriorModel& q, const AmortizedEstimator* est,
                        const std::vector<Dataset>& testsets, Rng& rng) {
  const int S = cfg.eval.posterior_samples;
  if (name == "gm_l2") return metric_gm_l2(q, cfg.model, testsets, S, rng);
  if (name == "gmm_l2") return metric_gmm_l2(q, cfg.model, testsets, S, rng);
  if (name == "predictive_l2")
    return metric_predictive_l2(q, cfg.model, testsets, S, rng);
  if (name == "accuracy") return metric_accuracy(q, cfg.model, testsets, S, rng);

  if (name == "sym_kl") {
    Vec per_dataset(static_cast<Eigen::Index>(testsets.size()));
    for (size_t t = 0; t < testsets.size(); ++t) {
      GaussianDist p = analytic_posterior(cfg, testsets[t]);
      Rng r = rng.fork(static_cast<uint64_t>(t));
      if (est != nullptr && est->head().kind == HeadKind::DiagGaussian) {
        auto mv = est->gaussian_posterior(testsets[t]);
        GaussianDist qd{mv.mean, Mat(mv.var.asDiagonal())};
        per_dataset[static_cast<Eigen::Index>(t)] = symmetric_kl_gaussian(p, qd);
      } else {
        per_dataset[static_cast<Eigen::Index>(t)] =
            symmetric_kl_mc(q, testsets[t], p, cfg.eval.sym_kl_mc_samples, r).value;
      }
    }
    return make_report("sym_kl", std::move(per_dataset), cfg.eval.sym_kl_mc_samples);
  }

  if (name == "w2") {
    const int M = cfg.eval.w2_samples;
    const bool conjugate =
        cfg.model.family == Family::GM || cfg.model.family == Family::LR;
    LangevinPosterior langevin(cfg.model, cfg.baseline.mcmc);
    Vec per_dataset(static_cast<Eigen::Index>(testsets.size()));
    for (size_t t = 0; t < testsets.size(); ++t) {
      Rng r = rng.fork(static_cast<uint64_t>(t));
      Rng rq = r.fork("q");
      Rng rp = r.fork("ref");
      Mat qs = q.sample(testsets[t], M, rq);
      Mat ps;
      if (conjugate) {
        ps = analytic_posterior(cfg, testsets[t]).sample(M, rp);
      } else {
        ps = langevin.sample(testsets[t], M, rp);
        if (ps.rows() > M) ps = subsample_rows(ps, M, rp);
      }
      if (ps.rows() < qs.rows()) qs = subsample_rows(qs, static_cast<int>(ps.rows()), rq);
      per_dataset[static_cast<Eigen::Index>(t)] = w2_squared_empirical(qs, ps);
    }
    return make_report("w2", std::move(per_dataset), M);
  }
  throw ValidationError("unknown metric: " + name);
}

std::vector<ResultRecord> eval_model(const ExperimentConfig& cfg,
                                     const std::string& command,
                                     const std::string& method,
                                     const PosteriorModel& q,
                                     const AmortizedEstimator* est,
                                     const std::vector<Dataset>& testsets,
                                     const std::map<std::string, std::string>& tags) {
  std::vector<ResultRecord> records;
  Rng rng = Rng(cfg.seed).fork("metrics").fork(method);
  for (const std::string& name : cfg.effective_metrics()) {
    ResultRecord rec;
    rec.experiment = cfg.name;
    rec.command = command;
    rec.method = method;
    rec.model = family_name(cfg.model.family);
    Rng r = rng.fork(name);
    rec.report = run_metric(cfg, name, q, est, testsets, r);
    rec.tags = tags;
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

std::vector<Dataset> make_test_datasets(const ExperimentConfig& cfg) {
  return make_test_datasets(cfg, cfg.generator.source, "test");
}

std::vector<Dataset> make_test_datasets(const ExperimentConfig& cfg,
                                        Source source_override,
                                        const std::string& stream_tag) {
  GeneratorConfig gen = cfg.generator;
  gen.source = source_override;
  gen.batch_size = cfg.eval.test_datasets;
  DatasetBatch batch =
      generate_batch(gen, cfg.model, Rng(cfg.seed).fork(stream_tag));
  return std::move(batch.datasets);
}

uint64_t batch_content_hash(const std::vector<Dataset>& datasets) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const Dataset& d : datasets) {
    mix(d.x.data(), sizeof(double) * d.x.size());
    if (d.y.size() > 0) mix(d.y.data(), sizeof(double) * d.y.size());
    if (!d.y_class.empty()) mix(d.y_class.data(), sizeof(int) * d.y_class.size());
    mix(d.obs_mask.data(), d.obs_mask.size());
    mix(d.feat_mask.data(), d.feat_mask.size());
  }
  return h;
}

AmortizedEstimator make_estimator(const ExperimentConfig& cfg) {
  return AmortizedEstimator(cfg.model, cfg.encoder, cfg.head, cfg.seed);
}

AmortizedEstimator load_estimator(const ExperimentConfig& cfg,
                                  const std::string& checkpoint_path) {
  return AmortizedEstimator(cfg.model, cfg.encoder, cfg.head,
                            ParamStore::load(checkpoint_path));
}

BaselineKind baseline_from_name(const std::string& s) {
  if (s == "analytic") return BaselineKind::Analytic;
  if (s == "map") return BaselineKind::Map;
  if (s == "langevin") return BaselineKind::Langevin;
  if (s == "random") return BaselineKind::Random;
  throw ValidationError("unknown baseline kind: " + s);
}

void write_results(const RunPaths& paths, const std::vector<ResultRecord>& records) {
  std::ofstream out(paths.results_path);
  std::ofstream csv(paths.summary_path);
  csv << "experiment,command,method,model,metric,mean,se,samples,datasets\n";
  for (const ResultRecord& rec : records) {
    json j;
    j["experiment"] = rec.experiment;
    j["command"] = rec.command;
    j["method"] = rec.method;
    j["model"] = rec.model;
    j["metric"] = rec.report.name;
    j["mean"] = rec.report.mean;
    j["se"] = rec.report.se;
    j["posterior_samples"] = rec.report.posterior_samples;
    j["test_datasets"] = rec.report.test_datasets;
    std::vector<double> values(rec.report.per_dataset.data(),
                               rec.report.per_dataset.data() +
                                   rec.report.per_dataset.size());
    j["per_dataset"] = values;
    if (rec.iter >= 0) j["iter"] = rec.iter;
    for (const auto& [k, v] : rec.tags) j[k] = v;
    out << j.dump() << "\n";

    csv << rec.experiment << ',' << rec.command << ',' << rec.method << ','
        << rec.model << ',' << rec.report.name << ',';
    csv << json(rec.report.mean).dump() << ',' << json(rec.report.se).dump() << ','
        << rec.report.posterior_samples << ',' << rec.report.test_datasets << "\n";
  }
}

RunPaths cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  Stopwatch watch;
  RunPaths paths = make_paths(cfg);
  write_config(paths, cfg);

  AmortizedEstimator est = make_estimator(cfg);
  std::ofstream trace(paths.trace_path);
  const long interval = cfg.train.checkpoint_interval;
  TrainCallback callback = [&](const TraceEntry& e, const ParamStore& ps) {
    json j;
    j["iter"] = e.iter;
    j["beta"] = e.beta;
    j["loss"] = e.loss;
    trace << j.dump() << "\n";
    if (interval > 0 && (e.iter + 1) % interval == 0 &&
        e.iter + 1 < cfg.train.iterations) {
      std::ostringstream name;
      name << "checkpoint_" << std::setfill('0') << std::setw(8) << (e.iter + 1)
           << ".bin";
      ps.save((fs::path(cfg.output_dir) / name.str()).string());
    }
  };
  train(est, cfg.generator, cfg.train, callback);
  est.params().save(paths.checkpoint_path);
  write_meta(paths, cfg, &est.params(), watch.seconds());
  return paths;
}

RunPaths cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
  cfg.validate();
  Stopwatch watch;
  RunPaths paths = make_paths(cfg);
  AmortizedEstimator est = load_estimator(cfg, checkpoint_path);
  std::vector<Dataset> testsets = make_test_datasets(cfg);
  EstimatorPosterior q(est);
  std::vector<ResultRecord> records =
      eval_model(cfg, "eval", "amortized", q, &est, testsets, {});
  write_results(paths, records);
  write_meta(paths, cfg, &est.params(), watch.seconds());
  return paths;
}

RunPaths cmd_baseline(const ExperimentConfig& cfg, BaselineKind kind) {
  cfg.validate();
  Stopwatch watch;
  RunPaths paths = make_paths(cfg);
  std::vector<Dataset> testsets = make_test_datasets(cfg);
  std::vector<ResultRecord> records;
  switch (kind) {
    case BaselineKind::Analytic: {
      CallbackGaussianPosterior q(theta_dim(cfg.model), [&](const Dataset& d) {
        GaussianDist g = analytic_posterior(cfg, d);
        return CallbackGaussianPosterior::MeanCov{g.mean, g.cov};
      });
      records = eval_model(cfg, "baseline", "analytic", q, nullptr, testsets, {});
      break;
    }
    case BaselineKind::Map: {
      double lr = cfg.baseline.map_lr;
      if (cfg.baseline.map_grid_search) {
        Rng r = Rng(cfg.seed).fork("grid");
        lr = lr_grid_search(cfg.model, testsets, cfg.baseline.map_lr_grid,
                            cfg.baseline.map_iters, r);
      }
      MapPosterior q(cfg.model, lr, cfg.baseline.map_iters);
      records = eval_model(cfg, "baseline", "map", q, nullptr, testsets,
                           {{"map_lr", json(lr).dump()}});
      break;
    }
    case BaselineKind::Langevin: {
      LangevinPosterior q(cfg.model, cfg.baseline.mcmc);
      records = eval_model(cfg, "baseline", "langevin", q, nullptr, testsets, {});
      break;
    }
    case BaselineKind::Random: {
      PriorPosterior q(cfg.model);
      records = eval_model(cfg, "baseline", "random", q, nullptr, testsets, {});
      break;
    }
  }
  write_results(paths, records);
  write_meta(paths, cfg, nullptr, watch.seconds());
  return paths;
}

RunPaths cmd_misspec(const ExperimentConfig& cfg,
                     const std::vector<Source>& train_sources,
                     const std::vector<Source>& eval_sources) {
  cfg.validate();
  require(!train_sources.empty() && !eval_sources.empty(),
          "misspec: need at least one train and one eval source");
  if (cfg.train.objective == Objective::ForwardKl)
    for (Source s : train_sources)
      require(s == Source::Model,
              "forward_kl can only train on datasets sampled from the assumed "
              "probabilistic model");
  Stopwatch watch;
  RunPaths paths = make_paths(cfg);
  write_config(paths, cfg);

  ExperimentConfig eval_cfg = cfg;
  if (eval_cfg.eval.metrics.empty())
    eval_cfg.eval.metrics = cfg.model.is_classification()
                                ? std::vector<std::string>{"accuracy"}
                                : std::vector<std::string>{"predictive_l2"};

  std::vector<std::pair<Source, bool>> rows;  // (train source, switched)
  for (Source s : train_sources) rows.emplace_back(s, false);
  if (cfg.train.objective == Objective::ReverseKl)
    for (Source s : eval_sources) rows.emplace_back(s, true);

  std::vector<ResultRecord> records;
  for (const auto& [train_source, switched] : rows) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.generator.source = train_source;
    run_cfg.validate();
    AmortizedEstimator est = make_estimator(run_cfg);
    train(est, run_cfg.generator, run_cfg.train);
    EstimatorPosterior q(est);
    for (Source eval_source : eval_sources) {
      if (switched && eval_source != train_source) continue;
      // The primary source reuses the plain eval stream so misspec rows are
      // paired with cmd_eval / cmd_baseline runs of the same seed.
      const std::string tag = eval_source == cfg.generator.source
                                  ? "test"
                                  : "test/" + source_name(eval_source);
      std::vector<Dataset> testsets = make_test_datasets(eval_cfg, eval_source, tag);
      std::map<std::string, std::string> tags{
          {"train_source", source_name(train_source)},
          {"eval_source", source_name(eval_source)},
          {"switched", switched ? "true" : "false"}};
      auto recs = eval_model(eval_cfg, "misspec",
                             objective_name(cfg.train.objective), q, &est,
                             testsets, tags);
      records.insert(records.end(), recs.begin(), recs.end());
    }
  }
  write_results(paths, records);
  write_meta(paths, cfg, nullptr, watch.seconds());
  return paths;
}

namespace {

double tabular_predictive_value(const ModelSpec& spec, const Vec& theta,
                                const Dataset& test) {
  ThetaVector tv = make_theta(spec, theta);
  Vec pred = predict_mode_rows(spec, tv, test);
  auto rows = test.active_rows();
  double total = 0.0;
  if (spec.is_regression()) {
    for (size_t i = 0; i < rows.size(); ++i) {
      double diff = test.y[rows[i]] - pred[static_cast<Eigen::Index>(i)];
      total += diff * diff;
    }
    return total;
  }
  for (size_t i = 0; i < rows.size(); ++i)
    if (static_cast<int>(pred[static_cast<Eigen::Index>(i)]) == test.y_class[rows[i]])
      total += 1.0;
  return rows.empty() ? 0.0 : 100.0 * total / static_cast<double>(rows.size());
}

std::string csv_stem(const std::string& path) {
  return fs::path(path).stem().string();
}

}  // namespace

RunPaths cmd_tabular(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                     const std::vector<std::string>& csv_paths,
                     const TabularOptions& opts) {
  cfg.validate();
  require(!csv_paths.empty(), "tabular: no csv files given");
  require(!cfg.model.is_unsupervised(),
          "tabular requires a predictive model family");
  require(opts.folds >= 2 && opts.restarts >= 1 && opts.finetune_iters >= 0,
          "tabular: invalid options");
  Stopwatch watch;
  RunPaths paths = make_paths(cfg);
  write_config(paths, cfg);
  AmortizedEstimator est = load_estimator(cfg, checkpoint_path);
  const TargetKind kind = cfg.model.is_regression()
                              ? TargetKind::Regression
                              : TargetKind::BinaryClassification;
  if (kind == TargetKind::BinaryClassification)
    require(cfg.model.n_classes == 2, "tabular classification is binary");
  const std::string metric_name =
      cfg.model.is_regression() ? "predictive_l2" : "accuracy";

  std::string curves_path = (fs::path(cfg.output_dir) / "curves.csv").string();
  std::ofstream curves(curves_path);
  curves << "experiment,method,dataset,fold,iter,metric,value\n";

  std::vector<ResultRecord> records;
  for (const std::string& csv_path : csv_paths) {
    const std::string dataset_name = csv_stem(csv_path);
    Dataset raw = ingest_csv_raw(csv_path, kind);
    require(raw.d_max() <= cfg.model.d_max,
            "csv has more features than the model supports: " + csv_path);
    auto folds = kfold_split(raw, opts.folds, cfg.seed);

    Vec zero_shot(static_cast<Eigen::Index>(folds.size()));
    Vec zero_shot_prior(static_cast<Eigen::Index>(folds.size()));
    // method -> fold -> curve point -> (iter, objective sum, metric sum)
    struct CurvePoint {
      long iter;
      double objective = 0.0;
      double metric = 0.0;
    };
    std::map<std::string, std::vector<std::vector<CurvePoint>>> curve_acc;

    for (size_t f = 0; f < folds.size(); ++f) {
      Dataset train_fold = folds[f].first;
      Dataset test_fold = folds[f].second;
      normalize_folds(kind, train_fold, test_fold);
      train_fold = embed_variable_dim(train_fold, cfg.model.d_max);
      test_fold = embed_variable_dim(test_fold, cfg.model.d_max);

      Rng fold_rng = Rng(cfg.seed).fork("tabular").fork(dataset_name).fork(
          static_cast<uint64_t>(f));

      // Zero-shot predictive quality of raw posterior samples.
      Rng zs_rng = fold_rng.fork("zeroshot");
      Mat samples = est.sample_logq(train_fold, opts.restarts, zs_rng).thetas;
      double acc = 0.0;
      for (int s = 0; s < opts.restarts; ++s)
        acc += tabular_predictive_value(cfg.model, samples.row(s).transpose(),
                                        test_fold);
      zero_shot[static_cast<Eigen::Index>(f)] = acc / opts.restarts;

      Rng prior_rng = fold_rng.fork("zeroshot_prior");
      double acc_prior = 0.0;
      for (int s = 0; s < opts.restarts; ++s) {
        Vec theta = prior_rng.normal_vec(theta_dim(cfg.model));
        acc_prior += tabular_predictive_value(cfg.model, theta, test_fold);
      }
      zero_shot_prior[static_cast<Eigen::Index>(f)] = acc_prior / opts.restarts;

      // Finetune arms; curves averaged over restarts.
      const long stride =
          std::max<long>(1, opts.finetune_iters / std::max(1, opts.curve_points));
      for (const char* arm_name : {"amortized", "prior", "xavier"}) {
        const std::string arm = arm_name;
        auto& fold_curves = curve_acc[arm];
        if (fold_curves.size() <= f) fold_curves.resize(folds.size());
        auto& points = fold_curves[f];
        for (int r = 0; r < opts.restarts; ++r) {
          Rng arm_rng = fold_rng.fork(arm).fork(static_cast<uint64_t>(r));
          MapInit init = MapInit::PriorSample;
          Vec given;
          const Vec* given_ptr = nullptr;
          if (arm == "amortized") {
            given = samples.row(r).transpose();
            init = MapInit::Given;
            given_ptr = &given;
          } else if (arm == "xavier") {
            init = MapInit::Xavier;
          }
          size_t next_point = 0;
          MapCallback cb = [&](long it, const Vec& theta, double lj) {
            if (it % stride != 0 && it != opts.finetune_iters - 1) return;
            if (points.size() <= next_point)
              points.push_back({it, 0.0, 0.0});
            points[next_point].iter = it;
            points[next_point].objective += lj;
            points[next_point].metric +=
                tabular_predictive_value(cfg.model, theta, test_fold);
            ++next_point;
          };
          map_optimize(cfg.model, train_fold, init, given_ptr, opts.finetune_lr,
                       opts.finetune_iters, arm_rng, cb);
        }
        for (auto& pt : points) {
          pt.objective /= opts.restarts;
          pt.metric /= opts.restarts;
        }
      }
    }

    for (const auto& [arm, fold_curves] : curve_acc)
      for (size_t f = 0; f < fold_curves.size(); ++f)
        for (const auto& pt : fold_curves[f]) {
          curves << cfg.name << ',' << arm << ',' << dataset_name << ',' << f << ','
                 << pt.iter << ",objective," << json(pt.objective).dump() << "\n";
          curves << cfg.name << ',' << arm << ',' << dataset_name << ',' << f << ','
                 << pt.iter << ',' << metric_name << ','
                 << json(pt.metric).dump() << "\n";
        }

    ResultRecord zs;
    zs.experiment = cfg.name;
    zs.command = "tabular";
    zs.method = "amortized_zero_shot";
    zs.model = family_name(cfg.model.family);
    zs.report = make_report(metric_name, zero_shot, opts.restarts);
    zs.tags = {{"dataset", dataset_name}};
    records.push_back(zs);

    ResultRecord zp = zs;
    zp.method = "random_zero_shot";
    zp.report = make_report(metric_name, zero_shot_prior, opts.restarts);
    records.push_back(zp);
  }
  write_results(paths, records);
  write_meta(paths, cfg, &est.params(), watch.seconds());
  return paths;
}

std::string emit_plotdata(const std::vector<std::string>& results_paths,
                          const std::string& out_csv) {
  std::ofstream out(out_csv);
  require(out.good(), "cannot open plotdata output: " + out_csv);
  out << "experiment,method,dataset,fold,iter,metric,value\n";
  for (const std::string& path : results_paths) {
    std::ifstream in(path);
    require(in.good(), "cannot open results file: " + path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      const std::string dataset =
          j.contains("dataset") ? j["dataset"].get<std::string>()
          : j.contains("eval_source") ? j["eval_source"].get<std::string>()
                                      : "";
      const std::string fold = j.contains("fold") ? j["fold"].get<std::string>() : "";
      const long iter = j.contains("iter") ? j["iter"].get<long>() : -1;
      out << j["experiment"].get<std::string>() << ','
          << j["method"].get<std::string>() << ',' << dataset << ',' << fold << ','
          << iter << ',' << j["metric"].get<std::string>() << ','
          << j["mean"].dump() << "\n";
    }
  }
  return out_csv;
}

}  // namespace ampe
