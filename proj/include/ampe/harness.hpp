#pragma once

#include <map>
#include <string>
#include <vector>

#include "ampe/config.hpp"
#include "ampe/metrics.hpp"

namespace ampe {

// One emitted result line; serialized as a JSONL record and summarized into
// CSV. The optional tags locate the record inside cross-source or per-fold
// experiments.
struct ResultRecord {
  std::string experiment;
  std::string command;
  std::string method;
  std::string model;
  MetricReport report;
  std::map<std::string, std::string> tags;  // train_source, eval_source, dataset, fold, ...
  long iter = -1;
};

struct RunPaths {
  std::string output_dir;
  std::string config_path;
  std::string checkpoint_path;
  std::string trace_path;
  std::string results_path;
  std::string summary_path;
  std::string meta_path;
};

// The fixed test stream: dataset t derives from seed -> "test" -> t, so every
// command evaluating under the same seed sees identical datasets.
std::vector<Dataset> make_test_datasets(const ExperimentConfig& cfg);
std::vector<Dataset> make_test_datasets(const ExperimentConfig& cfg,
                                        Source source_override,
                                        const std::string& stream_tag);

uint64_t batch_content_hash(const std::vector<Dataset>& datasets);

AmortizedEstimator make_estimator(const ExperimentConfig& cfg);
AmortizedEstimator load_estimator(const ExperimentConfig& cfg,
                                  const std::string& checkpoint_path);

// Trains per the config; writes the resolved config, the loss trace (JSONL
// records {iter, beta, loss}), periodic and final checkpoints, and the run
// metadata.
RunPaths cmd_train(const ExperimentConfig& cfg);

// Evaluates a checkpoint on the fixed test stream with the configured
// metrics; writes results.jsonl and summary.csv.
RunPaths cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path);

enum class BaselineKind { Analytic, Map, Langevin, Random };
BaselineKind baseline_from_name(const std::string& s);

// Same test stream as cmd_eval, enabling paired comparisons.
RunPaths cmd_baseline(const ExperimentConfig& cfg, BaselineKind kind);

// Trains one estimator per training source and evaluates every model on
// every evaluation source; reverse-KL-only "+ switched data" rows train
// directly on each evaluation source.
RunPaths cmd_misspec(const ExperimentConfig& cfg,
                     const std::vector<Source>& train_sources,
                     const std::vector<Source>& eval_sources);

// Per CSV: ingest, 5-fold split with per-training-fold normalization,
// zero-shot metrics from amortized samples, and finetuning learning curves
// for amortized / prior / xavier initializations.
struct TabularOptions {
  int folds = 5;
  int restarts = 25;
  long finetune_iters = 400;
  double finetune_lr = 3e-3;
  int curve_points = 40;
};
RunPaths cmd_tabular(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                     const std::vector<std::string>& csv_paths,
                     const TabularOptions& opts = {});

// Collects results.jsonl records into one tidy CSV with columns
// {experiment, method, dataset, fold, iter, metric, value}.
std::string emit_plotdata(const std::vector<std::string>& results_paths,
                          const std::string& out_csv);

void write_results(const RunPaths& paths, const std::vector<ResultRecord>& records);

}  // namespace ampe
