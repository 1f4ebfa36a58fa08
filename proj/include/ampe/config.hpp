#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ampe/baselines.hpp"
#include "ampe/objectives.hpp"

namespace ampe {

struct EvalConfig {
  int posterior_samples = 25;  // S
  int test_datasets = 100;     // T
  std::vector<std::string> metrics;  // empty = family default
  int sym_kl_mc_samples = 2048;
  int w2_samples = 256;
};

struct BaselineConfig {
  double map_lr = 0.001;
  long map_iters = 1000;
  std::vector<double> map_lr_grid = {0.01, 0.003, 0.001, 0.0003, 0.0001, 0.00003};
  bool map_grid_search = false;
  McmcConfig mcmc;
};

struct ExperimentConfig {
  std::string name = "experiment";
  uint64_t seed = 0;
  std::string output_dir = "out";
  ModelSpec model;
  GeneratorConfig generator;
  EncoderConfig encoder;
  HeadConfig head;
  TrainConfig train;
  EvalConfig eval;
  BaselineConfig baseline;

  void validate() const;
  std::vector<std::string> effective_metrics() const;
};

// Parses a config JSON document; unknown keys are rejected with their path.
// A "preset" key merges the named preset underneath the explicit fields.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path_or_preset);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

std::vector<std::string> preset_names();
bool is_preset(const std::string& name);
nlohmann::json preset_json(const std::string& name);

// Uniformly divides iteration counts (training, warmup, MAP, MCMC) for
// desk-scale runs; presets carry the full-scale numbers.
void apply_scale_divisor(ExperimentConfig& cfg, long divisor);

// FNV-1a hash of the canonically serialized config (object keys sorted), so
// the hash is stable under field reordering in the source file.
uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace ampe
