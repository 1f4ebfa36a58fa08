#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ampe/model.hpp"

namespace ampe {

enum class Source { Model, GpRbf, NlrFixed, Csv };
enum class DimMode { Fixed, UniformUpTo };
enum class TargetKind { Regression, BinaryClassification };

std::string source_name(Source s);
Source source_from_name(const std::string& s);

// Describes the dataset-generating distribution: ancestral sampling from the
// assumed model, one of the misspecification generators, or a local CSV.
struct GeneratorConfig {
  Source source = Source::Model;
  std::string csv_path;
  int n_lo = 64, n_hi = 128;
  XDist x_dist = XDist::StdNormal;
  DimMode dim_mode = DimMode::Fixed;
  int dim = 0;  // Fixed: the dimension (0 = spec.d_max); UniformUpTo: the cap
  int batch_size = 128;
  int n_max = 128;

  void validate(const ModelSpec& spec) const;
};

struct DatasetBatch {
  std::vector<Dataset> datasets;
  // Generating parameters, index-aligned; present only for Source::Model.
  std::vector<ThetaVector> thetas;

  bool has_thetas() const { return !thetas.empty(); }
};

int sample_cardinality(const GeneratorConfig& cfg, Rng& rng);
int sample_dim(const GeneratorConfig& cfg, const ModelSpec& spec, Rng& rng);

// One batch of datasets; slot i draws from rng.fork(i), so the batch is
// reproducible under any parallel schedule.
DatasetBatch generate_batch(const GeneratorConfig& cfg, const ModelSpec& spec,
                            Rng rng);

// Zero-pads a fully-active low-dimensional dataset out to d_max columns.
Dataset embed_variable_dim(const Dataset& data_low, int d_max);

// Draws a 1-D regression dataset from a zero-mean GP with unit-lengthscale
// RBF kernel and 1e-6 observation noise.
Dataset gp_dataset(int n, Rng& rng, XDist x_dist = XDist::StdNormal, int n_max = 128);

double gp_rbf_kernel(double a, double b);

// The fixed misspecification network: 1 hidden layer, 32 tanh units,
// sigma2 = 0.25.
ModelSpec nlr_fixed_spec(int d_max);

// CSV contract: header row, comma separated, '.' decimals, final column is
// the target. Rejects files over 2000 rows or 100 features, non-numeric
// cells and NaNs. Features are z-scored per column with population standard
// deviation (constant columns become all-zero); regression targets are
// z-scored, binary classification targets must be two distinct labels and
// are mapped to {0, 1}.
Dataset ingest_csv(const std::string& path, TargetKind target_kind);

// Same parsing and filtering, no normalization; the tabular pipeline applies
// per-training-fold statistics instead.
Dataset ingest_csv_raw(const std::string& path, TargetKind target_kind);

// Deterministic shuffled k-fold partition; fold sizes differ by at most one,
// with the remainder going to the leading folds.
std::vector<std::pair<Dataset, Dataset>> kfold_split(const Dataset& data, int k,
                                                     uint64_t seed);

// Z-scores train and test folds using statistics of the train fold only.
// Classification targets are left untouched; regression targets share the
// train-fold target statistics.
void normalize_folds(TargetKind kind, Dataset& train, Dataset& test);

}  // namespace ampe
