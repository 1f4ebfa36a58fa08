#include "ampe/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>

namespace ampe {

std::string source_name(Source s) {
  switch (s) {
    case Source::Model: return "model";
    case Source::GpRbf: return "gp_rbf";
    case Source::NlrFixed: return "nlr_fixed";
    case Source::Csv: return "csv";
  }
  return "?";
}

Source source_from_name(const std::string& s) {
  if (s == "model") return Source::Model;
  if (s == "gp_rbf") return Source::GpRbf;
  if (s == "nlr_fixed") return Source::NlrFixed;
  if (s == "csv") return Source::Csv;
  throw ValidationError("unknown generator source: " + s);
}

void GeneratorConfig::validate(const ModelSpec& spec) const {
  require(n_lo >= 1 && n_lo <= n_hi && n_hi <= n_max,
          "generator: need 1 <= n_lo <= n_hi <= n_max");
  require(batch_size >= 1, "generator.batch_size must be >= 1");
  if (dim_mode == DimMode::Fixed) {
    require(dim >= 0 && dim <= spec.d_max, "generator.dim out of range");
  } else {
    require(dim >= 1 && dim <= spec.d_max, "generator.dim (cap) out of range");
  }
  if (source == Source::GpRbf)
    require(spec.is_regression() && (dim_mode != DimMode::Fixed || dim <= 1),
            "gp_rbf generates 1-D regression data");
  if (source == Source::NlrFixed)
    require(spec.is_regression(), "nlr_fixed generates regression data");
  if (source == Source::Csv)
    throw ValidationError(
        "csv sources are not streamable; use the tabular command");
}

int sample_cardinality(const GeneratorConfig& cfg, Rng& rng) {
  return rng.uniform_int(cfg.n_lo, cfg.n_hi);
}

int sample_dim(const GeneratorConfig& cfg, const ModelSpec& spec, Rng& rng) {
  if (cfg.dim_mode == DimMode::Fixed) return cfg.dim == 0 ? spec.d_max : cfg.dim;
  return rng.uniform_int(1, cfg.dim);
}

ModelSpec nlr_fixed_spec(int d_max) {
  ModelSpec spec;
  spec.family = Family::NLR;
  spec.d_max = d_max;
  spec.hidden_layers = 1;
  spec.hidden_units = 32;
  spec.activation = Activation::Tanh;
  spec.sigma2 = 0.25;
  return spec;
}

DatasetBatch generate_batch(const GeneratorConfig& cfg, const ModelSpec& spec,
                            Rng rng) {
  cfg.validate(spec);
  DatasetBatch batch;
  batch.datasets.reserve(cfg.batch_size);
  if (cfg.source == Source::Model) batch.thetas.reserve(cfg.batch_size);
  for (int slot = 0; slot < cfg.batch_size; ++slot) {
    Rng r = rng.fork(static_cast<uint64_t>(slot));
    const int d = sample_dim(cfg, spec, r);
    const int n = sample_cardinality(cfg, r);
    switch (cfg.source) {
      case Source::Model: {
        ThetaVector theta = sample_theta(spec, r);
        batch.datasets.push_back(sample_dataset_masked(spec, theta, n, d, r,
                                                       cfg.x_dist, cfg.n_max));
        batch.thetas.push_back(std::move(theta));
        break;
      }
      case Source::GpRbf: {
        Dataset low = gp_dataset(n, r, cfg.x_dist, cfg.n_max);
        batch.datasets.push_back(spec.d_max == 1 ? std::move(low)
                                                 : embed_variable_dim(low, spec.d_max));
        break;
      }
      case Source::NlrFixed: {
        ModelSpec gen = nlr_fixed_spec(d);
        ThetaVector theta = sample_theta(gen, r);
        Dataset low = sample_dataset(gen, theta, n, r, cfg.x_dist, cfg.n_max);
        batch.datasets.push_back(d == spec.d_max ? std::move(low)
                                                 : embed_variable_dim(low, spec.d_max));
        break;
      }
      case Source::Csv:
        break;  // rejected by validate()
    }
  }
  return batch;
}

Dataset embed_variable_dim(const Dataset& data_low, int d_max) {
  require(d_max >= data_low.d_max(), "embed_variable_dim: d_max too small");
  if (d_max == data_low.d_max()) return data_low;
  Dataset out = data_low;
  out.x = Mat::Zero(data_low.n_max(), d_max);
  out.x.leftCols(data_low.d_max()) = data_low.x;
  out.feat_mask.assign(d_max, 0);
  for (int j = 0; j < data_low.d_max(); ++j) out.feat_mask[j] = data_low.feat_mask[j];
  return out;
}

double gp_rbf_kernel(double a, double b) {
  const double d = a - b;
  return std::exp(-0.5 * d * d);
}

Dataset gp_dataset(int n, Rng& rng, XDist x_dist, int n_max) {
  require(n >= 0 && n <= n_max, "gp_dataset: n out of range");
  Dataset data;
  data.x = Mat::Zero(n_max, 1);
  data.y = Vec::Zero(n_max);
  data.obs_mask.assign(n_max, 0);
  data.feat_mask.assign(1, 1);
  data.n_active = n;
  data.d_active = 1;
  if (n == 0) return data;

  Vec xs(n);
  for (int i = 0; i < n; ++i)
    xs[i] = x_dist == XDist::StdNormal ? rng.normal() : rng.uniform(-1.0, 1.0);

  Mat gram(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) gram(i, j) = gp_rbf_kernel(xs[i], xs[j]);

  // The paper's jitter is 1e-6; escalate twice before giving up, which only
  // triggers on (near-)duplicate inputs.
  Eigen::LLT<Mat> llt;
  double noise = 1e-6;
  for (int attempt = 0; attempt < 3; ++attempt) {
    Mat k = gram + noise * Mat::Identity(n, n);
    llt.compute(k);
    if (llt.info() == Eigen::Success) break;
    noise *= 10.0;
  }
  require(llt.info() == Eigen::Success,
          "gp_dataset: Cholesky failed even with escalated jitter");

  Vec xi = rng.normal_vec(n);
  Vec eps = rng.normal_vec(n);
  Vec y = llt.matrixL() * xi + std::sqrt(1e-6) * eps;
  for (int i = 0; i < n; ++i) {
    data.x(i, 0) = xs[i];
    data.y[i] = y[i];
    data.obs_mask[i] = 1;
  }
  return data;
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable parse_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open csv: " + path);
  CsvTable table;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "csv has no header row: " + path);
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  require(table.header.size() >= 2, "csv needs at least one feature and a target");
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &pos);
      } catch (const std::exception&) {
        throw ValidationError("non-numeric cell at line " + std::to_string(line_no) +
                              " in " + path);
      }
      while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos])))
        ++pos;
      require(pos == cell.size(), "non-numeric cell at line " +
                                      std::to_string(line_no) + " in " + path);
      require(std::isfinite(v), "NaN or infinite cell at line " +
                                    std::to_string(line_no) + " in " + path);
      row.push_back(v);
    }
    require(row.size() == table.header.size(),
            "ragged csv row at line " + std::to_string(line_no) + " in " + path);
    table.rows.push_back(std::move(row));
  }
  require(!table.rows.empty(), "csv has no data rows: " + path);
  // Mirrors the benchmark filter: at most 2000 examples and 100 features.
  require(table.rows.size() <= 2000, "csv rejected: more than 2000 rows");
  require(table.header.size() - 1 <= 100, "csv rejected: more than 100 features");
  return table;
}

Dataset table_to_dataset(const CsvTable& table, TargetKind kind) {
  const int n = static_cast<int>(table.rows.size());
  const int d = static_cast<int>(table.header.size()) - 1;
  Dataset data;
  data.x = Mat::Zero(n, d);
  data.obs_mask.assign(n, 1);
  data.feat_mask.assign(d, 1);
  data.n_active = n;
  data.d_active = d;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) data.x(i, j) = table.rows[i][j];
  if (kind == TargetKind::Regression) {
    data.y = Vec::Zero(n);
    for (int i = 0; i < n; ++i) data.y[i] = table.rows[i][d];
  } else {
    std::vector<double> labels;
    for (int i = 0; i < n; ++i) {
      double v = table.rows[i][d];
      if (std::find(labels.begin(), labels.end(), v) == labels.end())
        labels.push_back(v);
    }
    require(labels.size() == 2, "binary classification target must have 2 classes");
    std::sort(labels.begin(), labels.end());
    data.y_class.assign(n, 0);
    for (int i = 0; i < n; ++i)
      data.y_class[i] = table.rows[i][d] == labels[0] ? 0 : 1;
  }
  return data;
}

// Population statistics; a constant column keeps sd = 1 and centers to zero.
void zscore_columns(Mat& x, const Vec& mean, const Vec& sd) {
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    x.col(j) = (x.col(j).array() - mean[j]) / sd[j];
}

void column_stats(const Mat& x, Vec& mean, Vec& sd) {
  mean = x.colwise().mean();
  sd.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double var = (x.col(j).array() - mean[j]).square().mean();
    sd[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
}

}  // namespace

Dataset ingest_csv_raw(const std::string& path, TargetKind kind) {
  return table_to_dataset(parse_csv(path), kind);
}

Dataset ingest_csv(const std::string& path, TargetKind kind) {
  Dataset data = ingest_csv_raw(path, kind);
  Vec mean, sd;
  column_stats(data.x, mean, sd);
  zscore_columns(data.x, mean, sd);
  if (kind == TargetKind::Regression) {
    double m = data.y.mean();
    double var = (data.y.array() - m).square().mean();
    double s = var > 0.0 ? std::sqrt(var) : 1.0;
    data.y = (data.y.array() - m) / s;
  }
  return data;
}

std::vector<std::pair<Dataset, Dataset>> kfold_split(const Dataset& data, int k,
                                                     uint64_t seed) {
  require(k >= 2, "kfold_split: k must be >= 2");
  const int n = data.n_max();
  require(data.n_active == n, "kfold_split expects a fully active dataset");
  require(n >= k, "kfold_split: fewer rows than folds");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, Rng::fnv1a64("kfold"));
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(0, i)]);

  const int base = n / k, extra = n % k;
  std::vector<std::pair<Dataset, Dataset>> folds;
  int pos = 0;
  const bool is_reg = data.y.size() > 0;
  for (int f = 0; f < k; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    std::vector<uint8_t> in_test(n, 0);
    for (int i = pos; i < pos + size; ++i) in_test[order[i]] = 1;
    pos += size;

    auto build = [&](bool test) {
      Dataset out;
      std::vector<int> rows;
      for (int i = 0; i < n; ++i)
        if ((in_test[i] != 0) == test) rows.push_back(i);
      const int m = static_cast<int>(rows.size());
      out.x = Mat::Zero(m, data.d_max());
      out.obs_mask.assign(m, 1);
      out.feat_mask = data.feat_mask;
      out.n_active = m;
      out.d_active = data.d_active;
      if (is_reg) out.y = Vec::Zero(m);
      if (!data.y_class.empty()) out.y_class.assign(m, 0);
      for (int i = 0; i < m; ++i) {
        out.x.row(i) = data.x.row(rows[i]);
        if (is_reg) out.y[i] = data.y[rows[i]];
        if (!data.y_class.empty()) out.y_class[i] = data.y_class[rows[i]];
      }
      return out;
    };
    folds.emplace_back(build(false), build(true));
  }
  return folds;
}

void normalize_folds(TargetKind kind, Dataset& train, Dataset& test) {
  Vec mean, sd;
  column_stats(train.x, mean, sd);
  zscore_columns(train.x, mean, sd);
  zscore_columns(test.x, mean, sd);
  if (kind == TargetKind::Regression) {
    double m = train.y.mean();
    double var = (train.y.array() - m).square().mean();
    double s = var > 0.0 ? std::sqrt(var) : 1.0;
    train.y = (train.y.array() - m) / s;
    test.y = (test.y.array() - m) / s;
  }
}

}  // namespace ampe
