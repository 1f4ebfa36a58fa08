#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ampe/common.hpp"
#include "ampe/rng.hpp"
#include "ampe/tape.hpp"

namespace ampe {

// Gradient buffers aligned with a ParamStore's entry order.
struct Grads {
  std::vector<Mat> g;

  void add_scaled(const Grads& other, double s) {
    for (size_t i = 0; i < g.size(); ++i) g[i] += s * other.g[i];
  }
  void scale(double s) {
    for (auto& m : g) m *= s;
  }
  void set_zero() {
    for (auto& m : g) m.setZero();
  }
};

// Named tensors plus Adam state and an iteration counter. Entry order is
// insertion order and fixed for the life of the store, which keeps both the
// optimizer and the checkpoint byte layout stable.
class ParamStore {
 public:
  Mat& add(const std::string& name, Mat init);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Mat& value(const std::string& name);
  const Mat& value(const std::string& name) const;
  int count() const { return static_cast<int>(entries_.size()); }
  const std::string& name(int i) const { return entries_[i].name; }
  Mat& value_at(int i) { return entries_[i].value; }
  const Mat& value_at(int i) const { return entries_[i].value; }
  int index_of(const std::string& name) const;
  long num_scalars() const;

  // Integer side channel (e.g. flow permutations); checkpointed verbatim.
  std::vector<int64_t>& constant(const std::string& name) { return constants_[name]; }
  const std::map<std::string, std::vector<int64_t>>& constants() const {
    return constants_;
  }

  Grads zero_grads() const;

  // One Adam update; beta1/beta2/eps fixed at (0.9, 0.999, 1e-8).
  void adam_step(const Grads& grads, double lr);
  int64_t iteration() const { return step_; }

  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

  uint64_t content_hash() const;

 private:
  struct Entry {
    std::string name;
    Mat value;
    Mat m, v;
    bool adam_ready = false;
  };
  std::vector<Entry> entries_;
  std::map<std::string, int> index_;
  std::map<std::string, std::vector<int64_t>> constants_;
  int64_t step_ = 0;
};

// Uniform on +-sqrt(6 / (fan_in + fan_out)) with fan_out = rows,
// fan_in = cols.
Mat xavier_init(int rows, int cols, Rng& rng);

// Binds every parameter onto a tape as a differentiable leaf.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store);
  Var operator[](const std::string& name) const;
  // Adds d(loss)/d(param) into `out` after tape.backward().
  void accumulate_grads(Tape& tape, Grads& out) const;

 private:
  const ParamStore* store_;
  std::vector<Var> vars_;
  const std::map<std::string, int>* index_ = nullptr;
  std::map<std::string, int> names_;
};

struct GradReport {
  std::map<std::string, double> max_rel_err;
  double worst = 0.0;
};

// Central finite differences with step h against the analytic gradients the
// callback reports. The callback must be deterministic: it is invoked many
// times at perturbed parameter values.
GradReport check_gradients(
    const std::function<double(ParamStore&, Grads*)>& loss_fn, ParamStore& params,
    double h);

}  // namespace ampe
