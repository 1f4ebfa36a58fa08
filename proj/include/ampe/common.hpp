#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ampe {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Raised on malformed configuration or contract violations; the CLI maps it
// to exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a training run or sampler produces a non-finite value; the CLI
// maps it to exit code 3.
struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& what, long at_iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(at_iteration) + ")"),
        iteration(at_iteration) {}
  long iteration;
};

// Accumulates in ascending value order, so the total depends only on the
// multiset of contributions and not on how the caller happened to order them.
inline double stable_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc;
}

inline void require(bool cond, const std::string& message) {
  if (!cond) throw ValidationError(message);
}

}  // namespace ampe
