// tplda/common.h

// Copyright 2026  tplda authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef TPLDA_COMMON_H_
#define TPLDA_COMMON_H_

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace tplda {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// A data or model file is malformed, truncated, or inconsistent.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation cannot continue for numerical reasons (non-finite
/// likelihood, singular statistics that regularization could not rescue).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TPLDA_ASSERT(cond)                                              \
  do {                                                                  \
    if (!(cond))                                                        \
      throw std::logic_error(std::string("assertion failed: ") + #cond \
                             + " (" + __FILE__ + ":"                    \
                             + std::to_string(__LINE__) + ")");         \
  } while (false)

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// log(sum(exp(v))) without overflow; -inf for an empty span.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  double m = v[0];
  for (double x : v)
    if (x > m) m = x;
  if (!std::isfinite(m)) return m;  // all -inf, or a NaN/inf poisons the sum
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// Seeded random source with engine-independent output mapping, so that
/// identical seeds reproduce identical streams across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t raw() { return engine_(); }

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double gauss() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  VectorXd gauss_vector(Eigen::Index n) {
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = gauss();
    return v;
  }

  /// Random direction (unit Euclidean norm).
  VectorXd unit_vector(Eigen::Index n) {
    VectorXd v = gauss_vector(n);
    double nrm = v.norm();
    while (nrm < 1e-12) {  // astronomically unlikely; retry
      v = gauss_vector(n);
      nrm = v.norm();
    }
    return v / nrm;
  }

  /// Index sampled with probability proportional to probs (nonnegative).
  int categorical(const VectorXd& probs) {
    double total = probs.sum();
    TPLDA_ASSERT(total > 0.0);
    double u = uniform() * total;
    double c = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      c += probs(i);
      if (u < c) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size() - 1);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tplda

#endif  // TPLDA_COMMON_H_
