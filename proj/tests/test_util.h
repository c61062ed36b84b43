// tests/test_util.h

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

#ifndef TPLDA_TESTS_TEST_UTIL_H_
#define TPLDA_TESTS_TEST_UTIL_H_

// Shared fixtures and independent oracle implementations. The oracles
// deliberately avoid the library's Woodbury/log-sum-exp code paths: dense
// Gaussians go through Cholesky factorizations of the full covariance,
// quadrature through Golub-Welsch nodes, auxiliaries through their textbook
// definitions.

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "tplda/data.h"
#include "tplda/model.h"
#include "tplda/training.h"

namespace tplda {
namespace testutil {

// ---------------------------------------------------------------------------
// oracle densities

/// log N(y; mean, diag(var)) by the direct formula.
inline double oracle_log_gauss_diag(const VectorXd& y, const VectorXd& mean,
                                    const VectorXd& var) {
  const Eigen::ArrayXd r = (y - mean).array();
  return -0.5
         * (y.size() * kLog2Pi + var.array().log().sum()
            + (r.square() / var.array()).sum());
}

/// log N(y; mean, cov) through a dense Cholesky factorization.
inline double oracle_log_gauss_full(const VectorXd& y, const VectorXd& mean,
                                    const MatrixXd& cov) {
  const Eigen::LLT<MatrixXd> llt(cov);
  const VectorXd r = y - mean;
  const VectorXd w = llt.matrixL().solve(r);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (y.size() * kLog2Pi + logdet + w.squaredNorm());
}

/// Nodes and weights for n-point Gauss-Hermite quadrature of
/// integral f(x) exp(-x^2) dx, via the symmetric tridiagonal Jacobi matrix.
struct GaussHermite {
  VectorXd nodes;
  VectorXd weights;

  explicit GaussHermite(int n) {
    MatrixXd jacobi = MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) {
      const double off = std::sqrt((i + 1) / 2.0);
      jacobi(i, i + 1) = off;
      jacobi(i + 1, i) = off;
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(jacobi);
    nodes = eig.eigenvalues();
    weights.resize(n);
    const double sqrt_pi = std::sqrt(M_PI);
    for (int i = 0; i < n; ++i) {
      const double v0 = eig.eigenvectors()(0, i);
      weights(i) = sqrt_pi * v0 * v0;
    }
  }

  /// log integral f(x) N(x; 0, 1) dx given log f at arbitrary points.
  template <class LogF>
  double log_integral_against_standard_normal(const LogF& log_f) const {
    std::vector<double> terms(nodes.size());
    for (Eigen::Index i = 0; i < nodes.size(); ++i)
      terms[i] = std::log(weights(i) / std::sqrt(M_PI))
                 + log_f(std::sqrt(2.0) * nodes(i));
    return log_sum_exp(terms);
  }
};

// ---------------------------------------------------------------------------
// oracle auxiliary objectives (textbook forms, independent of training.cc)

inline double oracle_aux_u(const ComponentAccs& acc, const VectorXd& lambda,
                           const MatrixXd& u) {
  const MatrixXd inner =
      -0.5 * u * acc.sum_xx * u.transpose() + acc.cross_u * u.transpose();
  return (lambda.cwiseInverse().asDiagonal() * inner).trace();
}

inline double oracle_aux_g(const ComponentAccs& acc, const VectorXd& lambda,
                           const MatrixXd& g) {
  const MatrixXd inner =
      -0.5 * g * acc.sum_zz * g.transpose() + acc.cross_g * g.transpose();
  return (lambda.cwiseInverse().asDiagonal() * inner).trace();
}

inline double oracle_aux_b(const ComponentAccs& acc, const VectorXd& lambda,
                           const VectorXd& b) {
  return (b.array() * acc.sum_b.array() / lambda.array()).sum()
         - 0.5 * acc.gamma * (b.array().square() / lambda.array()).sum();
}

inline double oracle_aux_lambda(const ComponentAccs& acc,
                                const VectorXd& lambda) {
  return -0.5
         * (acc.gamma * lambda.array().log().sum()
            + (acc.lambda_stat.array() / lambda.array()).sum());
}

/// Max-abs central-difference gradient of fn at x, with per-coordinate
/// steps scaled to the coordinate magnitude.
template <class Fn>
double max_abs_numeric_gradient(const Fn& fn, VectorXd x) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-5 * (1.0 + std::abs(x(i)));
    const double saved = x(i);
    x(i) = saved + h;
    const double up = fn(x);
    x(i) = saved - h;
    const double down = fn(x);
    x(i) = saved;
    worst = std::max(worst, std::abs(up - down) / (2.0 * h));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// fixtures

/// Standard synthetic fixture: J=10, K=2, M=4, d=10, p=q=3 with
/// well-separated components and states.
inline Hyperparams fixture_hyper() { return Hyperparams{10, 3, 3, 4, 10}; }

inline TiedPldaModel fixture_model(uint64_t seed = 2024) {
  return random_model(fixture_hyper(), 2, seed);
}

/// Per-state single diagonal Gaussian baseline classifier.
struct DiagGaussianBaseline {
  MatrixXd means;  ///< J x d
  MatrixXd vars;   ///< J x d

  DiagGaussianBaseline(const FeatureMatrix& feats, const LabelSequence& labels,
                       int num_states) {
    const Eigen::Index d = feats.cols();
    means = MatrixXd::Zero(num_states, d);
    vars = MatrixXd::Zero(num_states, d);
    VectorXd counts = VectorXd::Zero(num_states);
    for (int64_t t = 0; t < feats.rows(); ++t) {
      const int j = static_cast<int>(labels.hard_state(t));
      counts(j) += 1.0;
      means.row(j) += feats.row(t);
    }
    for (int j = 0; j < num_states; ++j) means.row(j) /= counts(j);
    for (int64_t t = 0; t < feats.rows(); ++t) {
      const int j = static_cast<int>(labels.hard_state(t));
      vars.row(j) +=
          (feats.row(t) - means.row(j)).array().square().matrix();
    }
    for (int j = 0; j < num_states; ++j)
      vars.row(j) = (vars.row(j) / counts(j)).cwiseMax(1e-8);
  }

  int classify(const VectorXd& y) const {
    int best = 0;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < means.rows(); ++j) {
      const double ll = oracle_log_gauss_diag(y, means.row(j).transpose(),
                                              vars.row(j).transpose());
      if (ll > best_ll) {
        best_ll = ll;
        best = j;
      }
    }
    return best;
  }

  double accuracy(const FeatureMatrix& feats,
                  const LabelSequence& labels) const {
    int64_t correct = 0;
    for (int64_t t = 0; t < feats.rows(); ++t)
      if (classify(feats.row(t).transpose())
          == static_cast<int>(labels.hard_state(t)))
        ++correct;
    return static_cast<double>(correct) / static_cast<double>(feats.rows());
  }
};

/// Unique temp directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path()
            / ("tplda_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  TPLDA_ASSERT(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace testutil
}  // namespace tplda

#endif  // TPLDA_TESTS_TEST_UTIL_H_
