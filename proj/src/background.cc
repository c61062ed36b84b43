// tplda/background.cc

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

#include "tplda/background.h"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "tplda/inference.h"
#include "tplda/io.h"

namespace tplda {

namespace {

constexpr char kBgMagic[8] = {'P', 'L', 'D', 'A', 'B', 'G', 'M', '1'};
constexpr uint32_t kBgVersion = 1;

/// Marginal-density evaluation state for one factor analyser.
struct FaCache {
  VectorXd noise_inv;
  WoodburyFactor wood;
  double log_norm = 0.0;
  double log_weight = 0.0;
  MatrixXd v_inv;  ///< factor posterior covariance, r x r
  MatrixXd beta;   ///< r x d, posterior mean projection V^{-1} W^T psi^{-1}

  explicit FaCache(const FaComponent& c) {
    noise_inv = c.noise.cwiseInverse();
    wood = woodbury(c.loading, c.noise);
    log_norm = -0.5 * (c.mean.size() * kLog2Pi + wood.logdet);
    log_weight = c.weight > 0.0
                     ? std::log(c.weight)
                     : -std::numeric_limits<double>::infinity();
    const MatrixXd wt_ninv = c.loading.transpose() * noise_inv.asDiagonal();
    const MatrixXd v = MatrixXd::Identity(c.loading.cols(), c.loading.cols())
                       + wt_ninv * c.loading;
    v_inv = v.llt().solve(MatrixXd::Identity(v.rows(), v.cols()));
    beta = v_inv * wt_ninv;
  }

  double log_density(const VectorXd& r) const {
    const double quad = r.cwiseProduct(noise_inv).dot(r)
                        - (wood.L.transpose() * r).squaredNorm();
    return log_norm - 0.5 * quad;
  }
};

/// Distance-weighted seeded frame selection (k-means++ style) so that
/// well-separated clusters each receive a mean.
std::vector<int64_t> seed_means(const FeatureMatrix& feats, int components,
                                Rng& rng) {
  const int64_t T = feats.rows();
  std::vector<int64_t> picks;
  picks.push_back(static_cast<int64_t>(rng.uniform() * T));
  VectorXd d2(T);
  for (int64_t t = 0; t < T; ++t)
    d2(t) = (feats.row(t) - feats.row(picks[0])).squaredNorm();
  while (static_cast<int>(picks.size()) < components) {
    double total = d2.sum();
    int64_t pick;
    if (total <= 0.0) {
      pick = static_cast<int64_t>(rng.uniform() * T);
    } else {
      double u = rng.uniform() * total;
      double c = 0.0;
      pick = T - 1;
      for (int64_t t = 0; t < T; ++t) {
        c += d2(t);
        if (u < c) {
          pick = t;
          break;
        }
      }
    }
    picks.push_back(pick);
    for (int64_t t = 0; t < T; ++t)
      d2(t) = std::min(d2(t), (feats.row(t) - feats.row(pick)).squaredNorm());
  }
  return picks;
}

}  // namespace

void validate_background(const BackgroundModel& bg) {
  if (bg.comps.empty())
    throw std::invalid_argument("background model has no components");
  const int d = bg.dim();
  const int r = bg.rank();
  double wsum = 0.0;
  for (size_t m = 0; m < bg.comps.size(); ++m) {
    const FaComponent& c = bg.comps[m];
    if (c.mean.size() != d || c.loading.rows() != d || c.loading.cols() != r
        || c.noise.size() != d)
      throw std::invalid_argument("background component "
                                  + std::to_string(m) + ": shape mismatch");
    if (!c.mean.allFinite() || !c.loading.allFinite() || !c.noise.allFinite()
        || !std::isfinite(c.weight))
      throw std::invalid_argument("background component "
                                  + std::to_string(m) + ": non-finite value");
    if (!(c.noise.array() > 0.0).all())
      throw std::invalid_argument("background component " + std::to_string(m)
                                  + ": non-positive noise entry");
    if (c.weight < 0.0 || c.weight > 1.0)
      throw std::invalid_argument("background component " + std::to_string(m)
                                  + ": weight out of [0,1]");
    wsum += c.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-10)
    throw std::invalid_argument("background weights sum to "
                                + std::to_string(wsum));
}

BackgroundModel train_bg(const FeatureMatrix& feats, int components, int rank,
                         int iterations, uint64_t seed,
                         std::vector<double>* loglik_history) {
  const int64_t T = feats.rows();
  const int d = static_cast<int>(feats.cols());
  if (components < 1) throw std::invalid_argument("train_bg: components < 1");
  if (rank < 0 || rank > d)
    throw std::invalid_argument("train_bg: rank out of [0, d]");
  if (T < components)
    throw std::invalid_argument("train_bg: fewer frames ("
                                + std::to_string(T) + ") than components ("
                                + std::to_string(components) + ")");

  const VectorXd data_mean = feats.colwise().mean();
  VectorXd data_var = VectorXd::Zero(d);
  for (int64_t t = 0; t < T; ++t)
    data_var += (feats.row(t).transpose() - data_mean).array().square().matrix();
  data_var /= static_cast<double>(T);
  const double var_floor = 1e-6 * std::max(data_var.mean(), 1e-30);

  Rng rng(seed);
  BackgroundModel bg;
  bg.comps.resize(components);
  const std::vector<int64_t> picks = seed_means(feats, components, rng);
  const double w_scale = 0.1 * std::sqrt(std::max(data_var.mean(), 1e-12));
  for (int m = 0; m < components; ++m) {
    FaComponent& c = bg.comps[m];
    c.mean = feats.row(picks[m]).transpose();
    c.loading = MatrixXd::NullaryExpr(d, rank,
                                      [&](Eigen::Index, Eigen::Index) {
                                        return w_scale * rng.gauss();
                                      });
    c.noise = data_var.cwiseMax(var_floor);
    c.weight = 1.0 / components;
  }

  for (int iter = 0; iter < iterations; ++iter) {
    std::vector<FaCache> caches;
    caches.reserve(components);
    for (const FaComponent& c : bg.comps) caches.emplace_back(c);

    // E-step
    std::vector<double> n_m(components, 0.0);
    std::vector<MatrixXd> a_m(components, MatrixXd::Zero(d, rank + 1));
    std::vector<MatrixXd> b_m(components,
                              MatrixXd::Zero(rank + 1, rank + 1));
    std::vector<VectorXd> yy_diag(components, VectorXd::Zero(d));
    double total_ll = 0.0;
    std::vector<double> logs(components);
    for (int64_t t = 0; t < T; ++t) {
      const VectorXd y = feats.row(t).transpose();
      for (int m = 0; m < components; ++m)
        logs[m] = caches[m].log_weight
                  + caches[m].log_density(y - bg.comps[m].mean);
      const double lse = log_sum_exp(logs);
      if (!std::isfinite(lse))
        throw NumericError("train_bg: non-finite likelihood at frame "
                           + std::to_string(t));
      total_ll += lse;
      for (int m = 0; m < components; ++m) {
        const double h = std::exp(logs[m] - lse);
        if (h <= 0.0) continue;
        const VectorXd ef = caches[m].beta * (y - bg.comps[m].mean);
        VectorXd ef1(rank + 1);
        ef1 << ef, 1.0;
        n_m[m] += h;
        a_m[m].noalias() += h * (y * ef1.transpose());
        b_m[m].topLeftCorner(rank, rank).noalias()
            += h * (caches[m].v_inv + ef * ef.transpose());
        b_m[m].topRightCorner(rank, 1).noalias() += h * ef;
        b_m[m].bottomLeftCorner(1, rank).noalias() += h * ef.transpose();
        b_m[m](rank, rank) += h;
        yy_diag[m] += h * y.array().square().matrix();
      }
    }
    if (loglik_history != nullptr) loglik_history->push_back(total_ll);

    // M-step: joint [W mu] solve, then the residual variance
    for (int m = 0; m < components; ++m) {
      if (n_m[m] <= 0.0) continue;  // starved component keeps its parameters
      MatrixXd b = b_m[m];
      Eigen::LLT<MatrixXd> llt(b);
      if (llt.info() != Eigen::Success) {
        b.diagonal().array() += 1e-8 * b.trace() / (rank + 1);
        llt.compute(b);
      }
      const MatrixXd c_new =
          llt.solve(a_m[m].transpose()).transpose();  // d x (r+1)
      FaComponent& c = bg.comps[m];
      c.loading = c_new.leftCols(rank);
      c.mean = c_new.col(rank);
      const VectorXd ca = (c_new.cwiseProduct(a_m[m])).rowwise().sum();
      const VectorXd cbc =
          ((c_new * b_m[m]).cwiseProduct(c_new)).rowwise().sum();
      c.noise = ((yy_diag[m] - 2.0 * ca + cbc) / n_m[m]).cwiseMax(var_floor);
      c.weight = n_m[m] / static_cast<double>(T);
    }
    // renormalize in case starved components kept stale weights
    double wsum = 0.0;
    for (const FaComponent& c : bg.comps) wsum += c.weight;
    for (FaComponent& c : bg.comps) c.weight /= wsum;
  }
  validate_background(bg);
  return bg;
}

std::vector<int> select_components(const BackgroundModel& bg,
                                   const VectorXd& y, int n) {
  const int M = bg.num_components();
  TPLDA_ASSERT(n >= 1 && n <= M);
  std::vector<double> score(M);
  for (int m = 0; m < M; ++m) {
    const FaCache cache(bg.comps[m]);
    score[m] = cache.log_weight + cache.log_density(y - bg.comps[m].mean);
  }
  std::vector<int> order(M);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return score[a] > score[b]; });
  order.resize(n);
  return order;
}

std::vector<std::vector<int>> select_for_dataset(const BackgroundModel& bg,
                                                 const FeatureMatrix& features,
                                                 int n) {
  // caches built once; selection scores every component per frame
  const int M = bg.num_components();
  TPLDA_ASSERT(n >= 1 && n <= M);
  std::vector<FaCache> caches;
  caches.reserve(M);
  for (const FaComponent& c : bg.comps) caches.emplace_back(c);
  std::vector<std::vector<int>> selection(features.rows());
  std::vector<double> score(M);
  std::vector<int> order(M);
  for (int64_t t = 0; t < features.rows(); ++t) {
    const VectorXd y = features.row(t).transpose();
    for (int m = 0; m < M; ++m)
      score[m] = caches[m].log_weight
                 + caches[m].log_density(y - bg.comps[m].mean);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return score[a] > score[b]; });
    selection[t].assign(order.begin(), order.begin() + n);
  }
  return selection;
}

void write_background(const BackgroundModel& bg, std::ostream& os) {
  validate_background(bg);
  io::write_magic(os, kBgMagic);
  io::write_u32(os, kBgVersion);
  io::write_u32(os, static_cast<uint32_t>(bg.dim()));
  io::write_u32(os, static_cast<uint32_t>(bg.rank()));
  io::write_u32(os, static_cast<uint32_t>(bg.num_components()));
  for (const FaComponent& c : bg.comps) {
    io::write_vector(os, c.mean);
    io::write_matrix(os, c.loading);
    io::write_vector(os, c.noise);
    io::write_f64(os, c.weight);
  }
}

void write_background(const BackgroundModel& bg, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(path + ": cannot open for writing");
  write_background(bg, os);
  if (!os) throw FormatError(path + ": write failed");
}

BackgroundModel read_background(std::istream& is, const std::string& context) {
  io::expect_magic(is, kBgMagic, context);
  const uint32_t version = io::read_u32(is, context);
  if (version != kBgVersion)
    throw FormatError(context + ": unsupported version "
                      + std::to_string(version));
  const int d = static_cast<int>(io::read_u32(is, context));
  const int r = static_cast<int>(io::read_u32(is, context));
  const int M = static_cast<int>(io::read_u32(is, context));
  if (d <= 0 || r < 0 || M <= 0)
    throw FormatError(context + ": invalid dimensions");
  BackgroundModel bg;
  bg.comps.resize(M);
  for (FaComponent& c : bg.comps) {
    c.mean = io::read_vector(is, d, context);
    c.loading = io::read_matrix(is, d, r, context);
    c.noise = io::read_vector(is, d, context);
    c.weight = io::read_f64(is, context);
  }
  try {
    validate_background(bg);
  } catch (const std::invalid_argument& e) {
    throw FormatError(context + ": " + e.what());
  }
  return bg;
}

BackgroundModel read_background(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path + ": cannot open");
  return read_background(is, path);
}

}  // namespace tplda
