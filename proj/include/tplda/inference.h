// tplda/inference.h

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

#ifndef TPLDA_INFERENCE_H_
#define TPLDA_INFERENCE_H_

#include <span>
#include <vector>

#include "tplda/model.h"

namespace tplda {

/// Gaussian in information form. The precision is I plus a Gram matrix, so
/// it is symmetric positive definite by construction.
struct GaussianPosterior {
  VectorXd mean;
  MatrixXd precision;

  MatrixXd covariance() const;         ///< precision^{-1}
  MatrixXd second_moment() const;      ///< covariance + mean mean^T

  static GaussianPosterior standard_normal(Eigen::Index n);
};

/// Factored inverse of a low-rank-plus-diagonal covariance:
///   (U U^T + diag(lambda))^{-1} = diag(lambda)^{-1} - L L^T
/// together with its log-determinant, so a d-dimensional Gaussian can be
/// evaluated with O(d p) work per point.
struct WoodburyFactor {
  MatrixXd L;          ///< d x p
  double logdet = 0.0; ///< log det(U U^T + diag(lambda))
};

/// L = Lambda^{-1} U (I + U^T Lambda^{-1} U)^{-1/2} with a symmetric square
/// root; logdet via the matrix determinant lemma. Throws NumericError if a
/// lambda entry is not strictly positive.
WoodburyFactor woodbury(const MatrixXd& U, const VectorXd& lambda);
WoodburyFactor woodbury(const ComponentParams& comp);

/// Posterior of the frame variable given one frame:
///   precision V = I + U^T Lambda^{-1} U
///   mean = V^{-1} U^T Lambda^{-1} (y - G z_bar - b)
/// The prior is the standard normal. Throws NumericError on non-finite
/// inputs.
GaussianPosterior posterior_x(const ComponentParams& comp,
                              const VectorXd& z_bar, const VectorXd& y);

/// One frame's contribution to a sub-state posterior: the frame vector plus
/// the responsibility and frame-variable mean for each contributing
/// component.
struct ZFrameTerm {
  int component = 0;
  double gamma = 0.0;
  VectorXd x_bar;
};
struct ZObservation {
  VectorXd y;
  std::vector<ZFrameTerm> terms;
};

/// Posterior of a sub-state vector pooled over frames:
///   precision = I + sum_{t,m} gamma G_m^T Lambda_m^{-1} G_m
///   mean = precision^{-1} sum_{t,m} gamma G_m^T Lambda_m^{-1}
///                                     (y_t - U_m x_bar - b_m)
/// With no frames this is the standard-normal prior.
GaussianPosterior posterior_z(const std::vector<ComponentParams>& components,
                              const std::vector<ZObservation>& frames);

/// Per-component quantities derived from the parameters, shared by all
/// frames: inverse covariances, the frame-variable posterior precision and
/// its inverse, and the Woodbury factorization of U U^T + Lambda.
struct ComponentCache {
  VectorXd lambda_inv;
  double log_lambda_sum = 0.0;
  MatrixXd ut_lambda_inv;   ///< p x d, U^T Lambda^{-1}
  MatrixXd v;               ///< p x p, I + U^T Lambda^{-1} U
  MatrixXd v_inv;           ///< frame-variable posterior covariance
  MatrixXd gt_lambda_inv;   ///< q x d, G^T Lambda^{-1}
  MatrixXd gt_lambda_inv_g; ///< q x q
  VectorXd uvu_diag;        ///< diag(U v_inv U^T), for residual-variance stats
  WoodburyFactor wood;
  double log_norm_point = 0.0;  ///< -(d log 2pi + sum log lambda) / 2
  double log_norm_marginal = 0.0;  ///< -(d log 2pi + wood.logdet) / 2

  explicit ComponentCache(const ComponentParams& comp);
};

struct ModelCache {
  std::vector<ComponentCache> comps;
  explicit ModelCache(const TiedPldaModel& model);
};

/// One (sub-state, component) pair of a state's mixture with its linear
/// weight w = c_jk * pi_jm (tied) or w = c_jk with m == k (mixture family).
struct MixturePair {
  int substate = 0;
  int component = 0;
  double weight = 0.0;
};

/// Pairs of state j restricted to `components` (empty span = all).
std::vector<MixturePair> state_pairs(const TiedPldaModel& model, int j,
                                     std::span<const int> components = {});

struct FrameScore {
  struct Entry {
    int substate = 0;
    int component = 0;
    double log_joint = 0.0;  ///< log w + log N
  };
  std::vector<Entry> entries;
  double total = 0.0;  ///< log-sum-exp over entries
  int best_substate = 0;
  int best_component = 0;
};

/// log p(y | j) with the frame variable marginalized out ("uncertainty"
/// scoring): each pair contributes w * N(y; G z + b, U U^T + Lambda),
/// evaluated through the Woodbury factorization and combined by
/// log-sum-exp. Weights combine linearly; no softmax renormalization.
FrameScore loglik_uncertainty(const TiedPldaModel& model,
                              const ModelCache& cache, int j,
                              const VectorXd& y,
                              std::span<const int> components = {});

/// log p(y | j) at point estimates of the latent variables: each pair
/// contributes w * N(y; U x_bar + G z + b, Lambda). `x_bars`, when given,
/// must align with state_pairs(model, j, components); otherwise the
/// frame-variable posterior mean is used.
FrameScore loglik_point(const TiedPldaModel& model, const ModelCache& cache,
                        int j, const VectorXd& y,
                        const std::vector<VectorXd>* x_bars = nullptr,
                        std::span<const int> components = {});

struct ClassifyResult {
  int best_state = -1;
  std::vector<int> states;      ///< evaluated candidates, ascending
  std::vector<double> loglik;   ///< aligned with `states`
};

/// Argmax over candidate states (all states when null) of the marginal
/// likelihood restricted to `components`; ties break toward the lowest
/// state index. An explicitly empty candidate list is an error.
ClassifyResult classify_frame(const TiedPldaModel& model,
                              const ModelCache& cache, const VectorXd& y,
                              const std::vector<int>* candidate_states = nullptr,
                              std::span<const int> components = {});

}  // namespace tplda

#endif  // TPLDA_INFERENCE_H_
