// tplda/inference.cc

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

#include "tplda/inference.h"

#include <algorithm>
#include <limits>

namespace tplda {

MatrixXd GaussianPosterior::covariance() const {
  return precision.llt().solve(
      MatrixXd::Identity(precision.rows(), precision.cols()));
}

MatrixXd GaussianPosterior::second_moment() const {
  return covariance() + mean * mean.transpose();
}

GaussianPosterior GaussianPosterior::standard_normal(Eigen::Index n) {
  return {VectorXd::Zero(n), MatrixXd::Identity(n, n)};
}

WoodburyFactor woodbury(const MatrixXd& U, const VectorXd& lambda) {
  if (!(lambda.array() > 0.0).all() || !lambda.allFinite())
    throw NumericError("woodbury: lambda entries must be strictly positive");
  if (U.cols() == 0) {  // rank zero: the covariance is already diagonal
    WoodburyFactor w;
    w.L = MatrixXd::Zero(U.rows(), 0);
    w.logdet = lambda.array().log().sum();
    return w;
  }
  const VectorXd lambda_inv = lambda.cwiseInverse();
  const MatrixXd v = MatrixXd::Identity(U.cols(), U.cols())
                     + U.transpose() * lambda_inv.asDiagonal() * U;
  // v is I plus a Gram matrix, so its eigenvalues are >= 1 and the
  // symmetric inverse square root is well defined.
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(v);
  const VectorXd inv_sqrt = eig.eigenvalues().cwiseSqrt().cwiseInverse();
  WoodburyFactor w;
  w.L = lambda_inv.asDiagonal() * U * eig.eigenvectors()
        * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
  w.logdet = lambda.array().log().sum() + eig.eigenvalues().array().log().sum();
  return w;
}

WoodburyFactor woodbury(const ComponentParams& comp) {
  return woodbury(comp.U, comp.lambda);
}

GaussianPosterior posterior_x(const ComponentParams& comp,
                              const VectorXd& z_bar, const VectorXd& y) {
  if (!y.allFinite() || !z_bar.allFinite())
    throw NumericError("posterior_x: non-finite input");
  TPLDA_ASSERT(y.size() == comp.U.rows() && z_bar.size() == comp.G.cols());
  const VectorXd lambda_inv = comp.lambda.cwiseInverse();
  GaussianPosterior post;
  post.precision = MatrixXd::Identity(comp.U.cols(), comp.U.cols())
                   + comp.U.transpose() * lambda_inv.asDiagonal() * comp.U;
  const VectorXd resid = y - comp.G * z_bar - comp.b;
  post.mean = post.precision.llt().solve(
      comp.U.transpose() * (lambda_inv.asDiagonal() * resid));
  return post;
}

GaussianPosterior posterior_z(const std::vector<ComponentParams>& components,
                              const std::vector<ZObservation>& frames) {
  TPLDA_ASSERT(!components.empty());
  const Eigen::Index q = components[0].G.cols();
  MatrixXd precision = MatrixXd::Identity(q, q);
  VectorXd info = VectorXd::Zero(q);
  for (const ZObservation& obs : frames) {
    for (const ZFrameTerm& term : obs.terms) {
      TPLDA_ASSERT(term.gamma >= 0.0 && term.gamma <= 1.0 + 1e-12);
      const ComponentParams& c = components.at(term.component);
      const VectorXd lambda_inv = c.lambda.cwiseInverse();
      const MatrixXd gt_li = c.G.transpose() * lambda_inv.asDiagonal();
      precision.noalias() += term.gamma * (gt_li * c.G);
      info.noalias() +=
          term.gamma * (gt_li * (obs.y - c.U * term.x_bar - c.b));
    }
  }
  GaussianPosterior post;
  post.mean = precision.llt().solve(info);
  post.precision = std::move(precision);
  return post;
}

ComponentCache::ComponentCache(const ComponentParams& comp) {
  const Eigen::Index d = comp.U.rows();
  lambda_inv = comp.lambda.cwiseInverse();
  log_lambda_sum = comp.lambda.array().log().sum();
  ut_lambda_inv = comp.U.transpose() * lambda_inv.asDiagonal();
  v = MatrixXd::Identity(comp.U.cols(), comp.U.cols())
      + ut_lambda_inv * comp.U;
  v_inv = v.llt().solve(MatrixXd::Identity(v.rows(), v.cols()));
  gt_lambda_inv = comp.G.transpose() * lambda_inv.asDiagonal();
  gt_lambda_inv_g = gt_lambda_inv * comp.G;
  uvu_diag = ((comp.U * v_inv).cwiseProduct(comp.U)).rowwise().sum();
  wood = woodbury(comp.U, comp.lambda);
  log_norm_point = -0.5 * (d * kLog2Pi + log_lambda_sum);
  log_norm_marginal = -0.5 * (d * kLog2Pi + wood.logdet);
}

ModelCache::ModelCache(const TiedPldaModel& model) {
  comps.reserve(model.components.size());
  for (const ComponentParams& c : model.components) comps.emplace_back(c);
}

std::vector<MixturePair> state_pairs(const TiedPldaModel& model, int j,
                                     std::span<const int> components) {
  TPLDA_ASSERT(j >= 0 && j < model.num_states());
  const StateModel& s = model.states[j];
  const int nsub = static_cast<int>(s.substates.size());
  std::vector<MixturePair> pairs;
  if (model.family == ModelFamily::kMixture) {
    // one z vector per component: pair k with m == k
    if (components.empty()) {
      pairs.reserve(nsub);
      for (int k = 0; k < nsub; ++k)
        pairs.push_back({k, k, s.substates[k].weight});
    } else {
      for (int m : components) {
        TPLDA_ASSERT(m >= 0 && m < model.num_components());
        pairs.push_back({m, m, s.substates[m].weight});
      }
    }
    return pairs;
  }
  if (components.empty()) {
    pairs.reserve(static_cast<size_t>(nsub) * model.num_components());
    for (int k = 0; k < nsub; ++k)
      for (int m = 0; m < model.num_components(); ++m)
        pairs.push_back({k, m, s.substates[k].weight * s.pi(m)});
  } else {
    pairs.reserve(static_cast<size_t>(nsub) * components.size());
    for (int k = 0; k < nsub; ++k)
      for (int m : components) {
        TPLDA_ASSERT(m >= 0 && m < model.num_components());
        pairs.push_back({k, m, s.substates[k].weight * s.pi(m)});
      }
  }
  return pairs;
}

namespace {

FrameScore finish_score(std::vector<FrameScore::Entry> entries) {
  FrameScore score;
  score.entries = std::move(entries);
  TPLDA_ASSERT(!score.entries.empty());
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> logs;
  logs.reserve(score.entries.size());
  for (const FrameScore::Entry& e : score.entries) {
    logs.push_back(e.log_joint);
    if (e.log_joint > best) {
      best = e.log_joint;
      score.best_substate = e.substate;
      score.best_component = e.component;
    }
  }
  score.total = log_sum_exp(logs);
  return score;
}

double log_weight(double w) {
  return w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
}

}  // namespace

FrameScore loglik_uncertainty(const TiedPldaModel& model,
                              const ModelCache& cache, int j,
                              const VectorXd& y,
                              std::span<const int> components) {
  TPLDA_ASSERT(y.size() == model.dim());
  const StateModel& s = model.states.at(j);
  std::vector<FrameScore::Entry> entries;
  const std::vector<MixturePair> pairs = state_pairs(model, j, components);
  entries.reserve(pairs.size());
  for (const MixturePair& pair : pairs) {
    const ComponentParams& comp = model.components[pair.component];
    const ComponentCache& cc = cache.comps[pair.component];
    const VectorXd r = y - comp.G * s.substates[pair.substate].z - comp.b;
    const double quad = r.cwiseProduct(cc.lambda_inv).dot(r)
                        - (cc.wood.L.transpose() * r).squaredNorm();
    entries.push_back({pair.substate, pair.component,
                       log_weight(pair.weight) + cc.log_norm_marginal
                           - 0.5 * quad});
  }
  return finish_score(std::move(entries));
}

FrameScore loglik_point(const TiedPldaModel& model, const ModelCache& cache,
                        int j, const VectorXd& y,
                        const std::vector<VectorXd>* x_bars,
                        std::span<const int> components) {
  TPLDA_ASSERT(y.size() == model.dim());
  const StateModel& s = model.states.at(j);
  const std::vector<MixturePair> pairs = state_pairs(model, j, components);
  if (x_bars != nullptr) TPLDA_ASSERT(x_bars->size() == pairs.size());
  std::vector<FrameScore::Entry> entries;
  entries.reserve(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    const MixturePair& pair = pairs[i];
    const ComponentParams& comp = model.components[pair.component];
    const ComponentCache& cc = cache.comps[pair.component];
    const VectorXd r0 = y - comp.G * s.substates[pair.substate].z - comp.b;
    VectorXd x_bar;
    if (x_bars != nullptr) {
      x_bar = (*x_bars)[i];
      TPLDA_ASSERT(x_bar.size() == model.hyper.p);
    } else {
      x_bar = cc.v.llt().solve(cc.ut_lambda_inv * r0);
    }
    const VectorXd r = r0 - comp.U * x_bar;
    const double quad = r.cwiseProduct(cc.lambda_inv).dot(r);
    entries.push_back({pair.substate, pair.component,
                       log_weight(pair.weight) + cc.log_norm_point
                           - 0.5 * quad});
  }
  return finish_score(std::move(entries));
}

ClassifyResult classify_frame(const TiedPldaModel& model,
                              const ModelCache& cache, const VectorXd& y,
                              const std::vector<int>* candidate_states,
                              std::span<const int> components) {
  std::vector<int> candidates;
  if (candidate_states == nullptr) {
    candidates.resize(model.num_states());
    for (int j = 0; j < model.num_states(); ++j) candidates[j] = j;
  } else {
    candidates = *candidate_states;
  }
  if (candidates.empty())
    throw std::invalid_argument("classify_frame: empty candidate set");
  std::sort(candidates.begin(), candidates.end());

  ClassifyResult result;
  result.states = candidates;
  result.loglik.reserve(candidates.size());
  double best = -std::numeric_limits<double>::infinity();
  for (int j : candidates) {
    const double ll = loglik_uncertainty(model, cache, j, y, components).total;
    result.loglik.push_back(ll);
    if (ll > best) {  // strict: earlier (lower) state wins ties
      best = ll;
      result.best_state = j;
    }
  }
  return result;
}

}  // namespace tplda
