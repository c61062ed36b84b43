// tplda/training.cc

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

#include "tplda/training.h"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <queue>
#include <sstream>
#include <thread>

namespace tplda {

namespace {

constexpr double kMinOccupancy = 1e-10;  ///< below this a parameter is frozen
constexpr int64_t kDeterministicShard = 8192;

bool parse_bool(const std::string& value, bool* out) {
  if (value == "true" || value == "1") *out = true;
  else if (value == "false" || value == "0") *out = false;
  else return false;
  return true;
}

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

TrainConfig parse_train_config(std::istream& is, const std::string& context) {
  TrainConfig config;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    const std::string where =
        context + ":" + std::to_string(lineno);
    if (eq == std::string::npos)
      throw FormatError(where + ": expected `key = value`");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    try {
      if (key == "iterations") {
        config.iterations = std::stoi(value);
      } else if (key == "weight-floor") {
        config.weight_floor = std::stod(value);
      } else if (key == "variance-floor-scale") {
        config.variance_floor_scale = std::stod(value);
      } else if (key == "select-n") {
        config.select_n = std::stoi(value);
      } else if (key == "deterministic") {
        if (!parse_bool(value, &config.deterministic))
          throw FormatError(where + ": expected true/false for deterministic");
      } else if (key == "seed") {
        config.seed = std::stoull(value);
      } else if (key == "likelihood-mode") {
        if (value == "point") {
          config.likelihood_mode = LikelihoodMode::kPoint;
        } else if (value == "uncertainty") {
          config.likelihood_mode = LikelihoodMode::kUncertainty;
        } else {
          throw FormatError(where + ": likelihood-mode must be point or "
                                    "uncertainty, got `" + value + "`");
        }
      } else {
        throw FormatError(where + ": unknown key `" + key + "`");
      }
    } catch (const std::invalid_argument&) {
      throw FormatError(where + ": cannot parse value `" + value
                        + "` for key `" + key + "`");
    } catch (const std::out_of_range&) {
      throw FormatError(where + ": value out of range for key `" + key + "`");
    }
  }
  if (config.iterations < 0)
    throw FormatError(context + ": iterations must be nonnegative");
  if (config.weight_floor < 0.0 || config.weight_floor >= 1.0)
    throw FormatError(context + ": weight-floor out of [0, 1)");
  if (config.variance_floor_scale < 0.0)
    throw FormatError(context + ": variance-floor-scale must be nonnegative");
  if (config.select_n < 1)
    throw FormatError(context + ": select-n must be positive");
  return config;
}

TrainConfig parse_train_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError(path + ": cannot open");
  return parse_train_config(is, path);
}

void Accumulators::merge(const Accumulators& other) {
  TPLDA_ASSERT(comps.size() == other.comps.size());
  TPLDA_ASSERT(substate_occ.size() == other.substate_occ.size());
  for (size_t m = 0; m < comps.size(); ++m) {
    ComponentAccs& a = comps[m];
    const ComponentAccs& b = other.comps[m];
    a.gamma += b.gamma;
    a.sum_x += b.sum_x;
    a.sum_xx += b.sum_xx;
    a.cross_u += b.cross_u;
    a.cross_g += b.cross_g;
    a.sum_zz += b.sum_zz;
    a.sum_b += b.sum_b;
    a.lambda_stat += b.lambda_stat;
  }
  for (size_t j = 0; j < substate_occ.size(); ++j) {
    TPLDA_ASSERT(substate_occ[j].size() == other.substate_occ[j].size());
    for (size_t k = 0; k < substate_occ[j].size(); ++k)
      substate_occ[j][k] += other.substate_occ[j][k];
  }
  comp_occ += other.comp_occ;
  total_loglik += other.total_loglik;
  num_frames += other.num_frames;
  if (z_posteriors.empty()) z_posteriors = other.z_posteriors;
}

namespace {

Accumulators make_empty_accumulators(const TiedPldaModel& model) {
  const Hyperparams& h = model.hyper;
  Accumulators acc;
  acc.comps.resize(h.M);
  for (ComponentAccs& c : acc.comps) {
    c.sum_x = VectorXd::Zero(h.p);
    c.sum_xx = MatrixXd::Zero(h.p, h.p);
    c.cross_u = MatrixXd::Zero(h.d, h.p);
    c.cross_g = MatrixXd::Zero(h.d, h.q);
    c.sum_zz = MatrixXd::Zero(h.q, h.q);
    c.sum_b = VectorXd::Zero(h.d);
    c.lambda_stat = VectorXd::Zero(h.d);
  }
  acc.substate_occ.resize(h.J);
  for (int j = 0; j < h.J; ++j)
    acc.substate_occ[j].assign(model.states[j].substates.size(), 0.0);
  acc.comp_occ = MatrixXd::Zero(h.J, h.M);
  return acc;
}

/// Pooled sub-state statistics from the first sweep.
struct ZStats {
  std::vector<std::vector<MatrixXd>> prec;  ///< [j][k] sum gamma G^T L^-1 G
  std::vector<std::vector<VectorXd>> info;  ///< [j][k]
  std::vector<std::vector<double>> occ;     ///< [j][k]
  double total_loglik = 0.0;

  explicit ZStats(const TiedPldaModel& model) {
    const Hyperparams& h = model.hyper;
    prec.resize(h.J);
    info.resize(h.J);
    occ.resize(h.J);
    for (int j = 0; j < h.J; ++j) {
      const size_t nsub = model.states[j].substates.size();
      prec[j].assign(nsub, MatrixXd::Zero(h.q, h.q));
      info[j].assign(nsub, VectorXd::Zero(h.q));
      occ[j].assign(nsub, 0.0);
    }
  }

  void merge(const ZStats& other) {
    for (size_t j = 0; j < prec.size(); ++j)
      for (size_t k = 0; k < prec[j].size(); ++k) {
        prec[j][k] += other.prec[j][k];
        info[j][k] += other.info[j][k];
        occ[j][k] += other.occ[j][k];
      }
    total_loglik += other.total_loglik;
  }
};

int64_t shard_count(int64_t total, int64_t shard_size) {
  return (total + shard_size - 1) / shard_size;
}

/// Runs fn(shard_index, begin, end) over fixed contiguous shards using up
/// to `threads` workers; shard boundaries do not depend on the thread
/// count, and callers merge shard results in index order, so results are
/// reproducible.
void run_sharded(int64_t total, int64_t shard_size, int threads,
                 const std::function<void(int, int64_t, int64_t)>& fn) {
  const int64_t num_shards = shard_count(total, shard_size);
  std::atomic<int64_t> next(0);
  auto worker = [&]() {
    for (;;) {
      const int64_t s = next.fetch_add(1);
      if (s >= num_shards) return;
      fn(static_cast<int>(s), s * shard_size,
         std::min(total, (s + 1) * shard_size));
    }
  };
  const int nthreads = std::max<int>(
      1, static_cast<int>(std::min<int64_t>(threads, num_shards)));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
}

double frame_score_or_throw(const FrameScore& score, int64_t t) {
  if (!std::isfinite(score.total))
    throw NumericError("frame " + std::to_string(t)
                       + ": no selected component has nonzero likelihood");
  return score.total;
}

FrameScore score_frame(const TiedPldaModel& model, const ModelCache& cache,
                       int j, const VectorXd& y, std::span<const int> sel,
                       LikelihoodMode mode) {
  return mode == LikelihoodMode::kUncertainty
             ? loglik_uncertainty(model, cache, j, y, sel)
             : loglik_point(model, cache, j, y, nullptr, sel);
}

std::span<const int> frame_selection(
    const std::vector<std::vector<int>>* selection, int64_t t) {
  if (selection == nullptr) return {};
  return std::span<const int>((*selection)[t]);
}

}  // namespace

Accumulators estep(const TiedPldaModel& model, const FeatureMatrix& features,
                   const LabelSequence& labels,
                   const std::vector<std::vector<int>>* selection,
                   const EstepOptions& opts) {
  const Hyperparams& h = model.hyper;
  const int64_t T = features.rows();
  if (T == 0) throw std::invalid_argument("estep: no frames");
  if (features.cols() != h.d)
    throw std::invalid_argument(
        "estep: feature dimension " + std::to_string(features.cols())
        + " does not match model dimension " + std::to_string(h.d));
  if (labels.size() != T)
    throw std::invalid_argument("estep: " + std::to_string(T) + " frames vs "
                                + std::to_string(labels.size()) + " labels");
  validate_labels(labels, h.J);
  if (selection != nullptr) {
    if (static_cast<int64_t>(selection->size()) != T)
      throw std::invalid_argument("estep: selection size mismatch");
    for (int64_t t = 0; t < T; ++t) {
      if ((*selection)[t].empty())
        throw std::invalid_argument("estep: empty selection for frame "
                                    + std::to_string(t));
      for (int m : (*selection)[t])
        if (m < 0 || m >= h.M)
          throw std::invalid_argument(
              "estep: selection index out of range at frame "
              + std::to_string(t));
    }
  }

  const ModelCache cache(model);
  const int64_t shard_size =
      opts.deterministic ? kDeterministicShard
                         : std::max<int64_t>(1, (T + opts.threads - 1)
                                                    / std::max(1, opts.threads));

  // Sweep 1: pool sub-state statistics (and the model log-likelihood)
  // against the stored sub-state vectors.
  ZStats zstats(model);
  {
    std::vector<std::unique_ptr<ZStats>> parts(shard_count(T, shard_size));
    run_sharded(T, shard_size, opts.threads,
                [&](int s, int64_t begin, int64_t end) {
      auto z = std::make_unique<ZStats>(model);
      VectorXd y(h.d), r0(h.d), xbar(h.p);
      for (int64_t t = begin; t < end; ++t) {
        y = features.row(t).transpose();
        const std::span<const int> sel = frame_selection(selection, t);
        for (const StatePosterior& sp : labels.frames[t]) {
          if (sp.mass <= 0.0) continue;
          const int j = static_cast<int>(sp.state);
          const FrameScore score =
              score_frame(model, cache, j, y, sel, opts.mode);
          const double total = frame_score_or_throw(score, t);
          z->total_loglik += sp.mass * total;
          for (const FrameScore::Entry& e : score.entries) {
            const double gamma = sp.mass * std::exp(e.log_joint - total);
            if (gamma <= 0.0) continue;
            const ComponentParams& comp = model.components[e.component];
            const ComponentCache& cc = cache.comps[e.component];
            r0 = y - comp.G * model.states[j].substates[e.substate].z
                 - comp.b;
            xbar.noalias() = cc.v_inv * (cc.ut_lambda_inv * r0);
            z->prec[j][e.substate] += gamma * cc.gt_lambda_inv_g;
            z->info[j][e.substate].noalias() +=
                gamma * (cc.gt_lambda_inv * (y - comp.U * xbar - comp.b));
            z->occ[j][e.substate] += gamma;
          }
        }
      }
      parts[s] = std::move(z);
    });
    for (auto& part : parts) zstats.merge(*part);
  }

  // Sub-state posteriors; zero-occupancy sub-states keep their stored
  // vector as the working point estimate.
  TiedPldaModel work = model;
  std::vector<std::vector<GaussianPosterior>> z_post(h.J);
  std::vector<std::vector<MatrixXd>> z_moment(h.J);  // E[z z^T] per (j,k)
  const MatrixXd iq = MatrixXd::Identity(h.q, h.q);
  for (int j = 0; j < h.J; ++j) {
    const size_t nsub = model.states[j].substates.size();
    z_post[j].resize(nsub);
    z_moment[j].resize(nsub);
    for (size_t k = 0; k < nsub; ++k) {
      GaussianPosterior& post = z_post[j][k];
      post.precision = iq + zstats.prec[j][k];
      const Eigen::LLT<MatrixXd> llt(post.precision);
      if (zstats.occ[j][k] > kMinOccupancy) {
        post.mean = llt.solve(zstats.info[j][k]);
      } else {
        post.mean = model.states[j].substates[k].z;
      }
      work.states[j].substates[k].z = post.mean;
      const MatrixXd cov = llt.solve(iq);
      z_moment[j][k] = cov + post.mean * post.mean.transpose();
    }
  }

  // Sweep 2: component statistics against the refreshed sub-state means.
  const ModelCache& wcache = cache;  // caches depend on components only
  std::vector<std::unique_ptr<Accumulators>> parts(shard_count(T, shard_size));
  run_sharded(T, shard_size, opts.threads,
              [&](int s, int64_t begin, int64_t end) {
    auto acc = std::make_unique<Accumulators>(make_empty_accumulators(model));
    VectorXd y(h.d), r0(h.d), xbar(h.p), uxbar(h.d), resid(h.d);
    for (int64_t t = begin; t < end; ++t) {
      y = features.row(t).transpose();
      const std::span<const int> sel = frame_selection(selection, t);
      for (const StatePosterior& sp : labels.frames[t]) {
        if (sp.mass <= 0.0) continue;
        const int j = static_cast<int>(sp.state);
        const FrameScore score =
            score_frame(work, wcache, j, y, sel, opts.mode);
        const double total = frame_score_or_throw(score, t);
        for (const FrameScore::Entry& e : score.entries) {
          const double gamma = sp.mass * std::exp(e.log_joint - total);
          const int k = e.substate;
          const int m = e.component;
          acc->substate_occ[j][k] += gamma;
          acc->comp_occ(j, m) += gamma;
          if (gamma <= 0.0) continue;
          const ComponentParams& comp = model.components[m];
          const ComponentCache& cc = wcache.comps[m];
          const VectorXd& zbar = work.states[j].substates[k].z;
          r0 = y - comp.G * zbar - comp.b;
          xbar.noalias() = cc.v_inv * (cc.ut_lambda_inv * r0);
          uxbar.noalias() = comp.U * xbar;
          resid = r0 - uxbar;  // y - U x - G z - b

          ComponentAccs& ca = acc->comps[m];
          ca.gamma += gamma;
          ca.sum_x.noalias() += gamma * xbar;
          ca.sum_xx.noalias() += gamma * (cc.v_inv + xbar * xbar.transpose());
          ca.cross_u.noalias() += gamma * (r0 * xbar.transpose());
          ca.cross_g.noalias() +=
              gamma * ((y - uxbar - comp.b) * zbar.transpose());
          ca.sum_zz.noalias() += gamma * z_moment[j][k];
          ca.sum_b.noalias() += gamma * (y - uxbar - comp.G * zbar);
          ca.lambda_stat.noalias() +=
              gamma * (resid.array().square().matrix() + cc.uvu_diag);
        }
      }
      ++acc->num_frames;
    }
    parts[s] = std::move(acc);
  });

  Accumulators acc = make_empty_accumulators(model);
  acc.z_posteriors = std::move(z_post);
  for (auto& part : parts) acc.merge(*part);
  acc.total_loglik = zstats.total_loglik;  // likelihood of the input model
  return acc;
}

std::vector<MatrixXd> update_u(const Accumulators& acc,
                               const TiedPldaModel& model, int* ridged) {
  const int p = model.hyper.p;
  std::vector<MatrixXd> out;
  out.reserve(model.components.size());
  for (size_t m = 0; m < model.components.size(); ++m) {
    const ComponentAccs& ca = acc.comps[m];
    if (ca.gamma <= kMinOccupancy) {
      out.push_back(model.components[m].U);
      continue;
    }
    MatrixXd moment = ca.sum_xx;
    Eigen::LLT<MatrixXd> llt(moment);
    if (llt.info() != Eigen::Success) {
      moment.diagonal().array() += 1e-8 * moment.trace() / p;
      llt.compute(moment);
      if (ridged != nullptr) ++*ridged;
      if (llt.info() != Eigen::Success)
        throw NumericError("update_u: singular moment matrix for component "
                           + std::to_string(m));
    }
    out.push_back(llt.solve(ca.cross_u.transpose()).transpose());
  }
  return out;
}

std::vector<MatrixXd> update_g(const Accumulators& acc,
                               const TiedPldaModel& model, int* ridged) {
  const int q = model.hyper.q;
  std::vector<MatrixXd> out;
  out.reserve(model.components.size());
  for (size_t m = 0; m < model.components.size(); ++m) {
    const ComponentAccs& ca = acc.comps[m];
    if (ca.gamma <= kMinOccupancy) {
      out.push_back(model.components[m].G);
      continue;
    }
    MatrixXd moment = ca.sum_zz;
    Eigen::LLT<MatrixXd> llt(moment);
    if (llt.info() != Eigen::Success) {
      moment.diagonal().array() += 1e-8 * moment.trace() / q;
      llt.compute(moment);
      if (ridged != nullptr) ++*ridged;
      if (llt.info() != Eigen::Success)
        throw NumericError("update_g: singular moment matrix for component "
                           + std::to_string(m));
    }
    out.push_back(llt.solve(ca.cross_g.transpose()).transpose());
  }
  return out;
}

std::vector<VectorXd> update_b(const Accumulators& acc,
                               const TiedPldaModel& model) {
  std::vector<VectorXd> out;
  out.reserve(model.components.size());
  for (size_t m = 0; m < model.components.size(); ++m) {
    const ComponentAccs& ca = acc.comps[m];
    if (ca.gamma <= kMinOccupancy) {
      out.push_back(model.components[m].b);
      continue;
    }
    out.push_back(ca.sum_b / ca.gamma);
  }
  return out;
}

std::vector<VectorXd> update_lambda(const Accumulators& acc,
                                    const TiedPldaModel& model,
                                    double variance_floor, int* floored) {
  std::vector<VectorXd> out;
  out.reserve(model.components.size());
  for (size_t m = 0; m < model.components.size(); ++m) {
    const ComponentAccs& ca = acc.comps[m];
    if (ca.gamma <= kMinOccupancy) {
      out.push_back(model.components[m].lambda);
      continue;
    }
    VectorXd lambda = ca.lambda_stat / ca.gamma;
    if (floored != nullptr)
      *floored += static_cast<int>((lambda.array() < variance_floor).count());
    out.push_back(lambda.cwiseMax(variance_floor));
  }
  return out;
}

WeightUpdate update_weights(const Accumulators& acc,
                            const TiedPldaModel& model, double floor) {
  const Hyperparams& h = model.hyper;
  if (floor < 0.0 || floor >= 1.0 / h.M)
    throw std::invalid_argument("update_weights: floor must be in [0, 1/M)");
  WeightUpdate upd;
  upd.substate_weights.resize(h.J);
  upd.pi.resize(h.J);
  for (int j = 0; j < h.J; ++j) {
    const StateModel& s = model.states[j];
    const size_t nsub = s.substates.size();
    double state_total = 0.0;
    for (double occ : acc.substate_occ[j]) state_total += occ;
    if (state_total <= kMinOccupancy) {  // unseen state keeps its weights
      upd.substate_weights[j].resize(nsub);
      for (size_t k = 0; k < nsub; ++k)
        upd.substate_weights[j][k] = s.substates[k].weight;
      upd.pi[j] = s.pi;
      continue;
    }
    upd.substate_weights[j].resize(nsub);
    for (size_t k = 0; k < nsub; ++k)
      upd.substate_weights[j][k] = acc.substate_occ[j][k] / state_total;

    VectorXd pi = acc.comp_occ.row(j).transpose() / state_total;
    if (floor > 0.0) {
      // pin entries below the floor at it, rescale the rest to the leftover
      // mass; repeat because rescaling can push new entries under. Each
      // pass pins at least one new entry, so this ends within M passes.
      std::vector<bool> pinned(h.M, false);
      int num_pinned = 0;
      for (;;) {
        bool new_pin = false;
        for (int m = 0; m < h.M; ++m) {
          if (!pinned[m] && pi(m) < floor) {
            pinned[m] = true;
            ++num_pinned;
            new_pin = true;
          }
        }
        if (!new_pin) break;
        double free_mass = 0.0;
        for (int m = 0; m < h.M; ++m)
          if (!pinned[m]) free_mass += pi(m);
        const double target = 1.0 - num_pinned * floor;
        for (int m = 0; m < h.M; ++m)
          pi(m) = pinned[m] ? floor : pi(m) * target / free_mass;
      }
      upd.floored += num_pinned;
    }
    upd.pi[j] = pi;
  }
  return upd;
}

double aux_u(const ComponentAccs& acc, const VectorXd& lambda,
             const MatrixXd& u) {
  const VectorXd lambda_inv = lambda.cwiseInverse();
  const VectorXd quad = ((u * acc.sum_xx).cwiseProduct(u)).rowwise().sum();
  const VectorXd cross = (acc.cross_u.cwiseProduct(u)).rowwise().sum();
  return lambda_inv.dot(cross - 0.5 * quad);
}

double aux_g(const ComponentAccs& acc, const VectorXd& lambda,
             const MatrixXd& g) {
  const VectorXd lambda_inv = lambda.cwiseInverse();
  const VectorXd quad = ((g * acc.sum_zz).cwiseProduct(g)).rowwise().sum();
  const VectorXd cross = (acc.cross_g.cwiseProduct(g)).rowwise().sum();
  return lambda_inv.dot(cross - 0.5 * quad);
}

double aux_b(const ComponentAccs& acc, const VectorXd& lambda,
             const VectorXd& b) {
  const VectorXd lambda_inv = lambda.cwiseInverse();
  return b.cwiseProduct(lambda_inv).dot(acc.sum_b)
         - 0.5 * acc.gamma * b.cwiseProduct(lambda_inv).dot(b);
}

double aux_lambda(const ComponentAccs& acc, const VectorXd& lambda) {
  return -0.5 * (acc.gamma * lambda.array().log().sum()
                 + (acc.lambda_stat.array() / lambda.array()).sum());
}

double aux_weights(const Accumulators& acc,
                   const std::vector<std::vector<double>>& substate_weights,
                   const std::vector<VectorXd>& pi) {
  double total = 0.0;
  for (size_t j = 0; j < substate_weights.size(); ++j) {
    for (size_t k = 0; k < substate_weights[j].size(); ++k) {
      const double occ = acc.substate_occ[j][k];
      if (occ > 0.0) total += occ * std::log(substate_weights[j][k]);
    }
    for (Eigen::Index m = 0; m < pi[j].size(); ++m) {
      const double occ = acc.comp_occ(j, m);
      if (occ > 0.0) total += occ * std::log(pi[j](m));
    }
  }
  return total;
}

void print_report(const EmReport& report, std::ostream& os) {
  os << "iter=" << report.iteration
     << " frames=" << report.num_frames
     << " avg_loglik=" << report.avg_loglik
     << " dQ_U=" << report.aux_delta_u
     << " dQ_G=" << report.aux_delta_g
     << " dQ_b=" << report.aux_delta_b
     << " dQ_Lambda=" << report.aux_delta_lambda
     << " dQ_w=" << report.aux_delta_weights
     << " floored_weights=" << report.floored_weights
     << " floored_lambda=" << report.floored_lambda
     << " ridged=" << report.ridged_updates << "\n";
}

std::pair<TiedPldaModel, EmReport> em_iteration(
    const TiedPldaModel& model, const FeatureMatrix& features,
    const LabelSequence& labels,
    const std::vector<std::vector<int>>* selection, const TrainConfig& config,
    int threads, int iteration_index, double data_variance) {
  if (features.rows() == 0) throw std::invalid_argument("em_iteration: no frames");
  EstepOptions opts;
  opts.mode = config.likelihood_mode;
  opts.threads = threads;
  opts.deterministic = config.deterministic;
  const Accumulators acc = estep(model, features, labels, selection, opts);

  EmReport report;
  report.iteration = iteration_index;
  report.num_frames = acc.num_frames;
  report.avg_loglik = acc.total_loglik / static_cast<double>(acc.num_frames);
  report.substate_occupancy = acc.substate_occ;

  TiedPldaModel next = model;
  const double variance_floor =
      config.variance_floor_scale * std::max(data_variance, 0.0);

  const std::vector<MatrixXd> new_u =
      update_u(acc, model, &report.ridged_updates);
  const std::vector<MatrixXd> new_g =
      update_g(acc, model, &report.ridged_updates);
  const std::vector<VectorXd> new_b = update_b(acc, model);
  const std::vector<VectorXd> new_lambda =
      update_lambda(acc, model, variance_floor, &report.floored_lambda);
  const WeightUpdate weights = update_weights(acc, model, config.weight_floor);
  report.floored_weights = weights.floored;

  for (int m = 0; m < model.hyper.M; ++m) {
    const ComponentAccs& ca = acc.comps[m];
    const ComponentParams& old_c = model.components[m];
    report.aux_delta_u += aux_u(ca, old_c.lambda, new_u[m])
                          - aux_u(ca, old_c.lambda, old_c.U);
    report.aux_delta_g += aux_g(ca, old_c.lambda, new_g[m])
                          - aux_g(ca, old_c.lambda, old_c.G);
    report.aux_delta_b += aux_b(ca, old_c.lambda, new_b[m])
                          - aux_b(ca, old_c.lambda, old_c.b);
    report.aux_delta_lambda +=
        aux_lambda(ca, new_lambda[m]) - aux_lambda(ca, old_c.lambda);
    ComponentParams& c = next.components[m];
    c.U = new_u[m];
    c.G = new_g[m];
    c.b = new_b[m];
    c.lambda = new_lambda[m];
  }
  {
    std::vector<std::vector<double>> old_c(model.hyper.J);
    std::vector<VectorXd> old_pi(model.hyper.J);
    for (int j = 0; j < model.hyper.J; ++j) {
      old_pi[j] = model.states[j].pi;
      old_c[j].resize(model.states[j].substates.size());
      for (size_t k = 0; k < old_c[j].size(); ++k)
        old_c[j][k] = model.states[j].substates[k].weight;
    }
    report.aux_delta_weights =
        aux_weights(acc, weights.substate_weights, weights.pi)
        - aux_weights(acc, old_c, old_pi);
  }

  for (int j = 0; j < model.hyper.J; ++j) {
    StateModel& s = next.states[j];
    for (size_t k = 0; k < s.substates.size(); ++k) {
      if (acc.substate_occ[j][k] > kMinOccupancy)
        s.substates[k].z = acc.z_posteriors[j][k].mean;
      s.substates[k].weight = weights.substate_weights[j][k];
    }
    s.pi = weights.pi[j];
  }

  report.active_components.resize(model.hyper.J);
  for (int j = 0; j < model.hyper.J; ++j)
    report.active_components[j] = static_cast<int>(
        (next.states[j].pi.array() >= kActiveWeightThreshold).count());

  validate_model(next);
  return {std::move(next), std::move(report)};
}

namespace {

/// Merges sub-state `k` of state `j` into its nearest sibling by Euclidean
/// distance in z-space; the sibling absorbs the weight.
void merge_substate(TiedPldaModel* model, int j, int k) {
  StateModel& s = model->states[j];
  TPLDA_ASSERT(s.substates.size() > 1);
  int nearest = -1;
  double best = std::numeric_limits<double>::infinity();
  for (size_t k2 = 0; k2 < s.substates.size(); ++k2) {
    if (static_cast<int>(k2) == k) continue;
    const double dist = (s.substates[k2].z - s.substates[k].z).norm();
    if (dist < best) {
      best = dist;
      nearest = static_cast<int>(k2);
    }
  }
  s.substates[nearest].weight += s.substates[k].weight;
  s.substates.erase(s.substates.begin() + k);
}

}  // namespace

TrainResult train(const TiedPldaModel& model, const FeatureMatrix& features,
                  const LabelSequence& labels,
                  const std::vector<std::vector<int>>* selection,
                  const TrainConfig& config, int threads, std::ostream* log) {
  if (features.rows() == 0) throw std::invalid_argument("train: no frames");
  const VectorXd mean = features.colwise().mean();
  double data_variance = 0.0;
  for (int64_t t = 0; t < features.rows(); ++t)
    data_variance += (features.row(t).transpose() - mean).squaredNorm();
  data_variance /= static_cast<double>(features.rows() * features.cols());

  TrainResult result;
  result.model = model;
  std::vector<std::vector<int>> starved(model.hyper.J);
  for (int j = 0; j < model.hyper.J; ++j)
    starved[j].assign(model.states[j].substates.size(), 0);

  for (int iter = 0; iter < config.iterations; ++iter) {
    auto [next, report] = em_iteration(result.model, features, labels,
                                       selection, config, threads, iter,
                                       data_variance);
    result.model = std::move(next);
    if (log != nullptr) print_report(report, *log);

    // sub-states starved for three consecutive iterations fold into their
    // nearest sibling
    for (int j = 0; j < result.model.hyper.J; ++j) {
      auto& counters = starved[j];
      const auto& occ = report.substate_occupancy[j];
      for (size_t k = 0; k < counters.size(); ++k)
        counters[k] = occ[k] < 1.0 ? counters[k] + 1 : 0;
      for (int k = static_cast<int>(counters.size()) - 1; k >= 0; --k) {
        if (counters[k] >= 3 && result.model.states[j].substates.size() > 1) {
          merge_substate(&result.model, j, k);
          counters.erase(counters.begin() + k);
        }
      }
    }
    result.reports.push_back(std::move(report));
  }
  validate_model(result.model);
  return result;
}

TiedPldaModel init_model(const BackgroundModel& bg, const Hyperparams& hyper,
                         uint64_t seed,
                         const std::vector<double>* state_frame_counts) {
  validate_hyperparams(hyper);
  validate_background(bg);
  if (bg.num_components() != hyper.M)
    throw std::invalid_argument(
        "init_model: background has " + std::to_string(bg.num_components())
        + " components, hyperparameters say " + std::to_string(hyper.M));
  if (bg.dim() != hyper.d)
    throw std::invalid_argument(
        "init_model: background dimension " + std::to_string(bg.dim())
        + " does not match feature dimension " + std::to_string(hyper.d));
  if (state_frame_counts != nullptr
      && static_cast<int>(state_frame_counts->size()) != hyper.J)
    throw std::invalid_argument("init_model: state_frame_counts has "
                                + std::to_string(state_frame_counts->size())
                                + " entries, expected "
                                + std::to_string(hyper.J));

  TiedPldaModel model = new_model(hyper, 1, ModelFamily::kTied);
  Rng rng(seed);
  const int r = bg.rank();
  for (int m = 0; m < hyper.M; ++m) {
    const FaComponent& fa = bg.comps[m];
    ComponentParams& c = model.components[m];
    c.b = fa.mean;
    c.lambda = fa.noise + fa.loading.array().square().rowwise().sum().matrix();
    const int copy = std::min(r, hyper.p);
    c.U.leftCols(copy) = fa.loading.leftCols(copy);
    if (hyper.p > r) {
      // small noise rather than zeros: a zero column is a fixed point of
      // the U update
      const double scale = 0.01 * std::sqrt(c.lambda.mean());
      for (int col = r; col < hyper.p; ++col)
        c.U.col(col) = scale * rng.gauss_vector(hyper.d);
    }
    for (Eigen::Index i = 0; i < c.G.size(); ++i)
      c.G.data()[i] = 0.1 * rng.gauss();
  }
  validate_model(model);
  return model;
}

TiedPldaModel mixup(const TiedPldaModel& model, int target_total_substates,
                    uint64_t seed,
                    const std::vector<std::vector<double>>* occupancy) {
  if (model.family == ModelFamily::kMixture)
    throw std::invalid_argument("mixup: mixture-family models cannot grow "
                                "sub-states");
  const int current = model.total_substates();
  if (target_total_substates < current)
    throw std::invalid_argument(
        "mixup: target " + std::to_string(target_total_substates)
        + " below current sub-state count " + std::to_string(current));
  if (occupancy != nullptr) {
    TPLDA_ASSERT(static_cast<int>(occupancy->size()) == model.hyper.J);
    for (int j = 0; j < model.hyper.J; ++j)
      TPLDA_ASSERT((*occupancy)[j].size()
                   == model.states[j].substates.size());
  }

  TiedPldaModel out = model;
  Rng rng(seed);

  struct Candidate {
    double occ;
    int j, k;
    bool operator<(const Candidate& o) const {
      if (occ != o.occ) return occ < o.occ;
      return std::tie(j, k) > std::tie(o.j, o.k);  // ties: lowest (j,k) first
    }
  };
  std::priority_queue<Candidate> heap;
  for (int j = 0; j < out.hyper.J; ++j)
    for (size_t k = 0; k < out.states[j].substates.size(); ++k) {
      const double occ = occupancy != nullptr
                             ? (*occupancy)[j][k]
                             : out.states[j].substates[k].weight;
      heap.push({occ, j, static_cast<int>(k)});
    }

  for (int n = current; n < target_total_substates; ++n) {
    const Candidate top = heap.top();
    heap.pop();
    StateModel& s = out.states[top.j];
    SubState& parent = s.substates[top.k];
    const VectorXd direction = 0.1 * rng.unit_vector(out.hyper.q);
    SubState child;
    child.z = parent.z - direction;
    child.weight = parent.weight / 2.0;
    parent.z += direction;
    parent.weight /= 2.0;
    const int child_index = static_cast<int>(s.substates.size());
    s.substates.push_back(std::move(child));
    heap.push({top.occ / 2.0, top.j, top.k});
    heap.push({top.occ / 2.0, top.j, child_index});
  }
  validate_model(out);
  return out;
}

}  // namespace tplda
