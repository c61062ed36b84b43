// tplda/training.h

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

#ifndef TPLDA_TRAINING_H_
#define TPLDA_TRAINING_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "tplda/background.h"
#include "tplda/data.h"
#include "tplda/inference.h"
#include "tplda/model.h"

namespace tplda {

enum class LikelihoodMode { kPoint, kUncertainty };

/// Training configuration, readable from a `key = value` text file with
/// keys: iterations, weight-floor, variance-floor-scale, select-n,
/// deterministic, seed, likelihood-mode (point|uncertainty). Unknown keys
/// are rejected. Blank lines and lines starting with '#' are ignored.
struct TrainConfig {
  int iterations = 10;
  double weight_floor = 1e-5;
  double variance_floor_scale = 1e-6;
  int select_n = 15;
  bool deterministic = false;
  uint64_t seed = 0;
  LikelihoodMode likelihood_mode = LikelihoodMode::kUncertainty;
};

TrainConfig parse_train_config(std::istream& is, const std::string& context);
TrainConfig parse_train_config(const std::string& path);

/// Per-component sufficient statistics gathered in the E-step.
struct ComponentAccs {
  double gamma = 0.0;     ///< total responsibility
  VectorXd sum_x;         ///< sum gamma E[x]                       (p)
  MatrixXd sum_xx;        ///< sum gamma E[x x^T]                   (p x p)
  MatrixXd cross_u;       ///< sum gamma (y - G z - b) E[x]^T       (d x p)
  MatrixXd cross_g;       ///< sum gamma (y - U x - b) E[z]^T       (d x q)
  MatrixXd sum_zz;        ///< sum gamma E[z z^T]                   (q x q)
  VectorXd sum_b;         ///< sum gamma (y - U x - G z)            (d)
  VectorXd lambda_stat;   ///< sum gamma (resid^2 + diag(U V^{-1} U^T))
};

/// Mergeable E-step output. Merging sums the statistics; shards accumulated
/// and merged in a fixed order reproduce bit-identical results.
struct Accumulators {
  std::vector<ComponentAccs> comps;                 ///< size M
  std::vector<std::vector<double>> substate_occ;    ///< [j][k] sum_{m,t}
  MatrixXd comp_occ;                                ///< J x M, sum_{k,t}
  double total_loglik = 0.0;  ///< of the model as given (pre-update z)
  int64_t num_frames = 0;
  /// Sub-state posteriors from the pooling sweep; the means are the fresh
  /// point estimates the statistics were accumulated against. Not summed
  /// by merge (identical across shards).
  std::vector<std::vector<GaussianPosterior>> z_posteriors;

  void merge(const Accumulators& other);
};

struct EstepOptions {
  LikelihoodMode mode = LikelihoodMode::kUncertainty;
  int threads = 1;
  bool deterministic = true;
};

/// Two-sweep E-step: pool each sub-state posterior over all of its frames
/// using the stored point estimates, then accumulate component statistics
/// against the refreshed sub-state means. `selection` restricts each
/// frame's component set (nullptr = all components).
Accumulators estep(const TiedPldaModel& model, const FeatureMatrix& features,
                   const LabelSequence& labels,
                   const std::vector<std::vector<int>>* selection,
                   const EstepOptions& opts = {});

// Closed-form M-step updates, each from the fixed statistics and the
// pre-update companion parameters. Components with zero occupancy keep
// their previous values. `ridged` (when non-null) counts moment matrices
// that needed a ridge to invert.

std::vector<MatrixXd> update_u(const Accumulators& acc,
                               const TiedPldaModel& model,
                               int* ridged = nullptr);
std::vector<MatrixXd> update_g(const Accumulators& acc,
                               const TiedPldaModel& model,
                               int* ridged = nullptr);
std::vector<VectorXd> update_b(const Accumulators& acc,
                               const TiedPldaModel& model);
std::vector<VectorXd> update_lambda(const Accumulators& acc,
                                    const TiedPldaModel& model,
                                    double variance_floor,
                                    int* floored = nullptr);

struct WeightUpdate {
  std::vector<std::vector<double>> substate_weights;  ///< [j][k]
  std::vector<VectorXd> pi;                           ///< [j], size M
  int floored = 0;  ///< pi entries pinned at the floor
};

/// c_jk and pi_jm from occupancies; pi floored at `floor` (must be in
/// [0, 1/M)) and renormalized. States with zero occupancy keep their
/// previous weights.
WeightUpdate update_weights(const Accumulators& acc,
                            const TiedPldaModel& model, double floor);

// Auxiliary objectives of each update, evaluated from the statistics with
// parameter-independent constants dropped. Exact maximizers never decrease
// these.
double aux_u(const ComponentAccs& acc, const VectorXd& lambda,
             const MatrixXd& u);
double aux_g(const ComponentAccs& acc, const VectorXd& lambda,
             const MatrixXd& g);
double aux_b(const ComponentAccs& acc, const VectorXd& lambda,
             const VectorXd& b);
double aux_lambda(const ComponentAccs& acc, const VectorXd& lambda);
double aux_weights(const Accumulators& acc,
                   const std::vector<std::vector<double>>& substate_weights,
                   const std::vector<VectorXd>& pi);

struct EmReport {
  int iteration = 0;
  double avg_loglik = 0.0;  ///< per frame, of the model entering the step
  int64_t num_frames = 0;
  double aux_delta_u = 0.0;
  double aux_delta_g = 0.0;
  double aux_delta_b = 0.0;
  double aux_delta_lambda = 0.0;
  double aux_delta_weights = 0.0;
  int floored_weights = 0;
  int floored_lambda = 0;
  int ridged_updates = 0;
  std::vector<int> active_components;  ///< per state, pi >= 0.01 after update
  std::vector<std::vector<double>> substate_occupancy;  ///< [j][k]
};

void print_report(const EmReport& report, std::ostream& os);

/// One full EM step: E-step, then U, G, b, Lambda and weight updates in
/// that order, plus the refreshed sub-state vectors. `data_variance`
/// scales the variance floor (floor = variance_floor_scale * data_variance).
std::pair<TiedPldaModel, EmReport> em_iteration(
    const TiedPldaModel& model, const FeatureMatrix& features,
    const LabelSequence& labels,
    const std::vector<std::vector<int>>* selection, const TrainConfig& config,
    int threads = 1, int iteration_index = 0, double data_variance = 1.0);

struct TrainResult {
  TiedPldaModel model;
  std::vector<EmReport> reports;
};

/// Multi-iteration driver: runs config.iterations EM steps, computes the
/// variance floor from the data, merges sub-states starved below one frame
/// of occupancy for three consecutive iterations into their nearest
/// sibling, and optionally logs one report line per iteration.
TrainResult train(const TiedPldaModel& model, const FeatureMatrix& features,
                  const LabelSequence& labels,
                  const std::vector<std::vector<int>>* selection,
                  const TrainConfig& config, int threads = 1,
                  std::ostream* log = nullptr);

/// Seeds a tied model from a trained background model: biases from the
/// component means, residual variances from the total per-dimension
/// variance (noise plus loading Gram diagonal), frame loadings from the
/// factor loadings (columns beyond the background rank receive small
/// seeded noise so they can move away from zero), state loadings drawn
/// from N(0, 0.1^2). One sub-state per state, uniform weights, zero state
/// vectors. `state_frame_counts`, when given, must have one entry per
/// state (validation only).
TiedPldaModel init_model(const BackgroundModel& bg, const Hyperparams& hyper,
                         uint64_t seed,
                         const std::vector<double>* state_frame_counts =
                             nullptr);

/// Grows the model to `target_total_substates` by repeatedly splitting the
/// sub-state with the largest occupancy: children at z +- 0.1 r for a
/// seeded random unit vector r, the parent weight halved into both.
/// Component weights are untouched. `occupancy` (normally from the last
/// EmReport) ranks the sub-states; without it the sub-state weights stand
/// in. Tied family only.
TiedPldaModel mixup(const TiedPldaModel& model, int target_total_substates,
                    uint64_t seed,
                    const std::vector<std::vector<double>>* occupancy =
                        nullptr);

}  // namespace tplda

#endif  // TPLDA_TRAINING_H_
