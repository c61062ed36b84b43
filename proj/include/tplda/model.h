// tplda/model.h

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

#ifndef TPLDA_MODEL_H_
#define TPLDA_MODEL_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "tplda/common.h"

namespace tplda {

// The acoustic model is a mixture over (sub-state k, component m) pairs:
//
//   y | j,k,m = U_m x + G_m z_jk + b_m + eps,   eps ~ N(0, Lambda_m)
//
// with x ~ N(0, I) per frame and z_jk a per-sub-state point estimate.
// U_m, G_m, b_m, Lambda_m are shared across all states; each state owns its
// sub-state vectors z_jk, sub-state weights c_jk and component weights pi_jm.

/// Model family: tied mixes every sub-state with every component
/// (w_jkm = c_jk * pi_jm); mixture binds sub-state k to component k
/// (w = c_jk, one z vector per component) and requires K == M per state.
enum class ModelFamily : uint32_t { kTied = 0, kMixture = 1 };

struct Hyperparams {
  int d = 0;  ///< feature dimension
  int p = 0;  ///< frame-variable dimension, p <= d
  int q = 0;  ///< state-variable dimension, q <= d
  int M = 0;  ///< number of components
  int J = 0;  ///< number of states
};

/// Throws std::invalid_argument unless all dims are positive and p,q <= d.
void validate_hyperparams(const Hyperparams& hyper);

/// Globally shared per-component parameters.
struct ComponentParams {
  MatrixXd U;       ///< d x p frame-variable loading
  MatrixXd G;       ///< d x q state-variable loading
  VectorXd b;       ///< d bias
  VectorXd lambda;  ///< d diagonal of the residual covariance, entries > 0
};

struct SubState {
  VectorXd z;        ///< q state vector
  double weight = 0.0;  ///< c_jk, sums to 1 over a state's sub-states
};

struct StateModel {
  std::vector<SubState> substates;  ///< at least one
  VectorXd pi;                      ///< M component weights, sums to 1
};

struct TiedPldaModel {
  Hyperparams hyper;
  ModelFamily family = ModelFamily::kTied;
  std::vector<ComponentParams> components;  ///< size M
  std::vector<StateModel> states;           ///< size J

  int dim() const { return hyper.d; }
  int num_components() const { return hyper.M; }
  int num_states() const { return hyper.J; }
  int num_substates(int j) const {
    return static_cast<int>(states[j].substates.size());
  }
  int total_substates() const;
};

/// Checks dimensional consistency, weight normalization (1e-10), positive
/// lambda entries and finiteness. Throws std::invalid_argument on violation.
void validate_model(const TiedPldaModel& model);

/// Blank model: zero U/G/b/z, unit lambda, uniform c and pi,
/// `substates_per_state` sub-states per state (must equal hyper.M for the
/// mixture family). Callers normally overwrite it via init or training.
TiedPldaModel new_model(const Hyperparams& hyper, int substates_per_state,
                        ModelFamily family = ModelFamily::kTied);

struct RandomModelOptions {
  double u_scale = 0.5;       ///< U entries ~ N(0, u_scale^2)
  double g_scale = 1.0;       ///< G entries ~ N(0, g_scale^2)
  double b_scale = 3.0;       ///< b entries ~ N(0, b_scale^2)
  double lambda_min = 0.5;    ///< lambda entries ~ U[min, max]
  double lambda_max = 1.5;
  double z_scale = 1.0;       ///< z entries ~ N(0, z_scale^2)
  double weight_jitter = 1.0; ///< weights ~ U[1, 1 + jitter], normalized
};

/// Fully populated random model for synthetic corpora and tests.
TiedPldaModel random_model(const Hyperparams& hyper, int substates_per_state,
                           uint64_t seed,
                           const RandomModelOptions& opts = {},
                           ModelFamily family = ModelFamily::kTied);

// Model file format "PLDAMDL1": 8 magic bytes, then little-endian u32
// fields version=1, family (0=tied, 1=mixture), d, p, q, M, J; then per
// component U row-major, G row-major, b, lambda as little-endian f64; then
// per state u32 K_j followed by K_j records of (z, c) and the pi vector.
// Round trips are bit-exact.

void write_model(const TiedPldaModel& model, std::ostream& os);
void write_model(const TiedPldaModel& model, const std::string& path);

TiedPldaModel read_model(std::istream& is, const std::string& context);
TiedPldaModel read_model(const std::string& path);

/// Number of model parameters as (state_dependent, state_independent).
/// state_independent counts U, G, b, lambda over all M components.
/// state_dependent sums K_j*(q+1) plus the number of active components per
/// state: pi_jm >= 0.01, or the caller-supplied per-state counts.
std::pair<int64_t, int64_t> count_params(
    const TiedPldaModel& model,
    const std::vector<int>* active_components_per_state = nullptr);

/// Active-weight threshold used by count_params and reporting.
inline constexpr double kActiveWeightThreshold = 0.01;

}  // namespace tplda

#endif  // TPLDA_MODEL_H_
