// tplda/background.h

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

#ifndef TPLDA_BACKGROUND_H_
#define TPLDA_BACKGROUND_H_

#include <iosfwd>
#include <string>
#include <vector>

#include "tplda/data.h"

namespace tplda {

// Mixture of factor analysers:
//   p(y) = sum_m omega_m N(y; mu_m, W_m W_m^T + diag(psi_m))
// used to preselect components per frame and to seed model initialization.

struct FaComponent {
  VectorXd mean;     ///< d
  MatrixXd loading;  ///< d x r (r may be 0: plain diagonal Gaussian)
  VectorXd noise;    ///< d, entries > 0
  double weight = 0.0;
};

struct BackgroundModel {
  std::vector<FaComponent> comps;

  int dim() const { return comps.empty() ? 0 : static_cast<int>(comps[0].mean.size()); }
  int rank() const {
    return comps.empty() ? 0 : static_cast<int>(comps[0].loading.cols());
  }
  int num_components() const { return static_cast<int>(comps.size()); }
};

/// Weight sums, positive noise, dimensional consistency.
void validate_background(const BackgroundModel& bg);

/// EM training. Means are seeded by distance-weighted random frame
/// selection; noise starts at the per-dimension data variance. The
/// per-iteration data log-likelihood (evaluated before each update) is
/// appended to *loglik_history when given and is non-decreasing.
BackgroundModel train_bg(const FeatureMatrix& features, int components,
                         int rank, int iterations, uint64_t seed,
                         std::vector<double>* loglik_history = nullptr);

/// Indices of the n components with the highest weighted marginal density
/// omega_m N(y; mu_m, W W^T + psi), descending; ties break toward the
/// lower index.
std::vector<int> select_components(const BackgroundModel& bg,
                                   const VectorXd& y, int n);

/// Per-frame top-n selection for a whole feature matrix.
std::vector<std::vector<int>> select_for_dataset(const BackgroundModel& bg,
                                                 const FeatureMatrix& features,
                                                 int n);

// Background file "PLDABGM1": magic, u32 version=1, d, r, M, then per
// component mu, W row-major, psi, omega as little-endian f64.

void write_background(const BackgroundModel& bg, std::ostream& os);
void write_background(const BackgroundModel& bg, const std::string& path);
BackgroundModel read_background(std::istream& is, const std::string& context);
BackgroundModel read_background(const std::string& path);

}  // namespace tplda

#endif  // TPLDA_BACKGROUND_H_
