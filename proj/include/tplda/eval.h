// tplda/eval.h

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

#ifndef TPLDA_EVAL_H_
#define TPLDA_EVAL_H_

#include <iosfwd>
#include <string>
#include <vector>

#include "tplda/data.h"
#include "tplda/model.h"

namespace tplda {

struct EvalReport {
  double accuracy = 0.0;       ///< trace(confusion) / total
  double avg_loglik = 0.0;     ///< per frame, of the labeled state(s)
  int64_t num_frames = 0;
  Eigen::MatrixX<int64_t> confusion;  ///< J x J, row = reference state
  int64_t state_dependent_params = 0;
  int64_t state_independent_params = 0;
};

/// Classifies every frame via the marginal likelihood (restricted to
/// `selection` when given) and aggregates the confusion counts; soft
/// labels score against their largest-mass state.
EvalReport evaluate(const TiedPldaModel& model, const FeatureMatrix& features,
                    const LabelSequence& labels,
                    const std::vector<std::vector<int>>* selection = nullptr,
                    int threads = 1);

/// One metric per line, `name<TAB>value`.
void print_report(const EvalReport& report, std::ostream& os);

struct ParamTableRow {
  std::string system;
  int dim = 0;
  int64_t state_dependent = 0;
  int64_t state_independent = 0;
};

std::vector<ParamTableRow> param_table(
    const std::vector<std::pair<std::string, const TiedPldaModel*>>& models);

/// Aligned text table; `tab_separated` switches to machine-readable rows.
void print_param_table(const std::vector<ParamTableRow>& rows,
                       std::ostream& os, bool tab_separated = false);

}  // namespace tplda

#endif  // TPLDA_EVAL_H_
