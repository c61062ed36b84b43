// tplda/eval.cc

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

#include "tplda/eval.h"

#include <atomic>
#include <iomanip>
#include <ostream>
#include <thread>

#include "tplda/inference.h"

namespace tplda {

EvalReport evaluate(const TiedPldaModel& model, const FeatureMatrix& features,
                    const LabelSequence& labels,
                    const std::vector<std::vector<int>>* selection,
                    int threads) {
  const Hyperparams& h = model.hyper;
  const int64_t T = features.rows();
  if (features.cols() != h.d)
    throw std::invalid_argument(
        "evaluate: feature dimension " + std::to_string(features.cols())
        + " does not match model dimension " + std::to_string(h.d));
  if (labels.size() != T)
    throw std::invalid_argument("evaluate: frame/label count mismatch");
  validate_labels(labels, h.J);
  if (selection != nullptr
      && static_cast<int64_t>(selection->size()) != T)
    throw std::invalid_argument("evaluate: selection size mismatch");

  const ModelCache cache(model);
  std::vector<int> predicted(T, -1);
  std::vector<double> frame_ll(T, 0.0);

  const int nthreads = std::max(1, threads);
  std::atomic<int64_t> next(0);
  auto worker = [&]() {
    constexpr int64_t kBlock = 256;
    for (;;) {
      const int64_t begin = next.fetch_add(kBlock);
      if (begin >= T) return;
      const int64_t end = std::min(T, begin + kBlock);
      for (int64_t t = begin; t < end; ++t) {
        const VectorXd y = features.row(t).transpose();
        std::span<const int> sel;
        if (selection != nullptr) sel = std::span<const int>((*selection)[t]);
        const ClassifyResult res =
            classify_frame(model, cache, y, nullptr, sel);
        predicted[t] = res.best_state;
        double ll = 0.0;
        for (const StatePosterior& sp : labels.frames[t])
          if (sp.mass > 0.0) ll += sp.mass * res.loglik[sp.state];
        frame_ll[t] = ll;
      }
    }
  };
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  EvalReport report;
  report.confusion = Eigen::MatrixX<int64_t>::Zero(h.J, h.J);
  report.num_frames = T;
  double total_ll = 0.0;
  int64_t correct = 0;
  for (int64_t t = 0; t < T; ++t) {
    total_ll += frame_ll[t];
    // reference = largest-mass state; ties toward the lower index
    int ref = -1;
    double best = -1.0;
    for (const StatePosterior& sp : labels.frames[t])
      if (sp.mass > best) {
        best = sp.mass;
        ref = static_cast<int>(sp.state);
      }
    if (ref < 0) continue;
    report.confusion(ref, predicted[t]) += 1;
    if (ref == predicted[t]) ++correct;
  }
  report.avg_loglik = T > 0 ? total_ll / static_cast<double>(T) : 0.0;
  report.accuracy =
      T > 0 ? static_cast<double>(correct) / static_cast<double>(T) : 0.0;
  const auto counts = count_params(model);
  report.state_dependent_params = counts.first;
  report.state_independent_params = counts.second;
  return report;
}

void print_report(const EvalReport& report, std::ostream& os) {
  os << "frames\t" << report.num_frames << "\n";
  os << std::setprecision(12);
  os << "accuracy\t" << report.accuracy << "\n";
  os << "avg_loglik\t" << report.avg_loglik << "\n";
  os << "state_dependent_params\t" << report.state_dependent_params << "\n";
  os << "state_independent_params\t" << report.state_independent_params
     << "\n";
}

std::vector<ParamTableRow> param_table(
    const std::vector<std::pair<std::string, const TiedPldaModel*>>& models) {
  std::vector<ParamTableRow> rows;
  rows.reserve(models.size());
  for (const auto& [name, model] : models) {
    const auto counts = count_params(*model);
    rows.push_back({name, model->hyper.d, counts.first, counts.second});
  }
  return rows;
}

void print_param_table(const std::vector<ParamTableRow>& rows,
                       std::ostream& os, bool tab_separated) {
  if (tab_separated) {
    for (const ParamTableRow& r : rows)
      os << r.system << "\t" << r.dim << "\t" << r.state_dependent << "\t"
         << r.state_independent << "\n";
    return;
  }
  os << std::left << std::setw(24) << "system" << std::right << std::setw(8)
     << "dim" << std::setw(18) << "state-dep" << std::setw(18) << "state-indep"
     << "\n";
  for (const ParamTableRow& r : rows)
    os << std::left << std::setw(24) << r.system << std::right << std::setw(8)
       << r.dim << std::setw(18) << r.state_dependent << std::setw(18)
       << r.state_independent << "\n";
}

}  // namespace tplda
