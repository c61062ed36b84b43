// tplda/model.cc

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

#include "tplda/model.h"

#include <fstream>
#include <sstream>

#include "tplda/io.h"

namespace tplda {

namespace {

constexpr char kModelMagic[8] = {'P', 'L', 'D', 'A', 'M', 'D', 'L', '1'};
constexpr uint32_t kModelVersion = 1;
constexpr double kWeightSumTol = 1e-10;
constexpr double kFileWeightSumTol = 1e-6;

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

void validate_hyperparams(const Hyperparams& h) {
  check(h.d > 0, "feature dimension d must be positive");
  check(h.p > 0, "frame-variable dimension p must be positive");
  check(h.q > 0, "state-variable dimension q must be positive");
  check(h.M > 0, "component count M must be positive");
  check(h.J > 0, "state count J must be positive");
  check(h.p <= h.d, "frame-variable dimension p exceeds feature dimension d ("
                        + std::to_string(h.p) + " > " + std::to_string(h.d)
                        + ")");
  check(h.q <= h.d, "state-variable dimension q exceeds feature dimension d ("
                        + std::to_string(h.q) + " > " + std::to_string(h.d)
                        + ")");
}

int TiedPldaModel::total_substates() const {
  int total = 0;
  for (const StateModel& s : states)
    total += static_cast<int>(s.substates.size());
  return total;
}

void validate_model(const TiedPldaModel& model) {
  const Hyperparams& h = model.hyper;
  validate_hyperparams(h);
  check(static_cast<int>(model.components.size()) == h.M,
        "component count disagrees with hyperparameters");
  check(static_cast<int>(model.states.size()) == h.J,
        "state count disagrees with hyperparameters");
  for (int m = 0; m < h.M; ++m) {
    const ComponentParams& c = model.components[m];
    check(c.U.rows() == h.d && c.U.cols() == h.p,
          "component " + std::to_string(m) + ": U has wrong shape");
    check(c.G.rows() == h.d && c.G.cols() == h.q,
          "component " + std::to_string(m) + ": G has wrong shape");
    check(c.b.size() == h.d,
          "component " + std::to_string(m) + ": b has wrong size");
    check(c.lambda.size() == h.d,
          "component " + std::to_string(m) + ": lambda has wrong size");
    check(c.U.allFinite() && c.G.allFinite() && c.b.allFinite()
              && c.lambda.allFinite(),
          "component " + std::to_string(m) + ": non-finite parameter");
    check((c.lambda.array() > 0.0).all(),
          "component " + std::to_string(m) + ": non-positive lambda entry");
  }
  for (int j = 0; j < h.J; ++j) {
    const StateModel& s = model.states[j];
    check(!s.substates.empty(),
          "state " + std::to_string(j) + " has no sub-states");
    if (model.family == ModelFamily::kMixture)
      check(static_cast<int>(s.substates.size()) == h.M,
            "mixture family requires one sub-state per component");
    double csum = 0.0;
    for (const SubState& ss : s.substates) {
      check(ss.z.size() == h.q,
            "state " + std::to_string(j) + ": z has wrong size");
      check(ss.z.allFinite() && std::isfinite(ss.weight),
            "state " + std::to_string(j) + ": non-finite sub-state");
      check(ss.weight >= 0.0 && ss.weight <= 1.0,
            "state " + std::to_string(j) + ": sub-state weight out of [0,1]");
      csum += ss.weight;
    }
    check(std::abs(csum - 1.0) <= kWeightSumTol,
          "state " + std::to_string(j) + ": sub-state weights sum to "
              + std::to_string(csum));
    check(s.pi.size() == h.M,
          "state " + std::to_string(j) + ": pi has wrong size");
    check(s.pi.allFinite() && (s.pi.array() >= 0.0).all()
              && (s.pi.array() <= 1.0).all(),
          "state " + std::to_string(j) + ": pi entry out of [0,1]");
    check(std::abs(s.pi.sum() - 1.0) <= kWeightSumTol,
          "state " + std::to_string(j) + ": component weights sum to "
              + std::to_string(s.pi.sum()));
  }
}

TiedPldaModel new_model(const Hyperparams& hyper, int substates_per_state,
                        ModelFamily family) {
  validate_hyperparams(hyper);
  check(substates_per_state > 0, "sub-state count must be positive");
  if (family == ModelFamily::kMixture)
    check(substates_per_state == hyper.M,
          "mixture family requires exactly M sub-states per state");

  TiedPldaModel model;
  model.hyper = hyper;
  model.family = family;
  model.components.resize(hyper.M);
  for (ComponentParams& c : model.components) {
    c.U = MatrixXd::Zero(hyper.d, hyper.p);
    c.G = MatrixXd::Zero(hyper.d, hyper.q);
    c.b = VectorXd::Zero(hyper.d);
    c.lambda = VectorXd::Ones(hyper.d);
  }
  model.states.resize(hyper.J);
  for (StateModel& s : model.states) {
    s.substates.resize(substates_per_state);
    for (SubState& ss : s.substates) {
      ss.z = VectorXd::Zero(hyper.q);
      ss.weight = 1.0 / substates_per_state;
    }
    s.pi = VectorXd::Constant(hyper.M, 1.0 / hyper.M);
  }
  validate_model(model);
  return model;
}

TiedPldaModel random_model(const Hyperparams& hyper, int substates_per_state,
                           uint64_t seed, const RandomModelOptions& opts,
                           ModelFamily family) {
  TiedPldaModel model = new_model(hyper, substates_per_state, family);
  Rng rng(seed);
  for (ComponentParams& c : model.components) {
    for (Eigen::Index i = 0; i < c.U.size(); ++i)
      c.U.data()[i] = opts.u_scale * rng.gauss();
    for (Eigen::Index i = 0; i < c.G.size(); ++i)
      c.G.data()[i] = opts.g_scale * rng.gauss();
    c.b = opts.b_scale * rng.gauss_vector(hyper.d);
    for (Eigen::Index i = 0; i < hyper.d; ++i)
      c.lambda(i) = rng.uniform(opts.lambda_min, opts.lambda_max);
  }
  for (StateModel& s : model.states) {
    double csum = 0.0;
    for (SubState& ss : s.substates) {
      ss.z = opts.z_scale * rng.gauss_vector(hyper.q);
      ss.weight = rng.uniform(1.0, 1.0 + opts.weight_jitter);
      csum += ss.weight;
    }
    for (SubState& ss : s.substates) ss.weight /= csum;
    for (Eigen::Index m = 0; m < hyper.M; ++m)
      s.pi(m) = rng.uniform(1.0, 1.0 + opts.weight_jitter);
    s.pi /= s.pi.sum();
  }
  validate_model(model);
  return model;
}

void write_model(const TiedPldaModel& model, std::ostream& os) {
  validate_model(model);
  io::write_magic(os, kModelMagic);
  io::write_u32(os, kModelVersion);
  io::write_u32(os, static_cast<uint32_t>(model.family));
  io::write_u32(os, static_cast<uint32_t>(model.hyper.d));
  io::write_u32(os, static_cast<uint32_t>(model.hyper.p));
  io::write_u32(os, static_cast<uint32_t>(model.hyper.q));
  io::write_u32(os, static_cast<uint32_t>(model.hyper.M));
  io::write_u32(os, static_cast<uint32_t>(model.hyper.J));
  for (const ComponentParams& c : model.components) {
    io::write_matrix(os, c.U);
    io::write_matrix(os, c.G);
    io::write_vector(os, c.b);
    io::write_vector(os, c.lambda);
  }
  for (const StateModel& s : model.states) {
    io::write_u32(os, static_cast<uint32_t>(s.substates.size()));
    for (const SubState& ss : s.substates) {
      io::write_vector(os, ss.z);
      io::write_f64(os, ss.weight);
    }
    io::write_vector(os, s.pi);
  }
}

void write_model(const TiedPldaModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(path + ": cannot open for writing");
  write_model(model, os);
  if (!os) throw FormatError(path + ": write failed");
}

TiedPldaModel read_model(std::istream& is, const std::string& context) {
  io::expect_magic(is, kModelMagic, context);
  uint32_t version = io::read_u32(is, context);
  if (version != kModelVersion)
    throw FormatError(context + ": unsupported version "
                      + std::to_string(version));
  uint32_t family = io::read_u32(is, context);
  if (family > 1)
    throw FormatError(context + ": unknown family flag "
                      + std::to_string(family));

  TiedPldaModel model;
  model.family = static_cast<ModelFamily>(family);
  model.hyper.d = static_cast<int>(io::read_u32(is, context));
  model.hyper.p = static_cast<int>(io::read_u32(is, context));
  model.hyper.q = static_cast<int>(io::read_u32(is, context));
  model.hyper.M = static_cast<int>(io::read_u32(is, context));
  model.hyper.J = static_cast<int>(io::read_u32(is, context));
  try {
    validate_hyperparams(model.hyper);
  } catch (const std::invalid_argument& e) {
    throw FormatError(context + ": " + e.what());
  }

  const Hyperparams& h = model.hyper;
  model.components.resize(h.M);
  for (ComponentParams& c : model.components) {
    c.U = io::read_matrix(is, h.d, h.p, context);
    c.G = io::read_matrix(is, h.d, h.q, context);
    c.b = io::read_vector(is, h.d, context);
    c.lambda = io::read_vector(is, h.d, context);
  }
  model.states.resize(h.J);
  for (int j = 0; j < h.J; ++j) {
    StateModel& s = model.states[j];
    uint32_t nsub = io::read_u32(is, context);
    if (nsub == 0)
      throw FormatError(context + ": state " + std::to_string(j)
                        + " has no sub-states");
    s.substates.resize(nsub);
    double csum = 0.0;
    for (SubState& ss : s.substates) {
      ss.z = io::read_vector(is, h.q, context);
      ss.weight = io::read_f64(is, context);
      csum += ss.weight;
    }
    s.pi = io::read_vector(is, h.M, context);
    if (std::abs(csum - 1.0) > kFileWeightSumTol
        || std::abs(s.pi.sum() - 1.0) > kFileWeightSumTol)
      throw FormatError(context + ": weights not normalized in state "
                        + std::to_string(j));
  }
  try {
    validate_model(model);
  } catch (const std::invalid_argument& e) {
    throw FormatError(context + ": " + e.what());
  }
  return model;
}

TiedPldaModel read_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path + ": cannot open");
  return read_model(is, path);
}

std::pair<int64_t, int64_t> count_params(
    const TiedPldaModel& model,
    const std::vector<int>* active_components_per_state) {
  const Hyperparams& h = model.hyper;
  int64_t state_independent =
      static_cast<int64_t>(h.M)
      * (static_cast<int64_t>(h.d) * h.p + static_cast<int64_t>(h.d) * h.q
         + 2 * static_cast<int64_t>(h.d));
  if (active_components_per_state != nullptr)
    TPLDA_ASSERT(static_cast<int>(active_components_per_state->size()) == h.J);

  int64_t state_dependent = 0;
  for (int j = 0; j < h.J; ++j) {
    const StateModel& s = model.states[j];
    int64_t active;
    if (active_components_per_state != nullptr) {
      active = (*active_components_per_state)[j];
    } else {
      active = (s.pi.array() >= kActiveWeightThreshold).count();
    }
    state_dependent +=
        static_cast<int64_t>(s.substates.size()) * (h.q + 1) + active;
  }
  return {state_dependent, state_independent};
}

}  // namespace tplda
