// tplda/data.cc

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

#include "tplda/data.h"

#include <algorithm>
#include <fstream>

#include "tplda/io.h"

namespace tplda {

namespace {

constexpr char kFeatureMagic[8] = {'P', 'L', 'D', 'A', 'F', 'E', 'A', '1'};
constexpr char kLabelMagic[8] = {'P', 'L', 'D', 'A', 'L', 'B', 'L', '1'};
constexpr uint32_t kFeatureVersion = 1;

}  // namespace

LabelSequence LabelSequence::from_hard(const std::vector<uint32_t>& states) {
  LabelSequence labels;
  labels.soft = false;
  labels.frames.reserve(states.size());
  for (uint32_t s : states) labels.frames.push_back({{s, 1.0}});
  return labels;
}

void validate_labels(const LabelSequence& labels, int num_states) {
  for (size_t t = 0; t < labels.frames.size(); ++t) {
    double total = 0.0;
    for (const StatePosterior& sp : labels.frames[t]) {
      if (sp.state >= static_cast<uint32_t>(num_states))
        throw std::invalid_argument(
            "frame " + std::to_string(t) + ": state index "
            + std::to_string(sp.state) + " out of range (J="
            + std::to_string(num_states) + ")");
      if (!(sp.mass >= 0.0 && sp.mass <= 1.0))
        throw std::invalid_argument("frame " + std::to_string(t)
                                    + ": posterior mass out of [0,1]");
      total += sp.mass;
    }
    if (total > 1.0 + 1e-9)
      throw std::invalid_argument("frame " + std::to_string(t)
                                  + ": posterior masses sum above 1");
  }
}

void write_features(const FeatureMatrix& features, std::ostream& os) {
  if (!features.allFinite())
    throw std::invalid_argument("write_features: non-finite entry");
  io::write_magic(os, kFeatureMagic);
  io::write_u32(os, kFeatureVersion);
  io::write_u64(os, static_cast<uint64_t>(features.rows()));
  io::write_u64(os, static_cast<uint64_t>(features.cols()));
  for (Eigen::Index t = 0; t < features.rows(); ++t)
    for (Eigen::Index i = 0; i < features.cols(); ++i)
      io::write_f64(os, features(t, i));
}

void write_features(const FeatureMatrix& features, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(path + ": cannot open for writing");
  write_features(features, os);
  if (!os) throw FormatError(path + ": write failed");
}

FeatureMatrix read_features(std::istream& is, const std::string& context) {
  io::expect_magic(is, kFeatureMagic, context);
  const uint32_t version = io::read_u32(is, context);
  if (version != kFeatureVersion)
    throw FormatError(context + ": unsupported version "
                      + std::to_string(version));
  const uint64_t rows = io::read_u64(is, context);
  const uint64_t cols = io::read_u64(is, context);
  if (cols == 0) throw FormatError(context + ": zero feature dimension");
  FeatureMatrix features(rows, cols);
  for (uint64_t t = 0; t < rows; ++t)
    for (uint64_t i = 0; i < cols; ++i) {
      const double v = io::read_f64(is, context);
      if (!std::isfinite(v))
        throw FormatError(context + ": non-finite entry at frame "
                          + std::to_string(t) + ", dimension "
                          + std::to_string(i));
      features(t, i) = v;
    }
  // trailing bytes indicate a header/payload mismatch
  char extra;
  if (is.read(&extra, 1))
    throw FormatError(context + ": payload longer than header rows x cols");
  return features;
}

FeatureMatrix read_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path + ": cannot open");
  return read_features(is, path);
}

void write_labels(const LabelSequence& labels, std::ostream& os) {
  io::write_magic(os, kLabelMagic);
  io::write_u32(os, labels.soft ? 2 : 1);
  io::write_u64(os, static_cast<uint64_t>(labels.frames.size()));
  for (const auto& frame : labels.frames) {
    if (labels.soft) {
      io::write_u32(os, static_cast<uint32_t>(frame.size()));
      for (const StatePosterior& sp : frame) {
        io::write_u32(os, sp.state);
        io::write_f64(os, sp.mass);
      }
    } else {
      TPLDA_ASSERT(frame.size() == 1 && frame[0].mass == 1.0);
      io::write_u32(os, frame[0].state);
    }
  }
}

void write_labels(const LabelSequence& labels, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(path + ": cannot open for writing");
  write_labels(labels, os);
  if (!os) throw FormatError(path + ": write failed");
}

LabelSequence read_labels(std::istream& is, const std::string& context) {
  io::expect_magic(is, kLabelMagic, context);
  const uint32_t version = io::read_u32(is, context);
  if (version != 1 && version != 2)
    throw FormatError(context + ": unsupported version "
                      + std::to_string(version));
  const uint64_t count = io::read_u64(is, context);
  LabelSequence labels;
  labels.soft = (version == 2);
  labels.frames.resize(count);
  for (uint64_t t = 0; t < count; ++t) {
    if (labels.soft) {
      const uint32_t entries = io::read_u32(is, context);
      labels.frames[t].resize(entries);
      double total = 0.0;
      for (uint32_t e = 0; e < entries; ++e) {
        labels.frames[t][e].state = io::read_u32(is, context);
        labels.frames[t][e].mass = io::read_f64(is, context);
        total += labels.frames[t][e].mass;
      }
      if (total > 1.0 + 1e-9)
        throw FormatError(context + ": frame " + std::to_string(t)
                          + " posterior masses sum above 1");
    } else {
      labels.frames[t] = {{io::read_u32(is, context), 1.0}};
    }
  }
  return labels;
}

LabelSequence read_labels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path + ": cannot open");
  return read_labels(is, path);
}

FeatureMatrix splice(const FeatureMatrix& features, int context) {
  if (features.rows() == 0)
    throw std::invalid_argument("splice: empty input");
  TPLDA_ASSERT(context >= 0);
  const Eigen::Index T = features.rows();
  const Eigen::Index d = features.cols();
  FeatureMatrix out(T, d * (2 * context + 1));
  for (Eigen::Index t = 0; t < T; ++t)
    for (int n = -context; n <= context; ++n) {
      const Eigen::Index src = std::clamp<Eigen::Index>(t + n, 0, T - 1);
      out.block(t, (n + context) * d, 1, d) = features.row(src);
    }
  return out;
}

SampledCorpus sample_corpus(const TiedPldaModel& model,
                            int64_t frames_per_state, uint64_t seed) {
  validate_model(model);
  TPLDA_ASSERT(frames_per_state >= 0);
  const Hyperparams& h = model.hyper;
  const int64_t total = frames_per_state * h.J;

  SampledCorpus corpus;
  corpus.features.resize(total, h.d);
  corpus.labels.soft = false;
  corpus.labels.frames.resize(total);
  corpus.latents.resize(total);
  Rng rng(seed);

  for (int64_t t = 0; t < total; ++t) {
    const int j = static_cast<int>(t % h.J);
    const StateModel& s = model.states[j];
    VectorXd c_weights(s.substates.size());
    for (size_t k = 0; k < s.substates.size(); ++k)
      c_weights(k) = s.substates[k].weight;
    const int k = rng.categorical(c_weights);
    const int m = model.family == ModelFamily::kMixture
                      ? k
                      : rng.categorical(s.pi);
    const ComponentParams& comp = model.components[m];

    FrameLatents& lat = corpus.latents[t];
    lat.substate = k;
    lat.component = m;
    lat.x = rng.gauss_vector(h.p);
    lat.eps = comp.lambda.cwiseSqrt().cwiseProduct(rng.gauss_vector(h.d));
    corpus.features.row(t) = (comp.U * lat.x + comp.G * s.substates[k].z
                              + comp.b + lat.eps)
                                 .transpose();
    corpus.labels.frames[t] = {{static_cast<uint32_t>(j), 1.0}};
  }
  return corpus;
}

}  // namespace tplda
