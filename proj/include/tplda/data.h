// tplda/data.h

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

#ifndef TPLDA_DATA_H_
#define TPLDA_DATA_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tplda/model.h"

namespace tplda {

/// Frames are rows; row-major so a frame is contiguous in memory and in the
/// on-disk layout.
using FeatureMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct StatePosterior {
  uint32_t state = 0;
  double mass = 0.0;
};

/// Per-frame state supervision: hard labels carry a single (state, 1.0)
/// entry per frame, soft labels a sparse posterior with masses summing
/// to at most 1.
struct LabelSequence {
  bool soft = false;  ///< selects file format version (1 = hard, 2 = soft)
  std::vector<std::vector<StatePosterior>> frames;

  int64_t size() const { return static_cast<int64_t>(frames.size()); }
  uint32_t hard_state(int64_t t) const { return frames[t][0].state; }

  static LabelSequence from_hard(const std::vector<uint32_t>& states);
};

/// Throws std::invalid_argument on out-of-range indices or masses.
void validate_labels(const LabelSequence& labels, int num_states);

// Feature file "PLDAFEA1": magic, u32 version=1, u64 rows, u64 cols,
// row-major f64 payload. Readers reject non-finite entries, naming the
// offending frame and dimension.

void write_features(const FeatureMatrix& features, std::ostream& os);
void write_features(const FeatureMatrix& features, const std::string& path);
FeatureMatrix read_features(std::istream& is, const std::string& context);
FeatureMatrix read_features(const std::string& path);

// Label file "PLDALBL1": magic, u32 version, u64 count; version 1 stores a
// u32 state per frame, version 2 a u32 entry count followed by
// (u32 state, f64 mass) pairs.

void write_labels(const LabelSequence& labels, std::ostream& os);
void write_labels(const LabelSequence& labels, const std::string& path);
LabelSequence read_labels(std::istream& is, const std::string& context);
LabelSequence read_labels(const std::string& path);

/// Concatenates frames t-n .. t+n into one vector of dimension d*(2n+1);
/// the first and last frames are replicated past the edges.
FeatureMatrix splice(const FeatureMatrix& features, int context);

/// Latent draws recorded per sampled frame, for oracle tests.
struct FrameLatents {
  int substate = 0;
  int component = 0;
  VectorXd x;
  VectorXd eps;
};

struct SampledCorpus {
  FeatureMatrix features;
  LabelSequence labels;
  std::vector<FrameLatents> latents;
};

/// Samples frames_per_state frames per state from the generative process,
/// states visited round-robin: frame t belongs to state t mod J.
SampledCorpus sample_corpus(const TiedPldaModel& model,
                            int64_t frames_per_state, uint64_t seed);

}  // namespace tplda

#endif  // TPLDA_DATA_H_
