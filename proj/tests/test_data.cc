// tests/test_data.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "tplda/data.h"
#include "tplda/io.h"
#include "test_util.h"

using namespace tplda;
using namespace tplda::testutil;

namespace {

FeatureMatrix random_features(int64_t rows, int cols, uint64_t seed) {
  Rng rng(seed);
  FeatureMatrix f(rows, cols);
  for (int64_t t = 0; t < rows; ++t)
    for (int i = 0; i < cols; ++i) f(t, i) = rng.gauss();
  return f;
}

void write_feature_file(std::ostream& os, uint64_t rows, uint64_t cols,
                        const std::vector<double>& payload) {
  const char magic[8] = {'P', 'L', 'D', 'A', 'F', 'E', 'A', '1'};
  io::write_magic(os, magic);
  io::write_u32(os, 1);
  io::write_u64(os, rows);
  io::write_u64(os, cols);
  for (double v : payload) io::write_f64(os, v);
}

}  // namespace

TEST_CASE("feature round trip is bit-exact") {
  const FeatureMatrix f = random_features(37, 5, 11);
  std::stringstream ss;
  write_features(f, ss);
  const FeatureMatrix back = read_features(ss, "mem");
  CHECK(back.rows() == f.rows());
  CHECK(back.cols() == f.cols());
  CHECK((back.array() == f.array()).all());

  const TempDir dir("features");
  write_features(f, dir.file("f.fea"));
  CHECK((read_features(dir.file("f.fea")).array() == f.array()).all());
}

TEST_CASE("feature header disagreeing with payload is rejected") {
  SUBCASE("payload too short") {
    std::stringstream ss;
    write_feature_file(ss, 3, 2, {1.0, 2.0, 3.0});  // needs 6 values
    CHECK_THROWS_WITH_AS(read_features(ss, "f"),
                         doctest::Contains("truncated"), FormatError);
  }
  SUBCASE("payload too long") {
    std::stringstream ss;
    write_feature_file(ss, 1, 2, {1.0, 2.0, 3.0});
    CHECK_THROWS_WITH_AS(read_features(ss, "f"),
                         doctest::Contains("longer"), FormatError);
  }
}

TEST_CASE("feature file with a NaN names the frame and dimension") {
  std::stringstream ss;
  write_feature_file(ss, 2, 3,
                     {0.0, 1.0, 2.0, 3.0,
                      std::numeric_limits<double>::quiet_NaN(), 5.0});
  try {
    read_features(ss, "f");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("frame 1") != std::string::npos);
    CHECK(msg.find("dimension 1") != std::string::npos);
  }
}

TEST_CASE("feature magic is validated") {
  std::stringstream ss;
  ss << "NOTAFILE";
  CHECK_THROWS_WITH_AS(read_features(ss, "f"), doctest::Contains("bad magic"),
                       FormatError);
}

TEST_CASE("hard label round trip") {
  const LabelSequence labels = LabelSequence::from_hard({0, 3, 2, 2, 1});
  std::stringstream ss;
  write_labels(labels, ss);
  const LabelSequence back = read_labels(ss, "mem");
  CHECK_FALSE(back.soft);
  REQUIRE(back.size() == 5);
  for (int64_t t = 0; t < 5; ++t)
    CHECK(back.hard_state(t) == labels.hard_state(t));
}

TEST_CASE("soft label round trip") {
  LabelSequence labels;
  labels.soft = true;
  labels.frames = {{{0, 0.75}, {2, 0.25}}, {{1, 1.0}}, {}};
  std::stringstream ss;
  write_labels(labels, ss);
  const LabelSequence back = read_labels(ss, "mem");
  CHECK(back.soft);
  REQUIRE(back.size() == 3);
  CHECK(back.frames[0].size() == 2);
  CHECK(back.frames[0][0].state == 0);
  CHECK(back.frames[0][0].mass == 0.75);
  CHECK(back.frames[0][1].state == 2);
  CHECK(back.frames[2].empty());
}

TEST_CASE("label validation") {
  LabelSequence labels = LabelSequence::from_hard({0, 5});
  CHECK_THROWS_AS(validate_labels(labels, 3), std::invalid_argument);
  CHECK_NOTHROW(validate_labels(labels, 6));
  LabelSequence soft;
  soft.soft = true;
  soft.frames = {{{0, 0.7}, {1, 0.6}}};
  CHECK_THROWS_AS(validate_labels(soft, 2), std::invalid_argument);
}

TEST_CASE("splice with zero context is the identity") {
  const FeatureMatrix f = random_features(9, 4, 3);
  const FeatureMatrix s = splice(f, 0);
  CHECK((s.array() == f.array()).all());
}

TEST_CASE("splice output dimensions match the published feature dims") {
  const FeatureMatrix f = random_features(50, 13, 4);
  CHECK(splice(f, 2).cols() == 65);
  CHECK(splice(f, 3).cols() == 91);
  CHECK(splice(f, 4).cols() == 117);
  CHECK(splice(f, 5).cols() == 143);
  CHECK(splice(f, 3).rows() == 50);
}

TEST_CASE("splice interior blocks copy the shifted frames exactly") {
  const FeatureMatrix f = random_features(20, 3, 5);
  const int context = 2;
  const FeatureMatrix s = splice(f, context);
  for (int64_t t = context; t < 20 - context; ++t)
    for (int n = 0; n <= 2 * context; ++n)
      CHECK((s.block(t, n * 3, 1, 3).array()
             == f.row(t + n - context).array())
                .all());
}

TEST_CASE("splice replicates the boundary frames") {
  const FeatureMatrix f = random_features(4, 2, 6);
  const FeatureMatrix s = splice(f, 3);
  // frame 0, leftmost block: clamped to frame 0
  CHECK((s.block(0, 0, 1, 2).array() == f.row(0).array()).all());
  CHECK((s.block(0, 2, 1, 2).array() == f.row(0).array()).all());
  // last frame, rightmost block: clamped to the last frame
  CHECK((s.block(3, 12, 1, 2).array() == f.row(3).array()).all());
}

TEST_CASE("splice rejects empty input") {
  CHECK_THROWS_AS(splice(FeatureMatrix(0, 3), 1), std::invalid_argument);
}

TEST_CASE("sampling the degenerate model obeys the law of large numbers") {
  // U = G = 0, Lambda = I, b = 0: frames are standard normal
  const TiedPldaModel model = new_model({4, 2, 2, 2, 1}, 1);
  const SampledCorpus corpus = sample_corpus(model, 100000, 9);
  const int64_t T = corpus.features.rows();
  REQUIRE(T == 100000);
  const double bound_mean = 3.0 / std::sqrt(static_cast<double>(T));
  const double bound_var = 3.0 * std::sqrt(2.0 / static_cast<double>(T));
  for (int i = 0; i < 4; ++i) {
    const double mean = corpus.features.col(i).mean();
    const double var =
        corpus.features.col(i).array().square().mean() - mean * mean;
    CHECK(std::abs(mean) <= bound_mean);
    CHECK(std::abs(var - 1.0) <= bound_var);
  }
}

TEST_CASE("sampling is deterministic under a fixed seed") {
  const TiedPldaModel model = fixture_model();
  const SampledCorpus a = sample_corpus(model, 50, 123);
  const SampledCorpus b = sample_corpus(model, 50, 123);
  CHECK((a.features.array() == b.features.array()).all());
  for (int64_t t = 0; t < a.labels.size(); ++t) {
    CHECK(a.labels.hard_state(t) == b.labels.hard_state(t));
    CHECK(a.latents[t].component == b.latents[t].component);
    CHECK(a.latents[t].substate == b.latents[t].substate);
  }
  const SampledCorpus c = sample_corpus(model, 50, 124);
  CHECK_FALSE((a.features.array() == c.features.array()).all());
}

TEST_CASE("round-robin state assignment") {
  const TiedPldaModel model = fixture_model();
  const SampledCorpus corpus = sample_corpus(model, 3, 5);
  REQUIRE(corpus.labels.size() == 30);
  for (int64_t t = 0; t < corpus.labels.size(); ++t)
    CHECK(corpus.labels.hard_state(t)
          == static_cast<uint32_t>(t % model.num_states()));
}

TEST_CASE("empirical component frequencies match the weights") {
  TiedPldaModel model = new_model({3, 1, 1, 2, 1}, 1);
  model.states[0].pi << 0.3, 0.7;
  const int64_t T = 100000;
  const SampledCorpus corpus = sample_corpus(model, T, 21);
  int64_t first = 0;
  for (const FrameLatents& lat : corpus.latents)
    if (lat.component == 0) ++first;
  const double freq = static_cast<double>(first) / T;
  const double sigma = std::sqrt(0.3 * 0.7 / T);
  CHECK(std::abs(freq - 0.3) <= 3.0 * sigma);
}

TEST_CASE("single-cell empirical covariance approaches U U^T + Lambda") {
  Rng prng(33);
  TiedPldaModel model = new_model({4, 2, 2, 1, 1}, 1);
  ComponentParams& c = model.components[0];
  for (Eigen::Index i = 0; i < c.U.size(); ++i) c.U.data()[i] = prng.gauss();
  c.b = prng.gauss_vector(4);
  c.lambda = VectorXd::NullaryExpr(
      4, [&](Eigen::Index) { return prng.uniform(0.5, 1.5); });
  validate_model(model);

  const int64_t T = 100000;
  const SampledCorpus corpus = sample_corpus(model, T, 77);
  const VectorXd mean = corpus.features.colwise().mean();
  MatrixXd cov = MatrixXd::Zero(4, 4);
  for (int64_t t = 0; t < T; ++t) {
    const VectorXd r = corpus.features.row(t).transpose() - mean;
    cov += r * r.transpose();
  }
  cov /= static_cast<double>(T);
  const MatrixXd expected =
      c.U * c.U.transpose() + MatrixXd(c.lambda.asDiagonal());
  CHECK((cov - expected).norm() <= 0.05 * expected.norm());
}

TEST_CASE("sampled latents reproduce the frames exactly") {
  const TiedPldaModel model = fixture_model();
  const SampledCorpus corpus = sample_corpus(model, 20, 55);
  for (int64_t t = 0; t < corpus.features.rows(); ++t) {
    const FrameLatents& lat = corpus.latents[t];
    const int j = static_cast<int>(corpus.labels.hard_state(t));
    const ComponentParams& c = model.components[lat.component];
    const VectorXd y = c.U * lat.x
                       + c.G * model.states[j].substates[lat.substate].z
                       + c.b + lat.eps;
    CHECK((corpus.features.row(t).transpose() - y).cwiseAbs().maxCoeff()
          <= 1e-12);
  }
}
