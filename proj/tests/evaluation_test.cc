// Copyright 2026 The Loopgen Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "loopgen/evaluation.h"

#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "loopgen/dataset.h"
#include "loopgen/error.h"
#include "test_signals.h"

namespace loopgen {
namespace {

namespace ts = testing_signals;

using Set = std::vector<std::vector<double>>;

Set Gaussian(std::size_t n, std::vector<double> mean, std::vector<double> stddev,
             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Set out(n, std::vector<double>(mean.size()));
  for (auto& v : out) {
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = mean[j] + stddev[j] * normal(rng);
  }
  return out;
}

std::vector<AudioBuffer> Segments(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<AudioBuffer> out;
  for (int i = 0; i < n; ++i) {
    LoopSpec spec;
    spec.sample_rate = kCanonicalSampleRate;
    spec.seed = rng();
    for (auto& track : spec.pattern) {
      track.assign(kStepsPerBar, 0.0);
      for (int s = 0; s < kStepsPerBar; ++s) {
        if (rng() % 3 == 0) track[s] = 0.8;
      }
    }
    spec.tonal = {{static_cast<int>(rng() % 12), 0.1}};
    AudioBuffer a = SynthLoop(spec);
    a.samples.resize(kSegmentLength, 0.0);
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<ConditioningSet> RandomConditioning(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ConditioningSet> out(n);
  for (auto& c : out) {
    c.segment_length = kSegmentLength;
    c.global.timbral.resize(kNumTimbral);
    for (double& v : c.global.timbral) v = u(rng);
  }
  return out;
}

TEST(EmbedTest, ShapeAndDeterminism) {
  const auto a = ts::Sine(440.0, kSegmentLength, kCanonicalSampleRate, 0.5);
  const auto e = Embed(a);
  ASSERT_EQ(e.size(), static_cast<std::size_t>(kEmbeddingDim));
  EXPECT_EQ(e, Embed(a));
}

TEST(EmbedTest, SilenceSitsOnTheLogFloor) {
  AudioBuffer silence;
  silence.samples.assign(kSegmentLength, 0.0);
  const auto e = Embed(silence);
  for (int j = 0; j < kPooledMelBands; ++j) {
    EXPECT_NEAR(e[j], kLogFloorDb, 1e-9);
    EXPECT_NEAR(e[kPooledMelBands + j], 0.0, 1e-9);
  }
  for (double v : e) EXPECT_TRUE(std::isfinite(v));
}

TEST(EmbedTest, NoiseAndSineDiffer) {
  const auto sine = Embed(ts::Sine(440.0, kSegmentLength, kCanonicalSampleRate, 0.5));
  const auto noise = Embed(ts::WhiteNoise(kSegmentLength, 3, 0.5));
  double d = 0.0;
  for (int j = 0; j < kEmbeddingDim; ++j) d += (sine[j] - noise[j]) * (sine[j] - noise[j]);
  EXPECT_GT(d, 1.0);
}

TEST(EmbedTest, RejectsOtherRates) {
  auto a = ts::Sine(440.0, 44100, 44100, 0.5);
  EXPECT_THROW(Embed(a), Error);
}

TEST(FrechetTest, SelfDistanceIsZero) {
  const Set x = Gaussian(200, {0, 1, 2, 3}, {1, 2, 0.5, 1}, 1);
  EXPECT_LT(FrechetDistance(x, x), 1e-6);
}

TEST(FrechetTest, Symmetric) {
  const Set a = Gaussian(300, {0, 0, 0}, {1, 1, 1}, 2);
  const Set b = Gaussian(300, {1, 0, -1}, {2, 0.5, 1}, 3);
  EXPECT_NEAR(FrechetDistance(a, b), FrechetDistance(b, a), 1e-9);
}

// One dimension: (m_a - m_b)^2 + (s_a - s_b)^2 from the sample moments.
TEST(FrechetTest, MatchesScalarClosedForm) {
  const Set a = Gaussian(500, {1.0}, {2.0}, 4);
  const Set b = Gaussian(700, {-0.5}, {0.7}, 5);
  auto moments = [](const Set& s) {
    double m = 0.0, v = 0.0;
    for (const auto& x : s) m += x[0];
    m /= s.size();
    for (const auto& x : s) v += (x[0] - m) * (x[0] - m);
    return std::pair{m, v / (s.size() - 1) + 1e-6};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double expected = (ma - mb) * (ma - mb) + std::pow(std::sqrt(va) - std::sqrt(vb), 2);
  EXPECT_NEAR(FrechetDistance(a, b), expected, 1e-9);
}

TEST(FrechetTest, GaussianFixtureApproachesMeanGap) {
  const std::vector<double> mu = {1.0, -0.5, 0.25, 2.0, 0.0, -1.0, 0.5, 0.75};
  double expected = 0.0;
  for (double m : mu) expected += m * m;
  const std::vector<double> zero(mu.size(), 0.0), one(mu.size(), 1.0);
  const double d = FrechetDistance(Gaussian(10000, zero, one, 6), Gaussian(10000, mu, one, 7));
  EXPECT_NEAR(d, expected, 0.05 * expected);
}

TEST(FrechetTest, DiagonalCovariancesClosedForm) {
  // N(0, diag(a)) vs N(0, diag(b)): sum (sqrt a - sqrt b)^2.
  const std::vector<double> sa = {1.0, 2.0, 0.5}, sb = {3.0, 1.0, 0.5};
  double expected = 0.0;
  for (std::size_t j = 0; j < sa.size(); ++j) expected += (sa[j] - sb[j]) * (sa[j] - sb[j]);
  const double d = FrechetDistance(Gaussian(20000, {0, 0, 0}, sa, 8),
                                   Gaussian(20000, {0, 0, 0}, sb, 9));
  EXPECT_NEAR(d, expected, 0.05 * expected);
}

TEST(FrechetTest, RejectsTinyOrMismatchedSets) {
  EXPECT_THROW(FrechetDistance({{1.0}}, {{1.0}, {2.0}}), Error);
  EXPECT_THROW(FrechetDistance({{1.0}, {2.0}}, {{1.0, 2.0}, {2.0, 3.0}}), Error);
}

TEST(FrechetTest, GrowsWithCorruption) {
  const auto clean = Segments(12, 10);
  double last = 0.0;
  for (double level : {0.01, 0.05, 0.2}) {
    std::vector<AudioBuffer> noisy;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      AudioBuffer a = clean[i];
      const auto n = ts::WhiteNoise(a.size(), 100 + i, level);
      for (std::size_t k = 0; k < a.size(); ++k) a.samples[k] += n.samples[k];
      noisy.push_back(std::move(a));
    }
    const double d = CompareAudioSets(clean, noisy).distance;
    EXPECT_GT(d, last) << level;
    last = d;
  }
}

TEST(FrechetTest, GriffinLimBeatsRandomOutput) {
  const auto test = Segments(12, 20);
  std::vector<AudioBuffer> resynth, random;
  RandomSynthesizer rnd(1);
  ConditioningSet cond;
  cond.segment_length = kSegmentLength;
  for (const auto& a : test) {
    resynth.push_back(GriffinLimResynthesis(a));
    random.push_back(rnd.Synthesize(cond));
  }
  const auto gl = CompareAudioSets(test, resynth);
  const auto rn = CompareAudioSets(test, random);
  EXPECT_EQ(gl.embedding_spec, std::string(kEmbeddingSpecId));
  EXPECT_EQ(gl.size_a, 12u);
  EXPECT_LT(gl.distance, rn.distance);
}

TEST(CoherenceTest, OracleScoresPerfectlyOnControlledFeatures) {
  OracleSynthesizer oracle;
  const auto report = CoherenceSweep(oracle, RandomConditioning(16, 1));
  EXPECT_EQ(report.total_outputs, 1008);
  EXPECT_EQ(report.loops, 16);
  const auto controlled = OracleSynthesizer::ControlledFeatures();
  ASSERT_EQ(controlled.size(), 9u);
  for (int t = 0; t < 3; ++t) EXPECT_EQ(report.Accuracy(t, controlled), 100.0) << "E" << t + 1;
}

TEST(CoherenceTest, RandomOutputIsAFairCoin) {
  RandomSynthesizer random(42);
  const auto report = CoherenceSweep(random, RandomConditioning(16, 2));
  EXPECT_EQ(report.total_outputs, 1008);
  for (int t = 0; t < 3; ++t) EXPECT_NEAR(report.accuracy[t], 50.0, 5.0) << "E" << t + 1;
}

// Ties fail: a synthesizer that ignores its input scores zero everywhere.
TEST(CoherenceTest, ConstantOutputScoresZero) {
  class Constant : public Synthesizer {
   public:
    AudioBuffer Synthesize(const ConditioningSet& c) override {
      return ts::Sine(330.0, c.segment_length, kCanonicalSampleRate, 0.5);
    }
  } constant;
  const auto report = CoherenceSweep(constant, RandomConditioning(2, 3));
  for (double a : report.accuracy) EXPECT_EQ(a, 0.0);
  EXPECT_EQ(report.total_outputs, 2 * 21 * 3);
}

TEST(ReportTest, EmptyTableIsHeaderOnly) {
  const ReportTable t{"title", {"FD"}, {}};
  EXPECT_EQ(RenderText(t), "title\nmodel          FD\n");
  EXPECT_EQ(RenderCsv(t), "# title\nmodel,FD\n");
}

TEST(ReportTest, OneRow) {
  const ReportTable t{"title", {"FD"}, {{"MULTI", {3.25}}}};
  const std::string text = RenderText(t);
  EXPECT_NE(text.find("MULTI"), std::string::npos);
  EXPECT_NE(text.find("3.250"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

TEST(ReportTest, CsvRoundTrip) {
  const ReportTable t{"coherence", {"E1", "E2", "E3"},
                      {{"WAV", {0.1, 1.0 / 3.0, 99.5}}, {"MULTI", {1e-12, 50, -2.75}}}};
  const ReportTable back = ParseCsv(RenderCsv(t));
  EXPECT_EQ(back.title, t.title);
  EXPECT_EQ(back.metrics, t.metrics);
  ASSERT_EQ(back.rows.size(), t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].model, t.rows[i].model);
    EXPECT_EQ(back.rows[i].values, t.rows[i].values);
  }
  EXPECT_THROW(ParseCsv("model,E1\nx,1\n"), Error);
  EXPECT_THROW(ParseCsv("# t\nmodel,E1\nx,abc\n"), Error);
}

TEST(ReportTest, CoherenceAndFrechetTables) {
  CoherenceReport c;
  c.accuracy = {90, 80, 70};
  c.total_outputs = 1008;
  const auto ct = CoherenceTable({{"MULTI", c}});
  EXPECT_EQ(ct.rows[0].values, (std::vector<double>{90, 80, 70, 1008}));
  const auto ft = FrechetTable({{"Griffin-Lim", FrechetReport{1.5, kEmbeddingSpecId, 16, 16}}});
  EXPECT_NE(ft.title.find(kEmbeddingSpecId), std::string::npos);
  EXPECT_EQ(ft.rows[0].values[0], 1.5);
}

}  // namespace
}  // namespace loopgen
