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

#include "loopgen/losses.h"

#include <cmath>
#include <numbers>

#include "gradcheck.h"
#include "gtest/gtest.h"
#include "test_signals.h"

namespace loopgen {
namespace {

using gradcheck::Check;
using gradcheck::RandomTensor;

std::vector<double> Random(std::size_t n, std::uint64_t seed) {
  const auto t = RandomTensor({n}, seed, 0.5);
  return {t.storage().begin(), t.storage().end()};
}

std::vector<double> Tone(std::size_t n, double freq, double phase, double amp = 0.5) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = amp * std::sin(2.0 * std::numbers::pi * freq * i / 16000.0 + phase);
  }
  return out;
}

TEST(LossKindTest, ResolutionsAndNames) {
  EXPECT_TRUE(SpectralResolutions(LossKind::kRecon).empty());
  const auto wavspec = SpectralResolutions(LossKind::kWavSpec);
  ASSERT_EQ(wavspec.size(), 1u);
  EXPECT_EQ(wavspec[0].fft_size, 1024);
  EXPECT_EQ(wavspec[0].hop_size, 512);
  const auto multi = SpectralResolutions(LossKind::kMulti);
  const int expected[] = {2048, 1024, 512, 256, 128, 64};
  ASSERT_EQ(multi.size(), 6u);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(multi[i].fft_size, expected[i]);
    EXPECT_EQ(multi[i].hop_size, expected[i] / 4);
  }
  EXPECT_EQ(ParseLossKind("MULTI"), LossKind::kMulti);
  EXPECT_EQ(LossKindName(ParseLossKind("wavspec")), "wavspec");
  EXPECT_THROW(ParseLossKind("l2"), Error);
}

TEST(LossTest, ZeroAtEquality) {
  const auto x = Random(2000, 1);
  for (LossKind kind : {LossKind::kRecon, LossKind::kWavSpec, LossKind::kMulti}) {
    EXPECT_EQ(EvaluateLoss(kind, x, x), 0.0) << LossKindName(kind);
  }
}

TEST(LossTest, ReconMatchesBruteForce) {
  EXPECT_EQ(EvaluateLoss(LossKind::kRecon, std::vector<double>(10, 0.0),
                         std::vector<double>(10, 1.0)),
            1.0);
  const auto a = Random(777, 2);
  const auto b = Random(777, 3);
  double expect = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) expect += std::abs(a[i] - b[i]);
  EXPECT_NEAR(EvaluateLoss(LossKind::kRecon, a, b), expect / a.size(), 1e-14);
}

TEST(LossTest, CompositeLossesDominateRecon) {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const auto a = Random(3000, seed);
    const auto b = Random(3000, seed + 100);
    const double recon = EvaluateLoss(LossKind::kRecon, a, b);
    EXPECT_GE(EvaluateLoss(LossKind::kWavSpec, a, b), recon);
    EXPECT_GE(EvaluateLoss(LossKind::kMulti, a, b), recon);
  }
}

TEST(LossTest, TermBreakdownSumsToTotal) {
  Tape<double> tape;
  auto a = tape.Constant(Tensor<double>({3000}, Random(3000, 4)));
  auto b = tape.Constant(Tensor<double>({3000}, Random(3000, 5)));
  const auto result = ComputeLoss(LossKind::kMulti, a, b);
  ASSERT_EQ(result.terms.size(), 7u);
  EXPECT_EQ(result.terms[0].first, "wave");
  EXPECT_EQ(result.terms[6].first, "stft64");
  double sum = 0.0;
  for (const auto& [name, term] : result.terms) sum += term.value()[0];
  EXPECT_NEAR(sum, result.total.value()[0], 1e-12);
}

TEST(LossTest, SpectralTermsIgnoreQuarterPeriodShift) {
  // A 90 degree phase shift leaves STFT magnitudes almost unchanged but
  // produces a large waveform error. Each term is measured relative to the
  // same term against a silent prediction, so scales are comparable. Both
  // tones fade in and out so reflect padding sees no edge discontinuity.
  constexpr std::size_t kLen = 16000;
  constexpr std::size_t kFade = 2048;
  auto faded = [](std::vector<double> v) {
    for (std::size_t i = 0; i < kFade; ++i) {
      const double g = 0.5 - 0.5 * std::cos(std::numbers::pi * i / kFade);
      v[i] *= g;
      v[v.size() - 1 - i] *= g;
    }
    return v;
  };
  const auto x = faded(Tone(kLen, 1000.0, 0.0));
  const auto y = faded(Tone(kLen, 1000.0, std::numbers::pi / 2));
  const std::vector<double> silence(kLen, 0.0);
  auto terms = [](const std::vector<double>& a, const std::vector<double>& b) {
    Tape<double> tape;
    const auto result = ComputeLoss(LossKind::kMulti,
                                    tape.Constant(Tensor<double>({a.size()}, a)),
                                    tape.Constant(Tensor<double>({b.size()}, b)));
    std::vector<double> values;
    for (const auto& term : result.terms) values.push_back(term.second.value()[0]);
    return values;
  };
  const auto shifted = terms(y, x);
  const auto reference = terms(silence, x);
  EXPECT_GT(shifted[0] / reference[0], 0.5);
  for (std::size_t i = 1; i < shifted.size(); ++i) {
    EXPECT_LT(shifted[i] / reference[i], 0.05) << "term " << i << " "
                                                 << shifted[i] / reference[i];
  }
}

TEST(LossTest, MonotoneInAmplitudeError) {
  const auto x = Tone(6000, 440.0, 0.3);
  for (LossKind kind : {LossKind::kRecon, LossKind::kWavSpec, LossKind::kMulti}) {
    auto loss_at = [&](double alpha) {
      std::vector<double> scaled(x);
      for (double& v : scaled) v *= alpha;
      return EvaluateLoss(kind, scaled, x);
    };
    double previous_up = 0.0;
    double previous_down = 0.0;
    for (int step = 1; step <= 10; ++step) {
      const double up = loss_at(1.0 + 0.05 * step);
      const double down = loss_at(1.0 - 0.05 * step);
      EXPECT_GT(up, previous_up) << LossKindName(kind) << " step " << step;
      EXPECT_GT(down, previous_down) << LossKindName(kind) << " step " << step;
      previous_up = up;
      previous_down = down;
    }
  }
}

TEST(LossTest, LengthMismatchIsAnError) {
  EXPECT_THROW(EvaluateLoss(LossKind::kRecon, {1.0, 2.0}, {1.0}), Error);
}

TEST(LossGradientTest, WavSpecMatchesFiniteDifference) {
  Parameter<double> pred("pred", RandomTensor({256}, 6, 0.5));
  const auto target = RandomTensor({256}, 7, 0.5);
  const auto report = Check({&pred}, [&](Tape<double>& t) {
    return ComputeLoss(LossKind::kWavSpec, t.Param(pred), t.Constant(target)).total;
  });
  EXPECT_LT(report.max_relative_error, 1e-3) << report.worst;
}

TEST(LossGradientTest, MultiMatchesFiniteDifference) {
  Parameter<double> pred("pred", RandomTensor({1, 256}, 8, 0.5));
  const auto target = RandomTensor({1, 256}, 9, 0.5);
  const auto report = Check({&pred}, [&](Tape<double>& t) {
    return ComputeLoss(LossKind::kMulti, t.Param(pred), t.Constant(target)).total;
  });
  EXPECT_LT(report.max_relative_error, 1e-3) << report.worst;
}

TEST(LossGradientTest, Fft64TermMatchesFiniteDifference) {
  Parameter<double> pred("pred", RandomTensor({256}, 10, 0.5));
  const auto target = RandomTensor({256}, 11, 0.5);
  const auto report = Check({&pred}, [&](Tape<double>& t) {
    return ComputeLoss(LossKind::kMulti, t.Param(pred), t.Constant(target))
        .terms.back()
        .second;
  });
  EXPECT_LT(report.max_relative_error, 1e-3) << report.worst;
}

}  // namespace
}  // namespace loopgen
