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

#include "loopgen/autodiff.h"

#include <cmath>
#include <limits>

#include "gradcheck.h"
#include "gtest/gtest.h"
#include "loopgen/dsp.h"
#include "test_signals.h"

namespace loopgen {
namespace {

using gradcheck::Check;
using gradcheck::RandomProjection;
using gradcheck::RandomTensor;

constexpr double kTol = 1e-4;

TEST(Conv1dTest, IdentityKernelCopiesInput) {
  Tape<double> tape;
  Tensor<double> w({1, 1, 5});
  w[2] = 1.0;
  const auto x = RandomTensor({1, 17}, 1);
  auto y = Conv1d(tape.Constant(x), tape.Constant(w),
                  tape.Constant(Tensor<double>({1})), 1);
  EXPECT_EQ(y.value(), x);
}

TEST(Conv1dTest, StrideTwoHalvesLength) {
  Tape<float> tape;
  auto y = Conv1d(tape.Constant(Tensor<float>({1, 30720}, 0.5f)),
                  tape.Constant(Tensor<float>({2, 1, 5}, 0.1f)),
                  tape.Constant(Tensor<float>({2})), 2);
  EXPECT_EQ(y.shape(), (Shape{2, 15360}));
  EXPECT_EQ(Conv1d(tape.Constant(Tensor<float>({1, 31})),
                   tape.Constant(Tensor<float>({1, 1, 5})),
                   tape.Constant(Tensor<float>({1})), 2)
                .shape(),
            (Shape{1, 16}));
}

TEST(Conv1dTest, MatchesDirectSum) {
  for (int kernel : {1, 3, 5}) {
    for (std::size_t len : {10u, 11u}) {
      const auto x = RandomTensor({3, len}, 2);
      const auto w = RandomTensor({2, 3, static_cast<std::size_t>(kernel)}, 3);
      const auto b = RandomTensor({2}, 4);
      for (int stride : {1, 2}) {
        Tape<double> tape;
        auto y = Conv1d(tape.Constant(x), tape.Constant(w), tape.Constant(b), stride);
        ASSERT_EQ(y.shape()[1], (len + stride - 1) / stride);
        const int pad = ConvPadLeft(len, kernel, stride);
        for (std::size_t o = 0; o < y.shape()[1]; ++o) {
          for (std::size_t co = 0; co < 2; ++co) {
            double expect = b[co];
            for (std::size_t ci = 0; ci < 3; ++ci) {
              for (int k = 0; k < kernel; ++k) {
                const int i = static_cast<int>(o) * stride - pad + k;
                if (i >= 0 && i < static_cast<int>(len)) {
                  expect += w[(co * 3 + ci) * kernel + k] * x.at(ci, i);
                }
              }
            }
            EXPECT_NEAR(y.value().at(co, o), expect, 1e-12)
                << "kernel " << kernel << " len " << len << " stride " << stride;
          }
        }
      }
    }
  }
}

TEST(Conv1dTest, GradientMatchesFiniteDifference) {
  for (std::size_t kernel : {1u, 5u}) {
    for (int stride : {1, 2}) {
      for (std::size_t len : {8u, 9u}) {
        Parameter<double> x("x", RandomTensor({2, len}, 5));
        Parameter<double> w("w", RandomTensor({2, 2, kernel}, 6));
        Parameter<double> b("b", RandomTensor({2}, 7));
        const auto report = Check({&x, &w, &b}, [&](Tape<double>& t) {
          return RandomProjection(
              Conv1d(t.Param(x), t.Param(w), t.Param(b), stride), 8);
        });
        EXPECT_LT(report.max_relative_error, 1e-5) << report.worst;
      }
    }
  }
}

TEST(Conv1dTest, ShapeMismatchIsAnError) {
  Tape<double> tape;
  EXPECT_THROW(Conv1d(tape.Constant(Tensor<double>({3, 10})),
                      tape.Constant(Tensor<double>({2, 2, 5})),
                      tape.Constant(Tensor<double>({2})), 1),
               Error);
}

TEST(UpsampleLinearTest, Definition) {
  Tape<double> tape;
  auto y = UpsampleLinear(tape.Constant(Tensor<double>({1, 2}, {1.0, 3.0})));
  EXPECT_EQ(y.value().storage(), (AlignedVector<double>{1.0, 2.0, 3.0, 3.0}));
  auto c = UpsampleLinear(tape.Constant(Tensor<double>({2, 5}, 0.25)));
  EXPECT_EQ(c.shape(), (Shape{2, 10}));
  for (double v : c.value().values()) EXPECT_EQ(v, 0.25);
}

TEST(UpsampleLinearTest, GradientMatchesFiniteDifference) {
  Parameter<double> x("x", RandomTensor({2, 7}, 9));
  const auto report = Check({&x}, [&](Tape<double>& t) {
    return RandomProjection(UpsampleLinear(t.Param(x)), 10);
  });
  EXPECT_LT(report.max_relative_error, kTol) << report.worst;
}

TEST(ConcatChannelsTest, ShapesAndGradientSplit) {
  {
    Tape<float> tape;
    auto y = ConcatChannels(tape.Constant(Tensor<float>({32, 960})),
                            tape.Constant(Tensor<float>({32, 960})));
    EXPECT_EQ(y.shape(), (Shape{64, 960}));
  }
  Parameter<double> a("a", RandomTensor({2, 6}, 11));
  Parameter<double> b("b", RandomTensor({3, 6}, 12));
  const auto report = Check({&a, &b}, [&](Tape<double>& t) {
    return RandomProjection(ConcatChannels(t.Param(a), t.Param(b)), 13);
  });
  EXPECT_LT(report.max_relative_error, kTol) << report.worst;
}

TEST(ConcatChannelsTest, EmptyIsIdentityAndMismatchIsError) {
  Tape<double> tape;
  const auto x = RandomTensor({2, 6}, 14);
  auto y = ConcatChannels(tape.Constant(x), tape.Constant(Tensor<double>({0, 6})));
  EXPECT_EQ(y.value(), x);
  EXPECT_THROW(ConcatChannels(tape.Constant(x), tape.Constant(Tensor<double>({1, 5}))),
               Error);
}

TEST(CropTimeTest, GradientMatchesFiniteDifference) {
  Parameter<double> x("x", RandomTensor({2, 10}, 15));
  const auto report = Check({&x}, [&](Tape<double>& t) {
    return RandomProjection(CropTime(t.Param(x), 3, 5), 16);
  });
  EXPECT_LT(report.max_relative_error, kTol) << report.worst;
}

TEST(PointwiseTest, Values) {
  Tape<double> tape;
  auto x = tape.Constant(Tensor<double>({3}, {-1.0, 0.0, 2.0}));
  EXPECT_EQ(LeakyRelu(x).value().storage(), (AlignedVector<double>{-0.2, 0.0, 2.0}));
  EXPECT_EQ(Tanh(x).value()[1], 0.0);
  EXPECT_NEAR(Softplus(x).value()[1], std::log(2.0), 1e-15);
  EXPECT_EQ(L1(x, x).value()[0], 0.0);
}

TEST(PointwiseTest, GradientsMatchFiniteDifference) {
  // Keep inputs away from the LeakyReLU kink.
  auto values = RandomTensor({2, 9}, 17, 2.0);
  for (double& v : values.values()) {
    if (std::abs(v) < 0.05) v += 0.1;
  }
  Parameter<double> x("x", values);
  for (int which = 0; which < 3; ++which) {
    const auto report = Check({&x}, [&](Tape<double>& t) {
      auto v = t.Param(x);
      auto y = which == 0 ? LeakyRelu(v) : which == 1 ? Tanh(v) : Softplus(v);
      return RandomProjection(y, 18);
    });
    EXPECT_LT(report.max_relative_error, kTol) << which << " " << report.worst;
  }
}

TEST(L1Test, MeanAbsoluteErrorAndGradient) {
  Parameter<double> a("a", RandomTensor({20}, 19));
  Parameter<double> b("b", RandomTensor({20}, 20));
  {
    Tape<double> tape;
    double expect = 0.0;
    for (int i = 0; i < 20; ++i) expect += std::abs(a.value[i] - b.value[i]);
    EXPECT_NEAR(L1(tape.Param(a), tape.Param(b)).value()[0], expect / 20, 1e-15);
  }
  const auto report = Check({&a, &b}, [&](Tape<double>& t) {
    return L1(t.Param(a), t.Param(b));
  });
  EXPECT_LT(report.max_relative_error, kTol) << report.worst;
}

TEST(L1Test, ZeroGradientAtEquality) {
  Parameter<double> a("a", RandomTensor({5}, 21));
  Tape<double> tape;
  a.ZeroGrad();
  tape.Backward(L1(tape.Param(a), tape.Constant(a.value)));
  for (double g : a.grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(AddScaleTest, GradientMatchesFiniteDifference) {
  Parameter<double> a("a", RandomTensor({4}, 22));
  Parameter<double> b("b", RandomTensor({4}, 23));
  const auto report = Check({&a, &b}, [&](Tape<double>& t) {
    return RandomProjection(Add(Scale(t.Param(a), 3.0), t.Param(b)), 24);
  });
  EXPECT_LT(report.max_relative_error, kTol) << report.worst;
}

TEST(StftMagnitudeTest, AgreesWithDspStft) {
  const AudioBuffer x = testing_signals::WhiteNoise(3000, 25);
  for (SpectrogramConfig cfg : {SpectrogramConfig{1024, 512}, SpectrogramConfig{64, 16},
                                SpectrogramConfig{2048, 512}}) {
    const auto reference = Stft(x, cfg);
    Tape<float> tape;
    std::vector<float> samples(x.samples.begin(), x.samples.end());
    auto mag = StftMagnitude(tape.Constant(Tensor<float>({1, x.size()}, samples)), cfg);
    ASSERT_EQ(mag.shape(), (Shape{static_cast<std::size_t>(reference.num_frames),
                                  static_cast<std::size_t>(cfg.num_bins())}));
    double worst = 0.0;
    for (std::size_t i = 0; i < reference.magnitudes.size(); ++i) {
      worst = std::max(worst, std::abs(mag.value()[i] - reference.magnitudes[i]) /
                                  std::max(1.0, reference.magnitudes[i]));
    }
    EXPECT_LT(worst, 1e-5) << cfg.fft_size;
  }
}

TEST(StftMagnitudeTest, GradientMatchesFiniteDifference) {
  Parameter<double> x("x", RandomTensor({64}, 26));
  for (SpectrogramConfig cfg : {SpectrogramConfig{64, 16}, SpectrogramConfig{32, 8},
                                SpectrogramConfig{128, 32}}) {
    const auto report = Check({&x}, [&](Tape<double>& t) {
      return RandomProjection(StftMagnitude(t.Param(x), cfg), 27);
    });
    EXPECT_LT(report.max_relative_error, kTol) << cfg.fft_size << " " << report.worst;
  }
}

TEST(StftMagnitudeTest, ZeroSignalHasZeroMagnitudeAndGradient) {
  Parameter<double> x("x", Tensor<double>({64}));
  Tape<double> tape;
  x.ZeroGrad();
  auto mag = StftMagnitude(tape.Param(x), {64, 16});
  for (double m : mag.value().values()) EXPECT_EQ(m, 0.0);
  tape.Backward(RandomProjection(mag, 28));
  for (double g : x.grad.values()) EXPECT_EQ(g, 0.0);
}

// Four stacked layers through every op kind, checked end to end.
TEST(CompositeGraphTest, MicroNetMatchesFiniteDifference) {
  Parameter<double> w1("w1", RandomTensor({3, 2, 5}, 30, 0.5));
  Parameter<double> b1("b1", RandomTensor({3}, 31, 0.1));
  Parameter<double> w2("w2", RandomTensor({4, 3, 5}, 32, 0.5));
  Parameter<double> b2("b2", RandomTensor({4}, 33, 0.1));
  Parameter<double> w3("w3", RandomTensor({3, 7, 5}, 34, 0.5));
  Parameter<double> b3("b3", RandomTensor({3}, 35, 0.1));
  Parameter<double> w4("w4", RandomTensor({1, 3, 1}, 36, 0.5));
  Parameter<double> b4("b4", RandomTensor({1}, 37, 0.1));
  const auto input = RandomTensor({2, 32}, 38);
  const auto target = RandomTensor({1, 32}, 39, 0.5);
  const auto report = Check(
      {&w1, &b1, &w2, &b2, &w3, &b3, &w4, &b4}, [&](Tape<double>& t) {
        auto x = t.Constant(input);
        auto e1 = LeakyRelu(Conv1d(x, t.Param(w1), t.Param(b1), 2));
        auto e2 = LeakyRelu(Conv1d(e1, t.Param(w2), t.Param(b2), 2));
        auto up = UpsampleLinear(e2);
        auto d1 = LeakyRelu(Conv1d(ConcatChannels(up, e1), t.Param(w3), t.Param(b3), 1));
        auto out = Tanh(Conv1d(UpsampleLinear(d1), t.Param(w4), t.Param(b4), 1));
        auto tgt = t.Constant(target);
        return Add(L1(out, tgt), Scale(L1(StftMagnitude(out, {16, 4}),
                                          StftMagnitude(tgt, {16, 4})),
                                       0.5));
      });
  EXPECT_LT(report.max_relative_error, 1e-3) << report.worst;
}

TEST(TapeTest, CheckFiniteThrows) {
  Tape<double> tape(/*check_finite=*/true);
  auto x = tape.Constant(Tensor<double>({2}, {1.0, 1e300}));
  try {
    Scale(x, 1e300);
    FAIL() << "expected NumericError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
    EXPECT_NE(std::string(e.what()).find("scale"), std::string::npos);
  }
}

TEST(TapeTest, ForwardIsBitReproducible) {
  const auto input = gradcheck::RandomTensor({4, 64}, 40);
  const auto w = gradcheck::RandomTensor({8, 4, 5}, 41);
  AlignedVector<float> first;
  for (int run = 0; run < 2; ++run) {
    Tape<float> tape;
    auto y = Tanh(Conv1d(tape.Constant(input.Cast<float>()),
                         tape.Constant(w.Cast<float>()),
                         tape.Constant(Tensor<float>({8})), 2));
    if (run == 0) {
      first = y.value().storage();
    } else {
      EXPECT_EQ(first, y.value().storage());
    }
  }
}

TEST(AdamTest, FirstStepMovesBySignTimesLearningRate) {
  Parameter<double> p("p", Tensor<double>({3}, {1.0, 1.0, 1.0}));
  p.grad = Tensor<double>({3}, {0.5, -2.0, 1e-3});
  AdamState<double> state;
  std::vector<Parameter<double>*> params = {&p};
  AdamStep<double>(params, state, {1e-4});
  EXPECT_NEAR(p.value[0], 1.0 - 1e-4, 1e-10);
  EXPECT_NEAR(p.value[1], 1.0 + 1e-4, 1e-10);
  EXPECT_NEAR(p.value[2], 1.0 - 1e-4, 1e-9);
  EXPECT_EQ(state.step, 1);
}

TEST(AdamTest, ZeroGradientZeroUpdate) {
  Parameter<double> p("p", Tensor<double>({2}, {0.3, -0.7}));
  AdamState<double> state;
  std::vector<Parameter<double>*> params = {&p};
  AdamStep<double>(params, state, {});
  EXPECT_EQ(p.value.storage(), (AlignedVector<double>{0.3, -0.7}));
}

TEST(AdamTest, ConvergesOnQuadratic) {
  Parameter<double> p("w", Tensor<double>({1}, 1.0));
  AdamState<double> state;
  std::vector<Parameter<double>*> params = {&p};
  for (int i = 0; i < 200; ++i) {
    p.grad[0] = 2.0 * p.value[0];
    AdamStep<double>(params, state, {0.1});
  }
  EXPECT_LT(std::abs(p.value[0]), 0.05);
}

TEST(AdamTest, ShapeMismatchIsAnError) {
  Parameter<double> p("p", Tensor<double>({2}));
  Parameter<double> q("q", Tensor<double>({3}));
  AdamState<double> state;
  std::vector<Parameter<double>*> one = {&p};
  AdamStep<double>(one, state, {});
  std::vector<Parameter<double>*> two = {&p, &q};
  EXPECT_THROW(AdamStep<double>(two, state, {}), Error);
}

}  // namespace
}  // namespace loopgen
