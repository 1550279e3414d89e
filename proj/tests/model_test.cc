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

#include "loopgen/model.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <utility>

#include "gradcheck.h"
#include "gtest/gtest.h"
#include "loopgen/features.h"

namespace loopgen {
namespace {

std::filesystem::path TempPath(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         ("loopgen_model_" + std::to_string(::getpid()) + "_" + name);
}

Tensor<float> RandomConditioning(const ModelConfig& c, std::uint64_t seed,
                                 std::size_t length) {
  auto t = gradcheck::RandomTensor(
      {static_cast<std::size_t>(c.conditioning_channels), length}, seed, 0.5);
  for (double& v : t.values()) v += 0.5;  // [0, 1] like real features
  return t.Cast<float>();
}

ModelConfig MicroConfig() {
  ModelConfig c;
  c.levels = 2;
  c.base_channels = 3;
  c.conditioning_channels = 2;
  c.padded_length = 64;
  c.nominal_length = 60;
  return c;
}

TEST(ModelConfigTest, FullArchitectureArithmetic) {
  const ModelConfig c = ModelConfig::ForVariant(ModelVariant::kMulti);
  EXPECT_EQ(c.EncoderChannels(),
            (std::vector<int>{32, 32, 32, 64, 64, 64, 128, 128, 128, 256}));
  EXPECT_EQ(c.BottleneckLength(), 30u);
  EXPECT_EQ(c.padded_length, 30u * 1024u);
  EXPECT_EQ(c.PadLeft(), 591u);
  EXPECT_EQ(c.padded_length - c.nominal_length - c.PadLeft(), 591u);
  EXPECT_EQ(c.conditioning_channels, 37);
  EXPECT_EQ(ModelConfig::ForVariant(ModelVariant::kMultiNoEnv).conditioning_channels, 36);
  const ModelConfig s = ModelConfig::ForVariant(ModelVariant::kStft);
  EXPECT_EQ(s.levels, 4);
  EXPECT_EQ(s.output_channels, 513);
  EXPECT_EQ(s.BottleneckLength(), 4u);
}

TEST(ModelConfigTest, VariantsAndValidation) {
  EXPECT_EQ(ParseVariant("multi_noenv"), ModelVariant::kMultiNoEnv);
  EXPECT_EQ(VariantName(ModelVariant::kWavSpec), "WAVSPEC");
  EXPECT_EQ(VariantLoss(ModelVariant::kWav), LossKind::kRecon);
  EXPECT_EQ(VariantLoss(ModelVariant::kMultiNoEnv), LossKind::kMulti);
  EXPECT_THROW(VariantLoss(ModelVariant::kStft), Error);
  EXPECT_THROW(ParseVariant("gan"), Error);
  ModelConfig bad;
  bad.padded_length = 30000;
  EXPECT_THROW(bad.Validate(), Error);
}

TEST(WaveUNetTest, LayerShapesFollowSchedule) {
  WaveUNet<float> net(ModelConfig::ForVariant(ModelVariant::kMulti), 1);
  const auto& p = net.parameters();
  ASSERT_EQ(p.size(), 2u * 21u);
  EXPECT_EQ(p[0].value.shape(), (Shape{32, 37, 5}));
  EXPECT_EQ(p[18].value.shape(), (Shape{256, 128, 5}));
  EXPECT_EQ(p[20].value.shape(), (Shape{128, 256 + 128, 5}));  // deepest decoder
  EXPECT_EQ(p[38].value.shape(), (Shape{32, 32 + 37, 5}));     // top decoder
  EXPECT_EQ(p[40].value.shape(), (Shape{1, 32, 1}));           // head
  // Glorot bound of the first layer.
  const double bound = std::sqrt(6.0 / ((37 + 32) * 5));
  for (float v : p[0].value.values()) ASSERT_LE(std::abs(v), bound);
  for (float v : p[1].value.values()) ASSERT_EQ(v, 0.0f);
}

TEST(WaveUNetTest, SeededInitIsDeterministic) {
  const auto c = ModelConfig::ForVariant(ModelVariant::kMulti);
  WaveUNet<float> a(c, 42);
  WaveUNet<float> b(c, 42);
  WaveUNet<float> d(c, 43);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    ASSERT_EQ(a.parameters()[i].value, b.parameters()[i].value);
  }
  EXPECT_NE(a.parameters()[0].value, d.parameters()[0].value);
}

TEST(WaveUNetTest, ZeroConditioningGivesBoundedFullLengthOutput) {
  const auto c = ModelConfig::ForVariant(ModelVariant::kMulti);
  WaveUNet<float> net(c, 3);
  const auto out = net.Forward(Tensor<float>({37, kSegmentLength}));
  EXPECT_EQ(out.shape(), (Shape{1, 29538}));
  for (float v : out.values()) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_LE(std::abs(v), 1.0f);
  }
}

TEST(WaveUNetTest, ForwardIsBitReproducible) {
  const auto c = ModelConfig::ForVariant(ModelVariant::kMulti);
  WaveUNet<float> net(c, 4);
  const auto cond = RandomConditioning(c, 5, kSegmentLength);
  EXPECT_EQ(net.Forward(cond), net.Forward(cond));
}

TEST(WaveUNetTest, SpectralVariantShape) {
  const auto c = ModelConfig::ForVariant(ModelVariant::kStft);
  WaveUNet<float> net(c, 6);
  const auto out = net.Forward(RandomConditioning(c, 7, kSegmentLength));
  EXPECT_EQ(out.shape(), (Shape{513, 58}));
  for (float v : out.values()) ASSERT_GE(v, 0.0f);
  const AudioBuffer audio = OutputToAudio(c, out);
  EXPECT_EQ(audio.size(), kSegmentLength);
}

TEST(WaveUNetTest, ChannelMismatchIsRejected) {
  WaveUNet<float> noenv(ModelConfig::ForVariant(ModelVariant::kMultiNoEnv), 8);
  EXPECT_THROW(noenv.Forward(Tensor<float>({37, kSegmentLength})), Error);
  WaveUNet<float> multi(ModelConfig::ForVariant(ModelVariant::kMulti), 8);
  EXPECT_THROW(multi.Forward(Tensor<float>({37, 1000})), Error);
}

TEST(PrepareInputTest, PadThenCropIsIdentity) {
  const auto c = ModelConfig::ForVariant(ModelVariant::kMulti);
  const auto cond = RandomConditioning(c, 9, kSegmentLength);
  const auto padded = PrepareInput(c, cond);
  ASSERT_EQ(padded.shape(), (Shape{37, 30720}));
  for (std::size_t ch = 0; ch < 37; ++ch) {
    for (std::size_t t = 0; t < 591; ++t) {
      ASSERT_EQ(padded.at(ch, t), 0.0f);
      ASSERT_EQ(padded.at(ch, 30720 - 1 - t), 0.0f);
    }
  }
  Tape<float> tape;
  auto cropped = CropTime(tape.Constant(padded), c.PadLeft(), c.nominal_length);
  EXPECT_EQ(cropped.value(), cond);
}

TEST(PrepareInputTest, SpectralSamplesFrameCentres) {
  const auto c = ModelConfig::ForVariant(ModelVariant::kStft);
  const auto cond = RandomConditioning(c, 10, kSegmentLength);
  const auto padded = PrepareInput(c, cond);
  ASSERT_EQ(padded.shape(), (Shape{37, 64}));
  EXPECT_EQ(padded.at(5, 3), cond.at(5, 0));
  EXPECT_EQ(padded.at(5, 3 + 57), cond.at(5, 57 * 512));
  EXPECT_EQ(padded.at(5, 2), 0.0f);
  EXPECT_EQ(padded.at(5, 61), 0.0f);
}

// Interval of output positions that can depend on input position p, derived
// from the layer geometry alone.
struct Interval {
  std::int64_t lo;
  std::int64_t hi;
};

Interval Clamp(Interval i, std::int64_t len) {
  return {std::max<std::int64_t>(i.lo, 0), std::min<std::int64_t>(i.hi, len - 1)};
}

Interval Union(Interval a, Interval b) { return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)}; }

std::int64_t FloorDiv(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

Interval AnalyticInfluence(const ModelConfig& c, std::int64_t p) {
  std::vector<Interval> skip;
  std::int64_t len = static_cast<std::int64_t>(c.padded_length);
  Interval cur{p, p};
  skip.push_back(cur);
  const int half = c.kernel / 2;
  for (int i = 0; i < c.levels; ++i) {
    // Stride-2 output o reads inputs 2o - pad .. 2o - pad + K - 1.
    const int pad = ConvPadLeft(static_cast<std::size_t>(len), c.kernel, 2);
    const std::int64_t lo = -FloorDiv(-(cur.lo + pad - (c.kernel - 1)), 2);
    const std::int64_t hi = FloorDiv(cur.hi + pad, 2);
    len /= 2;
    cur = Clamp({lo, hi}, len);
    skip.push_back(cur);
  }
  for (int j = c.levels; j >= 1; --j) {
    len *= 2;
    // out[2i] reads in[i]; out[2i+1] reads in[i], in[i+1].
    cur = Clamp({2 * cur.lo - 1, 2 * cur.hi + 1}, len);
    cur = Union(cur, skip[j - 1]);
    cur = Clamp({cur.lo - half, cur.hi + half}, len);
  }
  return cur;
}

TEST(ReceptiveFieldTest, DeltaPerturbationStaysInsideAnalyticField) {
  const auto c = ModelConfig::ForVariant(ModelVariant::kMulti);
  WaveUNet<float> net(c, 11);
  Tensor<float> base = RandomConditioning(c, 12, kSegmentLength);
  const auto reference = net.Forward(base);
  for (std::size_t pos : {0ul, 15000ul, kSegmentLength - 1}) {
    Tensor<float> poked = base;
    poked.at(0, pos) += 1.0f;
    const auto out = net.Forward(poked);
    const auto field = AnalyticInfluence(c, static_cast<std::int64_t>(pos + c.PadLeft()));
    bool changed_inside = false;
    for (std::size_t t = 0; t < kSegmentLength; ++t) {
      const auto padded_t = static_cast<std::int64_t>(t + c.PadLeft());
      const bool inside = padded_t >= field.lo && padded_t <= field.hi;
      if (!inside) {
        ASSERT_EQ(out[t], reference[t]) << "pos " << pos << " t " << t;
      } else if (out[t] != reference[t]) {
        changed_inside = true;
      }
    }
    EXPECT_TRUE(changed_inside) << pos;
    EXPECT_NE(out[pos], reference[pos]) << pos;
  }
}

TEST(ReceptiveFieldTest, AnalyticFieldIsFinite) {
  const auto c = ModelConfig::ForVariant(ModelVariant::kMulti);
  const auto field = AnalyticInfluence(c, 15000);
  EXPECT_GT(field.lo, 0);
  EXPECT_LT(field.hi, 30719);
  EXPECT_LT(field.hi - field.lo, 30720 / 2);
}

TEST(ForwardBackwardTest, MicroModelMatchesFiniteDifference) {
  const ModelConfig c = MicroConfig();
  WaveUNet<double> net(c, 13);
  // Non-zero biases so every path carries signal.
  for (auto& p : net.parameters()) {
    if (p.value.rank() == 1) p.value = gradcheck::RandomTensor(p.value.shape(), 14, 0.1);
  }
  const auto cond = gradcheck::RandomTensor({2, 60}, 15);
  const auto target = gradcheck::RandomTensor({1, 60}, 16, 0.5);
  const auto report = gradcheck::Check(net.parameter_pointers(), [&](Tape<double>& t) {
    auto out = net.Apply(t, cond, true);
    return ComputeLoss(LossKind::kMulti, out, t.Constant(target)).total;
  });
  EXPECT_LT(report.max_relative_error, 1e-3) << report.worst << " of " << report.checked;
}

TEST(ForwardBackwardTest, ReconGradientVanishesAtOwnOutput) {
  const ModelConfig c = MicroConfig();
  WaveUNet<double> net(c, 17);
  const auto cond = gradcheck::RandomTensor({2, 60}, 18);
  const auto target = net.Forward(cond);
  for (auto* p : net.parameter_pointers()) p->ZeroGrad();
  const StepLoss loss = ForwardBackward(net, ModelVariant::kWav, cond, target);
  EXPECT_EQ(loss.total, 0.0);
  for (const auto& p : net.parameters()) {
    for (double g : p.grad.values()) ASSERT_EQ(g, 0.0) << p.name;
  }
}

TEST(ForwardBackwardTest, LossDecreasesOverFiftyAdamSteps) {
  ModelConfig c;
  c.levels = 4;
  c.base_channels = 8;
  c.conditioning_channels = 4;
  c.padded_length = 1024;
  c.nominal_length = 1000;
  WaveUNet<float> net(c, 19);
  const auto cond = RandomConditioning(c, 20, 1000);
  Tensor<float> target({1, 1000});
  for (std::size_t i = 0; i < 1000; ++i) {
    target[i] = 0.5f * static_cast<float>(std::sin(0.05 * i) * std::exp(-0.002 * i));
  }
  AdamState<float> adam;
  auto params = net.parameter_pointers();
  double first = 0.0;
  double last = 0.0;
  for (int step = 0; step < 50; ++step) {
    for (auto* p : params) p->ZeroGrad();
    const StepLoss loss = ForwardBackward(net, ModelVariant::kMulti, cond, target);
    if (step == 0) first = loss.total;
    last = loss.total;
    AdamStep<float>(params, adam, {1e-3});
  }
  EXPECT_LT(last, first);
}

TEST(ForwardBackwardTest, NonFiniteConditioningNamesOp) {
  const ModelConfig c = MicroConfig();
  WaveUNet<double> net(c, 21);
  auto cond = gradcheck::RandomTensor({2, 60}, 22);
  cond[7] = std::nan("");
  try {
    ForwardBackward(net, ModelVariant::kWav, cond, Tensor<double>({1, 60}));
    FAIL() << "expected NumericError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
    EXPECT_NE(std::string(e.what()).find("constant"), std::string::npos) << e.what();
  }
}

TEST(CheckpointTest, RoundTripWithOptimizerState) {
  const ModelConfig c = ModelConfig::ForVariant(ModelVariant::kMultiNoEnv);
  WaveUNet<float> net(c, 23);
  Checkpoint ckpt;
  ckpt.variant = ModelVariant::kMultiNoEnv;
  ckpt.seed = 23;
  ckpt.config = c;
  ckpt.params = net.parameters();
  AdamState<float> adam;
  adam.step = 7;
  for (const auto& p : ckpt.params) {
    adam.first_moment.emplace_back(p.value.shape(), 0.25f);
    adam.second_moment.emplace_back(p.value.shape(), 0.5f);
  }
  ckpt.adam = adam;
  const auto path = TempPath("ckpt.lfw");
  SaveCheckpoint(path, ckpt);
  const Checkpoint loaded = LoadCheckpoint(path);
  EXPECT_EQ(loaded.variant, ModelVariant::kMultiNoEnv);
  EXPECT_EQ(loaded.seed, 23u);
  EXPECT_EQ(loaded.config.ToString(), c.ToString());
  ASSERT_EQ(loaded.params.size(), ckpt.params.size());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    ASSERT_EQ(loaded.params[i].value, ckpt.params[i].value);
    ASSERT_EQ(loaded.params[i].name, ckpt.params[i].name);
  }
  ASSERT_TRUE(loaded.adam.has_value());
  EXPECT_EQ(loaded.adam->step, 7);
  EXPECT_EQ(loaded.adam->second_moment.back(), adam.second_moment.back());

  // Saving the loaded checkpoint reproduces the file byte for byte.
  const auto again = TempPath("ckpt2.lfw");
  SaveCheckpoint(again, loaded);
  std::ifstream fa(path, std::ios::binary);
  std::ifstream fb(again, std::ios::binary);
  const std::string a((std::istreambuf_iterator<char>(fa)), {});
  const std::string b((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(a, b);

  std::filesystem::resize_file(path, 1000);
  EXPECT_THROW(LoadCheckpoint(path), Error);
  std::ofstream(path) << "LFC1 not a checkpoint";
  EXPECT_THROW(LoadCheckpoint(path), Error);
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST(CheckpointTest, ShapeMismatchIsDataError) {
  WaveUNet<float> net(ModelConfig::ForVariant(ModelVariant::kMulti), 24);
  Checkpoint ckpt;
  ckpt.config = ModelConfig::ForVariant(ModelVariant::kMultiNoEnv);
  ckpt.params = net.parameters();
  const auto path = TempPath("bad.lfw");
  SaveCheckpoint(path, ckpt);
  try {
    LoadCheckpoint(path);
    FAIL() << "expected DataError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
  }
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace loopgen
