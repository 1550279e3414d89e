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

#include "loopgen/training.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "loopgen/error.h"
#include "loopgen/features.h"

namespace loopgen {
namespace {

// Four one-bar segments with known patterns, prepared as training would.
const std::vector<SegmentRecord>& Segments() {
  static const std::vector<SegmentRecord> segments = [] {
    CorpusOptions options;
    options.num_loops = 4;
    options.seed = 13;
    options.mislabel_every = 0;
    std::vector<InputLoop> inputs;
    for (const auto& loop : GenerateCorpus(options)) {
      inputs.push_back({loop.id, loop.audio, loop.annotated_bpm, loop.spec});
    }
    auto all = Prepare(inputs, {}).segments;
    all.resize(4);
    return all;
  }();
  return segments;
}

std::vector<TrainingExample> Examples(ModelVariant variant) {
  std::vector<TrainingExample> out;
  for (const auto& s : Segments()) {
    out.push_back(MakeExample(variant, s.id, s.audio, Assemble(s.conditioning, true)));
  }
  return out;
}

TEST(BatchIndicesTest, SmallDatasetUsesEverythingInOrder) {
  EXPECT_EQ(BatchIndices(1, 0, 3, 16), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(BatchIndices(1, 7, 3, 3), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(BatchIndices(1, 0, 0, 4), Error);
}

TEST(BatchIndicesTest, DistinctDeterministicAndVaryingWithStep) {
  std::set<std::vector<std::size_t>> seen;
  std::vector<int> hits(20, 0);
  for (std::int64_t step = 0; step < 200; ++step) {
    const auto b = BatchIndices(5, step, 20, 4);
    ASSERT_EQ(b.size(), 4u);
    EXPECT_EQ(b, BatchIndices(5, step, 20, 4));
    EXPECT_EQ(std::set<std::size_t>(b.begin(), b.end()).size(), 4u);
    for (std::size_t i : b) {
      ASSERT_LT(i, 20u);
      ++hits[i];
    }
    seen.insert(b);
  }
  EXPECT_GT(seen.size(), 150u);
  // 800 draws over 20 items: every item is drawn, none wildly often.
  for (int h : hits) {
    EXPECT_GT(h, 10);
    EXPECT_LT(h, 80);
  }
  EXPECT_NE(BatchIndices(5, 3, 20, 4), BatchIndices(6, 3, 20, 4));
}

TEST(MakeExampleTest, ShapesPerVariant) {
  const auto& s = Segments().front();
  const Tensor<float> cond = Assemble(s.conditioning, true);
  const auto multi = MakeExample(ModelVariant::kMulti, s.id, s.audio, cond);
  EXPECT_EQ(multi.conditioning.shape(), (Shape{37, 29538}));
  EXPECT_EQ(multi.target.shape(), (Shape{1, 29538}));
  EXPECT_FLOAT_EQ(multi.target[100], static_cast<float>(s.audio.samples[100]));

  const auto noenv = MakeExample(ModelVariant::kMultiNoEnv, s.id, s.audio, cond);
  EXPECT_EQ(noenv.conditioning.shape(), (Shape{36, 29538}));
  // The envelope is row 3; the HPCP block moves up by one.
  EXPECT_EQ(noenv.conditioning.at(3, 0), cond.at(4, 0));

  const auto stft = MakeExample(ModelVariant::kStft, s.id, s.audio, cond);
  EXPECT_EQ(stft.target.shape(), (Shape{513, 58}));

  AudioBuffer short_audio = s.audio;
  short_audio.samples.resize(1000);
  EXPECT_THROW(MakeExample(ModelVariant::kMulti, s.id, short_audio, cond), Error);
}

TEST(LossLogTest, HeaderAndRowAgree) {
  StepLoss loss;
  loss.total = 1.5;
  loss.terms = {{"wave", 0.5}, {"stft64", 1.0}};
  EXPECT_EQ(LossLogHeader(loss), "step,loss,wave,stft64\n");
  EXPECT_EQ(LossLogRow(12, loss), "12,1.5,0.5,1\n");
}

TEST(TrainerTest, ResumeMatchesUninterruptedRun) {
  const auto data = Examples(ModelVariant::kMulti);
  const ModelConfig config = ModelConfig::ForVariant(ModelVariant::kMulti);
  const TrainOptions options{1e-4, 1};

  Trainer straight(ModelVariant::kMulti, config, 3, options);
  for (int i = 0; i < 4; ++i) straight.Step(data);

  Trainer first(ModelVariant::kMulti, config, 3, options);
  first.Step(data);
  first.Step(data);
  Trainer resumed(first.ToCheckpoint(), options);
  EXPECT_EQ(resumed.step(), 2);
  resumed.Step(data);
  resumed.Step(data);

  EXPECT_EQ(resumed.step(), 4);
  const auto& a = straight.model().parameters();
  const auto& b = resumed.model().parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t p = 0; p < a.size(); ++p) {
    EXPECT_EQ(a[p].value.storage(), b[p].value.storage()) << a[p].name;
  }
}

TEST(TrainerTest, NonFiniteGradientAbortsWithParameterName) {
  auto data = Examples(ModelVariant::kWav);
  data.resize(1);
  data[0].target[5] = std::numeric_limits<float>::quiet_NaN();
  Trainer trainer(ModelVariant::kWav, ModelConfig::ForVariant(ModelVariant::kWav), 1, {1e-4, 1});
  try {
    trainer.Step(data);
    FAIL() << "expected a numeric error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
  }
  EXPECT_EQ(trainer.step(), 0);
}

// Smoke configuration of the train command: MULTI, 4 segments, 300 steps,
// default learning rate and batch (which covers all four segments).
TEST(TrainerTest, OverfitSmokeHalvesTheLoss) {
  const auto data = Examples(ModelVariant::kMulti);
  Trainer trainer(ModelVariant::kMulti, ModelConfig::ForVariant(ModelVariant::kMulti), 1,
                  {1e-4, 16});
  const double initial = MeanLoss(trainer.model(), LossKind::kMulti, data);
  for (int i = 0; i < 300; ++i) trainer.Step(data);
  const double final_loss = MeanLoss(trainer.model(), LossKind::kMulti, data);
  EXPECT_TRUE(std::isfinite(final_loss));
  EXPECT_LT(final_loss, 0.5 * initial) << initial << " -> " << final_loss;
}

}  // namespace
}  // namespace loopgen
