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

// Minibatch Adam training of a generator over prepared segments.

#ifndef LOOPGEN_TRAINING_H_
#define LOOPGEN_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "loopgen/dataset.h"
#include "loopgen/model.h"

namespace loopgen {

struct TrainingExample {
  std::string id;
  Tensor<float> conditioning;  // channels the variant expects x 29538
  Tensor<float> target;        // [1 x 29538] waveform or [513 x 58] magnitudes
  AudioBuffer audio;
};

// `conditioning` is the full 37-channel tensor; the envelope row is dropped
// for variants that do not use it.
TrainingExample MakeExample(ModelVariant variant, std::string id, const AudioBuffer& audio,
                            const Tensor<float>& conditioning);

// Loads every entry of a prepared dataset in the given split.
std::vector<TrainingExample> LoadExamples(const std::filesystem::path& dataset_dir,
                                          ModelVariant variant, Split split);

// Indices of the examples used at `step`: a seeded draw without replacement
// that depends only on (seed, step), so a resumed run sees the same batches.
// A batch at least as large as the dataset uses every example in order.
std::vector<std::size_t> BatchIndices(std::uint64_t seed, std::int64_t step, std::size_t n,
                                      std::size_t batch);

struct TrainOptions {
  double learning_rate = 1e-4;
  int batch = 16;
};

class Trainer {
 public:
  // Fresh model initialised from `seed`.
  Trainer(ModelVariant variant, const ModelConfig& config, std::uint64_t seed,
          const TrainOptions& options);
  // Resumes from a checkpoint (its optimizer state and step count included).
  Trainer(const Checkpoint& checkpoint, const TrainOptions& options);

  // One optimizer step on the mean loss of a batch. Returns that mean loss.
  // Throws NumericError when the loss or a gradient is not finite.
  StepLoss Step(const std::vector<TrainingExample>& data);

  std::int64_t step() const { return adam_.step; }
  WaveUNet<float>& model() { return model_; }
  ModelVariant variant() const { return variant_; }
  Checkpoint ToCheckpoint() const;

 private:
  ModelVariant variant_;
  std::uint64_t seed_;
  TrainOptions options_;
  WaveUNet<float> model_;
  AdamState<float> adam_;
};

// Mean of `kind` over the examples for a waveform model, without gradients.
double MeanLoss(WaveUNet<float>& model, LossKind kind, const std::vector<TrainingExample>& data);

// "step,loss,<term>,..." header and rows for the plain-text training log.
std::string LossLogHeader(const StepLoss& loss);
std::string LossLogRow(std::int64_t step, const StepLoss& loss);

}  // namespace loopgen

#endif  // LOOPGEN_TRAINING_H_
