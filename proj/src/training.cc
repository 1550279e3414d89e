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

#include <charconv>
#include <cmath>
#include <numeric>
#include <random>

#include "loopgen/error.h"

namespace loopgen {
namespace {

std::uint64_t MixSeed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string Num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

AdamOptions ToAdam(const TrainOptions& options) {
  if (!(options.learning_rate > 0.0) || options.batch < 1) {
    throw InvalidArgument("training needs a positive learning rate and batch size");
  }
  AdamOptions adam;
  adam.learning_rate = options.learning_rate;
  return adam;
}

}  // namespace

TrainingExample MakeExample(ModelVariant variant, std::string id, const AudioBuffer& audio,
                            const Tensor<float>& conditioning) {
  if (audio.size() != kSegmentLength || audio.sample_rate != kCanonicalSampleRate) {
    throw DataError("segment " + id + " is not 29538 samples at 16 kHz");
  }
  TrainingExample ex;
  ex.id = std::move(id);
  ex.audio = audio;
  ex.conditioning = VariantUsesEnvelope(variant) ? conditioning : DropEnvelope(conditioning);
  if (VariantIsSpectral(variant)) {
    ex.target = SpectralTarget(audio);
  } else {
    ex.target = Tensor<float>({1, kSegmentLength});
    for (std::size_t i = 0; i < kSegmentLength; ++i) {
      ex.target[i] = static_cast<float>(audio.samples[i]);
    }
  }
  return ex;
}

std::vector<TrainingExample> LoadExamples(const std::filesystem::path& dataset_dir,
                                          ModelVariant variant, Split split) {
  std::vector<TrainingExample> out;
  for (const auto& entry : ReadDatasetManifest(dataset_dir)) {
    if (entry.split != split) continue;
    out.push_back(MakeExample(variant, entry.id, ReadWav(entry.wav),
                              ReadConditioningFile(entry.features)));
  }
  return out;
}

std::vector<std::size_t> BatchIndices(std::uint64_t seed, std::int64_t step, std::size_t n,
                                      std::size_t batch) {
  if (n == 0) throw InvalidArgument("cannot draw a batch from an empty dataset");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (batch >= n) return idx;
  std::mt19937_64 rng(MixSeed(seed, static_cast<std::uint64_t>(step)));
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t span = n - i;
    const auto r = static_cast<std::size_t>(static_cast<double>(rng() >> 11) * 0x1.0p-53 * span);
    std::swap(idx[i], idx[i + std::min(r, span - 1)]);
  }
  idx.resize(batch);
  return idx;
}

Trainer::Trainer(ModelVariant variant, const ModelConfig& config, std::uint64_t seed,
                 const TrainOptions& options)
    : variant_(variant), seed_(seed), options_(options), model_(config, seed) {
  ToAdam(options);
}

Trainer::Trainer(const Checkpoint& checkpoint, const TrainOptions& options)
    : variant_(checkpoint.variant),
      seed_(checkpoint.seed),
      options_(options),
      model_(checkpoint.config, checkpoint.params) {
  ToAdam(options);
  if (checkpoint.adam) adam_ = *checkpoint.adam;
}

StepLoss Trainer::Step(const std::vector<TrainingExample>& data) {
  const auto batch = BatchIndices(seed_, adam_.step, data.size(),
                                  static_cast<std::size_t>(options_.batch));
  for (auto& p : model_.parameters()) p.ZeroGrad();

  StepLoss mean;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& ex = data[batch[b]];
    const StepLoss loss = ForwardBackward(model_, variant_, ex.conditioning, ex.target);
    mean.total += loss.total;
    if (b == 0) {
      mean.terms = loss.terms;
      continue;
    }
    for (std::size_t t = 0; t < loss.terms.size(); ++t) {
      mean.terms[t].second += loss.terms[t].second;
    }
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  mean.total *= scale;
  for (auto& term : mean.terms) term.second *= scale;

  for (auto& p : model_.parameters()) {
    for (float& g : p.grad.values()) {
      g *= static_cast<float>(scale);
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in " + p.name + " at step " +
                           std::to_string(adam_.step + 1));
      }
    }
  }
  const auto params = model_.parameter_pointers();
  AdamStep<float>(params, adam_, ToAdam(options_));
  return mean;
}

Checkpoint Trainer::ToCheckpoint() const {
  Checkpoint c;
  c.variant = variant_;
  c.seed = seed_;
  c.config = model_.config();
  c.params = model_.parameters();
  c.adam = adam_;
  return c;
}

double MeanLoss(WaveUNet<float>& model, LossKind kind, const std::vector<TrainingExample>& data) {
  if (model.config().spectral_output) {
    throw InvalidArgument("waveform losses need a waveform model");
  }
  if (data.empty()) throw InvalidArgument("mean loss over an empty set");
  double sum = 0.0;
  for (const auto& ex : data) {
    Tape<float> tape;
    auto out = model.Apply(tape, ex.conditioning, false);
    sum += ComputeLoss(kind, out, tape.Constant(ex.target)).total.value()[0];
  }
  return sum / static_cast<double>(data.size());
}

std::string LossLogHeader(const StepLoss& loss) {
  std::string out = "step,loss";
  for (const auto& [name, value] : loss.terms) out += "," + name;
  return out + "\n";
}

std::string LossLogRow(std::int64_t step, const StepLoss& loss) {
  std::string out = std::to_string(step) + "," + Num(loss.total);
  for (const auto& [name, value] : loss.terms) out += "," + Num(value);
  return out + "\n";
}

}  // namespace loopgen
