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

// Wave-U-Net generator mapping conditioning to a waveform.
//
// Encoder: `levels` stride-2 convolutions. Decoder: per level, linear 2x
// upsampling, concatenation with the matching encoder activation (the raw
// conditioning at the top level), and a stride-1 convolution back to the
// mirrored channel count. Head: 1x1 convolution, tanh (waveform) or softplus
// (magnitude spectrogram). Hidden activations are LeakyReLU(0.2).
//
// Waveform variants take 29538-sample conditioning, zero-padded 591 + 591 to
// 30720 = 30 * 2^10 and cropped back at the output. The spectrogram variant
// works at frame rate: 58 frames padded 3 + 3 to 64, 4 levels, 513 outputs.

#ifndef LOOPGEN_MODEL_H_
#define LOOPGEN_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "loopgen/audio.h"
#include "loopgen/autodiff.h"
#include "loopgen/losses.h"

namespace loopgen {

enum class ModelVariant { kStft, kWav, kWavSpec, kMulti, kMultiNoEnv };

std::string_view VariantName(ModelVariant variant);
// "STFT", "WAV", "WAVSPEC", "MULTI", "MULTI_NOENV"; case-insensitive.
ModelVariant ParseVariant(std::string_view name);

bool VariantUsesEnvelope(ModelVariant variant);
bool VariantIsSpectral(ModelVariant variant);
// Waveform variants only; the spectrogram variant trains on magnitude L1.
LossKind VariantLoss(ModelVariant variant);

inline constexpr std::size_t kPaddedLength = 30720;
inline constexpr int kSpectralFrames = 58;
inline constexpr std::size_t kSpectralPaddedFrames = 64;
inline constexpr int kSpectralBins = 513;
inline constexpr int kSpectralGriffinLimIterations = 60;

struct ModelConfig {
  int levels = 10;
  int base_channels = 32;
  int double_every = 3;
  int kernel = 5;
  int conditioning_channels = 37;
  int output_channels = 1;
  bool spectral_output = false;
  // Length the network runs at (after padding).
  std::size_t padded_length = kPaddedLength;
  // Length of conditioning and output seen by callers.
  std::size_t nominal_length = 29538;

  static ModelConfig ForVariant(ModelVariant variant);

  // Channels of encoder layers 0 .. levels-1.
  std::vector<int> EncoderChannels() const;
  std::size_t BottleneckLength() const { return padded_length >> levels; }
  std::size_t PadLeft() const { return (padded_length - nominal_length) / 2; }
  // Throws InvalidArgument on inconsistent settings.
  void Validate() const;
  // Stable text form used for hashing and manifests.
  std::string ToString() const;
};

template <typename T>
class WaveUNet {
 public:
  // Glorot-uniform weights from a seeded generator, zero biases.
  WaveUNet(const ModelConfig& config, std::uint64_t seed);
  // Takes ownership of existing parameters (e.g. from a checkpoint).
  WaveUNet(const ModelConfig& config, std::vector<Parameter<T>> params);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  std::vector<Parameter<T>*> parameter_pointers();
  std::size_t NumParameters() const;

  // Network on an already padded [C x padded_length] input. Returns the head
  // output [output_channels x padded_length] before cropping. With
  // `trainable`, gradients flow into the parameters.
  Var<T> Network(Var<T> padded_input, bool trainable);

  // [C x nominal_length] conditioning (sample rate) to the cropped output:
  // [1 x nominal_length] waveform or [513 x 58] magnitudes (bins x frames).
  Var<T> Apply(Tape<T>& tape, const Tensor<T>& conditioning, bool trainable);

  // Inference without gradients.
  Tensor<T> Forward(const Tensor<T>& conditioning);

  template <typename U>
  WaveUNet<U> Cast() const;

 private:
  Var<T> Conv(Var<T> x, std::size_t layer, int stride, bool trainable);

  ModelConfig config_;
  std::vector<Parameter<T>> params_;  // weight, bias per layer, graph order
};

// Zero-pads [C x nominal] conditioning to the network length. For the
// spectral config the conditioning is first sampled at the frame centres.
template <typename T>
Tensor<T> PrepareInput(const ModelConfig& config, const Tensor<T>& conditioning);

// Target magnitudes [513 x 58] (bins x frames) for the spectral variant.
Tensor<float> SpectralTarget(const AudioBuffer& audio);

// Output tensor of Forward to audio: the waveform itself, or Griffin-Lim
// reconstruction of the magnitudes.
AudioBuffer OutputToAudio(const ModelConfig& config, const Tensor<float>& output);

struct StepLoss {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> terms;
};

// Loss of one example; gradients are added into the parameters' grad.
// Throws NumericError naming the op when a non-finite value appears.
template <typename T>
StepLoss ForwardBackward(WaveUNet<T>& model, ModelVariant variant,
                            const Tensor<T>& conditioning,
                            const Tensor<T>& target, bool backward = true);

// Binary "LFW1" checkpoint: hyperparameters, parameters in graph order and,
// when present, the optimizer state. Little-endian throughout.
struct Checkpoint {
  ModelVariant variant = ModelVariant::kMulti;
  std::uint64_t seed = 0;
  ModelConfig config;
  std::vector<Parameter<float>> params;
  std::optional<AdamState<float>> adam;
};

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace loopgen

#endif  // LOOPGEN_MODEL_H_
