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

// Conditioning features for the generator.
//
// Local (time-varying) features are three band onset curves (kick, snare,
// hi-hat proxies) plus an amplitude envelope, computed at frame rate and
// spline-interpolated to the sample rate. Global features are a 12-bin pitch
// class profile and 21 timbral descriptors (7 per band), broadcast over time.
//
// All extractors expect 16 kHz audio and return 0 for silent input.

#ifndef LOOPGEN_FEATURES_H_
#define LOOPGEN_FEATURES_H_

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loopgen/audio.h"
#include "loopgen/dsp.h"
#include "loopgen/tensor.h"

namespace loopgen {

inline constexpr std::size_t kSegmentLength = 29538;
inline constexpr int kNumBands = 3;
inline constexpr int kNumPitchClasses = 12;
inline constexpr int kNumTimbralDescriptors = 7;
inline constexpr int kNumTimbral = kNumBands * kNumTimbralDescriptors;
inline constexpr int kFeatureFft = 1024;
inline constexpr int kFeatureHop = 512;

enum Band { kLowBand = 0, kMidBand = 1, kHighBand = 2 };

enum TimbralDescriptor {
  kHardness = 0,
  kDepth,
  kBrightness,
  kRoughness,
  kBoominess,
  kWarmth,
  kSharpness,
};

// Filters used for the three bands: 1st-order low-pass at 90 Hz, 2nd-order
// band-pass at 280 Hz, 1st-order high-pass at 7200 Hz (clamped to 0.45 fs).
IirFilterSpec BandFilter(Band band, int sample_rate = kCanonicalSampleRate);
AudioBuffer FilterBand(const AudioBuffer& audio, Band band);

// Half-wave-rectified spectral flux of each band-filtered signal (fft 1024,
// hop 512), one value per frame, scaled to a peak of 1 per band. A band whose
// raw peak flux is below kLeakageRatio of the strongest band is scaled by
// that floor instead, so that leakage from another band stays small.
inline constexpr double kLeakageRatio = 0.05;
std::array<std::vector<double>, kNumBands> ExtractBandActivations(
    const AudioBuffer& audio);

// Frame RMS over a rectangular 1024-sample window centred every 512 samples
// (reflect padding), divided by its maximum.
std::vector<double> ExtractEnvelope(const AudioBuffer& audio);

// Spline through frame values placed at t * 512, clamped to [0, 1].
std::vector<double> Localize(std::span<const double> frames,
                             std::size_t segment_length);

// Pitch class profile, C = 0 ... B = 11, maximum 1 (all zero if no peaks).
std::array<double, kNumPitchClasses> ExtractHpcp(const AudioBuffer& audio);

// The 7 raw descriptors of an unfiltered signal, in TimbralDescriptor order.
std::array<double, kNumTimbralDescriptors> DescribeTimbre(
    const AudioBuffer& audio);

std::string_view TimbralDescriptorName(TimbralDescriptor descriptor);
// "low_hardness", ..., "high_sharpness" (band-major).
std::vector<std::string> TimbralFeatureNames();

// Per-feature min-max scaling fitted on a training set.
class NormStats {
 public:
  NormStats() = default;
  NormStats(std::vector<std::string> names, std::vector<double> min,
            std::vector<double> max);

  static NormStats Fit(std::span<const std::vector<double>> raw);

  // (v - min) / (max - min) clipped to [0, 1]; degenerate features map to 0.5.
  std::vector<double> Apply(std::span<const double> raw) const;
  bool degenerate(std::size_t i) const { return !(max_[i] > min_[i]); }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<double>& min() const { return min_; }
  const std::vector<double>& max() const { return max_; }

  // Text, one "name min max" line per feature.
  void Save(const std::filesystem::path& path) const;
  static NormStats Load(const std::filesystem::path& path);

 private:
  std::vector<std::string> names_;
  std::vector<double> min_;
  std::vector<double> max_;
};

// 21 descriptors, band-major. Raw when `stats` is null.
std::vector<double> ExtractTimbral(const AudioBuffer& audio,
                                   const NormStats* stats);

struct LocalConditioning {
  std::vector<double> kick;
  std::vector<double> snare;
  std::vector<double> hihat;
  std::vector<double> envelope;
};

struct GlobalConditioning {
  std::array<double, kNumPitchClasses> hpcp{};
  std::vector<double> timbral;  // kNumTimbral values
};

struct ConditioningSet {
  LocalConditioning local;
  GlobalConditioning global;
  std::size_t segment_length = 0;
};

ConditioningSet ExtractConditioning(const AudioBuffer& audio,
                                    const NormStats* stats);

int ConditioningChannels(bool include_envelope);
// Channel index of the first global feature and of timbral feature i.
int HpcpChannel(bool include_envelope);
int TimbralChannel(int feature, bool include_envelope);

// [kick, snare, hihat, (envelope), hpcp x 12, timbral x 21] x segment_length.
Tensor<float> Assemble(const ConditioningSet& set, bool include_envelope);

// Inverse of Assemble for a 37-channel tensor. Global rows are read at
// sample 0.
ConditioningSet Disassemble(const Tensor<float>& conditioning);

// Removes the envelope channel from a 37-channel tensor.
Tensor<float> DropEnvelope(const Tensor<float>& conditioning);

// "LFC1" | uint32 channels | uint32 length | float32 data, little-endian.
void WriteConditioningFile(const std::filesystem::path& path,
                           const Tensor<float>& conditioning);
Tensor<float> ReadConditioningFile(const std::filesystem::path& path);

}  // namespace loopgen

#endif  // LOOPGEN_FEATURES_H_
