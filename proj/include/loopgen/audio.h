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

#ifndef LOOPGEN_AUDIO_H_
#define LOOPGEN_AUDIO_H_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

namespace loopgen {

inline constexpr int kCanonicalSampleRate = 16000;

// Mono signal plus its sample rate. Amplitudes are nominally in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kCanonicalSampleRate;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Throws DataError if any sample is NaN or infinite.
void CheckFinite(const AudioBuffer& audio);

// Scales so that max |sample| equals `peak`. Silence is returned unchanged.
AudioBuffer PeakNormalize(AudioBuffer audio, double peak);

double Rms(const AudioBuffer& audio);

// RIFF/WAVE PCM, 16-bit signed little-endian. Samples map to PCM as
// round(s * 32767) clamped to +-32767.
void WriteWav(const std::filesystem::path& path, const AudioBuffer& audio);

// Reads 16-bit PCM WAV. Multi-channel files are averaged down to mono. When
// `target_rate` is given and differs from the file rate, the signal is
// resampled.
AudioBuffer ReadWav(const std::filesystem::path& path,
                    std::optional<int> target_rate = std::nullopt);

}  // namespace loopgen

#endif  // LOOPGEN_AUDIO_H_
