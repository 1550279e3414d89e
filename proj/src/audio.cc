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

#include "loopgen/audio.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "loopgen/dsp.h"
#include "loopgen/error.h"

namespace loopgen {

namespace {

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void PutU16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
std::uint32_t GetU32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t GetU16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

void CheckFinite(const AudioBuffer& audio) {
  for (double s : audio.samples) {
    if (!std::isfinite(s)) throw DataError("audio contains non-finite samples");
  }
}

AudioBuffer PeakNormalize(AudioBuffer audio, double peak) {
  double max_abs = 0.0;
  for (double s : audio.samples) max_abs = std::max(max_abs, std::abs(s));
  if (max_abs == 0.0) return audio;
  const double gain = peak / max_abs;
  for (double& s : audio.samples) s *= gain;
  return audio;
}

double Rms(const AudioBuffer& audio) {
  if (audio.empty()) return 0.0;
  double acc = 0.0;
  for (double s : audio.samples) acc += s * s;
  return std::sqrt(acc / static_cast<double>(audio.size()));
}

void WriteWav(const std::filesystem::path& path, const AudioBuffer& audio) {
  const auto data_bytes = static_cast<std::uint32_t>(audio.size() * 2);
  std::string bytes;
  bytes.reserve(44 + data_bytes);
  bytes += "RIFF";
  PutU32(bytes, 36 + data_bytes);
  bytes += "WAVE";
  bytes += "fmt ";
  PutU32(bytes, 16);
  PutU16(bytes, 1);  // PCM
  PutU16(bytes, 1);  // mono
  PutU32(bytes, static_cast<std::uint32_t>(audio.sample_rate));
  PutU32(bytes, static_cast<std::uint32_t>(audio.sample_rate) * 2);
  PutU16(bytes, 2);
  PutU16(bytes, 16);
  bytes += "data";
  PutU32(bytes, data_bytes);
  for (double s : audio.samples) {
    const double scaled = std::clamp(std::round(s * 32767.0), -32767.0, 32767.0);
    const auto v = static_cast<std::int16_t>(scaled);
    PutU16(bytes, static_cast<std::uint16_t>(v));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

AudioBuffer ReadWav(const std::filesystem::path& path,
                    std::optional<int> target_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string raw((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  if (raw.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 ||
      std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw DataError(path.string() + ": not a RIFF/WAVE file");
  }

  int channels = 0;
  int sample_rate = 0;
  int bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const std::uint32_t chunk_size = GetU32(p + pos + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = std::min<std::size_t>(chunk_size, raw.size() - body);
    if (std::memcmp(p + pos, "fmt ", 4) == 0 && available >= 16) {
      const int format = GetU16(p + body);
      if (format != 1 && format != 0xfffe) {
        throw DataError(path.string() + ": only PCM WAV is supported");
      }
      channels = GetU16(p + body + 2);
      sample_rate = static_cast<int>(GetU32(p + body + 4));
      bits = GetU16(p + body + 14);
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      data = p + body;
      data_size = available;
    }
    pos = body + chunk_size + (chunk_size & 1);
  }
  if (channels <= 0 || data == nullptr) {
    throw DataError(path.string() + ": missing fmt or data chunk");
  }
  if (bits != 16) {
    throw DataError(path.string() + ": only 16-bit PCM is supported");
  }

  const std::size_t frames = data_size / (2 * static_cast<std::size_t>(channels));
  AudioBuffer audio;
  audio.sample_rate = sample_rate;
  audio.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const auto v = static_cast<std::int16_t>(GetU16(data + 2 * (i * channels + c)));
      acc += v / 32767.0;
    }
    audio.samples[i] = acc / channels;
  }
  if (target_rate && *target_rate != sample_rate) {
    return Resample(audio, *target_rate);
  }
  return audio;
}

}  // namespace loopgen
