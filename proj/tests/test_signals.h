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

// Test-only signal generators and brute-force reference transforms. Nothing
// here calls into the library's FFT path.

#ifndef LOOPGEN_TESTS_TEST_SIGNALS_H_
#define LOOPGEN_TESTS_TEST_SIGNALS_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "loopgen/audio.h"

namespace loopgen::testing_signals {

inline AudioBuffer Sine(double hz, std::size_t length, int rate,
                        double amplitude = 1.0, double phase = 0.0) {
  AudioBuffer out;
  out.sample_rate = rate;
  out.samples.resize(length);
  for (std::size_t i = 0; i < length; ++i) {
    out.samples[i] =
        amplitude * std::sin(2.0 * std::numbers::pi * hz * i / rate + phase);
  }
  return out;
}

inline AudioBuffer WhiteNoise(std::size_t length, std::uint64_t seed,
                              double amplitude = 0.5, int rate = 16000) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-amplitude, amplitude);
  AudioBuffer out;
  out.sample_rate = rate;
  out.samples.resize(length);
  for (double& s : out.samples) s = uni(rng);
  return out;
}

// Unit clicks at (k + 0.5) / rate_hz seconds.
inline AudioBuffer ClickTrain(double rate_hz, std::size_t length, int rate) {
  AudioBuffer out;
  out.sample_rate = rate;
  out.samples.assign(length, 0.0);
  const double period = rate / rate_hz;
  for (double pos = 0.5 * period; pos < static_cast<double>(length);
       pos += period) {
    out.samples[static_cast<std::size_t>(pos)] = 1.0;
  }
  return out;
}

inline std::vector<double> BruteForceDftMagnitude(
    const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    double re = 0.0;
    double im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double angle =
          -2.0 * std::numbers::pi * static_cast<double>((k * i) % n) / n;
      re += frame[i] * std::cos(angle);
      im += frame[i] * std::sin(angle);
    }
    mag[k] = std::hypot(re, im);
  }
  return mag;
}

// Start sample of each run of blocks whose energy exceeds 30% of the peak
// block energy. Onsets closer than `min_gap` samples to the previous one are
// merged into it.
inline std::vector<std::size_t> EnergyOnsets(const AudioBuffer& audio,
                                             std::size_t block,
                                             std::size_t min_gap = 0) {
  std::vector<double> energy(audio.size() / block, 0.0);
  double peak = 0.0;
  for (std::size_t b = 0; b < energy.size(); ++b) {
    for (std::size_t i = 0; i < block; ++i) {
      const double s = audio.samples[b * block + i];
      energy[b] += s * s;
    }
    peak = std::max(peak, energy[b]);
  }
  std::vector<std::size_t> onsets;
  bool above = false;
  for (std::size_t b = 0; b < energy.size(); ++b) {
    const bool now = energy[b] > 0.3 * peak;
    if (now && !above &&
        (onsets.empty() || b * block - onsets.back() >= min_gap)) {
      onsets.push_back(b * block);
    }
    above = now;
  }
  return onsets;
}

// Decaying sine sweep from 120 Hz down to 50 Hz starting at `at`.
inline AudioBuffer Kick(std::size_t length, std::size_t at, double amplitude = 0.9) {
  AudioBuffer out;
  out.samples.assign(length, 0.0);
  double phase = 0.0;
  for (std::size_t i = at; i < length; ++i) {
    const double t = static_cast<double>(i - at) / out.sample_rate;
    const double hz = 50.0 + 70.0 * std::exp(-t / 0.03);
    phase += 2.0 * std::numbers::pi * hz / out.sample_rate;
    out.samples[i] = amplitude * std::exp(-t / 0.08) * std::sin(phase);
  }
  return out;
}

// One-pole smoother y += a (x - y), a = 1 - exp(-2 pi fc / fs).
inline AudioBuffer OnePoleLowPass(const AudioBuffer& in, double cutoff_hz) {
  AudioBuffer out = in;
  const double a = 1.0 - std::exp(-2.0 * std::numbers::pi * cutoff_hz / in.sample_rate);
  double y = 0.0;
  for (double& s : out.samples) {
    y += a * (s - y);
    s = y;
  }
  return out;
}

// Input minus its one-pole low-passed version.
inline AudioBuffer OnePoleHighPass(const AudioBuffer& in, double cutoff_hz) {
  AudioBuffer low = OnePoleLowPass(in, cutoff_hz);
  AudioBuffer out = in;
  for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] -= low.samples[i];
  return out;
}

// Twice-differenced white noise gated to [at, at + burst).
inline AudioBuffer HihatBurst(std::size_t length, std::size_t at, std::size_t burst,
                              std::uint64_t seed, double amplitude = 0.9) {
  AudioBuffer noise = WhiteNoise(length + 2, seed, 1.0);
  AudioBuffer out;
  out.samples.assign(length, 0.0);
  for (std::size_t i = at; i < std::min(length, at + burst); ++i) {
    out.samples[i] = 0.25 * amplitude *
                     (noise.samples[i + 2] - 2.0 * noise.samples[i + 1] + noise.samples[i]);
  }
  return out;
}

inline AudioBuffer Mix(const AudioBuffer& a, const AudioBuffer& b) {
  AudioBuffer out = a;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    out.samples[i] += b.samples[i];
  }
  return out;
}

}  // namespace loopgen::testing_signals

#endif  // LOOPGEN_TESTS_TEST_SIGNALS_H_
