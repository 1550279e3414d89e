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

// Deterministic signal-processing kernels: STFT/ISTFT, Griffin-Lim, first and
// second order IIR band filters, polyphase resampling, cubic spline
// interpolation and phase-vocoder time stretching.

#ifndef LOOPGEN_DSP_H_
#define LOOPGEN_DSP_H_

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "loopgen/audio.h"

namespace loopgen {

// STFT geometry. Frames are centered: the signal is reflect-padded by
// fft_size / 2 on both sides, so frame t is centered on sample t * hop_size
// and there are floor(length / hop_size) + 1 frames.
struct SpectrogramConfig {
  int fft_size = 1024;
  int hop_size = 512;

  int num_bins() const { return fft_size / 2 + 1; }
  int NumFrames(std::size_t signal_length) const;
  // Throws InvalidArgument unless fft_size is a power of two and
  // 0 < hop_size <= fft_size.
  void Validate() const;
};

// Row-major frames x bins.
struct Spectrogram {
  SpectrogramConfig config;
  int num_frames = 0;
  // Length of the analysed signal; istft reproduces this many samples.
  std::size_t signal_length = 0;
  int sample_rate = kCanonicalSampleRate;
  std::vector<double> magnitudes;
  std::vector<double> phases;

  int num_bins() const { return config.num_bins(); }
  double magnitude(int frame, int bin) const {
    return magnitudes[static_cast<std::size_t>(frame) * num_bins() + bin];
  }
  double phase(int frame, int bin) const {
    return phases[static_cast<std::size_t>(frame) * num_bins() + bin];
  }
};

// Periodic Hann window of the given length.
std::vector<double> HannWindow(int length);

// Maps an index in the centered (padded) domain onto [0, length) by
// repeated reflection about the end samples, numpy "reflect" style.
std::size_t ReflectIndex(std::int64_t index, std::size_t length);

// One-sided DFT of a real frame; size must be a power of two. Backed by FFTW
// with estimate-mode plans so results are reproducible run to run.
void RealDft(std::span<const double> frame,
             std::span<std::complex<double>> spectrum);
// Inverse of RealDft including the 1/n factor.
void InverseRealDft(std::span<const std::complex<double>> spectrum,
                    std::span<double> frame);

Spectrogram Stft(const AudioBuffer& audio, const SpectrogramConfig& config);

// Weighted overlap-add with the Hann synthesis window, normalized by the
// summed squared window. Exact inverse of Stft for consistent input.
AudioBuffer Istft(const Spectrogram& spec);

struct GriffinLimOptions {
  int iterations = 60;
  std::uint64_t seed = 0;
};

struct GriffinLimResult {
  AudioBuffer audio;
  // Spectral convergence after each iteration,
  // || |STFT(y)| - M ||_F / ||M||_F, measured in the padded frame domain.
  std::vector<double> convergence;
};

// Classic Griffin-Lim from a magnitude-only spectrogram (phases ignored).
// Iterates on the full padded-length signal so each step is an exact
// least-squares projection, which makes the convergence curve monotone.
GriffinLimResult GriffinLim(const Spectrogram& magnitudes,
                            const GriffinLimOptions& options = {});

double SpectralConvergence(std::span<const double> estimate,
                           std::span<const double> reference);

enum class IirKind { kLowPass1, kBandPass2, kHighPass1 };

// Transfer function b(z) / a(z) with a[0] == 1.
struct IirFilterSpec {
  IirKind kind = IirKind::kLowPass1;
  double frequency = 0.0;
  int sample_rate = kCanonicalSampleRate;
  std::vector<double> b;
  std::vector<double> a;

  std::complex<double> Response(double frequency_hz) const;
  double MaxPoleModulus() const;
};

inline constexpr double kBandPassQ = 1.0;

// Bilinear-transform design with frequency prewarping, so first-order
// sections sit exactly at -3.01 dB at `frequency` and the band-pass peaks at
// its center. Throws InvalidArgument outside (0, sample_rate / 2) and
// NumericError if the result is unstable.
IirFilterSpec DesignIir(IirKind kind, double frequency, int sample_rate);

// Direct form II transposed, zero initial state.
AudioBuffer ApplyIir(const AudioBuffer& audio, const IirFilterSpec& filter);

// Kaiser-windowed sinc (beta 8, 32 zero crossings per side) polyphase
// resampler. Output length is round(length * target / source).
AudioBuffer Resample(const AudioBuffer& audio, int target_rate);

// Phase-vocoder stretch with identity phase locking (fft 2048, hop 512).
// `ratio` > 1 speeds up; output length is round(length / ratio).
AudioBuffer TimeStretch(const AudioBuffer& audio, double ratio);

// Natural cubic spline through (positions[i], values[i]) evaluated at
// 0 .. target_length - 1. Outside the knot range the end values are held.
// With fewer than four knots the curve falls back to linear interpolation.
std::vector<double> SplineInterpolate(std::span<const double> values,
                                      std::span<const double> positions,
                                      std::size_t target_length);

}  // namespace loopgen

#endif  // LOOPGEN_DSP_H_
