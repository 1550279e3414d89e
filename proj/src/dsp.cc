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

#include "loopgen/dsp.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "loopgen/error.h"
#include "loopgen/fft.h"

namespace loopgen {

namespace {

constexpr double kPi = std::numbers::pi;

double PrincipalArgument(double phase) {
  return phase - 2.0 * kPi * std::floor((phase + kPi) / (2.0 * kPi));
}

// Fills `frame` with the windowed samples of the centered frame starting at
// `start` (padded-domain coordinates, i.e. start = center - fft/2).
void GatherFrame(std::span<const double> signal, std::int64_t start,
                 std::span<const double> window, std::span<double> frame) {
  for (std::size_t n = 0; n < frame.size(); ++n) {
    frame[n] = signal[ReflectIndex(start + static_cast<std::int64_t>(n),
                                   signal.size())] *
               window[n];
  }
}

// Least-squares overlap-add of `frames` (each fft_size long, unwindowed
// time-domain frames) placed at multiples of `hop`. Returns the full padded
// domain of length (num_frames - 1) * hop + fft_size.
class OverlapAdd {
 public:
  OverlapAdd(int fft_size, int hop, int num_frames)
      : fft_size_(fft_size),
        hop_(hop),
        window_(HannWindow(fft_size)),
        sum_(static_cast<std::size_t>(num_frames - 1) * hop + fft_size, 0.0),
        weight_(sum_.size(), 0.0) {}

  void Add(int frame_index, std::span<const double> frame) {
    const std::size_t offset = static_cast<std::size_t>(frame_index) * hop_;
    for (int n = 0; n < fft_size_; ++n) {
      sum_[offset + n] += frame[n] * window_[n];
      weight_[offset + n] += window_[n] * window_[n];
    }
  }

  std::vector<double> Finish() const {
    std::vector<double> out(sum_.size(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (weight_[i] > 1e-10) out[i] = sum_[i] / weight_[i];
    }
    return out;
  }

 private:
  int fft_size_;
  int hop_;
  std::vector<double> window_;
  std::vector<double> sum_;
  std::vector<double> weight_;
};

}  // namespace

int SpectrogramConfig::NumFrames(std::size_t signal_length) const {
  return static_cast<int>(signal_length / hop_size) + 1;
}

void SpectrogramConfig::Validate() const {
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0) {
    throw InvalidArgument("fft_size must be a power of two, got " +
                          std::to_string(fft_size));
  }
  if (hop_size <= 0 || hop_size > fft_size) {
    throw InvalidArgument("hop_size must be in (0, fft_size], got " +
                          std::to_string(hop_size));
  }
}

std::vector<double> HannWindow(int length) {
  std::vector<double> w(length);
  for (int n = 0; n < length; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * n / length);
  }
  return w;
}

std::size_t ReflectIndex(std::int64_t index, std::size_t length) {
  if (length <= 1) return 0;
  const auto period = static_cast<std::int64_t>(2 * (length - 1));
  std::int64_t i = index % period;
  if (i < 0) i += period;
  if (i >= static_cast<std::int64_t>(length)) i = period - i;
  return static_cast<std::size_t>(i);
}

void RealDft(std::span<const double> frame,
             std::span<std::complex<double>> spectrum) {
  const auto& plan = RealFftPlan::Get(static_cast<int>(frame.size()));
  if (spectrum.size() < frame.size() / 2 + 1) {
    throw InvalidArgument("RealDft: spectrum too small");
  }
  plan.Forward(frame.data(), spectrum.data());
}

void InverseRealDft(std::span<const std::complex<double>> spectrum,
                    std::span<double> frame) {
  const auto& plan = RealFftPlan::Get(static_cast<int>(frame.size()));
  plan.Inverse(spectrum.data(), frame.data());
  const double scale = 1.0 / static_cast<double>(frame.size());
  for (double& v : frame) v *= scale;
}

Spectrogram Stft(const AudioBuffer& audio, const SpectrogramConfig& config) {
  config.Validate();
  if (audio.empty()) throw InvalidArgument("empty signal");

  Spectrogram spec;
  spec.config = config;
  spec.signal_length = audio.size();
  spec.sample_rate = audio.sample_rate;
  spec.num_frames = config.NumFrames(audio.size());
  const int n = config.fft_size;
  const int bins = config.num_bins();
  spec.magnitudes.resize(static_cast<std::size_t>(spec.num_frames) * bins);
  spec.phases.resize(spec.magnitudes.size());

  const auto window = HannWindow(n);
  const auto& plan = RealFftPlan::Get(n);
  std::vector<double> frame(n);
  std::vector<std::complex<double>> bins_out(bins);
  for (int t = 0; t < spec.num_frames; ++t) {
    GatherFrame(audio.samples,
                static_cast<std::int64_t>(t) * config.hop_size - n / 2, window,
                frame);
    plan.Forward(frame.data(), bins_out.data());
    for (int k = 0; k < bins; ++k) {
      const std::size_t idx = static_cast<std::size_t>(t) * bins + k;
      spec.magnitudes[idx] = std::abs(bins_out[k]);
      spec.phases[idx] = std::arg(bins_out[k]);
    }
  }
  return spec;
}

AudioBuffer Istft(const Spectrogram& spec) {
  spec.config.Validate();
  if (spec.num_frames <= 0) throw InvalidArgument("istft: zero frames");
  const int n = spec.config.fft_size;
  const int bins = spec.num_bins();
  const std::size_t expected = static_cast<std::size_t>(spec.num_frames) * bins;
  if (spec.magnitudes.size() != expected ||
      (!spec.phases.empty() && spec.phases.size() != expected)) {
    throw InvalidArgument("istft: spectrogram shape does not match config");
  }

  const auto& plan = RealFftPlan::Get(n);
  OverlapAdd ola(n, spec.config.hop_size, spec.num_frames);
  std::vector<std::complex<double>> bins_in(bins);
  std::vector<double> frame(n);
  for (int t = 0; t < spec.num_frames; ++t) {
    for (int k = 0; k < bins; ++k) {
      const double phase = spec.phases.empty() ? 0.0 : spec.phase(t, k);
      bins_in[k] = std::polar(spec.magnitude(t, k), phase);
    }
    plan.Inverse(bins_in.data(), frame.data());
    for (double& v : frame) v /= n;
    ola.Add(t, frame);
  }
  const auto padded = ola.Finish();

  std::size_t length = spec.signal_length;
  if (length == 0) {
    length = static_cast<std::size_t>(spec.num_frames - 1) *
             spec.config.hop_size;
  }
  AudioBuffer out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(length, 0.0);
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t j = i + n / 2;
    if (j < padded.size()) out.samples[i] = padded[j];
  }
  return out;
}

double SpectralConvergence(std::span<const double> estimate,
                           std::span<const double> reference) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = estimate[i] - reference[i];
    num += d * d;
    den += reference[i] * reference[i];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::sqrt(num);
  return std::sqrt(num / den);
}

GriffinLimResult GriffinLim(const Spectrogram& magnitudes,
                            const GriffinLimOptions& options) {
  const SpectrogramConfig& config = magnitudes.config;
  config.Validate();
  if (options.iterations < 1) {
    throw InvalidArgument("griffin_lim: iterations must be >= 1");
  }
  if (magnitudes.num_frames <= 0) throw InvalidArgument("griffin_lim: no frames");
  for (double m : magnitudes.magnitudes) {
    if (!(m >= 0.0)) throw InvalidArgument("griffin_lim: negative magnitude");
  }

  const int n = config.fft_size;
  const int hop = config.hop_size;
  const int bins = config.num_bins();
  const int frames = magnitudes.num_frames;
  const auto window = HannWindow(n);
  const auto& plan = RealFftPlan::Get(n);

  // Full two-sided Frobenius norm: interior bins count twice.
  auto bin_weight = [&](int k) { return (k == 0 || k == n / 2) ? 1.0 : 2.0; };

  std::mt19937_64 rng(options.seed);
  std::vector<double> phase(magnitudes.magnitudes.size());
  for (double& p : phase) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    p = -kPi + 2.0 * kPi * u;
  }

  std::vector<std::complex<double>> spectrum(bins);
  std::vector<double> frame(n);
  std::vector<double> signal;
  GriffinLimResult result;
  result.convergence.reserve(options.iterations);

  auto synthesize = [&]() {
    OverlapAdd ola(n, hop, frames);
    for (int t = 0; t < frames; ++t) {
      for (int k = 0; k < bins; ++k) {
        const std::size_t idx = static_cast<std::size_t>(t) * bins + k;
        spectrum[k] = std::polar(magnitudes.magnitudes[idx], phase[idx]);
      }
      plan.Inverse(spectrum.data(), frame.data());
      for (double& v : frame) v /= n;
      ola.Add(t, frame);
    }
    signal = ola.Finish();
  };

  for (int iter = 0; iter < options.iterations; ++iter) {
    synthesize();
    double num = 0.0;
    double den = 0.0;
    for (int t = 0; t < frames; ++t) {
      const std::size_t offset = static_cast<std::size_t>(t) * hop;
      for (int i = 0; i < n; ++i) frame[i] = signal[offset + i] * window[i];
      plan.Forward(frame.data(), spectrum.data());
      for (int k = 0; k < bins; ++k) {
        const std::size_t idx = static_cast<std::size_t>(t) * bins + k;
        const double target = magnitudes.magnitudes[idx];
        const double d = std::abs(spectrum[k]) - target;
        num += bin_weight(k) * d * d;
        den += bin_weight(k) * target * target;
        phase[idx] = std::arg(spectrum[k]);
      }
    }
    result.convergence.push_back(den > 0.0 ? std::sqrt(num / den)
                                           : std::sqrt(num));
  }
  synthesize();

  std::size_t length = magnitudes.signal_length;
  if (length == 0) length = static_cast<std::size_t>(frames - 1) * hop;
  result.audio.sample_rate = magnitudes.sample_rate;
  result.audio.samples.assign(length, 0.0);
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t j = i + n / 2;
    if (j < signal.size()) result.audio.samples[i] = signal[j];
  }
  return result;
}

std::complex<double> IirFilterSpec::Response(double frequency_hz) const {
  const double w = 2.0 * kPi * frequency_hz / sample_rate;
  const std::complex<double> z_inv = std::polar(1.0, -w);
  std::complex<double> num = 0.0;
  std::complex<double> den = 0.0;
  std::complex<double> zk = 1.0;
  for (std::size_t k = 0; k < std::max(b.size(), a.size()); ++k) {
    if (k < b.size()) num += b[k] * zk;
    if (k < a.size()) den += a[k] * zk;
    zk *= z_inv;
  }
  return num / den;
}

double IirFilterSpec::MaxPoleModulus() const {
  if (a.size() == 2) return std::abs(a[1]);
  if (a.size() == 3) {
    // Roots of z^2 + a1 z + a2.
    const std::complex<double> disc = a[1] * a[1] - 4.0 * a[2];
    const std::complex<double> root = std::sqrt(disc);
    return std::max(std::abs((-a[1] + root) / 2.0),
                    std::abs((-a[1] - root) / 2.0));
  }
  return 0.0;
}

IirFilterSpec DesignIir(IirKind kind, double frequency, int sample_rate) {
  if (sample_rate <= 0 || !(frequency > 0.0) ||
      !(frequency < sample_rate / 2.0)) {
    throw InvalidArgument("iir design frequency " + std::to_string(frequency) +
                          " Hz outside (0, " +
                          std::to_string(sample_rate / 2) + ") Hz");
  }
  IirFilterSpec spec;
  spec.kind = kind;
  spec.frequency = frequency;
  spec.sample_rate = sample_rate;
  const double k = std::tan(kPi * frequency / sample_rate);
  switch (kind) {
    case IirKind::kLowPass1:
      spec.b = {k / (1.0 + k), k / (1.0 + k)};
      spec.a = {1.0, (k - 1.0) / (k + 1.0)};
      break;
    case IirKind::kHighPass1:
      spec.b = {1.0 / (1.0 + k), -1.0 / (1.0 + k)};
      spec.a = {1.0, (k - 1.0) / (k + 1.0)};
      break;
    case IirKind::kBandPass2: {
      const double w0 = 2.0 * kPi * frequency / sample_rate;
      const double alpha = std::sin(w0) / (2.0 * kBandPassQ);
      const double a0 = 1.0 + alpha;
      spec.b = {alpha / a0, 0.0, -alpha / a0};
      spec.a = {1.0, -2.0 * std::cos(w0) / a0, (1.0 - alpha) / a0};
      break;
    }
  }
  if (!(spec.MaxPoleModulus() < 1.0)) {
    throw NumericError("iir design is unstable");
  }
  return spec;
}

AudioBuffer ApplyIir(const AudioBuffer& audio, const IirFilterSpec& filter) {
  AudioBuffer out;
  out.sample_rate = audio.sample_rate;
  out.samples.resize(audio.size());
  const double b0 = filter.b[0];
  const double b1 = filter.b.size() > 1 ? filter.b[1] : 0.0;
  const double b2 = filter.b.size() > 2 ? filter.b[2] : 0.0;
  const double a1 = filter.a.size() > 1 ? filter.a[1] : 0.0;
  const double a2 = filter.a.size() > 2 ? filter.a[2] : 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  for (std::size_t i = 0; i < audio.size(); ++i) {
    const double x = audio.samples[i];
    const double y = b0 * x + s1;
    s1 = b1 * x - a1 * y + s2;
    s2 = b2 * x - a2 * y;
    out.samples[i] = y;
  }
  return out;
}

namespace {

constexpr double kKaiserBeta = 8.0;
constexpr int kZeroCrossings = 32;

double KaiserSinc(double tau, double cutoff, double half_width) {
  const double u = tau / half_width;
  if (std::abs(u) >= 1.0) return 0.0;
  const double x = cutoff * tau;
  const double sinc = x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x);
  const double kaiser =
      std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - u * u)) /
      std::cyl_bessel_i(0.0, kKaiserBeta);
  return cutoff * sinc * kaiser;
}

}  // namespace

AudioBuffer Resample(const AudioBuffer& audio, int target_rate) {
  if (target_rate <= 0) throw InvalidArgument("resample: target rate <= 0");
  if (audio.sample_rate <= 0) throw InvalidArgument("resample: source rate <= 0");
  if (target_rate == audio.sample_rate) return audio;

  const std::int64_t g = std::gcd(audio.sample_rate, target_rate);
  const std::int64_t up = target_rate / g;
  const std::int64_t down = audio.sample_rate / g;
  const double cutoff =
      std::min(1.0, static_cast<double>(target_rate) / audio.sample_rate);
  const double half_width = kZeroCrossings / cutoff;
  const int taps_per_side = static_cast<int>(std::ceil(half_width));
  const int taps = 2 * taps_per_side;

  // Tap j of phase p weighs input sample i - taps_per_side + 1 + j, where
  // the output position is i + p / up.
  auto kernel_for_phase = [&](std::int64_t p, std::vector<double>& h) {
    h.resize(taps);
    const double frac = static_cast<double>(p) / up;
    double sum = 0.0;
    for (int j = 0; j < taps; ++j) {
      const double tau = (j - taps_per_side + 1) - frac;
      h[j] = KaiserSinc(tau, cutoff, half_width);
      sum += h[j];
    }
    for (double& v : h) v /= sum;
  };

  constexpr std::int64_t kMaxTablePhases = 4096;
  std::vector<std::vector<double>> table;
  if (up <= kMaxTablePhases) {
    table.resize(up);
    for (std::int64_t p = 0; p < up; ++p) kernel_for_phase(p, table[p]);
  }

  const auto length = static_cast<std::int64_t>(audio.size());
  const std::int64_t out_length =
      (length * target_rate + audio.sample_rate / 2) / audio.sample_rate;
  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples.resize(out_length);
  std::vector<double> scratch;
  for (std::int64_t m = 0; m < out_length; ++m) {
    const std::int64_t pos = m * down;
    const std::int64_t i = pos / up;
    const std::int64_t p = pos % up;
    const std::vector<double>* h = nullptr;
    if (!table.empty()) {
      h = &table[p];
    } else {
      kernel_for_phase(p, scratch);
      h = &scratch;
    }
    double acc = 0.0;
    for (int j = 0; j < taps; ++j) {
      const std::int64_t src =
          std::clamp<std::int64_t>(i - taps_per_side + 1 + j, 0, length - 1);
      acc += (*h)[j] * audio.samples[src];
    }
    out.samples[m] = acc;
  }
  return out;
}

AudioBuffer TimeStretch(const AudioBuffer& audio, double ratio) {
  if (!(ratio >= 0.5 && ratio <= 2.0)) {
    throw InvalidArgument("time_stretch: ratio must be in [0.5, 2.0], got " +
                          std::to_string(ratio));
  }
  if (audio.empty()) throw InvalidArgument("empty signal");

  constexpr int kFft = 2048;
  constexpr int kHop = 512;
  constexpr int kBins = kFft / 2 + 1;
  const auto out_length = static_cast<std::size_t>(
      std::llround(static_cast<double>(audio.size()) / ratio));
  const int frames = static_cast<int>(out_length / kHop) + 1;

  const auto window = HannWindow(kFft);
  const auto& plan = RealFftPlan::Get(kFft);
  std::vector<double> frame(kFft);
  std::vector<std::complex<double>> spectrum(kBins);
  std::vector<double> magnitude(kBins);
  std::vector<double> in_phase(kBins);
  std::vector<double> prev_in_phase(kBins);
  std::vector<double> out_phase(kBins);
  std::vector<int> peaks;
  peaks.reserve(kBins);
  OverlapAdd ola(kFft, kHop, frames);

  std::int64_t prev_center = 0;
  for (int t = 0; t < frames; ++t) {
    const std::int64_t center =
        std::llround(static_cast<double>(t) * kHop * ratio);
    GatherFrame(audio.samples, center - kFft / 2, window, frame);
    plan.Forward(frame.data(), spectrum.data());
    for (int k = 0; k < kBins; ++k) {
      magnitude[k] = std::abs(spectrum[k]);
      in_phase[k] = std::arg(spectrum[k]);
    }

    if (t == 0) {
      out_phase = in_phase;
    } else {
      const double analysis_hop = static_cast<double>(center - prev_center);
      peaks.clear();
      for (int k = 0; k < kBins; ++k) {
        bool is_peak = true;
        for (int d = -2; d <= 2 && is_peak; ++d) {
          if (d == 0 || k + d < 0 || k + d >= kBins) continue;
          if (magnitude[k + d] >= magnitude[k]) is_peak = false;
        }
        if (is_peak) peaks.push_back(k);
      }
      auto advance = [&](int k) {
        const double omega = 2.0 * kPi * k / kFft;
        const double deviation = PrincipalArgument(
            in_phase[k] - prev_in_phase[k] - omega * analysis_hop);
        const double instantaneous = omega * analysis_hop + deviation;
        return PrincipalArgument(out_phase[k] +
                                 instantaneous * kHop / analysis_hop);
      };
      if (peaks.empty()) {
        for (int k = 0; k < kBins; ++k) out_phase[k] = advance(k);
      } else {
        std::vector<double> peak_phase(peaks.size());
        for (std::size_t i = 0; i < peaks.size(); ++i) {
          peak_phase[i] = advance(peaks[i]);
        }
        // Identity phase locking: each bin keeps its phase offset relative
        // to the peak whose region of influence it falls in.
        std::size_t region = 0;
        for (int k = 0; k < kBins; ++k) {
          while (region + 1 < peaks.size() &&
                 k > (peaks[region] + peaks[region + 1]) / 2) {
            ++region;
          }
          const int p = peaks[region];
          out_phase[k] = PrincipalArgument(peak_phase[region] + in_phase[k] -
                                           in_phase[p]);
        }
      }
    }

    for (int k = 0; k < kBins; ++k) {
      spectrum[k] = std::polar(magnitude[k], out_phase[k]);
    }
    plan.Inverse(spectrum.data(), frame.data());
    for (double& v : frame) v /= kFft;
    ola.Add(t, frame);
    prev_in_phase = in_phase;
    prev_center = center;
  }

  const auto padded = ola.Finish();
  AudioBuffer out;
  out.sample_rate = audio.sample_rate;
  out.samples.assign(out_length, 0.0);
  for (std::size_t i = 0; i < out_length; ++i) {
    const std::size_t j = i + kFft / 2;
    if (j < padded.size()) out.samples[i] = padded[j];
  }
  return out;
}

std::vector<double> SplineInterpolate(std::span<const double> values,
                                      std::span<const double> positions,
                                      std::size_t target_length) {
  if (values.size() != positions.size()) {
    throw InvalidArgument("spline: values and positions differ in size");
  }
  if (values.empty()) throw InvalidArgument("spline: no knots");
  for (std::size_t i = 1; i < positions.size(); ++i) {
    if (!(positions[i] > positions[i - 1])) {
      throw InvalidArgument("spline: positions must be strictly increasing");
    }
  }

  const std::size_t n = values.size();
  std::vector<double> out(target_length);
  if (n == 1) {
    std::fill(out.begin(), out.end(), values[0]);
    return out;
  }

  // Second derivatives of the natural spline; all zero means linear.
  std::vector<double> second(n, 0.0);
  if (n >= 4) {
    // Thomas algorithm on the interior knots.
    std::vector<double> diag(n, 0.0);
    std::vector<double> rhs(n, 0.0);
    std::vector<double> upper(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = positions[i] - positions[i - 1];
      const double h1 = positions[i + 1] - positions[i];
      const double lower = h0 / 6.0;
      diag[i] = (h0 + h1) / 3.0;
      upper[i] = h1 / 6.0;
      rhs[i] = (values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0;
      if (i > 1) {
        const double m = lower / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
      }
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      second[i] = (rhs[i] - upper[i] * second[i + 1]) / diag[i];
      if (i == 1) break;
    }
  }

  std::size_t seg = 0;
  for (std::size_t s = 0; s < target_length; ++s) {
    const double x = static_cast<double>(s);
    if (x <= positions.front()) {
      out[s] = values.front();
      continue;
    }
    if (x >= positions.back()) {
      out[s] = values.back();
      continue;
    }
    while (positions[seg + 1] < x) ++seg;
    const double h = positions[seg + 1] - positions[seg];
    const double a = (positions[seg + 1] - x) / h;
    const double b = (x - positions[seg]) / h;
    out[s] = a * values[seg] + b * values[seg + 1] +
             ((a * a * a - a) * second[seg] +
              (b * b * b - b) * second[seg + 1]) *
                 h * h / 6.0;
  }
  return out;
}

}  // namespace loopgen
