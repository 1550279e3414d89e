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

#include "loopgen/features.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "loopgen/error.h"

namespace loopgen {
namespace {

constexpr double kBandFrequency[kNumBands] = {90.0, 280.0, 7200.0};
constexpr IirKind kBandKind[kNumBands] = {IirKind::kLowPass1, IirKind::kBandPass2,
                                          IirKind::kHighPass1};
constexpr std::string_view kBandNames[kNumBands] = {"low", "mid", "high"};
constexpr std::string_view kDescriptorNames[kNumTimbralDescriptors] = {
    "hardness", "depth", "brightness", "roughness",
    "boominess", "warmth", "sharpness"};

constexpr int kHpcpFft = 4096;
constexpr double kHpcpFloorDb = -60.0;
constexpr double kHpcpMinHz = 20.0;
constexpr double kHpcpMaxHz = 5000.0;
// Frames quieter than this fraction of the loudest frame are not averaged.
constexpr double kSilentFrameRatio = 1e-6;
constexpr double kHardnessWindowSeconds = 0.020;

void ScaleToPeak(std::vector<double>& values) {
  const double peak = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
  if (peak <= 0.0) {
    std::fill(values.begin(), values.end(), 0.0);
    return;
  }
  for (double& v : values) v /= peak;
}

bool IsSilent(const AudioBuffer& audio) {
  return std::all_of(audio.samples.begin(), audio.samples.end(),
                     [](double s) { return s == 0.0; });
}

// Half-wave rectified flux on the standard frame grid. The signal is
// preceded by one hop of silence so that frame 0 sees zeros to its left
// instead of a mirrored onset, and its predecessor is that silent frame.
std::vector<double> SpectralFlux(const AudioBuffer& audio) {
  AudioBuffer padded;
  padded.sample_rate = audio.sample_rate;
  padded.samples.assign(kFeatureHop, 0.0);
  padded.samples.insert(padded.samples.end(), audio.samples.begin(), audio.samples.end());
  const Spectrogram spec = Stft(padded, {kFeatureFft, kFeatureHop});
  const int bins = spec.num_bins();
  std::vector<double> flux(spec.num_frames - 1, 0.0);
  for (int t = 1; t < spec.num_frames; ++t) {
    double sum = 0.0;
    for (int k = 0; k < bins; ++k) {
      sum += std::max(0.0, spec.magnitude(t, k) - spec.magnitude(t - 1, k));
    }
    flux[t - 1] = sum;
  }
  return flux;
}

// Centred frame of `length` samples starting at t * hop - length / 2, with
// reflect padding.
void Frame(const std::vector<double>& x, int t, int length, int hop,
           std::vector<double>& out) {
  out.resize(length);
  const std::int64_t start = static_cast<std::int64_t>(t) * hop - length / 2;
  for (int n = 0; n < length; ++n) out[n] = x[ReflectIndex(start + n, x.size())];
}

// Steepest rise of the 20 ms RMS (hop 10 ms) relative to its peak.
double Hardness(const AudioBuffer& audio) {
  const int window = static_cast<int>(std::lround(kHardnessWindowSeconds * audio.sample_rate));
  const int hop = window / 2;
  if (static_cast<int>(audio.size()) < window || hop < 1) return 0.0;
  std::vector<double> rms;
  for (std::size_t start = 0; start + window <= audio.size(); start += hop) {
    double energy = 0.0;
    for (int n = 0; n < window; ++n) energy += audio.samples[start + n] * audio.samples[start + n];
    rms.push_back(std::sqrt(energy / window));
  }
  const double peak = *std::max_element(rms.begin(), rms.end());
  if (peak <= 0.0) return 0.0;
  double rise = rms.front();  // onset from silence before the signal
  for (std::size_t j = 1; j < rms.size(); ++j) rise = std::max(rise, rms[j] - rms[j - 1]);
  return rise / peak;
}

// Share of envelope-modulation energy between 20 and 150 Hz in one frame.
double FrameRoughness(const std::vector<double>& frame,
                      const std::vector<double>& window, int sample_rate) {
  const int n = static_cast<int>(frame.size());
  double mean = 0.0;
  for (double v : frame) mean += std::abs(v);
  mean /= n;
  std::vector<double> env(n);
  for (int i = 0; i < n; ++i) env[i] = (std::abs(frame[i]) - mean) * window[i];
  std::vector<std::complex<double>> spectrum(n / 2 + 1);
  RealDft(env, spectrum);
  double band = 0.0;
  double total = 0.0;
  for (int k = 1; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * sample_rate / n;
    const double p = std::norm(spectrum[k]);
    total += p;
    if (f >= 20.0 && f <= 150.0) band += p;
  }
  return total > 0.0 ? band / total : 0.0;
}

}  // namespace

IirFilterSpec BandFilter(Band band, int sample_rate) {
  double frequency = kBandFrequency[band];
  if (band == kHighBand) frequency = std::min(frequency, 0.45 * sample_rate);
  return DesignIir(kBandKind[band], frequency, sample_rate);
}

AudioBuffer FilterBand(const AudioBuffer& audio, Band band) {
  return ApplyIir(audio, BandFilter(band, audio.sample_rate));
}

std::array<std::vector<double>, kNumBands> ExtractBandActivations(
    const AudioBuffer& audio) {
  std::array<std::vector<double>, kNumBands> flux;
  double strongest = 0.0;
  for (int b = 0; b < kNumBands; ++b) {
    flux[b] = SpectralFlux(FilterBand(audio, static_cast<Band>(b)));
    for (double v : flux[b]) strongest = std::max(strongest, v);
  }
  for (auto& band : flux) {
    double peak = 0.0;
    for (double v : band) peak = std::max(peak, v);
    const double scale = std::max(peak, kLeakageRatio * strongest);
    for (double& v : band) v = scale > 0.0 ? v / scale : 0.0;
  }
  return flux;
}

std::vector<double> ExtractEnvelope(const AudioBuffer& audio) {
  const SpectrogramConfig cfg{kFeatureFft, kFeatureHop};
  const int frames = cfg.NumFrames(audio.size());
  std::vector<double> env(frames, 0.0);
  if (audio.empty()) return env;
  std::vector<double> frame;
  for (int t = 0; t < frames; ++t) {
    Frame(audio.samples, t, kFeatureFft, kFeatureHop, frame);
    double energy = 0.0;
    for (double v : frame) energy += v * v;
    env[t] = std::sqrt(energy / kFeatureFft);
  }
  ScaleToPeak(env);
  return env;
}

std::vector<double> Localize(std::span<const double> frames,
                             std::size_t segment_length) {
  std::vector<double> positions(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    positions[t] = static_cast<double>(t) * kFeatureHop;
  }
  auto out = SplineInterpolate(frames, positions, segment_length);
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

std::array<double, kNumPitchClasses> ExtractHpcp(const AudioBuffer& audio) {
  std::array<double, kNumPitchClasses> profile{};
  if (audio.empty()) return profile;
  const Spectrogram spec = Stft(audio, {kHpcpFft, kFeatureHop});
  const int bins = spec.num_bins();
  const double bin_hz = static_cast<double>(audio.sample_rate) / kHpcpFft;
  const double floor_ratio = std::pow(10.0, kHpcpFloorDb / 20.0);
  for (int t = 0; t < spec.num_frames; ++t) {
    const double* mag = &spec.magnitudes[static_cast<std::size_t>(t) * bins];
    const double frame_max = *std::max_element(mag, mag + bins);
    if (frame_max <= 0.0) continue;
    for (int k = 1; k + 1 < bins; ++k) {
      if (!(mag[k] > mag[k - 1] && mag[k] >= mag[k + 1])) continue;
      if (mag[k] < frame_max * floor_ratio) continue;
      // Parabolic refinement on log magnitude.
      const double l = std::log(mag[k - 1] + 1e-300);
      const double c = std::log(mag[k]);
      const double r = std::log(mag[k + 1] + 1e-300);
      const double denom = l - 2.0 * c + r;
      const double offset = denom < 0.0 ? 0.5 * (l - r) / denom : 0.0;
      const double freq = (k + offset) * bin_hz;
      if (freq < kHpcpMinHz || freq > kHpcpMaxHz) continue;
      const double semitones = 12.0 * std::log2(freq / 440.0);
      const double energy = mag[k] * mag[k];
      for (int p = 0; p < kNumPitchClasses; ++p) {
        // Distance to the nearest occurrence of class p (A = 9), in semitones.
        double d = std::remainder(semitones - (p - 9), 12.0);
        if (std::abs(d) < 1.0) {
          const double w = std::cos(std::numbers::pi * d / 2.0);
          profile[p] += w * w * energy;
        }
      }
    }
  }
  const double peak = *std::max_element(profile.begin(), profile.end());
  if (peak > 0.0) {
    for (double& v : profile) v /= peak;
  }
  return profile;
}

std::array<double, kNumTimbralDescriptors> DescribeTimbre(
    const AudioBuffer& audio) {
  std::array<double, kNumTimbralDescriptors> out{};
  if (audio.empty() || IsSilent(audio)) return out;

  const SpectrogramConfig cfg{kFeatureFft, kFeatureHop};
  const Spectrogram spec = Stft(audio, cfg);
  const int bins = spec.num_bins();
  const double nyquist = audio.sample_rate / 2.0;
  const double bin_hz = static_cast<double>(audio.sample_rate) / kFeatureFft;

  std::vector<double> frame_energy(spec.num_frames, 0.0);
  for (int t = 0; t < spec.num_frames; ++t) {
    for (int k = 0; k < bins; ++k) {
      frame_energy[t] += spec.magnitude(t, k) * spec.magnitude(t, k);
    }
  }
  const double loudest = *std::max_element(frame_energy.begin(), frame_energy.end());
  if (loudest <= 0.0) return out;

  const std::vector<double> window = HannWindow(kFeatureFft);
  std::vector<double> frame;
  int used = 0;
  for (int t = 0; t < spec.num_frames; ++t) {
    const double total = frame_energy[t];
    if (total <= kSilentFrameRatio * loudest) continue;
    double centroid = 0.0;
    double sharp = 0.0;
    double boom = 0.0;
    double warm = 0.0;
    for (int k = 0; k < bins; ++k) {
      const double p = spec.magnitude(t, k) * spec.magnitude(t, k);
      const double f = k * bin_hz;
      centroid += p * f / nyquist;
      sharp += p * std::pow(f / nyquist, 1.25);
      if (f < 200.0) boom += p;
      if (f >= 100.0 && f <= 600.0) warm += p;
    }
    Frame(audio.samples, t, kFeatureFft, kFeatureHop, frame);
    out[kBrightness] += centroid / total;
    out[kSharpness] += sharp / total;
    out[kBoominess] += boom / total;
    out[kWarmth] += warm / total;
    out[kRoughness] += FrameRoughness(frame, window, audio.sample_rate);
    ++used;
  }
  for (int d : {kBrightness, kSharpness, kBoominess, kWarmth, kRoughness}) {
    out[d] /= used;
  }
  out[kDepth] = 1.0 - out[kBrightness];
  out[kHardness] = Hardness(audio);
  return out;
}

std::string_view TimbralDescriptorName(TimbralDescriptor descriptor) {
  return kDescriptorNames[descriptor];
}

std::vector<std::string> TimbralFeatureNames() {
  std::vector<std::string> names;
  for (auto band : kBandNames) {
    for (auto descriptor : kDescriptorNames) {
      names.push_back(std::string(band) + "_" + std::string(descriptor));
    }
  }
  return names;
}

NormStats::NormStats(std::vector<std::string> names, std::vector<double> min,
                     std::vector<double> max)
    : names_(std::move(names)), min_(std::move(min)), max_(std::move(max)) {
  if (min_.size() != names_.size() || max_.size() != names_.size()) {
    throw InvalidArgument("norm stats: inconsistent sizes");
  }
}

NormStats NormStats::Fit(std::span<const std::vector<double>> raw) {
  if (raw.empty()) throw DataError("norm stats: no training vectors");
  std::vector<double> lo(kNumTimbral, 0.0);
  std::vector<double> hi(kNumTimbral, 0.0);
  for (std::size_t n = 0; n < raw.size(); ++n) {
    if (raw[n].size() != static_cast<std::size_t>(kNumTimbral)) {
      throw InvalidArgument("norm stats: expected 21 values per vector");
    }
    for (int i = 0; i < kNumTimbral; ++i) {
      lo[i] = n == 0 ? raw[n][i] : std::min(lo[i], raw[n][i]);
      hi[i] = n == 0 ? raw[n][i] : std::max(hi[i], raw[n][i]);
    }
  }
  return NormStats(TimbralFeatureNames(), std::move(lo), std::move(hi));
}

std::vector<double> NormStats::Apply(std::span<const double> raw) const {
  if (raw.size() != size()) {
    throw InvalidArgument("norm stats: expected " + std::to_string(size()) +
                          " values, got " + std::to_string(raw.size()));
  }
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = degenerate(i)
                 ? 0.5
                 : std::clamp((raw[i] - min_[i]) / (max_[i] - min_[i]), 0.0, 1.0);
  }
  return out;
}

void NormStats::Save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  for (std::size_t i = 0; i < size(); ++i) {
    out << names_[i] << ' ' << min_[i] << ' ' << max_[i] << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

NormStats NormStats::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<std::string> names;
  std::vector<double> lo;
  std::vector<double> hi;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name;
    double a;
    double b;
    if (!(fields >> name >> a >> b)) {
      throw DataError("malformed norm stats line in " + path.string() + ": " + line);
    }
    names.push_back(name);
    lo.push_back(a);
    hi.push_back(b);
  }
  if (names != TimbralFeatureNames()) {
    throw DataError("norm stats " + path.string() + " does not list the 21 timbral features");
  }
  return NormStats(std::move(names), std::move(lo), std::move(hi));
}

std::vector<double> ExtractTimbral(const AudioBuffer& audio,
                                   const NormStats* stats) {
  std::vector<double> raw;
  raw.reserve(kNumTimbral);
  for (int b = 0; b < kNumBands; ++b) {
    const auto d = DescribeTimbre(FilterBand(audio, static_cast<Band>(b)));
    raw.insert(raw.end(), d.begin(), d.end());
  }
  return stats != nullptr ? stats->Apply(raw) : raw;
}

ConditioningSet ExtractConditioning(const AudioBuffer& audio,
                                    const NormStats* stats) {
  if (audio.sample_rate != kCanonicalSampleRate) {
    throw InvalidArgument("features expect 16 kHz audio, got " +
                          std::to_string(audio.sample_rate));
  }
  ConditioningSet set;
  set.segment_length = audio.size();
  const auto bands = ExtractBandActivations(audio);
  set.local.kick = Localize(bands[kLowBand], audio.size());
  set.local.snare = Localize(bands[kMidBand], audio.size());
  set.local.hihat = Localize(bands[kHighBand], audio.size());
  set.local.envelope = Localize(ExtractEnvelope(audio), audio.size());
  set.global.hpcp = ExtractHpcp(audio);
  set.global.timbral = ExtractTimbral(audio, stats);
  return set;
}

int ConditioningChannels(bool include_envelope) {
  return (include_envelope ? 4 : 3) + kNumPitchClasses + kNumTimbral;
}

int HpcpChannel(bool include_envelope) { return include_envelope ? 4 : 3; }

int TimbralChannel(int feature, bool include_envelope) {
  return HpcpChannel(include_envelope) + kNumPitchClasses + feature;
}

Tensor<float> Assemble(const ConditioningSet& set, bool include_envelope) {
  const std::size_t len = set.segment_length;
  const LocalConditioning& local = set.local;
  std::vector<const std::vector<double>*> rows = {&local.kick, &local.snare,
                                                  &local.hihat};
  if (include_envelope) rows.push_back(&local.envelope);
  for (const auto* row : rows) {
    if (row->size() != len) {
      throw InvalidArgument("assemble: local feature has " +
                            std::to_string(row->size()) + " samples, expected " +
                            std::to_string(len));
    }
  }
  if (set.global.timbral.size() != static_cast<std::size_t>(kNumTimbral)) {
    throw InvalidArgument("assemble: expected 21 timbral values");
  }
  const int channels = ConditioningChannels(include_envelope);
  Tensor<float> out({static_cast<std::size_t>(channels), len});
  std::size_t c = 0;
  for (const auto* row : rows) {
    std::copy(row->begin(), row->end(), out.data() + c * len);
    ++c;
  }
  auto broadcast = [&](double value) {
    std::fill_n(out.data() + c * len, len, static_cast<float>(value));
    ++c;
  };
  for (double v : set.global.hpcp) broadcast(v);
  for (double v : set.global.timbral) broadcast(v);
  return out;
}

ConditioningSet Disassemble(const Tensor<float>& conditioning) {
  if (conditioning.rank() != 2 ||
      conditioning.dim(0) != static_cast<std::size_t>(ConditioningChannels(true)) ||
      conditioning.dim(1) == 0) {
    throw InvalidArgument("disassemble: expected 37 x length, got " +
                          ShapeString(conditioning.shape()));
  }
  const std::size_t len = conditioning.dim(1);
  ConditioningSet set;
  set.segment_length = len;
  auto row = [&](std::size_t c) {
    const float* p = conditioning.data() + c * len;
    return std::vector<double>(p, p + len);
  };
  set.local.kick = row(0);
  set.local.snare = row(1);
  set.local.hihat = row(2);
  set.local.envelope = row(3);
  const int hpcp = HpcpChannel(true);
  for (int k = 0; k < kNumPitchClasses; ++k) {
    set.global.hpcp[k] = conditioning.at(hpcp + k, 0);
  }
  set.global.timbral.resize(kNumTimbral);
  for (int i = 0; i < kNumTimbral; ++i) {
    set.global.timbral[i] = conditioning.at(TimbralChannel(i, true), 0);
  }
  return set;
}

Tensor<float> DropEnvelope(const Tensor<float>& conditioning) {
  if (conditioning.rank() != 2 ||
      conditioning.dim(0) != static_cast<std::size_t>(ConditioningChannels(true))) {
    throw InvalidArgument("drop envelope: expected 37 channels, got " +
                          ShapeString(conditioning.shape()));
  }
  const std::size_t len = conditioning.dim(1);
  Tensor<float> out({conditioning.dim(0) - 1, len});
  std::copy_n(conditioning.data(), 3 * len, out.data());
  std::copy(conditioning.data() + 4 * len, conditioning.data() + conditioning.size(),
            out.data() + 3 * len);
  return out;
}

namespace {
constexpr char kConditioningMagic[4] = {'L', 'F', 'C', '1'};
static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");
}  // namespace

void WriteConditioningFile(const std::filesystem::path& path,
                           const Tensor<float>& conditioning) {
  if (conditioning.rank() != 2) {
    throw InvalidArgument("conditioning must be [channels x length]");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const std::uint32_t header[2] = {static_cast<std::uint32_t>(conditioning.dim(0)),
                                   static_cast<std::uint32_t>(conditioning.dim(1))};
  out.write(kConditioningMagic, 4);
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(conditioning.data()),
            static_cast<std::streamsize>(conditioning.size() * sizeof(float)));
  if (!out) throw DataError("write failed: " + path.string());
}

Tensor<float> ReadConditioningFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  char magic[4];
  std::uint32_t header[2];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || std::memcmp(magic, kConditioningMagic, 4) != 0) {
    throw DataError(path.string() + " is not a conditioning file");
  }
  Tensor<float> out({header[0], header[1]});
  in.read(reinterpret_cast<char*>(out.data()),
          static_cast<std::streamsize>(out.size() * sizeof(float)));
  if (!in) throw DataError(path.string() + " is truncated");
  for (float v : out.values()) {
    if (!std::isfinite(v)) throw DataError(path.string() + " holds non-finite values");
  }
  return out;
}

}  // namespace loopgen
