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

#include "loopgen/evaluation.h"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include "loopgen/dsp.h"
#include "loopgen/error.h"

namespace loopgen {
namespace {

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// [kMelBands x bins] triangular filters, 0 Hz to Nyquist.
std::vector<std::vector<double>> MelFilterbank(int bins, int sample_rate) {
  const double nyquist = sample_rate / 2.0;
  const double bin_hz = nyquist / (bins - 1);
  std::vector<double> edges(kMelBands + 2);
  for (int i = 0; i < kMelBands + 2; ++i) {
    edges[i] = MelToHz(HzToMel(nyquist) * i / (kMelBands + 1));
  }
  std::vector<std::vector<double>> bank(kMelBands, std::vector<double>(bins, 0.0));
  for (int m = 0; m < kMelBands; ++m) {
    for (int k = 0; k < bins; ++k) {
      const double f = k * bin_hz;
      const double up = (f - edges[m]) / (edges[m + 1] - edges[m]);
      const double down = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
      bank[m][k] = std::max(0.0, std::min(up, down));
    }
  }
  return bank;
}

// [kPooledMelBands x kMelBands] triangles over the band index, rows summing
// to one.
std::vector<std::vector<double>> PoolingMatrix() {
  const double spacing = static_cast<double>(kMelBands - 1) / (kPooledMelBands - 1);
  std::vector<std::vector<double>> pool(kPooledMelBands, std::vector<double>(kMelBands));
  for (int j = 0; j < kPooledMelBands; ++j) {
    double sum = 0.0;
    for (int i = 0; i < kMelBands; ++i) {
      pool[j][i] = std::max(0.0, 1.0 - std::abs(i - j * spacing) / spacing);
      sum += pool[j][i];
    }
    for (double& w : pool[j]) w /= sum;
  }
  return pool;
}

double OnsetRate(const AudioBuffer& audio) {
  const auto bands = ExtractBandActivations(audio);
  const std::size_t frames = bands[0].size();
  std::vector<double> combined(frames, 0.0);
  for (const auto& band : bands) {
    for (std::size_t t = 0; t < frames; ++t) combined[t] = std::max(combined[t], band[t]);
  }
  int onsets = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    const double prev = t > 0 ? combined[t - 1] : 0.0;
    const double next = t + 1 < frames ? combined[t + 1] : 0.0;
    if (combined[t] >= 0.5 && combined[t] > prev && combined[t] >= next) ++onsets;
  }
  return onsets / audio.duration_seconds();
}

Eigen::MatrixXd ToMatrix(const std::vector<std::vector<double>>& set, const char* label) {
  if (set.size() < 2) {
    throw InvalidArgument(std::string("frechet distance: ") + label +
                          " needs at least two vectors, got " + std::to_string(set.size()));
  }
  const std::size_t dim = set[0].size();
  Eigen::MatrixXd m(set.size(), dim);
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set[i].size() != dim) throw InvalidArgument("frechet distance: ragged embedding set");
    for (std::size_t j = 0; j < dim; ++j) m(i, j) = set[i][j];
  }
  return m;
}

Eigen::MatrixXd Covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean) {
  const Eigen::MatrixXd centred = x.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(x.rows() - 1);
  cov.diagonal().array() += 1e-6;
  return cov;
}

Eigen::MatrixXd SqrtPsd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

std::uint64_t MixSeed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string FormatValue(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

std::vector<double> Embed(const AudioBuffer& audio) {
  if (audio.sample_rate != kCanonicalSampleRate) {
    throw InvalidArgument("embedding expects 16 kHz audio, got " +
                          std::to_string(audio.sample_rate));
  }
  if (audio.empty()) throw InvalidArgument("embedding of empty audio");
  const Spectrogram spec = Stft(audio, {kFeatureFft, kFeatureHop});
  const int bins = spec.num_bins();
  static const auto bank = MelFilterbank(kFeatureFft / 2 + 1, kCanonicalSampleRate);
  static const auto pool = PoolingMatrix();
  const double floor = std::pow(10.0, kLogFloorDb / 10.0);

  std::vector<std::vector<double>> pooled(kPooledMelBands, std::vector<double>(spec.num_frames));
  std::vector<double> mel(kMelBands);
  for (int t = 0; t < spec.num_frames; ++t) {
    for (int m = 0; m < kMelBands; ++m) {
      double e = 0.0;
      for (int k = 0; k < bins; ++k) {
        if (bank[m][k] > 0.0) e += bank[m][k] * spec.magnitude(t, k) * spec.magnitude(t, k);
      }
      mel[m] = 10.0 * std::log10(std::max(e, floor));
    }
    for (int j = 0; j < kPooledMelBands; ++j) {
      double v = 0.0;
      for (int m = 0; m < kMelBands; ++m) v += pool[j][m] * mel[m];
      pooled[j][t] = v;
    }
  }
  std::vector<double> out(2 * kPooledMelBands);
  const double n = spec.num_frames;
  for (int j = 0; j < kPooledMelBands; ++j) {
    double mean = 0.0, var = 0.0;
    for (double v : pooled[j]) mean += v;
    mean /= n;
    for (double v : pooled[j]) var += (v - mean) * (v - mean);
    out[j] = mean;
    out[kPooledMelBands + j] = std::sqrt(var / n);
  }
  const auto hpcp = ExtractHpcp(audio);
  out.insert(out.end(), hpcp.begin(), hpcp.end());
  out.push_back(OnsetRate(audio));
  return out;
}

double FrechetDistance(const std::vector<std::vector<double>>& set_a,
                       const std::vector<std::vector<double>>& set_b) {
  const Eigen::MatrixXd a = ToMatrix(set_a, "first set");
  const Eigen::MatrixXd b = ToMatrix(set_b, "second set");
  if (a.cols() != b.cols()) {
    throw InvalidArgument("frechet distance: dimensions differ (" + std::to_string(a.cols()) +
                          " vs " + std::to_string(b.cols()) + ")");
  }
  const Eigen::VectorXd mu_a = a.colwise().mean();
  const Eigen::VectorXd mu_b = b.colwise().mean();
  const Eigen::MatrixXd cov_a = Covariance(a, mu_a);
  const Eigen::MatrixXd cov_b = Covariance(b, mu_b);
  // tr (A B)^(1/2) = tr (A^(1/2) B A^(1/2))^(1/2), a symmetric PSD product.
  const Eigen::MatrixXd root_a = SqrtPsd(cov_a);
  Eigen::MatrixXd product = root_a * cov_b * root_a;
  product = 0.5 * (product + product.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(product, Eigen::EigenvaluesOnly);
  const double cross = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
  return std::max(0.0, d);
}

FrechetReport CompareAudioSets(const std::vector<AudioBuffer>& reference,
                               const std::vector<AudioBuffer>& generated) {
  std::vector<std::vector<double>> a, b;
  for (const auto& x : reference) a.push_back(Embed(x));
  for (const auto& x : generated) b.push_back(Embed(x));
  FrechetReport report;
  report.distance = FrechetDistance(a, b);
  report.size_a = a.size();
  report.size_b = b.size();
  return report;
}

AudioBuffer GriffinLimResynthesis(const AudioBuffer& audio) {
  AudioBuffer out = GriffinLim(Stft(audio, {kFeatureFft, kFeatureHop}), {60, 0}).audio;
  out.sample_rate = audio.sample_rate;
  return out;
}

ModelSynthesizer::ModelSynthesizer(WaveUNet<float> model, ModelVariant variant)
    : model_(std::move(model)), variant_(variant) {}

AudioBuffer ModelSynthesizer::Synthesize(const ConditioningSet& conditioning) {
  const Tensor<float> input = Assemble(conditioning, VariantUsesEnvelope(variant_));
  return OutputToAudio(model_.config(), model_.Forward(input));
}

std::vector<int> OracleSynthesizer::ControlledFeatures() {
  std::vector<int> out;
  for (int b = 0; b < kNumBands; ++b) {
    for (int d : {kBrightness, kBoominess, kSharpness}) out.push_back(b * kNumTimbralDescriptors + d);
  }
  std::sort(out.begin(), out.end());
  return out;
}

AudioBuffer OracleSynthesizer::Synthesize(const ConditioningSet& conditioning) {
  const auto& v = conditioning.global.timbral;
  if (v.size() != static_cast<std::size_t>(kNumTimbral)) {
    throw InvalidArgument("oracle synthesizer needs 21 timbral values");
  }
  double high = 0.0, low = 0.0;
  for (int b = 0; b < kNumBands; ++b) {
    const int base = b * kNumTimbralDescriptors;
    high += v[base + kBrightness] + v[base + kSharpness];
    low += v[base + kBoominess];
  }
  // A single top tone serves brightness and sharpness: both measures rise
  // when energy is added above everything else in the signal.
  const double a_high = 0.05 * high;
  const double a_low = 0.15 * low;
  AudioBuffer out;
  out.samples.resize(conditioning.segment_length);
  const double w = 2.0 * std::numbers::pi / kCanonicalSampleRate;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.samples[i] = 0.3 * std::sin(w * 1000.0 * i) + a_high * std::sin(w * 7800.0 * i) +
                     a_low * std::sin(w * 50.0 * i);
  }
  return out;
}

AudioBuffer RandomSynthesizer::Synthesize(const ConditioningSet& conditioning) {
  std::mt19937_64 rng(MixSeed(seed_, calls_++));
  const double cutoff = 300.0 + 7000.0 * Uniform01(rng);
  const double gain = 0.1 + 0.8 * Uniform01(rng);
  const double decay = 0.05 + 0.5 * Uniform01(rng);
  const double beat = 0.1 + 0.4 * Uniform01(rng);
  const double alpha = 1.0 - std::exp(-2.0 * std::numbers::pi * cutoff / kCanonicalSampleRate);
  AudioBuffer out;
  out.samples.resize(conditioning.segment_length);
  double state = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    state += alpha * ((2.0 * Uniform01(rng) - 1.0) - state);
    const double t = std::fmod(static_cast<double>(i) / kCanonicalSampleRate, beat);
    out.samples[i] = gain * std::exp(-t / decay) * state;
  }
  return out;
}

double CoherenceReport::Accuracy(int test, const std::vector<int>& feature_indices) const {
  int passes = 0, trials = 0;
  for (int i : feature_indices) {
    passes += features.at(i).passes.at(test);
    trials += features.at(i).trials;
  }
  return trials > 0 ? 100.0 * passes / trials : 0.0;
}

CoherenceReport CoherenceSweep(Synthesizer& synth, const std::vector<ConditioningSet>& loops) {
  CoherenceReport report;
  const auto names = TimbralFeatureNames();
  report.features.resize(kNumTimbral);
  for (int i = 0; i < kNumTimbral; ++i) report.features[i].name = names[i];
  for (const auto& loop : loops) {
    for (int i = 0; i < kNumTimbral; ++i) {
      std::array<double, kCoherenceLevels.size()> measured{};
      for (std::size_t l = 0; l < kCoherenceLevels.size(); ++l) {
        ConditioningSet probe = loop;
        probe.global.timbral.at(i) = kCoherenceLevels[l];
        measured[l] = ExtractTimbral(synth.Synthesize(probe), nullptr)[i];
        ++report.total_outputs;
      }
      auto& f = report.features[i];
      f.passes[0] += measured[2] > measured[0];
      f.passes[1] += measured[2] > measured[1];
      f.passes[2] += measured[1] > measured[0];
      ++f.trials;
    }
    ++report.loops;
  }
  std::vector<int> all(kNumTimbral);
  for (int i = 0; i < kNumTimbral; ++i) all[i] = i;
  for (int t = 0; t < 3; ++t) report.accuracy[t] = report.Accuracy(t, all);
  return report;
}

std::string RenderText(const ReportTable& table) {
  std::size_t name_width = 5;
  for (const auto& row : table.rows) name_width = std::max(name_width, row.model.size());
  std::vector<std::size_t> widths;
  for (const auto& m : table.metrics) widths.push_back(std::max<std::size_t>(m.size(), 10));

  std::ostringstream out;
  out << table.title << "\n";
  auto pad = [&out](const std::string& s, std::size_t w, bool right) {
    const std::string fill(w > s.size() ? w - s.size() : 0, ' ');
    out << (right ? fill + s : s + fill);
  };
  pad("model", name_width, false);
  for (std::size_t c = 0; c < table.metrics.size(); ++c) {
    out << "  ";
    pad(table.metrics[c], widths[c], true);
  }
  out << "\n";
  for (const auto& row : table.rows) {
    pad(row.model, name_width, false);
    for (std::size_t c = 0; c < table.metrics.size(); ++c) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.3f", c < row.values.size() ? row.values[c] : NAN);
      out << "  ";
      pad(buf, widths[c], true);
    }
    out << "\n";
  }
  return out.str();
}

std::string RenderCsv(const ReportTable& table) {
  auto check = [](const std::string& s) {
    if (s.find_first_of(",\n\r") != std::string::npos) {
      throw InvalidArgument("report cell '" + s + "' contains a comma or newline");
    }
  };
  std::string out = "# " + table.title + "\nmodel";
  for (const auto& m : table.metrics) {
    check(m);
    out += "," + m;
  }
  out += "\n";
  for (const auto& row : table.rows) {
    check(row.model);
    if (row.values.size() != table.metrics.size()) {
      throw InvalidArgument("report row '" + row.model + "' has the wrong number of values");
    }
    out += row.model;
    for (double v : row.values) out += "," + FormatValue(v);
    out += "\n";
  }
  return out;
}

ReportTable ParseCsv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  ReportTable table;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = s.find(',', start);
      cells.push_back(s.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return cells;
  };
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
    throw DataError("report CSV must start with a '# title' line");
  }
  table.title = line.substr(2);
  if (!std::getline(in, line)) throw DataError("report CSV has no header");
  auto header = split(line);
  if (header.empty() || header[0] != "model") throw DataError("report CSV header must start with 'model'");
  table.metrics.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != header.size()) throw DataError("report CSV row has wrong width: " + line);
    ReportTable::Row row{cells[0], {}};
    for (std::size_t c = 1; c < cells.size(); ++c) {
      double v = 0.0;
      const auto& s = cells[c];
      const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || end != s.data() + s.size()) {
        throw DataError("report CSV value '" + s + "' is not a number");
      }
      row.values.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

ReportTable CoherenceTable(const std::vector<std::pair<std::string, CoherenceReport>>& reports) {
  ReportTable table{"Timbral coherence (% of ordered outcomes, ties fail)", {"E1", "E2", "E3", "outputs"}, {}};
  for (const auto& [name, r] : reports) {
    table.rows.push_back({name, {r.accuracy[0], r.accuracy[1], r.accuracy[2],
                                 static_cast<double>(r.total_outputs)}});
  }
  return table;
}

ReportTable FrechetTable(const std::vector<std::pair<std::string, FrechetReport>>& reports) {
  ReportTable table{std::string("Frechet distance to the test set, embedding ") + kEmbeddingSpecId,
                    {"FD-handcrafted", "n_reference", "n_generated"}, {}};
  for (const auto& [name, r] : reports) {
    table.rows.push_back({name, {r.distance, static_cast<double>(r.size_a),
                                 static_cast<double>(r.size_b)}});
  }
  return table;
}

}  // namespace loopgen
