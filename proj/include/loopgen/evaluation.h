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

// Output quality and controllability metrics.
//
// Quality: a Frechet distance between Gaussians fitted to a fixed handcrafted
// audio embedding ("FD-handcrafted"). Controllability: the timbral coherence
// sweep, which overwrites one normalised timbral input at three levels and
// checks that the re-extracted feature follows the requested order.

#ifndef LOOPGEN_EVALUATION_H_
#define LOOPGEN_EVALUATION_H_

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "loopgen/audio.h"
#include "loopgen/features.h"
#include "loopgen/model.h"

namespace loopgen {

// 20 log-mel means, 20 log-mel standard deviations, 12 HPCP, onset rate.
inline constexpr int kEmbeddingDim = 53;
inline constexpr int kMelBands = 64;
inline constexpr int kPooledMelBands = 20;
inline constexpr double kLogFloorDb = -80.0;
inline constexpr const char* kEmbeddingSpecId = "FD-handcrafted/v1";

// Deterministic embedding of 16 kHz audio. Silence maps to the log floor.
std::vector<double> Embed(const AudioBuffer& audio);

// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with 1e-6 I added to
// both covariances. Throws InvalidArgument for sets with fewer than two
// vectors or mismatched dimensions.
double FrechetDistance(const std::vector<std::vector<double>>& set_a,
                       const std::vector<std::vector<double>>& set_b);

struct FrechetReport {
  double distance = 0.0;
  std::string embedding_spec = kEmbeddingSpecId;
  std::size_t size_a = 0;
  std::size_t size_b = 0;
};

FrechetReport CompareAudioSets(const std::vector<AudioBuffer>& reference,
                               const std::vector<AudioBuffer>& generated);

// Magnitude-only resynthesis (1024/512 STFT, 60 Griffin-Lim iterations), the
// reference point for what phase loss alone costs.
AudioBuffer GriffinLimResynthesis(const AudioBuffer& audio);

// Anything that turns conditioning into a segment.
class Synthesizer {
 public:
  virtual ~Synthesizer() = default;
  virtual AudioBuffer Synthesize(const ConditioningSet& conditioning) = 0;
};

// A trained generator.
class ModelSynthesizer : public Synthesizer {
 public:
  ModelSynthesizer(WaveUNet<float> model, ModelVariant variant);
  AudioBuffer Synthesize(const ConditioningSet& conditioning) override;

 private:
  WaveUNet<float> model_;
  ModelVariant variant_;
};

// Builds its output so that the brightness, sharpness and boominess of every
// band rise with the requested value: a fixed 1 kHz bed, a 7.8 kHz tone
// scaled by the brightness and sharpness inputs and a 50 Hz tone scaled by
// the boominess inputs. Used to validate the sweep itself.
class OracleSynthesizer : public Synthesizer {
 public:
  AudioBuffer Synthesize(const ConditioningSet& conditioning) override;
  // Timbral feature indices (0..20) this synthesizer realises.
  static std::vector<int> ControlledFeatures();
};

// Ignores its input: every call returns fresh coloured noise.
class RandomSynthesizer : public Synthesizer {
 public:
  explicit RandomSynthesizer(std::uint64_t seed) : seed_(seed) {}
  AudioBuffer Synthesize(const ConditioningSet& conditioning) override;

 private:
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
};

inline constexpr std::array<double, 3> kCoherenceLevels = {0.2, 0.5, 0.8};

struct FeatureCoherence {
  std::string name;
  // Passing loops for E1 (high > low), E2 (high > mid), E3 (mid > low).
  std::array<int, 3> passes{};
  int trials = 0;
};

struct CoherenceReport {
  // Percentages for E1, E2, E3.
  std::array<double, 3> accuracy{};
  std::vector<FeatureCoherence> features;  // 21 entries
  int loops = 0;
  // Syntheses run: loops x 21 x 3.
  int total_outputs = 0;

  // Accuracy of one test over a subset of features.
  double Accuracy(int test, const std::vector<int>& feature_indices) const;
};

// For every loop, feature and level: copy the conditioning, set the feature
// to the level, synthesise and re-extract the raw timbral features. Strict
// inequalities; ties fail.
CoherenceReport CoherenceSweep(Synthesizer& synth, const std::vector<ConditioningSet>& loops);

// Model-by-metric table rendered as aligned text or CSV.
struct ReportTable {
  std::string title;
  std::vector<std::string> metrics;
  struct Row {
    std::string model;
    std::vector<double> values;
  };
  std::vector<Row> rows;
};

std::string RenderText(const ReportTable& table);
std::string RenderCsv(const ReportTable& table);
// Inverse of RenderCsv. Throws DataError on malformed input.
ReportTable ParseCsv(const std::string& csv);

ReportTable CoherenceTable(const std::vector<std::pair<std::string, CoherenceReport>>& reports);
ReportTable FrechetTable(const std::vector<std::pair<std::string, FrechetReport>>& reports);

}  // namespace loopgen

#endif  // LOOPGEN_EVALUATION_H_
