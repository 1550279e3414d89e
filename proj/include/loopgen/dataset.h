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

// Synthetic drum-loop corpus and the preparation pipeline that turns loops
// into one-bar training segments:
//
//   tempo-confidence filter -> time-stretch to 130 BPM -> resample to 16 kHz
//   -> cut 29538-sample bars -> split by source loop -> extract conditioning.

#ifndef LOOPGEN_DATASET_H_
#define LOOPGEN_DATASET_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loopgen/audio.h"
#include "loopgen/features.h"

namespace loopgen {

inline constexpr double kTargetBpm = 130.0;
inline constexpr double kMinBpm = 120.0;
inline constexpr double kMaxBpm = 140.0;
inline constexpr double kConfidenceThreshold = 0.99;
inline constexpr int kStepsPerBar = 16;

enum Instrument { kKick = 0, kSnare = 1, kHihat = 2 };
inline constexpr int kNumInstruments = 3;

struct LoopSpec {
  double bpm = kTargetBpm;
  int bars = 1;
  // Per instrument, one entry per 16th step: 0 for no hit, else velocity in
  // (0, 1].
  std::array<std::vector<double>, kNumInstruments> pattern;
  // (pitch class with C = 0, amplitude) pairs, played as sustained octave-4
  // sines.
  std::vector<std::pair<int, double>> tonal;
  std::uint64_t seed = 0;
  int sample_rate = kCanonicalSampleRate;

  // Throws InvalidArgument when outside the documented ranges.
  void Validate() const;
  std::size_t LengthSamples() const;
  // Sample index of a 16th step.
  std::size_t StepPosition(int step) const;
};

// Renders a loop: kick = decaying 120 -> 50 Hz sweep (80 ms), snare =
// 180-400 Hz noise plus a 200 Hz tone (60 ms), hi-hat = high-passed noise
// (25 ms). Peak-normalized to 0.9; an empty spec renders silence.
AudioBuffer SynthLoop(const LoopSpec& spec);

// r = length / bar_length; 1 - 2 |r - round(r)| clamped to [0, 1].
double TempoConfidence(std::size_t loop_length, double bpm, int sample_rate);

struct CorpusOptions {
  int num_loops = 64;
  std::uint64_t seed = 7;
  int sample_rate = 44100;
  // Every n-th loop gets a BPM label 3% off its true tempo (0 disables), so
  // that the confidence filter has something to reject.
  int mislabel_every = 8;
};

struct CorpusLoop {
  std::string id;
  LoopSpec spec;
  double annotated_bpm = 0.0;
  AudioBuffer audio;
};

std::vector<CorpusLoop> GenerateCorpus(const CorpusOptions& options);

// Writes <dir>/loops/<id>.wav, <dir>/loops.csv ("path,bpm" lines, paths
// relative to dir) and <dir>/patterns.json.
void WriteCorpus(const std::filesystem::path& dir, const std::vector<CorpusLoop>& loops);

struct InputLoop {
  std::string id;
  AudioBuffer audio;
  double bpm = 0.0;
  // Known drum pattern, when the loop is synthetic.
  std::optional<LoopSpec> spec;
};

// Reads a "path,bpm" manifest (paths relative to the manifest) and, when a
// patterns.json sidecar exists next to it, the known patterns.
std::vector<InputLoop> ReadLoopManifest(const std::filesystem::path& manifest);

enum class Split { kTrain, kTest };
const char* SplitName(Split split);

struct SegmentRecord {
  std::string id;
  std::string source;
  int bar = 0;
  Split split = Split::kTrain;
  AudioBuffer audio;
  ConditioningSet conditioning;
  // Hit steps (0..15) per instrument within this bar, when known.
  std::optional<std::array<std::vector<int>, kNumInstruments>> hits;
};

struct PrepareOptions {
  double target_bpm = kTargetBpm;
  double confidence_threshold = kConfidenceThreshold;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct SkippedLoop {
  std::string id;
  std::string reason;
};

struct PreparedDataset {
  std::vector<SegmentRecord> segments;  // sorted by id
  std::vector<SkippedLoop> skipped;
  NormStats stats;  // fitted on the training split
};

// A stretched loop keeps a final bar that falls short of 29538 samples by at
// most this many samples (tempo rounding), zero-padding it.
inline constexpr std::size_t kBarTolerance = 32;

PreparedDataset Prepare(const std::vector<InputLoop>& loops, const PrepareOptions& options);

// Source ids assigned to the test split: max(1, round(fraction * n)) of the
// n sources when n >= 2, chosen by a seeded shuffle.
std::vector<std::string> TestSources(std::vector<std::string> sources, double fraction,
                                     std::uint64_t seed);

// <dir>/segments/<id>.wav, <dir>/features/<id>.lfc (37 channels),
// <dir>/norm_stats.txt, <dir>/manifest.json.
void WriteDataset(const std::filesystem::path& dir, const PreparedDataset& dataset);

struct ManifestEntry {
  std::string id;
  std::string source;
  int bar = 0;
  Split split = Split::kTrain;
  std::filesystem::path wav;
  std::filesystem::path features;
  std::optional<std::array<std::vector<int>, kNumInstruments>> hits;
};

// Entries with absolute paths, sorted by id.
std::vector<ManifestEntry> ReadDatasetManifest(const std::filesystem::path& dir);

}  // namespace loopgen

#endif  // LOOPGEN_DATASET_H_
