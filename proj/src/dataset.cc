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

#include "loopgen/dataset.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "loopgen/dsp.h"
#include "loopgen/error.h"

namespace loopgen {
namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kInstrumentNames[kNumInstruments] = {"kick", "snare", "hihat"};
constexpr double kVoiceGain[kNumInstruments] = {1.0, 0.8, 0.5};

double Uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t UniformIndex(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(Uniform01(rng) * n));
}

std::uint64_t Mix(std::uint64_t a, std::uint64_t b) {
  // SplitMix64 finalizer over a combined word.
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string FormatDouble(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::vector<double> Noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> out(n);
  for (double& v : out) v = 2.0 * Uniform01(rng) - 1.0;
  return out;
}

void NormalizePeak(std::vector<double>& v) {
  double peak = 0.0;
  for (double s : v) peak = std::max(peak, std::abs(s));
  if (peak > 0.0) {
    for (double& s : v) s /= peak;
  }
}

// One drum voice at unit peak.
std::vector<double> Voice(Instrument instrument, int rate, std::uint64_t seed) {
  const auto at = [rate](double seconds) {
    return static_cast<std::size_t>(std::lround(seconds * rate));
  };
  std::vector<double> out;
  switch (instrument) {
    case kKick: {
      out.resize(at(0.5));
      double phase = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double t = static_cast<double>(i) / rate;
        const double hz = 50.0 + 70.0 * std::exp(-t / 0.03);
        out[i] = std::exp(-t / 0.08) * std::sin(phase);
        phase += 2.0 * std::numbers::pi * hz / rate;
      }
      break;
    }
    case kSnare: {
      AudioBuffer noise{Noise(at(0.3), seed), rate};
      noise = ApplyIir(noise, DesignIir(IirKind::kHighPass1, 180.0, rate));
      noise = ApplyIir(noise, DesignIir(IirKind::kLowPass1, 400.0, rate));
      NormalizePeak(noise.samples);
      out.resize(noise.size());
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double t = static_cast<double>(i) / rate;
        const double tone = 0.5 * std::sin(2.0 * std::numbers::pi * 200.0 * t);
        out[i] = std::exp(-t / 0.06) * (noise.samples[i] + tone);
      }
      break;
    }
    case kHihat: {
      AudioBuffer noise{Noise(at(0.15), seed), rate};
      noise = ApplyIir(noise, DesignIir(IirKind::kHighPass1, 7000.0, rate));
      out.resize(noise.size());
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(-static_cast<double>(i) / rate / 0.025) * noise.samples[i];
      }
      break;
    }
  }
  NormalizePeak(out);
  return out;
}

}  // namespace

void LoopSpec::Validate() const {
  if (!(bpm >= kMinBpm && bpm <= kMaxBpm)) {
    throw InvalidArgument("loop bpm " + FormatDouble(bpm) + " outside [120, 140]");
  }
  if (bars < 1) throw InvalidArgument("loop needs at least one bar");
  if (sample_rate < 8000) throw InvalidArgument("sample rate too low");
  for (const auto& track : pattern) {
    if (!track.empty() && track.size() != static_cast<std::size_t>(bars * kStepsPerBar)) {
      throw InvalidArgument("pattern needs 16 steps per bar");
    }
    for (double v : track) {
      if (v < 0.0 || v > 1.0) throw InvalidArgument("velocity outside (0, 1]");
    }
  }
  for (const auto& [pc, amp] : tonal) {
    if (pc < 0 || pc >= kNumPitchClasses || amp <= 0.0) {
      throw InvalidArgument("tonal layer needs pitch classes 0..11 with positive amplitude");
    }
  }
}

std::size_t LoopSpec::LengthSamples() const {
  return static_cast<std::size_t>(std::llround(bars * 4 * 60.0 / bpm * sample_rate));
}

std::size_t LoopSpec::StepPosition(int step) const {
  return static_cast<std::size_t>(std::llround(step * 15.0 / bpm * sample_rate));
}

AudioBuffer SynthLoop(const LoopSpec& spec) {
  spec.Validate();
  AudioBuffer out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(spec.LengthSamples(), 0.0);
  for (int inst = 0; inst < kNumInstruments; ++inst) {
    const auto& track = spec.pattern[inst];
    for (std::size_t step = 0; step < track.size(); ++step) {
      if (track[step] <= 0.0) continue;
      const auto voice = Voice(static_cast<Instrument>(inst), spec.sample_rate,
                               Mix(spec.seed, inst * 4096 + step));
      const std::size_t start = spec.StepPosition(static_cast<int>(step));
      const double gain = track[step] * kVoiceGain[inst];
      for (std::size_t i = 0; i < voice.size() && start + i < out.size(); ++i) {
        out.samples[start + i] += gain * voice[i];
      }
    }
  }
  for (const auto& [pc, amp] : spec.tonal) {
    const double hz = 440.0 * std::pow(2.0, (pc - 9) / 12.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out.samples[i] += amp * std::sin(2.0 * std::numbers::pi * hz * i / spec.sample_rate);
    }
  }
  return PeakNormalize(std::move(out), 0.9);
}

double TempoConfidence(std::size_t loop_length, double bpm, int sample_rate) {
  if (!(bpm > 0.0) || sample_rate <= 0) {
    throw InvalidArgument("tempo confidence needs positive bpm and sample rate");
  }
  const double bar = 4.0 * 60.0 / bpm * sample_rate;
  const double r = static_cast<double>(loop_length) / bar;
  return std::clamp(1.0 - 2.0 * std::abs(r - std::round(r)), 0.0, 1.0);
}

std::vector<CorpusLoop> GenerateCorpus(const CorpusOptions& options) {
  if (options.num_loops < 0) throw InvalidArgument("negative loop count");
  std::mt19937_64 rng(options.seed);
  std::vector<CorpusLoop> loops;
  for (int n = 0; n < options.num_loops; ++n) {
    LoopSpec spec;
    spec.sample_rate = options.sample_rate;
    spec.bars = 1 + static_cast<int>(UniformIndex(rng, 4));
    spec.bpm = std::round((kMinBpm + (kMaxBpm - kMinBpm) * Uniform01(rng)) * 100.0) / 100.0;
    spec.seed = rng();

    // One-bar pattern, repeated for every bar.
    std::array<std::vector<double>, kNumInstruments> bar;
    for (auto& track : bar) track.assign(kStepsPerBar, 0.0);
    auto velocity = [&] { return 0.7 + 0.3 * Uniform01(rng); };
    for (int s = 0; s < kStepsPerBar; s += 4) {
      if (s == 0 || Uniform01(rng) < 0.9) bar[kKick][s] = velocity();
    }
    for (int s : {2, 3, 6, 10, 11, 14}) {
      if (Uniform01(rng) < 0.15) bar[kKick][s] = velocity();
    }
    for (int s : {4, 12}) {
      if (Uniform01(rng) < 0.9) bar[kSnare][s] = velocity();
    }
    for (int s : {7, 9, 15}) {
      if (Uniform01(rng) < 0.08) bar[kSnare][s] = velocity();
    }
    const bool sixteenths = Uniform01(rng) < 0.3;
    for (int s = 0; s < kStepsPerBar; ++s) {
      const double p = s % 2 == 0 ? 0.85 : (sixteenths ? 0.6 : 0.0);
      if (Uniform01(rng) < p) bar[kHihat][s] = velocity();
    }
    for (int inst = 0; inst < kNumInstruments; ++inst) {
      for (int b = 0; b < spec.bars; ++b) {
        spec.pattern[inst].insert(spec.pattern[inst].end(), bar[inst].begin(), bar[inst].end());
      }
    }
    if (Uniform01(rng) < 0.6) {
      const int voices = 1 + static_cast<int>(UniformIndex(rng, 3));
      std::set<int> classes;
      while (static_cast<int>(classes.size()) < voices) {
        classes.insert(static_cast<int>(UniformIndex(rng, kNumPitchClasses)));
      }
      for (int pc : classes) spec.tonal.emplace_back(pc, 0.05 + 0.1 * Uniform01(rng));
    }

    CorpusLoop loop;
    char id[32];
    std::snprintf(id, sizeof(id), "loop%03d", n);
    loop.id = id;
    loop.spec = spec;
    loop.annotated_bpm = spec.bpm;
    if (options.mislabel_every > 0 && n % options.mislabel_every == options.mislabel_every - 1) {
      const double off = spec.bpm * 1.03;
      loop.annotated_bpm = std::round((off <= kMaxBpm ? off : spec.bpm / 1.03) * 100.0) / 100.0;
    }
    loop.audio = SynthLoop(spec);
    loops.push_back(std::move(loop));
  }
  return loops;
}

namespace {

Json SpecToJson(const LoopSpec& spec) {
  Json j;
  j["bpm"] = spec.bpm;
  j["bars"] = spec.bars;
  j["seed"] = spec.seed;
  j["sample_rate"] = spec.sample_rate;
  for (int inst = 0; inst < kNumInstruments; ++inst) {
    j[kInstrumentNames[inst]] = spec.pattern[inst];
  }
  Json tonal = Json::array();
  for (const auto& [pc, amp] : spec.tonal) tonal.push_back({pc, amp});
  j["tonal"] = tonal;
  return j;
}

LoopSpec SpecFromJson(const Json& j) {
  LoopSpec spec;
  spec.bpm = j.at("bpm").get<double>();
  spec.bars = j.at("bars").get<int>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.sample_rate = j.at("sample_rate").get<int>();
  for (int inst = 0; inst < kNumInstruments; ++inst) {
    spec.pattern[inst] = j.at(kInstrumentNames[inst]).get<std::vector<double>>();
  }
  for (const auto& t : j.at("tonal")) {
    spec.tonal.emplace_back(t.at(0).get<int>(), t.at(1).get<double>());
  }
  spec.Validate();
  return spec;
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

Json ReadJson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

Json HitsToJson(const std::array<std::vector<int>, kNumInstruments>& hits) {
  Json j;
  for (int inst = 0; inst < kNumInstruments; ++inst) j[kInstrumentNames[inst]] = hits[inst];
  return j;
}

}  // namespace

void WriteCorpus(const std::filesystem::path& dir, const std::vector<CorpusLoop>& loops) {
  std::filesystem::create_directories(dir / "loops");
  std::string csv;
  Json patterns = Json::object();
  for (const auto& loop : loops) {
    const std::string rel = "loops/" + loop.id + ".wav";
    WriteWav(dir / rel, loop.audio);
    csv += rel + "," + FormatDouble(loop.annotated_bpm) + "\n";
    patterns[loop.id] = SpecToJson(loop.spec);
  }
  WriteText(dir / "loops.csv", csv);
  WriteText(dir / "patterns.json", patterns.dump(1) + "\n");
}

std::vector<InputLoop> ReadLoopManifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot read loop manifest " + manifest.string());
  const auto base = manifest.parent_path();
  Json patterns;
  if (std::filesystem::exists(base / "patterns.json")) patterns = ReadJson(base / "patterns.json");

  std::vector<InputLoop> loops;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.rfind(',');
    double bpm = 0.0;
    if (comma == std::string::npos ||
        std::from_chars(line.data() + comma + 1, line.data() + line.size(), bpm).ec != std::errc()) {
      throw DataError(manifest.string() + ":" + std::to_string(line_no) +
                      ": expected 'path,bpm', got '" + line + "'");
    }
    const std::filesystem::path path = base / line.substr(0, comma);
    InputLoop loop;
    loop.id = path.stem().string();
    loop.audio = ReadWav(path);
    loop.bpm = bpm;
    if (patterns.is_object() && patterns.contains(loop.id)) {
      loop.spec = SpecFromJson(patterns.at(loop.id));
    }
    loops.push_back(std::move(loop));
  }
  return loops;
}

const char* SplitName(Split split) { return split == Split::kTrain ? "train" : "test"; }

std::vector<std::string> TestSources(std::vector<std::string> sources, double fraction,
                                     std::uint64_t seed) {
  std::sort(sources.begin(), sources.end());
  sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
  const std::size_t n = sources.size();
  if (n < 2) return {};
  const std::size_t count = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * n)), 1, n - 1);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(sources[i], sources[UniformIndex(rng, i + 1)]);
  std::vector<std::string> test(sources.begin(), sources.begin() + count);
  std::sort(test.begin(), test.end());
  return test;
}

PreparedDataset Prepare(const std::vector<InputLoop>& input, const PrepareOptions& options) {
  std::vector<const InputLoop*> loops;
  for (const auto& l : input) loops.push_back(&l);
  std::sort(loops.begin(), loops.end(),
            [](const InputLoop* a, const InputLoop* b) { return a->id < b->id; });

  PreparedDataset out;
  for (const InputLoop* loop : loops) {
    const AudioBuffer& audio = loop->audio;
    if (audio.empty()) {
      out.skipped.push_back({loop->id, "empty audio"});
      continue;
    }
    const double confidence = TempoConfidence(audio.size(), loop->bpm, audio.sample_rate);
    // The tolerance keeps loops sitting exactly on the threshold.
    if (confidence + 1e-9 < options.confidence_threshold) {
      out.skipped.push_back({loop->id, "tempo confidence " + FormatDouble(confidence) +
                                           " below " + FormatDouble(options.confidence_threshold)});
      continue;
    }
    const double ratio = options.target_bpm / loop->bpm;
    if (ratio < 0.5 || ratio > 2.0) {
      out.skipped.push_back({loop->id, "bpm " + FormatDouble(loop->bpm) + " too far from target"});
      continue;
    }
    AudioBuffer stretched = std::abs(ratio - 1.0) < 1e-12 ? audio : TimeStretch(audio, ratio);
    if (stretched.sample_rate != kCanonicalSampleRate) {
      stretched = Resample(stretched, kCanonicalSampleRate);
    }
    const std::size_t bars = (stretched.size() + kBarTolerance) / kSegmentLength;
    if (bars == 0) {
      out.skipped.push_back({loop->id, "shorter than one bar after stretching"});
      continue;
    }
    for (std::size_t k = 0; k < bars; ++k) {
      SegmentRecord seg;
      seg.id = loop->id + "_b" + std::to_string(k);
      seg.source = loop->id;
      seg.bar = static_cast<int>(k);
      seg.audio.samples.assign(kSegmentLength, 0.0);
      const std::size_t begin = k * kSegmentLength;
      const std::size_t end = std::min(stretched.size(), begin + kSegmentLength);
      std::copy(stretched.samples.begin() + begin, stretched.samples.begin() + end,
                seg.audio.samples.begin());
      if (loop->spec && static_cast<int>(k) < loop->spec->bars) {
        std::array<std::vector<int>, kNumInstruments> hits;
        for (int inst = 0; inst < kNumInstruments; ++inst) {
          const auto& track = loop->spec->pattern[inst];
          for (int s = 0; s < kStepsPerBar; ++s) {
            const std::size_t idx = k * kStepsPerBar + s;
            if (idx < track.size() && track[idx] > 0.0) hits[inst].push_back(s);
          }
        }
        seg.hits = hits;
      }
      out.segments.push_back(std::move(seg));
    }
  }

  std::vector<std::string> sources;
  for (const auto& s : out.segments) sources.push_back(s.source);
  const auto test = TestSources(sources, options.test_fraction, options.seed);
  const std::set<std::string> test_set(test.begin(), test.end());

  std::vector<std::vector<double>> train_raw;
  for (auto& seg : out.segments) {
    seg.split = test_set.count(seg.source) ? Split::kTest : Split::kTrain;
    seg.conditioning = ExtractConditioning(seg.audio, nullptr);
    if (seg.split == Split::kTrain) train_raw.push_back(seg.conditioning.global.timbral);
  }
  if (train_raw.empty()) throw DataError("prepare: no training segments survived");
  out.stats = NormStats::Fit(train_raw);
  for (auto& seg : out.segments) {
    seg.conditioning.global.timbral = out.stats.Apply(seg.conditioning.global.timbral);
  }
  std::sort(out.segments.begin(), out.segments.end(),
            [](const SegmentRecord& a, const SegmentRecord& b) { return a.id < b.id; });
  return out;
}

void WriteDataset(const std::filesystem::path& dir, const PreparedDataset& dataset) {
  std::filesystem::create_directories(dir / "segments");
  std::filesystem::create_directories(dir / "features");
  Json segments = Json::array();
  for (const auto& seg : dataset.segments) {
    const std::string wav = "segments/" + seg.id + ".wav";
    const std::string lfc = "features/" + seg.id + ".lfc";
    WriteWav(dir / wav, seg.audio);
    WriteConditioningFile(dir / lfc, Assemble(seg.conditioning, true));
    Json j;
    j["id"] = seg.id;
    j["source"] = seg.source;
    j["bar"] = seg.bar;
    j["split"] = SplitName(seg.split);
    j["wav"] = wav;
    j["features"] = lfc;
    if (seg.hits) j["hits"] = HitsToJson(*seg.hits);
    segments.push_back(std::move(j));
  }
  Json skipped = Json::array();
  for (const auto& s : dataset.skipped) skipped.push_back({{"id", s.id}, {"reason", s.reason}});
  Json manifest;
  manifest["format"] = "loopgen-segments-1";
  manifest["sample_rate"] = kCanonicalSampleRate;
  manifest["segment_length"] = kSegmentLength;
  manifest["conditioning_channels"] = ConditioningChannels(true);
  manifest["segments"] = std::move(segments);
  manifest["skipped"] = std::move(skipped);
  dataset.stats.Save(dir / "norm_stats.txt");
  WriteText(dir / "manifest.json", manifest.dump(1) + "\n");
}

std::vector<ManifestEntry> ReadDatasetManifest(const std::filesystem::path& dir) {
  const Json manifest = ReadJson(dir / "manifest.json");
  std::vector<ManifestEntry> out;
  try {
    if (manifest.at("format") != "loopgen-segments-1") {
      throw DataError(dir.string() + "/manifest.json has an unknown format");
    }
    for (const auto& j : manifest.at("segments")) {
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.source = j.at("source").get<std::string>();
      e.bar = j.at("bar").get<int>();
      const auto split = j.at("split").get<std::string>();
      if (split != "train" && split != "test") throw DataError("bad split '" + split + "'");
      e.split = split == "train" ? Split::kTrain : Split::kTest;
      e.wav = dir / j.at("wav").get<std::string>();
      e.features = dir / j.at("features").get<std::string>();
      if (j.contains("hits")) {
        std::array<std::vector<int>, kNumInstruments> hits;
        for (int inst = 0; inst < kNumInstruments; ++inst) {
          hits[inst] = j.at("hits").at(kInstrumentNames[inst]).get<std::vector<int>>();
        }
        e.hits = hits;
      }
      out.push_back(std::move(e));
    }
  } catch (const Json::exception& e) {
    throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  std::sort(out.begin(), out.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
  return out;
}

}  // namespace loopgen
