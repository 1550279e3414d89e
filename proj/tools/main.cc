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

// loopgen: generate a corpus, prepare segments, train, synthesise, evaluate.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "loopgen/dataset.h"
#include "loopgen/error.h"
#include "loopgen/evaluation.h"
#include "loopgen/training.h"
#include "run_config.h"

namespace loopgen::cli {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_file;
  std::map<std::string, std::string> flags;
};

// Adds --config and one --<key> flag per config key to a subcommand.
void AddConfigOptions(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_file, "key=value config file");
  for (const auto& key : RunConfig::Keys()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    cmd->add_option_function<std::string>(
        flag, [&common, key](const std::string& v) { common.flags[key] = v; },
        "override config '" + key + "'");
  }
}

RunConfig Resolve(const Common& common) {
  RunConfig config;
  if (!common.config_file.empty()) config.Apply(ReadConfigFile(common.config_file));
  config.Apply(common.flags);
  config.Finalize(fs::current_path());
  return config;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

int GenCorpus(const RunConfig& config) {
  DirectoryLock lock(config.corpus_dir);
  CorpusOptions options;
  options.num_loops = config.num_loops;
  options.seed = config.seed;
  options.mislabel_every = config.mislabel_every;
  const auto loops = GenerateCorpus(options);
  WriteCorpus(config.corpus_dir, loops);
  std::printf("wrote %zu loops to %s\n", loops.size(), config.corpus_dir.c_str());
  return 0;
}

int PrepareCmd(const RunConfig& config) {
  const auto loops = ReadLoopManifest(config.corpus_dir / "loops.csv");
  DirectoryLock lock(config.data_dir);
  PrepareOptions options;
  options.test_fraction = config.test_fraction;
  options.seed = config.seed;
  const auto dataset = Prepare(loops, options);
  WriteDataset(config.data_dir, dataset);
  std::size_t test = 0;
  for (const auto& s : dataset.segments) test += s.split == Split::kTest;
  std::printf("%zu segments (%zu train, %zu test), %zu loops skipped\n", dataset.segments.size(),
              dataset.segments.size() - test, test, dataset.skipped.size());
  for (const auto& s : dataset.skipped) std::printf("  skipped %s: %s\n", s.id.c_str(), s.reason.c_str());
  return 0;
}

std::string StepName(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%06lld.lfw", static_cast<long long>(step));
  return buf;
}

int Train(const RunConfig& config, const std::string& resume) {
  const auto examples = LoadExamples(config.data_dir, config.variant, Split::kTrain);
  if (examples.empty()) throw DataError("no training segments in " + config.data_dir.string());
  DirectoryLock lock(config.checkpoint_dir);
  TrainOptions options{config.learning_rate, config.batch};

  std::unique_ptr<Trainer> trainer;
  if (!resume.empty()) {
    const Checkpoint ckpt = LoadCheckpoint(resume);
    if (ckpt.variant != config.variant) {
      throw InvalidArgument("checkpoint is " + std::string(VariantName(ckpt.variant)) +
                            ", config asks for " + std::string(VariantName(config.variant)));
    }
    trainer = std::make_unique<Trainer>(ckpt, options);
  } else {
    trainer = std::make_unique<Trainer>(config.variant, ModelConfig::ForVariant(config.variant),
                                        config.seed, options);
  }

  const fs::path log_path = config.checkpoint_dir / "loss_log.csv";
  std::ofstream log(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw DataError("cannot write " + log_path.string());
  const ModelConfig& mc = trainer->model().config();
  {
    std::ostringstream manifest;
    manifest << "variant=" << VariantName(config.variant) << "\n"
             << "seed=" << config.seed << "\n"
             << "conditioning_channels=" << mc.conditioning_channels << "\n"
             << "parameters=" << trainer->model().NumParameters() << "\n"
             << "config_hash=" << std::hex << config.TrainingHash() << std::dec << "\n"
             << "model=" << mc.ToString() << "\n"
             << "lr=" << config.learning_rate << "\nbatch=" << config.batch
             << "\nsteps=" << config.steps << "\n";
    WriteText(config.checkpoint_dir / "model_manifest.txt", manifest.str());
  }
  std::fprintf(stderr, "training %s: %zu parameters, %zu segments, from step %lld to %lld\n",
               std::string(VariantName(config.variant)).c_str(), trainer->model().NumParameters(),
               examples.size(), static_cast<long long>(trainer->step()),
               static_cast<long long>(config.steps));

  const auto start = std::chrono::steady_clock::now();
  bool header = resume.empty();
  while (trainer->step() < config.steps) {
    const StepLoss loss = trainer->Step(examples);
    if (header) {
      log << LossLogHeader(loss);
      header = false;
    }
    log << LossLogRow(trainer->step(), loss);
    log.flush();
    const bool last = trainer->step() == config.steps;
    if (last || (config.checkpoint_every > 0 && trainer->step() % config.checkpoint_every == 0)) {
      SaveCheckpoint(config.checkpoint_dir / StepName(trainer->step()), trainer->ToCheckpoint());
      std::fprintf(stderr, "step %lld loss %.6f (%.1f s)\n",
                   static_cast<long long>(trainer->step()), loss.total, Seconds(start));
    }
  }
  SaveCheckpoint(config.checkpoint_dir / "final.lfw", trainer->ToCheckpoint());
  return 0;
}

// 37-channel conditioning from a feature file, a reference WAV or pattern
// text.
Tensor<float> ConditioningFrom(const std::string& features, const std::string& wav,
                               const std::string& pattern, const fs::path& norm_stats) {
  const int sources = !features.empty() + !wav.empty() + !pattern.empty();
  if (sources != 1) throw InvalidArgument("give exactly one of --features, --wav, --pattern");
  if (!features.empty()) return ReadConditioningFile(features);

  AudioBuffer audio;
  if (!wav.empty()) {
    audio = ReadWav(wav, kCanonicalSampleRate);
  } else {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(pattern);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(std::string("pattern is not valid JSON: ") + e.what());
    }
    LoopSpec spec;
    spec.sample_rate = kCanonicalSampleRate;
    const char* names[kNumInstruments] = {"kick", "snare", "hihat"};
    for (int inst = 0; inst < kNumInstruments; ++inst) {
      spec.pattern[inst].assign(kStepsPerBar, 0.0);
      if (!j.contains(names[inst])) continue;
      for (int step : j.at(names[inst]).get<std::vector<int>>()) {
        if (step < 0 || step >= kStepsPerBar) throw InvalidArgument("pattern steps run 0..15");
        spec.pattern[inst][step] = 1.0;
      }
    }
    if (j.contains("tonal")) {
      for (int pc : j.at("tonal").get<std::vector<int>>()) spec.tonal.emplace_back(pc, 0.1);
    }
    audio = SynthLoop(spec);
  }
  audio.samples.resize(kSegmentLength, 0.0);
  if (!fs::exists(norm_stats)) {
    throw DataError("timbral normalisation needs " + norm_stats.string() +
                    " (set --norm-stats or --data-dir)");
  }
  const NormStats stats = NormStats::Load(norm_stats);
  return Assemble(ExtractConditioning(audio, &stats), true);
}

int Synth(const RunConfig& config, const std::string& checkpoint, const std::string& features,
          const std::string& wav, const std::string& pattern, const std::string& globals_from,
          std::string norm_stats, const std::string& out) {
  if (norm_stats.empty()) norm_stats = (config.data_dir / "norm_stats.txt").string();
  const Checkpoint ckpt = LoadCheckpoint(checkpoint);
  Tensor<float> cond = ConditioningFrom(features, wav, pattern, norm_stats);
  if (!globals_from.empty()) {
    const bool is_wav = fs::path(globals_from).extension() == ".wav";
    const Tensor<float> other =
        ConditioningFrom(is_wav ? "" : globals_from, is_wav ? globals_from : "", "", norm_stats);
    const std::size_t len = cond.dim(1);
    for (std::size_t c = HpcpChannel(true); c < cond.dim(0); ++c) {
      std::fill_n(cond.data() + c * len, len, other.at(c, 0));
    }
  }
  if (!VariantUsesEnvelope(ckpt.variant)) cond = DropEnvelope(cond);
  WaveUNet<float> model(ckpt.config, ckpt.params);
  const auto start = std::chrono::steady_clock::now();
  const AudioBuffer audio = OutputToAudio(ckpt.config, model.Forward(cond));
  const double elapsed = Seconds(start);
  WriteWav(out, audio);
  std::printf("wrote %zu samples to %s (synthesis %.3f s)\n", audio.size(), out.c_str(), elapsed);
  return 0;
}

int Eval(const RunConfig& config, std::vector<std::string> checkpoints) {
  if (checkpoints.empty()) checkpoints.push_back((config.checkpoint_dir / "final.lfw").string());
  std::vector<ManifestEntry> test;
  for (const auto& e : ReadDatasetManifest(config.data_dir)) {
    if (e.split == Split::kTest) test.push_back(e);
  }
  if (test.size() < 2) throw DataError("evaluation needs at least two test segments");
  if (test.size() > static_cast<std::size_t>(config.eval_loops)) test.resize(config.eval_loops);

  std::vector<AudioBuffer> reference;
  std::vector<ConditioningSet> conditioning;
  for (const auto& e : test) {
    reference.push_back(ReadWav(e.wav));
    conditioning.push_back(Disassemble(ReadConditioningFile(e.features)));
  }
  std::vector<Checkpoint> loaded;
  for (const auto& path : checkpoints) loaded.push_back(LoadCheckpoint(path));
  DirectoryLock lock(config.report_dir);

  std::vector<std::pair<std::string, FrechetReport>> frechet;
  std::vector<std::pair<std::string, CoherenceReport>> coherence;
  {
    std::vector<AudioBuffer> resynth;
    for (const auto& a : reference) resynth.push_back(GriffinLimResynthesis(a));
    frechet.emplace_back("Griffin-Lim", CompareAudioSets(reference, resynth));
  }
  std::set<std::string> names;
  for (std::size_t m = 0; m < loaded.size(); ++m) {
    std::string name(VariantName(loaded[m].variant));
    if (!names.insert(name).second) name += ":" + fs::path(checkpoints[m]).stem().string();
    names.insert(name);
    ModelSynthesizer synth(WaveUNet<float>(loaded[m].config, loaded[m].params), loaded[m].variant);
    std::vector<AudioBuffer> generated;
    for (const auto& c : conditioning) generated.push_back(synth.Synthesize(c));
    frechet.emplace_back(name, CompareAudioSets(reference, generated));
    std::fprintf(stderr, "%s: FD %.4f, running coherence sweep (%zu x 21 x 3)\n", name.c_str(),
                 frechet.back().second.distance, conditioning.size());
    coherence.emplace_back(name, CoherenceSweep(synth, conditioning));

    ReportTable per_feature{"Coherence per feature, " + name, {"E1", "E2", "E3"}, {}};
    for (const auto& f : coherence.back().second.features) {
      per_feature.rows.push_back({f.name, {100.0 * f.passes[0] / f.trials,
                                           100.0 * f.passes[1] / f.trials,
                                           100.0 * f.passes[2] / f.trials}});
    }
    std::string file = name;
    std::replace(file.begin(), file.end(), ':', '_');
    WriteText(config.report_dir / ("coherence_" + file + ".csv"), RenderCsv(per_feature));
  }
  const ReportTable fd = FrechetTable(frechet);
  const ReportTable co = CoherenceTable(coherence);
  WriteText(config.report_dir / "frechet.csv", RenderCsv(fd));
  WriteText(config.report_dir / "frechet.txt", RenderText(fd));
  WriteText(config.report_dir / "coherence.csv", RenderCsv(co));
  WriteText(config.report_dir / "coherence.txt", RenderText(co));
  std::cout << RenderText(fd) << "\n" << RenderText(co);
  return 0;
}

int Report(const RunConfig& config) {
  if (!fs::is_directory(config.report_dir)) {
    throw DataError("no report directory " + config.report_dir.string());
  }
  std::vector<fs::path> csvs;
  for (const auto& entry : fs::directory_iterator(config.report_dir)) {
    if (entry.path().extension() == ".csv") csvs.push_back(entry.path());
  }
  std::sort(csvs.begin(), csvs.end());
  for (const auto& path : csvs) {
    std::ifstream in(path);
    const std::string text{std::istreambuf_iterator<char>(in), {}};
    std::cout << RenderText(ParseCsv(text)) << "\n";
  }
  return 0;
}

int ExitCode(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
      return 1;
    case ErrorKind::kData:
      return 2;
    case ErrorKind::kNumeric:
      return 3;
  }
  return 2;
}

int Run(int argc, char** argv) {
  CLI::App app{"Conditional drum-loop synthesis"};
  app.require_subcommand(1);

  Common common;
  auto* gen = app.add_subcommand("gen-corpus", "write a synthetic loop corpus");
  AddConfigOptions(gen, common);
  auto* prep = app.add_subcommand("prepare", "cut loops into conditioned one-bar segments");
  AddConfigOptions(prep, common);

  auto* train = app.add_subcommand("train", "train a generator");
  AddConfigOptions(train, common);
  std::string resume;
  train->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);

  auto* synth = app.add_subcommand("synth", "render one segment");
  AddConfigOptions(synth, common);
  std::string checkpoint, features, wav, pattern, globals_from, norm_stats, out;
  synth->add_option("--checkpoint", checkpoint)->required();
  synth->add_option("--features", features, "conditioning file (.lfc)");
  synth->add_option("--wav", wav, "reference audio to take conditioning from");
  synth->add_option("--pattern", pattern, R"(e.g. {"kick":[0,8],"snare":[4,12],"tonal":[9]})");
  synth->add_option("--globals-from", globals_from, "take HPCP and timbre from this .lfc or .wav");
  synth->add_option("--norm-stats", norm_stats, "timbral normalisation (default data_dir)");
  synth->add_option("--out", out)->required();

  auto* eval = app.add_subcommand("eval", "coherence and Frechet reports");
  AddConfigOptions(eval, common);
  std::vector<std::string> eval_checkpoints;
  eval->add_option("--checkpoint", eval_checkpoints, "repeatable; default checkpoint_dir/final.lfw");

  auto* report = app.add_subcommand("report", "print the report tables");
  AddConfigOptions(report, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    Eigen::setNbThreads(ThreadLimit());
    const RunConfig config = Resolve(common);
    if (gen->parsed()) return GenCorpus(config);
    if (prep->parsed()) return PrepareCmd(config);
    if (train->parsed()) return Train(config, resume);
    if (synth->parsed()) {
      return Synth(config, checkpoint, features, wav, pattern, globals_from, norm_stats, out);
    }
    if (eval->parsed()) return Eval(config, eval_checkpoints);
    return Report(config);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return ExitCode(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

}  // namespace
}  // namespace loopgen::cli

int main(int argc, char** argv) { return loopgen::cli::Run(argc, argv); }
