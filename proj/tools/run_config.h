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

// Run configuration for the command-line tool: a key=value file plus flag
// overrides, flags winning.

#ifndef LOOPGEN_TOOLS_RUN_CONFIG_H_
#define LOOPGEN_TOOLS_RUN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "loopgen/losses.h"
#include "loopgen/model.h"

namespace loopgen::cli {

struct RunConfig {
  std::filesystem::path corpus_dir = "corpus";
  std::filesystem::path data_dir = "data";
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path report_dir = "reports";

  ModelVariant variant = ModelVariant::kMulti;
  std::uint64_t seed = 0;

  double learning_rate = 1e-4;
  int batch = 16;
  std::int64_t steps = 1000;
  std::int64_t checkpoint_every = 100;
  // Optional; must agree with the variant's objective when given.
  std::optional<LossKind> loss;

  int num_loops = 64;
  int mislabel_every = 8;
  double test_fraction = 0.1;
  int eval_loops = 16;

  // Every accepted key, in ToString order.
  static const std::vector<std::string>& Keys();

  // Throws InvalidArgument for unknown keys or unparsable values.
  void Set(const std::string& key, const std::string& value);
  void Apply(const std::map<std::string, std::string>& values);
  // Makes relative paths absolute against `base` and checks cross-field
  // constraints.
  void Finalize(const std::filesystem::path& base);

  std::string ToString() const;
  // FNV-1a over the model and optimisation settings.
  std::uint64_t TrainingHash() const;
};

// "key = value" lines; '#' starts a comment. Throws InvalidArgument on a
// malformed line and DataError when the file cannot be read.
std::map<std::string, std::string> ReadConfigFile(const std::filesystem::path& path);

// Worker-thread cap from LOOPGEN_THREADS (default 1).
int ThreadLimit();

// Exclusive lock on a directory via an O_EXCL lock file; released on
// destruction. Throws DataError when another process holds it.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace loopgen::cli

#endif  // LOOPGEN_TOOLS_RUN_CONFIG_H_
