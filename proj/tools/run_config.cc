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

#include "run_config.h"

#include <fcntl.h>
#include <unistd.h>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "loopgen/error.h"

namespace loopgen::cli {
namespace {

template <typename T>
T ParseNumber(const std::string& key, const std::string& value) {
  T out{};
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size()) {
    throw InvalidArgument("config '" + key + "': '" + value + "' is not a valid number");
  }
  return out;
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string Num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

const std::vector<std::string>& RunConfig::Keys() {
  static const std::vector<std::string> keys = {
      "corpus_dir", "data_dir", "checkpoint_dir", "report_dir", "variant",
      "seed", "lr", "batch", "steps", "checkpoint_every", "loss",
      "num_loops", "mislabel_every", "test_fraction", "eval_loops"};
  return keys;
}

void RunConfig::Set(const std::string& key, const std::string& value) {
  if (key == "corpus_dir") corpus_dir = value;
  else if (key == "data_dir") data_dir = value;
  else if (key == "checkpoint_dir") checkpoint_dir = value;
  else if (key == "report_dir") report_dir = value;
  else if (key == "variant") variant = ParseVariant(value);
  else if (key == "seed") seed = ParseNumber<std::uint64_t>(key, value);
  else if (key == "lr") learning_rate = ParseNumber<double>(key, value);
  else if (key == "batch") batch = ParseNumber<int>(key, value);
  else if (key == "steps") steps = ParseNumber<std::int64_t>(key, value);
  else if (key == "checkpoint_every") checkpoint_every = ParseNumber<std::int64_t>(key, value);
  else if (key == "loss") loss = ParseLossKind(value);
  else if (key == "num_loops") num_loops = ParseNumber<int>(key, value);
  else if (key == "mislabel_every") mislabel_every = ParseNumber<int>(key, value);
  else if (key == "test_fraction") test_fraction = ParseNumber<double>(key, value);
  else if (key == "eval_loops") eval_loops = ParseNumber<int>(key, value);
  else throw InvalidArgument("unknown config key '" + key + "'");
}

void RunConfig::Apply(const std::map<std::string, std::string>& values) {
  for (const auto& [k, v] : values) Set(k, v);
}

void RunConfig::Finalize(const std::filesystem::path& base) {
  for (auto* p : {&corpus_dir, &data_dir, &checkpoint_dir, &report_dir}) {
    *p = std::filesystem::absolute(base / *p).lexically_normal();
  }
  if (!(learning_rate > 0.0)) throw InvalidArgument("lr must be positive");
  if (batch < 1) throw InvalidArgument("batch must be at least 1");
  if (steps < 0) throw InvalidArgument("steps must be nonnegative");
  if (checkpoint_every < 0) throw InvalidArgument("checkpoint_every must be nonnegative");
  if (num_loops < 0) throw InvalidArgument("num_loops must be nonnegative");
  if (eval_loops < 1) throw InvalidArgument("eval_loops must be at least 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InvalidArgument("test_fraction must lie in (0, 1)");
  }
  if (loss) {
    if (VariantIsSpectral(variant)) {
      throw InvalidArgument("the STFT variant trains on magnitude L1; drop the loss key");
    }
    if (*loss != VariantLoss(variant)) {
      throw InvalidArgument("loss " + std::string(LossKindName(*loss)) + " does not match variant " +
                            std::string(VariantName(variant)));
    }
  }
}

std::string RunConfig::ToString() const {
  std::ostringstream out;
  out << "corpus_dir=" << corpus_dir.string() << "\n"
      << "data_dir=" << data_dir.string() << "\n"
      << "checkpoint_dir=" << checkpoint_dir.string() << "\n"
      << "report_dir=" << report_dir.string() << "\n"
      << "variant=" << VariantName(variant) << "\n"
      << "seed=" << seed << "\n"
      << "lr=" << Num(learning_rate) << "\n"
      << "batch=" << batch << "\n"
      << "steps=" << steps << "\n"
      << "checkpoint_every=" << checkpoint_every << "\n";
  if (loss) out << "loss=" << LossKindName(*loss) << "\n";
  out << "num_loops=" << num_loops << "\n"
      << "mislabel_every=" << mislabel_every << "\n"
      << "test_fraction=" << Num(test_fraction) << "\n"
      << "eval_loops=" << eval_loops << "\n";
  return out.str();
}

std::uint64_t RunConfig::TrainingHash() const {
  const std::string text = ModelConfig::ForVariant(variant).ToString() + "|variant=" +
                           std::string(VariantName(variant)) + "|seed=" + std::to_string(seed) +
                           "|lr=" + Num(learning_rate) + "|batch=" + std::to_string(batch);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::map<std::string, std::string> ReadConfigFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) +
                            ": expected key = value");
    }
    out[Trim(line.substr(0, eq))] = Trim(line.substr(eq + 1));
  }
  return out;
}

int ThreadLimit() {
  const char* env = std::getenv("LOOPGEN_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  const std::string value(env);
  const int n = ParseNumber<int>("LOOPGEN_THREADS", value);
  if (n < 1) throw InvalidArgument("LOOPGEN_THREADS must be at least 1");
  return n;
}

DirectoryLock::DirectoryLock(const std::filesystem::path& dir) : path_(dir / ".loopgen.lock") {
  std::filesystem::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw DataError(dir.string() + " is in use by another loopgen process (remove " +
                    path_.string() + " if that process is gone)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

}  // namespace loopgen::cli
