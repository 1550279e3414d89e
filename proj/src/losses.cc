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

#include "loopgen/losses.h"

#include <algorithm>
#include <cctype>

#include "loopgen/error.h"

namespace loopgen {

std::string_view LossKindName(LossKind kind) {
  switch (kind) {
    case LossKind::kRecon:
      return "recon";
    case LossKind::kWavSpec:
      return "wavspec";
    case LossKind::kMulti:
      return "multi";
  }
  return "unknown";
}

LossKind ParseLossKind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "recon") return LossKind::kRecon;
  if (lower == "wavspec") return LossKind::kWavSpec;
  if (lower == "multi") return LossKind::kMulti;
  throw InvalidArgument("unknown loss kind '" + std::string(name) + "'");
}

std::vector<SpectrogramConfig> SpectralResolutions(LossKind kind) {
  switch (kind) {
    case LossKind::kRecon:
      return {};
    case LossKind::kWavSpec:
      return {{1024, 512}};
    case LossKind::kMulti: {
      std::vector<SpectrogramConfig> out;
      for (int fft = 2048; fft >= 64; fft /= 2) out.push_back({fft, fft / 4});
      return out;
    }
  }
  return {};
}

template <typename T>
LossResult<T> ComputeLoss(LossKind kind, Var<T> prediction, Var<T> target) {
  if (prediction.value().size() != target.value().size()) {
    throw InvalidArgument("loss: prediction has " +
                          std::to_string(prediction.value().size()) +
                          " samples, target " +
                          std::to_string(target.value().size()));
  }
  LossResult<T> result;
  result.total = L1(prediction, target);
  result.terms.emplace_back("wave", result.total);
  for (const SpectrogramConfig& cfg : SpectralResolutions(kind)) {
    auto term = L1(StftMagnitude(prediction, cfg), StftMagnitude(target, cfg));
    result.terms.emplace_back("stft" + std::to_string(cfg.fft_size), term);
    result.total = Add(result.total, term);
  }
  return result;
}

double EvaluateLoss(LossKind kind, const std::vector<double>& prediction,
                    const std::vector<double>& target) {
  Tape<double> tape;
  auto p = tape.Constant(Tensor<double>({prediction.size()}, prediction));
  auto t = tape.Constant(Tensor<double>({target.size()}, target));
  return ComputeLoss(kind, p, t).total.value()[0];
}

template LossResult<float> ComputeLoss<float>(LossKind, Var<float>, Var<float>);
template LossResult<double> ComputeLoss<double>(LossKind, Var<double>,
                                                Var<double>);

}  // namespace loopgen
