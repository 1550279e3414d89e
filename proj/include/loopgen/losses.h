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

// Training objectives. Every objective is a waveform L1 term plus zero or
// more magnitude-spectrogram L1 terms, each with mean reduction and weight 1.

#ifndef LOOPGEN_LOSSES_H_
#define LOOPGEN_LOSSES_H_

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "loopgen/autodiff.h"
#include "loopgen/dsp.h"

namespace loopgen {

enum class LossKind {
  kRecon,    // waveform L1
  kWavSpec,  // waveform L1 + one spectrogram term (1024 / 512)
  kMulti,    // waveform L1 + six spectrogram terms (2048 ... 64, hop fft/4)
};

std::string_view LossKindName(LossKind kind);
// Accepts "recon", "wavspec", "multi" in any case.
LossKind ParseLossKind(std::string_view name);

// Spectrogram resolutions for the spectral terms, in summation order.
std::vector<SpectrogramConfig> SpectralResolutions(LossKind kind);

template <typename T>
struct LossResult {
  Var<T> total;
  // ("wave", L1) first, then ("stft<fft>", term) per resolution.
  std::vector<std::pair<std::string, Var<T>>> terms;
};

// prediction and target: [L] or [1 x L] waveforms of equal length.
template <typename T>
LossResult<T> ComputeLoss(LossKind kind, Var<T> prediction, Var<T> target);

// Convenience evaluation without gradients, in double precision.
double EvaluateLoss(LossKind kind, const std::vector<double>& prediction,
                    const std::vector<double>& target);

}  // namespace loopgen

#endif  // LOOPGEN_LOSSES_H_
