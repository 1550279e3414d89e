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

#ifndef LOOPGEN_FFT_H_
#define LOOPGEN_FFT_H_

#include <complex>
#include <memory>

namespace loopgen {

// Thin RAII wrapper over a pair of FFTW real transforms of one size. Plans
// are built in FFTW_ESTIMATE mode; measured plans can pick different
// codelets between runs and would break bit-exact reproducibility.
class RealFftPlan {
 public:
  explicit RealFftPlan(int size);
  ~RealFftPlan();
  RealFftPlan(const RealFftPlan&) = delete;
  RealFftPlan& operator=(const RealFftPlan&) = delete;

  int size() const { return size_; }

  // in: size() reals. out: size() / 2 + 1 bins.
  void Forward(const double* in, std::complex<double>* out) const;
  // Unnormalized inverse (no 1/n factor). in: size() / 2 + 1 bins.
  void Inverse(const std::complex<double>* in, double* out) const;

  // Per-thread cache keyed by size.
  static const RealFftPlan& Get(int size);

 private:
  struct Impl;
  int size_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace loopgen

#endif  // LOOPGEN_FFT_H_
