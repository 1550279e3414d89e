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

#include "loopgen/fft.h"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>

#include "loopgen/error.h"

namespace loopgen {

namespace {

// The FFTW planner is not thread safe; execution is.
std::mutex& PlannerMutex() {
  static std::mutex mu;
  return mu;
}

}  // namespace

struct RealFftPlan::Impl {
  double* real = nullptr;
  fftw_complex* spectrum = nullptr;
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

RealFftPlan::RealFftPlan(int size) : size_(size), impl_(new Impl) {
  if (size < 2 || (size & (size - 1)) != 0) {
    throw InvalidArgument("fft size must be a power of two, got " +
                          std::to_string(size));
  }
  std::lock_guard<std::mutex> lock(PlannerMutex());
  impl_->real = fftw_alloc_real(size);
  impl_->spectrum = fftw_alloc_complex(size / 2 + 1);
  impl_->forward = fftw_plan_dft_r2c_1d(size, impl_->real, impl_->spectrum,
                                        FFTW_ESTIMATE);
  impl_->inverse = fftw_plan_dft_c2r_1d(size, impl_->spectrum, impl_->real,
                                        FFTW_ESTIMATE);
}

RealFftPlan::~RealFftPlan() {
  std::lock_guard<std::mutex> lock(PlannerMutex());
  fftw_destroy_plan(impl_->forward);
  fftw_destroy_plan(impl_->inverse);
  fftw_free(impl_->real);
  fftw_free(impl_->spectrum);
}

void RealFftPlan::Forward(const double* in, std::complex<double>* out) const {
  std::copy(in, in + size_, impl_->real);
  fftw_execute(impl_->forward);
  const int bins = size_ / 2 + 1;
  for (int k = 0; k < bins; ++k) {
    out[k] = {impl_->spectrum[k][0], impl_->spectrum[k][1]};
  }
}

void RealFftPlan::Inverse(const std::complex<double>* in, double* out) const {
  const int bins = size_ / 2 + 1;
  for (int k = 0; k < bins; ++k) {
    impl_->spectrum[k][0] = in[k].real();
    impl_->spectrum[k][1] = in[k].imag();
  }
  fftw_execute(impl_->inverse);
  std::copy(impl_->real, impl_->real + size_, out);
}

const RealFftPlan& RealFftPlan::Get(int size) {
  thread_local std::map<int, std::unique_ptr<RealFftPlan>> cache;
  auto& slot = cache[size];
  if (!slot) slot = std::make_unique<RealFftPlan>(size);
  return *slot;
}

}  // namespace loopgen
