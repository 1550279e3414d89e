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

// Tape-based reverse-mode differentiation over the small operation set the
// generator and its losses need. Instantiated for float (training) and
// double (gradient checks).
//
//   Tape<double> tape;
//   auto x = tape.Constant(input);
//   auto w = tape.Param(weights);
//   auto y = Conv1d(x, w, tape.Param(bias), 2);
//   tape.Backward(L1(y, tape.Constant(target)));
//   // weights.grad now holds dL/dw.

#ifndef LOOPGEN_AUTODIFF_H_
#define LOOPGEN_AUTODIFF_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "loopgen/dsp.h"
#include "loopgen/tensor.h"

namespace loopgen {

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  // Backward closures receive the gradient of the node's output and add
  // into parent gradients through AccumulateGrad.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  // With `check_finite`, every recorded op verifies its output and throws
  // NumericError naming the first op that produced NaN or Inf.
  explicit Tape(bool check_finite = false) : check_finite_(check_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> Constant(Tensor<T> value);
  // Leaf whose gradient is added into `param.grad` by Backward.
  Var<T> Param(Parameter<T>& param);

  Var<T> Record(std::string op, Tensor<T> value,
                std::vector<std::size_t> parents, BackwardFn backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id]->value; }
  bool requires_grad(std::size_t id) const { return nodes_[id]->requires_grad; }
  const std::string& op(std::size_t id) const { return nodes_[id]->op; }
  std::size_t size() const { return nodes_.size(); }

  // Adds `grad` into the gradient of node `id` (no-op for constants).
  void AccumulateGrad(std::size_t id, const Tensor<T>& grad);
  // Same, but lets the caller write into the zero-initialized buffer.
  Tensor<T>* MutableGrad(std::size_t id);

  // Reverse sweep from a scalar node with seed 1.
  void Backward(Var<T> loss);

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  void CheckFinite(const Node& node) const;

  bool check_finite_;
  std::vector<std::unique_ptr<Node>> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

// input [C_in x L], weights [C_out x C_in x K], bias [C_out]. Zero "same"
// padding: output length ceil(L / stride), with the odd extra pad sample on
// the right. Cross-correlation convention.
template <typename T>
Var<T> Conv1d(Var<T> input, Var<T> weights, Var<T> bias, int stride);

// Left zero-padding used by Conv1d for the given geometry.
int ConvPadLeft(std::size_t length, int kernel, int stride);

// [C x L] -> [C x 2L]; out[2i] = in[i], out[2i+1] = (in[i] + in[i+1]) / 2,
// the final odd sample repeats in[L-1].
template <typename T>
Var<T> UpsampleLinear(Var<T> input);

// [C1 x L] ++ [C2 x L] -> [(C1 + C2) x L].
template <typename T>
Var<T> ConcatChannels(Var<T> a, Var<T> b);

// Columns [start, start + length) of a [C x L] tensor.
template <typename T>
Var<T> CropTime(Var<T> input, std::size_t start, std::size_t length);

template <typename T>
Var<T> LeakyRelu(Var<T> x, T alpha = T(0.2));
template <typename T>
Var<T> Tanh(Var<T> x);
template <typename T>
Var<T> Softplus(Var<T> x);

template <typename T>
Var<T> Add(Var<T> a, Var<T> b);
template <typename T>
Var<T> Scale(Var<T> x, T factor);

// Mean absolute difference, as a scalar [1] tensor. The derivative at
// equality is taken as 0.
template <typename T>
Var<T> L1(Var<T> a, Var<T> b);

// |DFT| of Hann-windowed, centered (reflect-padded) frames of a mono signal
// given as [L] or [1 x L]. Output [frames x bins]. The backward pass guards
// |z| with max(|z|, 1e-12).
template <typename T>
Var<T> StftMagnitude(Var<T> signal, const SpectrogramConfig& config);

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
};

// One bias-corrected Adam update of every parameter from its `grad`.
// Moments are created on the first call; throws InvalidArgument if the state
// does not match the parameter shapes.
template <typename T>
void AdamStep(std::span<Parameter<T>* const> params, AdamState<T>& state,
              const AdamOptions& options);

}  // namespace loopgen

#endif  // LOOPGEN_AUTODIFF_H_
