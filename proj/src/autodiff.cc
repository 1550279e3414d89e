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

#include "loopgen/autodiff.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <type_traits>
#include <utility>

#include "loopgen/fft.h"

namespace loopgen {

template <typename T>
Var<T> Tape<T>::Constant(Tensor<T> value) {
  auto node = std::make_unique<Node>();
  node->op = "constant";
  node->value = std::move(value);
  CheckFinite(*node);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::Param(Parameter<T>& param) {
  auto node = std::make_unique<Node>();
  node->op = "param:" + param.name;
  node->value = param.value;
  node->requires_grad = true;
  node->param = &param;
  CheckFinite(*node);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::Record(std::string op, Tensor<T> value,
                       std::vector<std::size_t> parents, BackwardFn backward) {
  auto node = std::make_unique<Node>();
  node->op = std::move(op);
  node->value = std::move(value);
  for (std::size_t p : parents) {
    if (nodes_[p]->requires_grad) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  CheckFinite(*node);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
void Tape<T>::CheckFinite(const Node& node) const {
  if (!check_finite_) return;
  for (T v : node.value.values()) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by op '" + node.op +
                         "' (node " + std::to_string(nodes_.size()) + ")");
    }
  }
}

template <typename T>
Tensor<T>* Tape<T>::MutableGrad(std::size_t id) {
  Node& node = *nodes_[id];
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty() && !node.value.empty()) {
    node.grad = Tensor<T>(node.value.shape());
  }
  return &node.grad;
}

template <typename T>
void Tape<T>::AccumulateGrad(std::size_t id, const Tensor<T>& grad) {
  Tensor<T>* dst = MutableGrad(id);
  if (dst == nullptr) return;
  if (dst->size() != grad.size()) {
    throw InvalidArgument("gradient shape mismatch at op '" + nodes_[id]->op +
                          "'");
  }
  T* d = dst->data();
  const T* g = grad.data();
  for (std::size_t i = 0; i < grad.size(); ++i) d[i] += g[i];
}

template <typename T>
void Tape<T>::Backward(Var<T> loss) {
  if (loss.value().size() != 1) {
    throw InvalidArgument("backward: loss must be a scalar, got " +
                          ShapeString(loss.shape()));
  }
  Tensor<T>* seed = MutableGrad(loss.id());
  if (seed == nullptr) return;
  (*seed)[0] += T(1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = *nodes_[i];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.param != nullptr) {
      Tensor<T>& sink = node.param->grad;
      if (sink.size() != node.grad.size()) sink = Tensor<T>(node.value.shape());
      for (std::size_t k = 0; k < sink.size(); ++k) sink[k] += node.grad[k];
    } else if (node.backward) {
      node.backward(*this, node.grad);
    }
    // Interior gradients are dead once propagated.
    if (node.param == nullptr) node.grad = Tensor<T>();
  }
}

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void RequireRank2(const Var<T>& v, const char* op) {
  if (v.value().rank() != 2) {
    throw InvalidArgument(std::string(op) + ": expected [C x L], got " +
                          ShapeString(v.shape()));
  }
}

using DynStride = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;

// x copied into [C x padded] with `pad_left` zeros in front and enough zeros
// behind for every tap of every output position.
template <typename T>
RowMatrix<T> PadTime(const Tensor<T>& x, int pad_left, std::size_t padded) {
  const std::size_t channels = x.dim(0);
  const std::size_t len = x.dim(1);
  RowMatrix<T> out = RowMatrix<T>::Zero(channels, padded);
  for (std::size_t c = 0; c < channels; ++c) {
    std::copy_n(x.data() + c * len, len, out.data() + c * padded + pad_left);
  }
  return out;
}

// Tap k of every output position: a [C x out_len] view into padded data.
template <typename T>
auto TapView(T* padded, std::size_t channels, std::size_t padded_len, int k, int stride,
             std::size_t out_len) {
  using Matrix = std::conditional_t<std::is_const_v<T>, const RowMatrix<std::remove_const_t<T>>,
                                    RowMatrix<T>>;
  return Eigen::Map<Matrix, 0, DynStride>(padded + k, channels, out_len,
                                          DynStride(padded_len, stride));
}

// Tap k of a [out x in x kernel] weight tensor as an [out x in] view.
template <typename T>
auto WeightTap(T* w, std::size_t out_ch, std::size_t in_ch, int kernel, int k) {
  using Matrix = std::conditional_t<std::is_const_v<T>, const RowMatrix<std::remove_const_t<T>>,
                                    RowMatrix<T>>;
  return Eigen::Map<Matrix, 0, DynStride>(w + k, out_ch, in_ch, DynStride(in_ch * kernel, kernel));
}

}  // namespace

int ConvPadLeft(std::size_t length, int kernel, int stride) {
  const std::size_t out_len = (length + stride - 1) / stride;
  const std::int64_t total =
      std::max<std::int64_t>(static_cast<std::int64_t>((out_len - 1) * stride) +
                                 kernel - static_cast<std::int64_t>(length),
                             0);
  return static_cast<int>(total / 2);
}

template <typename T>
Var<T> Conv1d(Var<T> input, Var<T> weights, Var<T> bias, int stride) {
  RequireRank2(input, "conv1d");
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weights.value();
  const Tensor<T>& b = bias.value();
  if (w.rank() != 3 || w.dim(1) != x.dim(0) || b.size() != w.dim(0)) {
    throw InvalidArgument("conv1d: input " + ShapeString(x.shape()) +
                          " weights " + ShapeString(w.shape()) + " bias " +
                          ShapeString(b.shape()));
  }
  if (stride < 1) throw InvalidArgument("conv1d: stride must be >= 1");
  const std::size_t out_ch = w.dim(0);
  const std::size_t in_ch = w.dim(1);
  const int kernel = static_cast<int>(w.dim(2));
  const std::size_t len = x.dim(1);
  const std::size_t out_len = (len + stride - 1) / stride;
  const int pad_left = ConvPadLeft(len, kernel, stride);

  // One GEMM per kernel tap over a shifted, strided view of the padded input.
  const std::size_t padded =
      std::max((out_len - 1) * stride + kernel, static_cast<std::size_t>(pad_left) + len);
  Tensor<T> out({out_ch, out_len});
  {
    const RowMatrix<T> xp = PadTime(x, pad_left, padded);
    Eigen::Map<RowMatrix<T>> om(out.data(), out_ch, out_len);
    om.setZero();
    for (int k = 0; k < kernel; ++k) {
      om.noalias() += WeightTap(w.data(), out_ch, in_ch, kernel, k) *
                      TapView(xp.data(), in_ch, padded, k, stride, out_len);
    }
    for (std::size_t c = 0; c < out_ch; ++c) om.row(c).array() += b[c];
  }

  Tape<T>& tape = input.tape();
  const std::size_t xi = input.id(), wi = weights.id(), bi = bias.id();
  return tape.Record(
      "conv1d", std::move(out), {xi, wi, bi},
      [=](Tape<T>& t, const Tensor<T>& grad) {
        Eigen::Map<const RowMatrix<T>> gm(grad.data(), out_ch, out_len);
        if (Tensor<T>* db = t.MutableGrad(bi)) {
          for (std::size_t c = 0; c < out_ch; ++c) (*db)[c] += gm.row(c).sum();
        }
        if (Tensor<T>* dw = t.MutableGrad(wi)) {
          const RowMatrix<T> xp = PadTime(t.value(xi), pad_left, padded);
          for (int k = 0; k < kernel; ++k) {
            WeightTap(dw->data(), out_ch, in_ch, kernel, k).noalias() +=
                gm * TapView(xp.data(), in_ch, padded, k, stride, out_len).transpose();
          }
        }
        if (Tensor<T>* dx = t.MutableGrad(xi)) {
          const T* wv = t.value(wi).data();
          RowMatrix<T> dxp = RowMatrix<T>::Zero(in_ch, padded);
          for (int k = 0; k < kernel; ++k) {
            TapView(dxp.data(), in_ch, padded, k, stride, out_len).noalias() +=
                WeightTap(wv, out_ch, in_ch, kernel, k).transpose() * gm;
          }
          for (std::size_t c = 0; c < in_ch; ++c) {
            const T* src = dxp.data() + c * padded + pad_left;
            T* dst = dx->data() + c * len;
            for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
          }
        }
      });
}

template <typename T>
Var<T> UpsampleLinear(Var<T> input) {
  RequireRank2(input, "upsample_linear");
  const Tensor<T>& x = input.value();
  const std::size_t channels = x.dim(0);
  const std::size_t len = x.dim(1);
  if (len < 1) throw InvalidArgument("upsample_linear: empty input");
  Tensor<T> out({channels, 2 * len});
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = x.data() + c * len;
    T* dst = out.data() + c * 2 * len;
    for (std::size_t i = 0; i < len; ++i) {
      dst[2 * i] = src[i];
      dst[2 * i + 1] = i + 1 < len ? (src[i] + src[i + 1]) / T(2) : src[i];
    }
  }
  const std::size_t xi = input.id();
  return input.tape().Record(
      "upsample_linear", std::move(out), {xi},
      [=](Tape<T>& t, const Tensor<T>& grad) {
        Tensor<T>* dx = t.MutableGrad(xi);
        if (dx == nullptr) return;
        for (std::size_t c = 0; c < channels; ++c) {
          const T* g = grad.data() + c * 2 * len;
          T* d = dx->data() + c * len;
          for (std::size_t i = 0; i < len; ++i) {
            d[i] += g[2 * i];
            if (i + 1 < len) {
              d[i] += g[2 * i + 1] / T(2);
              d[i + 1] += g[2 * i + 1] / T(2);
            } else {
              d[i] += g[2 * i + 1];
            }
          }
        }
      });
}

template <typename T>
Var<T> ConcatChannels(Var<T> a, Var<T> b) {
  RequireRank2(a, "concat_channels");
  RequireRank2(b, "concat_channels");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.dim(1) != bv.dim(1)) {
    throw InvalidArgument("concat_channels: length mismatch " +
                          ShapeString(av.shape()) + " vs " +
                          ShapeString(bv.shape()));
  }
  const std::size_t len = av.dim(1);
  const std::size_t split = av.size();
  std::vector<T> values;
  values.reserve(av.size() + bv.size());
  values.insert(values.end(), av.values().begin(), av.values().end());
  values.insert(values.end(), bv.values().begin(), bv.values().end());
  Tensor<T> out({av.dim(0) + bv.dim(0), len}, std::move(values));
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().Record(
      "concat_channels", std::move(out), {ai, bi},
      [=](Tape<T>& t, const Tensor<T>& grad) {
        if (Tensor<T>* da = t.MutableGrad(ai)) {
          for (std::size_t i = 0; i < split; ++i) (*da)[i] += grad[i];
        }
        if (Tensor<T>* db = t.MutableGrad(bi)) {
          for (std::size_t i = split; i < grad.size(); ++i) {
            (*db)[i - split] += grad[i];
          }
        }
      });
}

template <typename T>
Var<T> CropTime(Var<T> input, std::size_t start, std::size_t length) {
  RequireRank2(input, "crop_time");
  const Tensor<T>& x = input.value();
  const std::size_t channels = x.dim(0);
  const std::size_t len = x.dim(1);
  if (start + length > len) {
    throw InvalidArgument("crop_time: window exceeds " + ShapeString(x.shape()));
  }
  Tensor<T> out({channels, length});
  for (std::size_t c = 0; c < channels; ++c) {
    std::copy_n(x.data() + c * len + start, length, out.data() + c * length);
  }
  const std::size_t xi = input.id();
  return input.tape().Record(
      "crop_time", std::move(out), {xi},
      [=](Tape<T>& t, const Tensor<T>& grad) {
        Tensor<T>* dx = t.MutableGrad(xi);
        if (dx == nullptr) return;
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t i = 0; i < length; ++i) {
            (*dx)[c * len + start + i] += grad[c * length + i];
          }
        }
      });
}

namespace {

// Elementwise op whose derivative is a function of input and output.
template <typename T, typename F, typename D>
Var<T> Pointwise(const char* name, Var<T> x, F forward, D derivative) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = forward(xv[i]);
  const std::size_t xi = x.id();
  Tape<T>& tape = x.tape();
  const std::size_t yi = tape.size();
  return tape.Record(name, std::move(out), {xi},
                     [=](Tape<T>& t, const Tensor<T>& grad) {
                       Tensor<T>* dx = t.MutableGrad(xi);
                       if (dx == nullptr) return;
                       const Tensor<T>& in = t.value(xi);
                       const Tensor<T>& y = t.value(yi);
                       for (std::size_t i = 0; i < grad.size(); ++i) {
                         (*dx)[i] += grad[i] * derivative(in[i], y[i]);
                       }
                     });
}

}  // namespace

template <typename T>
Var<T> LeakyRelu(Var<T> x, T alpha) {
  return Pointwise<T>(
      "leaky_relu", x, [alpha](T v) { return v >= T(0) ? v : alpha * v; },
      [alpha](T v, T) { return v >= T(0) ? T(1) : alpha; });
}

template <typename T>
Var<T> Tanh(Var<T> x) {
  return Pointwise<T>(
      "tanh", x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> Softplus(Var<T> x) {
  return Pointwise<T>(
      "softplus", x,
      [](T v) { return v > T(20) ? v : std::log1p(std::exp(v)); },
      [](T v, T) { return T(1) / (T(1) + std::exp(-v)); });
}

template <typename T>
Var<T> Add(Var<T> a, Var<T> b) {
  if (a.value().size() != b.value().size()) {
    throw InvalidArgument("add: size mismatch " + ShapeString(a.shape()) +
                          " vs " + ShapeString(b.shape()));
  }
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().Record("add", std::move(out), {ai, bi},
                         [=](Tape<T>& t, const Tensor<T>& grad) {
                           t.AccumulateGrad(ai, grad);
                           t.AccumulateGrad(bi, grad);
                         });
}

template <typename T>
Var<T> Scale(Var<T> x, T factor) {
  Tensor<T> out = x.value();
  for (T& v : out.values()) v *= factor;
  const std::size_t xi = x.id();
  return x.tape().Record("scale", std::move(out), {xi},
                         [=](Tape<T>& t, const Tensor<T>& grad) {
                           Tensor<T>* dx = t.MutableGrad(xi);
                           if (dx == nullptr) return;
                           for (std::size_t i = 0; i < grad.size(); ++i) {
                             (*dx)[i] += grad[i] * factor;
                           }
                         });
}

template <typename T>
Var<T> L1(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.size() != bv.size() || av.empty()) {
    throw InvalidArgument("l1: size mismatch " + ShapeString(av.shape()) +
                          " vs " + ShapeString(bv.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    acc += std::abs(static_cast<double>(av[i]) - static_cast<double>(bv[i]));
  }
  const std::size_t n = av.size();
  Tensor<T> out({1}, static_cast<T>(acc / static_cast<double>(n)));
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().Record(
      "l1", std::move(out), {ai, bi}, [=](Tape<T>& t, const Tensor<T>& grad) {
        const Tensor<T>& x = t.value(ai);
        const Tensor<T>& y = t.value(bi);
        const T scale = grad[0] / static_cast<T>(n);
        Tensor<T>* da = t.MutableGrad(ai);
        Tensor<T>* db = t.MutableGrad(bi);
        for (std::size_t i = 0; i < n; ++i) {
          const T s = x[i] > y[i] ? scale : (x[i] < y[i] ? -scale : T(0));
          if (da) (*da)[i] += s;
          if (db) (*db)[i] -= s;
        }
      });
}

template <typename T>
Var<T> StftMagnitude(Var<T> signal, const SpectrogramConfig& config) {
  config.Validate();
  const Tensor<T>& x = signal.value();
  if (!(x.rank() == 1 || (x.rank() == 2 && x.dim(0) == 1))) {
    throw InvalidArgument("stft_magnitude: expected mono signal, got " +
                          ShapeString(x.shape()));
  }
  const std::size_t len = x.size();
  if (len == 0) throw InvalidArgument("empty signal");
  const int n = config.fft_size;
  const int hop = config.hop_size;
  const int bins = config.num_bins();
  const int frames = config.NumFrames(len);

  // Per-frame reflect indices are recomputed in backward; spectra are kept.
  auto spectra = std::make_shared<std::vector<std::complex<double>>>(
      static_cast<std::size_t>(frames) * bins);
  const auto window = std::make_shared<std::vector<double>>(HannWindow(n));
  const RealFftPlan& plan = RealFftPlan::Get(n);
  std::vector<double> frame(n);
  Tensor<T> out({static_cast<std::size_t>(frames), static_cast<std::size_t>(bins)});
  for (int f = 0; f < frames; ++f) {
    const std::int64_t start = static_cast<std::int64_t>(f) * hop - n / 2;
    for (int i = 0; i < n; ++i) {
      frame[i] = static_cast<double>(x[ReflectIndex(start + i, len)]) *
                 (*window)[i];
    }
    std::complex<double>* spec = spectra->data() + static_cast<std::size_t>(f) * bins;
    plan.Forward(frame.data(), spec);
    for (int k = 0; k < bins; ++k) {
      out[static_cast<std::size_t>(f) * bins + k] = static_cast<T>(std::abs(spec[k]));
    }
  }

  const std::size_t xi = signal.id();
  return signal.tape().Record(
      "stft_magnitude", std::move(out), {xi},
      [=](Tape<T>& t, const Tensor<T>& grad) {
        Tensor<T>* dx = t.MutableGrad(xi);
        if (dx == nullptr) return;
        const RealFftPlan& p = RealFftPlan::Get(n);
        std::vector<std::complex<double>> g(bins);
        std::vector<double> frame_grad(n);
        for (int f = 0; f < frames; ++f) {
          const std::complex<double>* spec =
              spectra->data() + static_cast<std::size_t>(f) * bins;
          for (int k = 0; k < bins; ++k) {
            const double upstream =
                static_cast<double>(grad[static_cast<std::size_t>(f) * bins + k]);
            const double mag = std::max(std::abs(spec[k]), 1e-12);
            // The inverse real transform doubles interior bins; undo that
            // so each one-sided bin contributes Re(G_k e^{i w n}) once.
            const double half = (k == 0 || k == n / 2) ? 1.0 : 0.5;
            g[k] = half * upstream * spec[k] / mag;
          }
          p.Inverse(g.data(), frame_grad.data());
          const std::int64_t start = static_cast<std::int64_t>(f) * hop - n / 2;
          for (int i = 0; i < n; ++i) {
            (*dx)[ReflectIndex(start + i, len)] +=
                static_cast<T>(frame_grad[i] * (*window)[i]);
          }
        }
      });
}

template <typename T>
void AdamStep(std::span<Parameter<T>* const> params, AdamState<T>& state,
              const AdamOptions& options) {
  if (state.first_moment.empty() && state.step == 0) {
    for (const Parameter<T>* p : params) {
      state.first_moment.emplace_back(p->value.shape());
      state.second_moment.emplace_back(p->value.shape());
    }
  }
  if (state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw InvalidArgument("adam: state holds " +
                          std::to_string(state.first_moment.size()) +
                          " moments for " + std::to_string(params.size()) +
                          " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter<T>& p = *params[i];
    if (p.grad.shape() != p.value.shape() ||
        state.first_moment[i].shape() != p.value.shape() ||
        state.second_moment[i].shape() != p.value.shape()) {
      throw InvalidArgument("adam: shape mismatch for parameter " + p.name);
    }
  }

  state.step += 1;
  const double correction1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(options.beta1);
  const T b2 = static_cast<T>(options.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    Tensor<T>& m = state.first_moment[i];
    Tensor<T>& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const T g = p.grad[j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      const double m_hat = static_cast<double>(m[j]) / correction1;
      const double v_hat = static_cast<double>(v[j]) / correction2;
      p.value[j] -= static_cast<T>(options.learning_rate * m_hat /
                                   (std::sqrt(v_hat) + options.epsilon));
    }
  }
}

#define LOOPGEN_INSTANTIATE_AUTODIFF(T)                                      \
  template class Tape<T>;                                                    \
  template Var<T> Conv1d<T>(Var<T>, Var<T>, Var<T>, int);                    \
  template Var<T> UpsampleLinear<T>(Var<T>);                                 \
  template Var<T> ConcatChannels<T>(Var<T>, Var<T>);                         \
  template Var<T> CropTime<T>(Var<T>, std::size_t, std::size_t);             \
  template Var<T> LeakyRelu<T>(Var<T>, T);                                   \
  template Var<T> Tanh<T>(Var<T>);                                           \
  template Var<T> Softplus<T>(Var<T>);                                       \
  template Var<T> Add<T>(Var<T>, Var<T>);                                    \
  template Var<T> Scale<T>(Var<T>, T);                                       \
  template Var<T> L1<T>(Var<T>, Var<T>);                                     \
  template Var<T> StftMagnitude<T>(Var<T>, const SpectrogramConfig&);        \
  template void AdamStep<T>(std::span<Parameter<T>* const>, AdamState<T>&,   \
                            const AdamOptions&);

LOOPGEN_INSTANTIATE_AUTODIFF(float)
LOOPGEN_INSTANTIATE_AUTODIFF(double)

#undef LOOPGEN_INSTANTIATE_AUTODIFF

}  // namespace loopgen
