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

#include "loopgen/model.h"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "loopgen/dsp.h"
#include "loopgen/error.h"
#include "loopgen/features.h"

namespace loopgen {

std::string_view VariantName(ModelVariant variant) {
  switch (variant) {
    case ModelVariant::kStft:
      return "STFT";
    case ModelVariant::kWav:
      return "WAV";
    case ModelVariant::kWavSpec:
      return "WAVSPEC";
    case ModelVariant::kMulti:
      return "MULTI";
    case ModelVariant::kMultiNoEnv:
      return "MULTI_NOENV";
  }
  return "UNKNOWN";
}

ModelVariant ParseVariant(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  for (ModelVariant v : {ModelVariant::kStft, ModelVariant::kWav, ModelVariant::kWavSpec,
                         ModelVariant::kMulti, ModelVariant::kMultiNoEnv}) {
    if (upper == VariantName(v)) return v;
  }
  throw InvalidArgument("unknown model variant '" + std::string(name) + "'");
}

bool VariantUsesEnvelope(ModelVariant variant) {
  return variant != ModelVariant::kMultiNoEnv;
}

bool VariantIsSpectral(ModelVariant variant) { return variant == ModelVariant::kStft; }

LossKind VariantLoss(ModelVariant variant) {
  switch (variant) {
    case ModelVariant::kWav:
      return LossKind::kRecon;
    case ModelVariant::kWavSpec:
      return LossKind::kWavSpec;
    case ModelVariant::kMulti:
    case ModelVariant::kMultiNoEnv:
      return LossKind::kMulti;
    case ModelVariant::kStft:
      break;
  }
  throw InvalidArgument("the STFT variant has no waveform loss");
}

ModelConfig ModelConfig::ForVariant(ModelVariant variant) {
  ModelConfig config;
  config.conditioning_channels = ConditioningChannels(VariantUsesEnvelope(variant));
  if (VariantIsSpectral(variant)) {
    config.levels = 4;
    config.output_channels = kSpectralBins;
    config.spectral_output = true;
    config.padded_length = kSpectralPaddedFrames;
    config.nominal_length = kSpectralFrames;
  }
  return config;
}

std::vector<int> ModelConfig::EncoderChannels() const {
  std::vector<int> channels(levels);
  for (int i = 0; i < levels; ++i) channels[i] = base_channels << (i / double_every);
  return channels;
}

void ModelConfig::Validate() const {
  if (levels < 1 || base_channels < 1 || double_every < 1 || kernel < 1 ||
      conditioning_channels < 1 || output_channels < 1) {
    throw InvalidArgument("model config: non-positive size in " + ToString());
  }
  if (padded_length % (std::size_t{1} << levels) != 0 || BottleneckLength() < 2) {
    throw InvalidArgument("model config: padded length must be a multiple of 2^levels "
                          "with a bottleneck of at least 2 samples, got " + ToString());
  }
  if (nominal_length > padded_length) {
    throw InvalidArgument("model config: nominal length exceeds padded length");
  }
}

std::string ModelConfig::ToString() const {
  std::ostringstream out;
  out << "levels=" << levels << ";base_channels=" << base_channels
      << ";double_every=" << double_every << ";kernel=" << kernel
      << ";conditioning_channels=" << conditioning_channels
      << ";output_channels=" << output_channels
      << ";spectral_output=" << (spectral_output ? 1 : 0)
      << ";padded_length=" << padded_length << ";nominal_length=" << nominal_length;
  return out.str();
}

namespace {

struct LayerShape {
  int in;
  int out;
  int kernel;
};

// Encoder layers, then decoder layers from the deepest level up, then head.
std::vector<LayerShape> LayerShapes(const ModelConfig& c) {
  const auto ch = c.EncoderChannels();
  std::vector<LayerShape> layers;
  for (int i = 0; i < c.levels; ++i) {
    layers.push_back({i == 0 ? c.conditioning_channels : ch[i - 1], ch[i], c.kernel});
  }
  for (int j = c.levels; j >= 1; --j) {
    const int skip = j >= 2 ? ch[j - 2] : c.conditioning_channels;
    const int out = j >= 2 ? ch[j - 2] : ch[0];
    layers.push_back({ch[j - 1] + skip, out, c.kernel});
  }
  layers.push_back({ch[0], c.output_channels, 1});
  return layers;
}

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double Uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

template <typename T>
WaveUNet<T>::WaveUNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.Validate();
  std::mt19937_64 rng(seed);
  const auto layers = LayerShapes(config_);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerShape& s = layers[l];
    const double bound = std::sqrt(6.0 / ((s.in + s.out) * s.kernel));
    Tensor<T> w({static_cast<std::size_t>(s.out), static_cast<std::size_t>(s.in),
                 static_cast<std::size_t>(s.kernel)});
    for (T& v : w.values()) v = static_cast<T>((2.0 * Uniform01(rng) - 1.0) * bound);
    params_.emplace_back("layer" + std::to_string(l) + ".weight", std::move(w));
    params_.emplace_back("layer" + std::to_string(l) + ".bias",
                         Tensor<T>({static_cast<std::size_t>(s.out)}));
  }
}

template <typename T>
WaveUNet<T>::WaveUNet(const ModelConfig& config, std::vector<Parameter<T>> params)
    : config_(config), params_(std::move(params)) {
  config_.Validate();
  const auto layers = LayerShapes(config_);
  if (params_.size() != 2 * layers.size()) {
    throw DataError("model: expected " + std::to_string(2 * layers.size()) +
                    " parameter arrays, got " + std::to_string(params_.size()));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Shape w{static_cast<std::size_t>(layers[l].out),
                  static_cast<std::size_t>(layers[l].in),
                  static_cast<std::size_t>(layers[l].kernel)};
    if (params_[2 * l].value.shape() != w ||
        params_[2 * l + 1].value.shape() != Shape{w[0]}) {
      throw DataError("model: layer " + std::to_string(l) + " has shape " +
                      ShapeString(params_[2 * l].value.shape()) + ", expected " +
                      ShapeString(w));
    }
  }
}

template <typename T>
std::vector<Parameter<T>*> WaveUNet<T>::parameter_pointers() {
  std::vector<Parameter<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
std::size_t WaveUNet<T>::NumParameters() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
Var<T> WaveUNet<T>::Conv(Var<T> x, std::size_t layer, int stride, bool trainable) {
  Tape<T>& tape = x.tape();
  Parameter<T>& w = params_[2 * layer];
  Parameter<T>& b = params_[2 * layer + 1];
  return trainable ? Conv1d(x, tape.Param(w), tape.Param(b), stride)
                   : Conv1d(x, tape.Constant(w.value), tape.Constant(b.value), stride);
}

template <typename T>
Var<T> WaveUNet<T>::Network(Var<T> padded_input, bool trainable) {
  const Shape expected{static_cast<std::size_t>(config_.conditioning_channels),
                       config_.padded_length};
  if (padded_input.shape() != expected) {
    throw InvalidArgument("model expects input " + ShapeString(expected) + ", got " +
                          ShapeString(padded_input.shape()));
  }
  const int levels = config_.levels;
  std::vector<Var<T>> skips = {padded_input};
  Var<T> h = padded_input;
  for (int i = 0; i < levels; ++i) {
    h = LeakyRelu(Conv(h, i, 2, trainable));
    skips.push_back(h);
  }
  std::size_t layer = levels;
  for (int j = levels; j >= 1; --j) {
    h = ConcatChannels(UpsampleLinear(h), skips[j - 1]);
    h = LeakyRelu(Conv(h, layer++, 1, trainable));
  }
  h = Conv(h, layer, 1, trainable);
  return config_.spectral_output ? Softplus(h) : Tanh(h);
}

template <typename T>
Tensor<T> PrepareInput(const ModelConfig& config, const Tensor<T>& conditioning) {
  if (conditioning.rank() != 2 ||
      conditioning.dim(0) != static_cast<std::size_t>(config.conditioning_channels)) {
    throw InvalidArgument("conditioning has shape " + ShapeString(conditioning.shape()) +
                          ", model expects " + std::to_string(config.conditioning_channels) +
                          " channels");
  }
  const std::size_t channels = conditioning.dim(0);
  const std::size_t len = conditioning.dim(1);
  Tensor<T> input({channels, config.padded_length});
  const std::size_t left = config.PadLeft();
  if (config.spectral_output) {
    // Sample-rate conditioning read at the STFT frame centres.
    if (len == 0 || (len - 1) / kFeatureHop + 1 < config.nominal_length) {
      throw InvalidArgument("conditioning too short for " +
                            std::to_string(config.nominal_length) + " frames");
    }
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t t = 0; t < config.nominal_length; ++t) {
        input.at(c, left + t) = conditioning.at(c, t * kFeatureHop);
      }
    }
    return input;
  }
  if (len != config.nominal_length) {
    throw InvalidArgument("conditioning length " + std::to_string(len) +
                          ", model expects " + std::to_string(config.nominal_length));
  }
  for (std::size_t c = 0; c < channels; ++c) {
    std::copy_n(conditioning.data() + c * len, len, input.data() + c * config.padded_length + left);
  }
  return input;
}

template <typename T>
Var<T> WaveUNet<T>::Apply(Tape<T>& tape, const Tensor<T>& conditioning, bool trainable) {
  auto out = Network(tape.Constant(PrepareInput(config_, conditioning)), trainable);
  return CropTime(out, config_.PadLeft(), config_.nominal_length);
}

template <typename T>
Tensor<T> WaveUNet<T>::Forward(const Tensor<T>& conditioning) {
  Tape<T> tape;
  return Apply(tape, conditioning, false).value();
}

template <typename T>
template <typename U>
WaveUNet<U> WaveUNet<T>::Cast() const {
  std::vector<Parameter<U>> params;
  for (const auto& p : params_) params.emplace_back(p.name, p.value.template Cast<U>());
  return WaveUNet<U>(config_, std::move(params));
}

Tensor<float> SpectralTarget(const AudioBuffer& audio) {
  const Spectrogram spec = Stft(audio, {kFeatureFft, kFeatureHop});
  if (spec.num_frames != kSpectralFrames) {
    throw InvalidArgument("spectral target: expected " + std::to_string(kSpectralFrames) +
                          " frames, got " + std::to_string(spec.num_frames));
  }
  Tensor<float> out({static_cast<std::size_t>(kSpectralBins),
                     static_cast<std::size_t>(kSpectralFrames)});
  for (int t = 0; t < kSpectralFrames; ++t) {
    for (int k = 0; k < kSpectralBins; ++k) {
      out.at(k, t) = static_cast<float>(spec.magnitude(t, k));
    }
  }
  return out;
}

AudioBuffer OutputToAudio(const ModelConfig& config, const Tensor<float>& output) {
  if (!config.spectral_output) {
    return AudioBuffer{std::vector<double>(output.values().begin(), output.values().end()),
                       kCanonicalSampleRate};
  }
  if (output.shape() != Shape{static_cast<std::size_t>(kSpectralBins),
                              static_cast<std::size_t>(kSpectralFrames)}) {
    throw InvalidArgument("spectral output has shape " + ShapeString(output.shape()));
  }
  Spectrogram spec;
  spec.config = {kFeatureFft, kFeatureHop};
  spec.num_frames = kSpectralFrames;
  spec.signal_length = kSegmentLength;
  spec.magnitudes.resize(static_cast<std::size_t>(kSpectralFrames) * kSpectralBins);
  spec.phases.assign(spec.magnitudes.size(), 0.0);
  for (int t = 0; t < kSpectralFrames; ++t) {
    for (int k = 0; k < kSpectralBins; ++k) {
      spec.magnitudes[static_cast<std::size_t>(t) * kSpectralBins + k] = output.at(k, t);
    }
  }
  return GriffinLim(spec, {kSpectralGriffinLimIterations, 0}).audio;
}

template <typename T>
StepLoss ForwardBackward(WaveUNet<T>& model, ModelVariant variant,
                         const Tensor<T>& conditioning, const Tensor<T>& target,
                         bool backward) {
  Tape<T> tape(/*check_finite=*/true);
  auto out = model.Apply(tape, conditioning, backward);
  auto tgt = tape.Constant(target);
  StepLoss result;
  Var<T> total;
  if (VariantIsSpectral(variant)) {
    total = L1(out, tgt);
    result.terms.emplace_back("spec", static_cast<double>(total.value()[0]));
  } else {
    auto loss = ComputeLoss(VariantLoss(variant), out, tgt);
    total = loss.total;
    for (const auto& [name, term] : loss.terms) {
      result.terms.emplace_back(name, static_cast<double>(term.value()[0]));
    }
  }
  result.total = static_cast<double>(total.value()[0]);
  if (backward) tape.Backward(total);
  return result;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kCheckpointMagic[4] = {'L', 'F', 'W', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;
static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot write " + path.string());
  }
  template <typename V>
  void Put(V value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(V));
  }
  void PutString(const std::string& s) {
    Put(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void PutTensor(const Tensor<float>& t) {
    Put(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) Put(static_cast<std::uint64_t>(d));
    out_.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  void Raw(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
  void Finish() {
    out_.close();
    if (!out_) throw DataError("write failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot read " + path.string());
  }
  template <typename V>
  V Get() {
    V value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(V));
    Check();
    return value;
  }
  std::string GetString() {
    const auto n = Get<std::uint32_t>();
    if (n > (1u << 16)) Fail("string too long");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    Check();
    return s;
  }
  Tensor<float> GetTensor() {
    const auto rank = Get<std::uint32_t>();
    if (rank > 4) Fail("bad tensor rank");
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(Get<std::uint64_t>());
      count *= shape.back();
      if (count > (std::uint64_t{1} << 32)) Fail("tensor too large");
    }
    Tensor<float> t(shape);
    in_.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    Check();
    return t;
  }
  void Raw(char* data, std::size_t n) {
    in_.read(data, static_cast<std::streamsize>(n));
    Check();
  }
  [[noreturn]] void Fail(const std::string& what) {
    throw DataError("checkpoint " + path_.string() + ": " + what);
  }

 private:
  void Check() {
    if (!in_) Fail("truncated");
  }
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w(path);
  w.Raw(kCheckpointMagic, 4);
  w.Put(kCheckpointVersion);
  const ModelConfig& c = ckpt.config;
  w.Put(static_cast<std::uint32_t>(c.levels));
  w.Put(static_cast<std::uint32_t>(c.base_channels));
  w.Put(static_cast<std::uint32_t>(c.double_every));
  w.Put(static_cast<std::uint32_t>(c.kernel));
  w.Put(static_cast<std::uint32_t>(c.conditioning_channels));
  w.Put(static_cast<std::uint32_t>(c.output_channels));
  w.Put(static_cast<std::uint32_t>(c.spectral_output ? 1 : 0));
  w.Put(static_cast<std::uint64_t>(c.padded_length));
  w.Put(static_cast<std::uint64_t>(c.nominal_length));
  w.PutString(std::string(VariantName(ckpt.variant)));
  w.Put(ckpt.seed);
  w.Put(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    w.PutString(p.name);
    w.PutTensor(p.value);
  }
  w.Put(static_cast<std::uint8_t>(ckpt.adam.has_value() ? 1 : 0));
  if (ckpt.adam) {
    const AdamState<float>& a = *ckpt.adam;
    if (a.first_moment.size() != ckpt.params.size() ||
        a.second_moment.size() != ckpt.params.size()) {
      throw InvalidArgument("checkpoint: optimizer state does not match parameters");
    }
    w.Put(static_cast<std::int64_t>(a.step));
    for (const auto& m : a.first_moment) w.PutTensor(m);
    for (const auto& v : a.second_moment) w.PutTensor(v);
  }
  w.Finish();
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.Raw(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) r.Fail("not an LFW1 file");
  if (r.Get<std::uint32_t>() != kCheckpointVersion) r.Fail("unsupported version");
  Checkpoint ckpt;
  ModelConfig& c = ckpt.config;
  c.levels = static_cast<int>(r.Get<std::uint32_t>());
  c.base_channels = static_cast<int>(r.Get<std::uint32_t>());
  c.double_every = static_cast<int>(r.Get<std::uint32_t>());
  c.kernel = static_cast<int>(r.Get<std::uint32_t>());
  c.conditioning_channels = static_cast<int>(r.Get<std::uint32_t>());
  c.output_channels = static_cast<int>(r.Get<std::uint32_t>());
  c.spectral_output = r.Get<std::uint32_t>() != 0;
  c.padded_length = r.Get<std::uint64_t>();
  c.nominal_length = r.Get<std::uint64_t>();
  try {
    c.Validate();
    ckpt.variant = ParseVariant(r.GetString());
  } catch (const Error& e) {
    r.Fail(e.what());
  }
  ckpt.seed = r.Get<std::uint64_t>();
  const auto count = r.Get<std::uint32_t>();
  if (count > 1024) r.Fail("too many parameter arrays");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.GetString();
    ckpt.params.emplace_back(std::move(name), r.GetTensor());
  }
  if (r.Get<std::uint8_t>() != 0) {
    AdamState<float> a;
    a.step = r.Get<std::int64_t>();
    for (std::uint32_t i = 0; i < count; ++i) a.first_moment.push_back(r.GetTensor());
    for (std::uint32_t i = 0; i < count; ++i) a.second_moment.push_back(r.GetTensor());
    ckpt.adam = std::move(a);
  }
  // Validates parameter shapes against the stored hyperparameters.
  WaveUNet<float> check(c, ckpt.params);
  return ckpt;
}

template class WaveUNet<float>;
template class WaveUNet<double>;
template WaveUNet<double> WaveUNet<float>::Cast<double>() const;
template WaveUNet<float> WaveUNet<double>::Cast<float>() const;
template Tensor<float> PrepareInput<float>(const ModelConfig&, const Tensor<float>&);
template Tensor<double> PrepareInput<double>(const ModelConfig&, const Tensor<double>&);
template StepLoss ForwardBackward<float>(WaveUNet<float>&, ModelVariant,
                                         const Tensor<float>&, const Tensor<float>&, bool);
template StepLoss ForwardBackward<double>(WaveUNet<double>&, ModelVariant,
                                          const Tensor<double>&, const Tensor<double>&, bool);

}  // namespace loopgen
