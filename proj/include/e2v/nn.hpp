#pragma once

// Stateful layer wrappers. `forward` is the const inference path (running
// statistics, nothing cached) and may be called concurrently; `forward_train`
// caches what `backward` needs and is single-owner.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "e2v/layers.hpp"
#include "e2v/tensor.hpp"

namespace e2v::nn {

template <typename Scalar>
using ParamList = std::vector<Parameter<Scalar>*>;

template <typename Scalar>
using BufferList = std::vector<std::pair<std::string, Tensor5<Scalar>*>>;

/// Kaiming-uniform: U(-b, b) with b = sqrt(6 / fan_in).
template <typename Scalar>
void kaiming_uniform(Tensor5<Scalar>& w, Index fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<Index>(1, fan_in)));
  for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
}

inline Shape5 channel_shape(Index c) { return Shape5{1, c, 1, 1, 1}; }

/// `bias = false` keeps a fixed zero bias outside the registry, for convs
/// followed by a normalization that would cancel it anyway.
template <typename Scalar>
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(const std::string& name, const ConvSpec& spec, bool bias = true)
      : spec_(spec),
        has_bias_(bias),
        weight_(name + ".weight",
                Shape5{spec.out_channels, spec.in_channels, spec.kernel[0], spec.kernel[1], spec.kernel[2]}),
        bias_(name + ".bias", channel_shape(spec.out_channels), 1, false) {}

  Tensor5<Scalar> forward(const Tensor5<Scalar>& x) const {
    return conv3d_forward(x, weight_.value, bias_.value, spec_);
  }
  Tensor5<Scalar> forward_train(const Tensor5<Scalar>& x) {
    input_ = x;
    return forward(x);
  }
  Tensor5<Scalar> backward(const Tensor5<Scalar>& g) {
    return conv3d_backward(g, input_, weight_.value, spec_, weight_.grad, bias_.grad);
  }

  void init(Rng& rng) {
    kaiming_uniform(weight_.value, spec_.in_channels * spec_.taps(), rng);
    bias_.value.set_zero();
  }
  void collect(ParamList<Scalar>& out) {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

  const ConvSpec& spec() const { return spec_; }
  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }

 private:
  ConvSpec spec_;
  bool has_bias_ = true;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  Tensor5<Scalar> input_;
};

template <typename Scalar>
class Deconv3d {
 public:
  Deconv3d() = default;
  Deconv3d(const std::string& name, const ConvSpec& spec, bool bias = true)
      : spec_(spec),
        has_bias_(bias),
        weight_(name + ".weight",
                Shape5{spec.in_channels, spec.out_channels, spec.kernel[0], spec.kernel[1], spec.kernel[2]}),
        bias_(name + ".bias", channel_shape(spec.out_channels), 1, false) {}

  Tensor5<Scalar> forward(const Tensor5<Scalar>& x) const {
    return deconv3d_forward(x, weight_.value, bias_.value, spec_);
  }
  Tensor5<Scalar> forward_train(const Tensor5<Scalar>& x) {
    input_ = x;
    return forward(x);
  }
  Tensor5<Scalar> backward(const Tensor5<Scalar>& g) {
    return deconv3d_backward(g, input_, weight_.value, spec_, weight_.grad, bias_.grad);
  }

  void init(Rng& rng) {
    kaiming_uniform(weight_.value, spec_.out_channels * spec_.taps(), rng);
    bias_.value.set_zero();
  }
  void collect(ParamList<Scalar>& out) {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

 private:
  ConvSpec spec_;
  bool has_bias_ = true;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  Tensor5<Scalar> input_;
};

enum class NormKind { batch, none };

/// Per-channel normalization with running statistics (momentum 0.1, unbiased
/// running variance). NormKind::none makes it an identity with no parameters.
template <typename Scalar>
class Norm3d {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  Norm3d() = default;
  Norm3d(const std::string& name, Index channels, NormKind kind) : kind_(kind), name_(name) {
    if (kind_ == NormKind::none) return;
    gain_ = Parameter<Scalar>(name + ".gain", channel_shape(channels), 1, false);
    shift_ = Parameter<Scalar>(name + ".shift", channel_shape(channels), 1, false);
    running_mean_ = Tensor5<Scalar>(channel_shape(channels));
    running_var_ = Tensor5<Scalar>::constant(channel_shape(channels), Scalar(1));
  }

  Tensor5<Scalar> forward(const Tensor5<Scalar>& x) const {
    if (kind_ == NormKind::none) return x;
    return norm_forward_eval(x, gain_.value, shift_.value, running_mean_, running_var_, kEps);
  }

  Tensor5<Scalar> forward_train(const Tensor5<Scalar>& x) {
    if (kind_ == NormKind::none) return x;
    Tensor5<Scalar> y = norm_forward_train(x, gain_.value, shift_.value, kEps, cache_);
    const Shape5& s = x.shape();
    const double count = static_cast<double>(s.n * s.volume());
    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
    const auto m = static_cast<Scalar>(kMomentum);
    detail::channel_vector(running_mean_) = (Scalar(1) - m) * detail::channel_vector(running_mean_) + m * cache_.mean;
    detail::channel_vector(running_var_) =
        (Scalar(1) - m) * detail::channel_vector(running_var_) + (m * static_cast<Scalar>(unbias)) * cache_.var;
    return y;
  }

  Tensor5<Scalar> backward(const Tensor5<Scalar>& g) {
    if (kind_ == NormKind::none) return g;
    return norm_backward(g, cache_, gain_.value, gain_.grad, shift_.grad);
  }

  void init(Rng&) {
    if (kind_ == NormKind::none) return;
    gain_.value = Tensor5<Scalar>::constant(gain_.value.shape(), Scalar(1));
    shift_.value.set_zero();
  }
  void collect(ParamList<Scalar>& out) {
    if (kind_ == NormKind::none) return;
    out.push_back(&gain_);
    out.push_back(&shift_);
  }
  void collect_buffers(BufferList<Scalar>& out) {
    if (kind_ == NormKind::none) return;
    out.emplace_back(name_ + ".running_mean", &running_mean_);
    out.emplace_back(name_ + ".running_var", &running_var_);
  }

  Parameter<Scalar>& gain() { return gain_; }
  Parameter<Scalar>& shift() { return shift_; }

 private:
  NormKind kind_ = NormKind::none;
  std::string name_;
  Parameter<Scalar> gain_;
  Parameter<Scalar> shift_;
  Tensor5<Scalar> running_mean_;
  Tensor5<Scalar> running_var_;
  NormCache<Scalar> cache_;
};

template <typename Scalar>
class Relu {
 public:
  Tensor5<Scalar> forward(const Tensor5<Scalar>& x) const { return relu_forward(x); }
  Tensor5<Scalar> forward_train(const Tensor5<Scalar>& x) {
    input_ = x;
    return relu_forward(x);
  }
  Tensor5<Scalar> backward(const Tensor5<Scalar>& g) { return relu_backward(g, input_); }

 private:
  Tensor5<Scalar> input_;
};

template <typename Scalar>
class MaxPool3d {
 public:
  MaxPool3d() = default;
  MaxPool3d(Index3 kernel, Index3 stride, Index3 padding)
      : kernel_(kernel), stride_(stride), padding_(padding) {}

  Tensor5<Scalar> forward(const Tensor5<Scalar>& x) const {
    return maxpool3d_forward(x, kernel_, stride_, padding_);
  }
  Tensor5<Scalar> forward_train(const Tensor5<Scalar>& x) {
    input_shape_ = x.shape();
    return maxpool3d_forward(x, kernel_, stride_, padding_, &argmax_);
  }
  Tensor5<Scalar> backward(const Tensor5<Scalar>& g) { return maxpool3d_backward(g, input_shape_, argmax_); }

 private:
  Index3 kernel_{3, 3, 3}, stride_{2, 2, 2}, padding_{1, 1, 1};
  Shape5 input_shape_;
  std::vector<Index> argmax_;
};

/// conv -> norm -> relu
template <typename Scalar>
class ConvUnit {
 public:
  ConvUnit() = default;
  ConvUnit(const std::string& name, const ConvSpec& spec, NormKind norm)
      : conv_(name + ".conv", spec, norm == NormKind::none), norm_(name + ".norm", spec.out_channels, norm) {}

  Tensor5<Scalar> forward(const Tensor5<Scalar>& x) const {
    return act_.forward(norm_.forward(conv_.forward(x)));
  }
  Tensor5<Scalar> forward_train(const Tensor5<Scalar>& x) {
    return act_.forward_train(norm_.forward_train(conv_.forward_train(x)));
  }
  Tensor5<Scalar> backward(const Tensor5<Scalar>& g) {
    return conv_.backward(norm_.backward(act_.backward(g)));
  }

  void init(Rng& rng) {
    conv_.init(rng);
    norm_.init(rng);
  }
  void collect(ParamList<Scalar>& out) {
    conv_.collect(out);
    norm_.collect(out);
  }
  void collect_buffers(BufferList<Scalar>& out) { norm_.collect_buffers(out); }

  const ConvSpec& spec() const { return conv_.spec(); }

 private:
  Conv3d<Scalar> conv_;
  Norm3d<Scalar> norm_;
  Relu<Scalar> act_;
};

/// Residual bottleneck: 1^3 reduce, 3^3 spatial (strided), 1^3 expand, plus an
/// identity or projected shortcut, followed by relu.
template <typename Scalar>
class Bottleneck {
 public:
  static constexpr Index kExpansion = 4;

  Bottleneck() = default;
  Bottleneck(const std::string& name, Index in_channels, Index width, Index3 stride, NormKind norm)
      : reduce_(name + ".reduce", ConvSpec{in_channels, width}, norm),
        spatial_(name + ".spatial", ConvSpec{width, width, {3, 3, 3}, stride, {1, 1, 1}}, norm),
        expand_(name + ".expand", ConvSpec{width, width * kExpansion}, norm == NormKind::none),
        expand_norm_(name + ".expand.norm", width * kExpansion, norm) {
    if (in_channels != width * kExpansion || stride != Index3{1, 1, 1}) {
      has_projection_ = true;
      projection_ = Conv3d<Scalar>(name + ".projection", ConvSpec{in_channels, width * kExpansion, {1, 1, 1}, stride},
                                   norm == NormKind::none);
      projection_norm_ = Norm3d<Scalar>(name + ".projection.norm", width * kExpansion, norm);
    }
  }

  Tensor5<Scalar> forward(const Tensor5<Scalar>& x) const {
    Tensor5<Scalar> main = expand_norm_.forward(expand_.forward(spatial_.forward(reduce_.forward(x))));
    if (has_projection_) {
      main.data() += projection_norm_.forward(projection_.forward(x)).data();
    } else {
      main.data() += x.data();
    }
    return out_act_.forward(main);
  }

  Tensor5<Scalar> forward_train(const Tensor5<Scalar>& x) {
    Tensor5<Scalar> main =
        expand_norm_.forward_train(expand_.forward_train(spatial_.forward_train(reduce_.forward_train(x))));
    if (has_projection_) {
      main.data() += projection_norm_.forward_train(projection_.forward_train(x)).data();
    } else {
      main.data() += x.data();
    }
    return out_act_.forward_train(main);
  }

  Tensor5<Scalar> backward(const Tensor5<Scalar>& g) {
    const Tensor5<Scalar> g_sum = out_act_.backward(g);
    Tensor5<Scalar> gx = reduce_.backward(spatial_.backward(expand_.backward(expand_norm_.backward(g_sum))));
    if (has_projection_) {
      gx.data() += projection_.backward(projection_norm_.backward(g_sum)).data();
    } else {
      gx.data() += g_sum.data();
    }
    return gx;
  }

  void init(Rng& rng) {
    reduce_.init(rng);
    spatial_.init(rng);
    expand_.init(rng);
    expand_norm_.init(rng);
    if (has_projection_) {
      projection_.init(rng);
      projection_norm_.init(rng);
    }
  }
  void collect(ParamList<Scalar>& out) {
    reduce_.collect(out);
    spatial_.collect(out);
    expand_.collect(out);
    expand_norm_.collect(out);
    if (has_projection_) {
      projection_.collect(out);
      projection_norm_.collect(out);
    }
  }
  void collect_buffers(BufferList<Scalar>& out) {
    reduce_.collect_buffers(out);
    spatial_.collect_buffers(out);
    expand_norm_.collect_buffers(out);
    if (has_projection_) projection_norm_.collect_buffers(out);
  }

 private:
  ConvUnit<Scalar> reduce_;
  ConvUnit<Scalar> spatial_;
  Conv3d<Scalar> expand_;
  Norm3d<Scalar> expand_norm_;
  bool has_projection_ = false;
  Conv3d<Scalar> projection_;
  Norm3d<Scalar> projection_norm_;
  Relu<Scalar> out_act_;
};

}  // namespace e2v::nn
