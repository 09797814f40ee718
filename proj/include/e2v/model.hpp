#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "e2v/events.hpp"
#include "e2v/nn.hpp"
#include "e2v/voxel.hpp"

namespace e2v {

struct StemConfig {
  Index3 kernel{7, 7, 7};
  Index3 stride{2, 2, 2};
  Index out_channels = 64;
  bool pool = true;  ///< 3^3 max-pool, stride 2, padding 1

  bool operator==(const StemConfig&) const = default;
};

struct StageConfig {
  Index blocks = 1;
  Index width = 64;  ///< bottleneck channels; the stage outputs 4 * width
  Index3 stride{1, 1, 1};

  bool operator==(const StageConfig&) const = default;
};

struct EncoderConfig {
  Index in_channels = 1;
  StemConfig stem;
  std::vector<StageConfig> stages;
  Index3 hidden{32, 32, 32};
  nn::NormKind norm = nn::NormKind::batch;

  /// Channel count C of the hidden volume.
  Index hidden_channels() const {
    return stages.empty() ? stem.out_channels : stages.back().width * nn::Bottleneck<float>::kExpansion;
  }

  /// Residual 3-D encoder with the 3/8/36/3 bottleneck layout of a 152-layer
  /// residual network, mapping 100x256x256 frame stacks to C x 32^3.
  static EncoderConfig full();
  /// Desk-scale encoder: stem 8, stages (1, 8) and (1, 16), hidden 8^3.
  static EncoderConfig toy();

  bool operator==(const EncoderConfig&) const = default;
};

struct DecoderConfig {
  /// One entry per UNet resolution level; level l runs at hidden / 2^l.
  std::vector<Index> channels{64, 128, 256};
  nn::NormKind norm = nn::NormKind::batch;

  Index levels() const { return static_cast<Index>(channels.size()); }

  static DecoderConfig full();
  static DecoderConfig toy();

  bool operator==(const DecoderConfig&) const = default;
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  std::uint64_t seed = 0;

  /// Output voxel resolution (the hidden volume must be a cube).
  Index resolution() const { return encoder.hidden[0]; }

  static ModelConfig full(std::uint64_t seed = 0) { return {EncoderConfig::full(), DecoderConfig::full(), seed}; }
  static ModelConfig toy(std::uint64_t seed = 0) { return {EncoderConfig::toy(), DecoderConfig::toy(), seed}; }

  bool operator==(const ModelConfig&) const = default;
};

/// Lower bound on output probabilities; the upper bound is 1 - kProbFloor.
inline constexpr double kProbFloor = 1e-7;

template <typename Scalar>
class E2VModel {
 public:
  explicit E2VModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  /// Frames N x 1 x D x H x W -> hidden N x C x d x h x w.
  Tensor5<Scalar> encode(const Tensor5<Scalar>& frames) const;
  /// Hidden -> occupancy probabilities N x 1 x R x R x R, strictly inside (0, 1).
  Tensor5<Scalar> decode(const Tensor5<Scalar>& hidden) const;
  Tensor5<Scalar> predict(const Tensor5<Scalar>& frames) const { return decode(encode(frames)); }

  Tensor5<Scalar> encode_train(const Tensor5<Scalar>& frames);
  Tensor5<Scalar> decode_train(const Tensor5<Scalar>& hidden);
  Tensor5<Scalar> forward_train(const Tensor5<Scalar>& frames) { return decode_train(encode_train(frames)); }

  /// Back-propagates through the last *_train pass, accumulating parameter
  /// gradients. Returns the gradient w.r.t. that pass's input.
  Tensor5<Scalar> decode_backward(const Tensor5<Scalar>& grad_probs);
  Tensor5<Scalar> encode_backward(const Tensor5<Scalar>& grad_hidden);
  Tensor5<Scalar> backward(const Tensor5<Scalar>& grad_probs) { return encode_backward(decode_backward(grad_probs)); }

  /// Every learnable parameter, in a fixed traversal order.
  nn::ParamList<Scalar> parameters();
  /// Normalization running statistics.
  nn::BufferList<Scalar> buffers();

  void zero_grad();
  /// Head convolution, exposed for tests.
  nn::Conv3d<Scalar>& head() { return head_; }

 private:
  void initialize();
  Shape5 check_input(const Tensor5<Scalar>& frames) const;

  ModelConfig cfg_;
  // encoder
  nn::ConvUnit<Scalar> stem_;
  bool stem_pool_ = false;
  nn::MaxPool3d<Scalar> pool_;
  std::vector<nn::Bottleneck<Scalar>> blocks_;
  Shape5 encoder_tail_shape_;
  // decoder
  nn::ConvUnit<Scalar> in_proj_;
  nn::ConvUnit<Scalar> top_;
  std::vector<nn::ConvUnit<Scalar>> down_;
  std::vector<nn::Deconv3d<Scalar>> up_;
  std::vector<nn::Norm3d<Scalar>> up_norm_;
  std::vector<nn::Relu<Scalar>> up_act_;
  std::vector<nn::ConvUnit<Scalar>> fuse_;
  nn::Conv3d<Scalar> head_;
  Tensor5<Scalar> head_logits_;
  Tensor5<Scalar> head_sigmoid_;
};

/// Deterministic construction and initialization from cfg.seed.
template <typename Scalar>
E2VModel<Scalar> build_model(const EncoderConfig& enc, const DecoderConfig& dec, std::uint64_t seed) {
  return E2VModel<Scalar>(ModelConfig{enc, dec, seed});
}

template <typename Scalar>
Tensor5<Scalar> encode(const E2VModel<Scalar>& model, const Tensor5<Scalar>& frames) {
  return model.encode(frames);
}

template <typename Scalar>
Tensor5<Scalar> decode(const E2VModel<Scalar>& model, const Tensor5<Scalar>& hidden) {
  return model.decode(hidden);
}

template <typename Scalar>
Index count_parameters(E2VModel<Scalar>& model) {
  Index total = 0;
  for (const auto* p : model.parameters()) total += p->value.size();
  return total;
}

/// Shapes produced by each encoder step, for reporting.
std::vector<std::pair<std::string, Shape5>> encoder_shape_trace(const EncoderConfig& enc, const Shape5& input);

template <typename Scalar>
struct LossResult {
  double loss = 0.0;
  Tensor5<Scalar> grad;  ///< d loss / d pred
};

/// Mean binary cross-entropy over every voxel in the batch, with predictions
/// clamped to [1e-7, 1 - 1e-7].
template <typename Scalar>
LossResult<Scalar> bce_loss(const Tensor5<Scalar>& pred, const Tensor5<Scalar>& target) {
  if (pred.shape() != target.shape()) {
    throw Error(Errc::ResolutionMismatch, pred.shape().str() + " vs " + target.shape().str());
  }
  LossResult<Scalar> out{0.0, Tensor5<Scalar>(pred.shape())};
  const double count = static_cast<double>(pred.size());
  double sum = 0.0;
  for (Index i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(static_cast<double>(pred[i]), kProbFloor, 1.0 - kProbFloor);
    const double v = static_cast<double>(target[i]);
    sum += v * std::log(p) + (1.0 - v) * std::log(1.0 - p);
    out.grad[i] = static_cast<Scalar>((p - v) / (p * (1.0 - p)) / count);
  }
  out.loss = -sum / count;
  return out;
}

/// Lifts binary frames to a 1 x 1 x D x H x W tensor.
template <typename Scalar>
Tensor5<Scalar> frames_to_tensor(const FrameStack& frames);

/// Batch of voxel grids -> N x 1 x R x R x R tensor of {0, 1}.
template <typename Scalar>
Tensor5<Scalar> voxels_to_tensor(const std::vector<const VoxelGrid*>& grids);

/// Sample n of an N x 1 x R x R x R probability tensor.
template <typename Scalar>
ProbGrid tensor_to_probgrid(const Tensor5<Scalar>& probs, Index n);

}  // namespace e2v

#include "e2v/model_impl.hpp"
