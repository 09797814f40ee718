#pragma once

// Template definitions for model.hpp.

#include <algorithm>

namespace e2v {

template <typename Scalar>
E2VModel<Scalar>::E2VModel(const ModelConfig& cfg) : cfg_(cfg) {
  const EncoderConfig& enc = cfg.encoder;
  const DecoderConfig& dec = cfg.decoder;
  if (enc.in_channels <= 0 || enc.stem.out_channels <= 0) {
    throw Error(Errc::ChannelMismatch, "encoder channel counts must be positive");
  }
  if (dec.channels.empty() ||
      std::any_of(dec.channels.begin(), dec.channels.end(), [](Index c) { return c <= 0; })) {
    throw Error(Errc::ChannelMismatch, "decoder needs at least one positive channel level");
  }
  for (const auto& st : enc.stages) {
    if (st.blocks <= 0 || st.width <= 0) throw Error(Errc::ChannelMismatch, "empty encoder stage");
  }
  const Index3 hid = enc.hidden;
  const Index span = Index{1} << (dec.levels() - 1);
  if (hid[0] <= 0 || hid[0] != hid[1] || hid[0] != hid[2] || hid[0] % span != 0) {
    throw Error(Errc::ShapeMismatch, "hidden volume must be a cube divisible by 2^(levels-1)");
  }

  const Index3 stem_pad{enc.stem.kernel[0] / 2, enc.stem.kernel[1] / 2, enc.stem.kernel[2] / 2};
  stem_ = nn::ConvUnit<Scalar>(
      "encoder.stem", ConvSpec{enc.in_channels, enc.stem.out_channels, enc.stem.kernel, enc.stem.stride, stem_pad},
      enc.norm);
  stem_pool_ = enc.stem.pool;
  pool_ = nn::MaxPool3d<Scalar>({3, 3, 3}, {2, 2, 2}, {1, 1, 1});
  Index channels = enc.stem.out_channels;
  for (std::size_t s = 0; s < enc.stages.size(); ++s) {
    const StageConfig& st = enc.stages[s];
    for (Index b = 0; b < st.blocks; ++b) {
      const std::string name = "encoder.stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
      blocks_.emplace_back(name, channels, st.width, b == 0 ? st.stride : Index3{1, 1, 1}, enc.norm);
      channels = st.width * nn::Bottleneck<Scalar>::kExpansion;
    }
  }

  const auto& ch = dec.channels;
  in_proj_ = nn::ConvUnit<Scalar>("decoder.in_proj", ConvSpec{channels, ch[0]}, dec.norm);
  top_ = nn::ConvUnit<Scalar>("decoder.level0", ConvSpec{ch[0], ch[0], {3, 3, 3}, {1, 1, 1}, {1, 1, 1}}, dec.norm);
  for (Index l = 1; l < dec.levels(); ++l) {
    const std::string lvl = std::to_string(l);
    down_.emplace_back("decoder.down" + lvl, ConvSpec{ch[l - 1], ch[l], {3, 3, 3}, {2, 2, 2}, {1, 1, 1}}, dec.norm);
    up_.emplace_back("decoder.up" + lvl, ConvSpec{ch[l], ch[l - 1], {2, 2, 2}, {2, 2, 2}, {0, 0, 0}},
                     dec.norm == nn::NormKind::none);
    up_norm_.emplace_back("decoder.up" + lvl + ".norm", ch[l - 1], dec.norm);
    up_act_.emplace_back();
    fuse_.emplace_back("decoder.fuse" + lvl, ConvSpec{2 * ch[l - 1], ch[l - 1], {3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
                       dec.norm);
  }
  head_ = nn::Conv3d<Scalar>("decoder.head", ConvSpec{ch[0], 1});
  initialize();
}

template <typename Scalar>
void E2VModel<Scalar>::initialize() {
  Rng rng(cfg_.seed);
  stem_.init(rng);
  for (auto& b : blocks_) b.init(rng);
  in_proj_.init(rng);
  top_.init(rng);
  for (std::size_t l = 0; l < down_.size(); ++l) {
    down_[l].init(rng);
    up_[l].init(rng);
    up_norm_[l].init(rng);
    fuse_[l].init(rng);
  }
  head_.init(rng);
}

template <typename Scalar>
nn::ParamList<Scalar> E2VModel<Scalar>::parameters() {
  nn::ParamList<Scalar> out;
  stem_.collect(out);
  for (auto& b : blocks_) b.collect(out);
  in_proj_.collect(out);
  top_.collect(out);
  for (std::size_t l = 0; l < down_.size(); ++l) {
    down_[l].collect(out);
    up_[l].collect(out);
    up_norm_[l].collect(out);
    fuse_[l].collect(out);
  }
  head_.collect(out);
  return out;
}

template <typename Scalar>
nn::BufferList<Scalar> E2VModel<Scalar>::buffers() {
  nn::BufferList<Scalar> out;
  stem_.collect_buffers(out);
  for (auto& b : blocks_) b.collect_buffers(out);
  in_proj_.collect_buffers(out);
  top_.collect_buffers(out);
  for (std::size_t l = 0; l < down_.size(); ++l) {
    down_[l].collect_buffers(out);
    up_norm_[l].collect_buffers(out);
    fuse_[l].collect_buffers(out);
  }
  return out;
}

template <typename Scalar>
void E2VModel<Scalar>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename Scalar>
Shape5 E2VModel<Scalar>::check_input(const Tensor5<Scalar>& frames) const {
  const Shape5& s = frames.shape();
  if (s.n <= 0 || s.c != cfg_.encoder.in_channels || s.volume() <= 0) {
    throw Error(Errc::ShapeMismatch, "encoder expects N x " + std::to_string(cfg_.encoder.in_channels) +
                                         " x D x H x W, got " + s.str());
  }
  return s;
}

template <typename Scalar>
Tensor5<Scalar> E2VModel<Scalar>::encode(const Tensor5<Scalar>& frames) const {
  check_input(frames);
  Tensor5<Scalar> h = stem_.forward(frames);
  if (stem_pool_) h = pool_.forward(h);
  for (const auto& b : blocks_) h = b.forward(h);
  return adaptive_resize_forward(h, cfg_.encoder.hidden);
}

template <typename Scalar>
Tensor5<Scalar> E2VModel<Scalar>::encode_train(const Tensor5<Scalar>& frames) {
  check_input(frames);
  Tensor5<Scalar> h = stem_.forward_train(frames);
  if (stem_pool_) h = pool_.forward_train(h);
  for (auto& b : blocks_) h = b.forward_train(h);
  encoder_tail_shape_ = h.shape();
  return adaptive_resize_forward(h, cfg_.encoder.hidden);
}

template <typename Scalar>
Tensor5<Scalar> E2VModel<Scalar>::encode_backward(const Tensor5<Scalar>& grad_hidden) {
  Tensor5<Scalar> g = adaptive_resize_backward(grad_hidden, encoder_tail_shape_);
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
  if (stem_pool_) g = pool_.backward(g);
  return stem_.backward(g);
}

namespace detail {

inline void check_hidden(const Shape5& s, Index channels, const Index3& hidden) {
  if (s.c != channels || s.spatial() != hidden || s.n <= 0) {
    throw Error(Errc::ShapeMismatch, "decoder expects N x " + std::to_string(channels) + " x " +
                                         std::to_string(hidden[0]) + "^3 hidden volume, got " + s.str());
  }
}

}  // namespace detail

template <typename Scalar>
Tensor5<Scalar> E2VModel<Scalar>::decode(const Tensor5<Scalar>& hidden) const {
  detail::check_hidden(hidden.shape(), cfg_.encoder.hidden_channels(), cfg_.encoder.hidden);
  Tensor5<Scalar> x = top_.forward(in_proj_.forward(hidden));
  std::vector<Tensor5<Scalar>> skips{x};
  for (const auto& d : down_) {
    x = d.forward(x);
    skips.push_back(x);
  }
  for (std::size_t l = up_.size(); l-- > 0;) {
    Tensor5<Scalar> u = up_act_[l].forward(up_norm_[l].forward(up_[l].forward(x)));
    x = fuse_[l].forward(concat_channels(u, skips[l]));
  }
  const auto lo = static_cast<Scalar>(kProbFloor);
  return clamp_forward(sigmoid_forward(head_.forward(x)), lo, static_cast<Scalar>(1.0 - kProbFloor));
}

template <typename Scalar>
Tensor5<Scalar> E2VModel<Scalar>::decode_train(const Tensor5<Scalar>& hidden) {
  detail::check_hidden(hidden.shape(), cfg_.encoder.hidden_channels(), cfg_.encoder.hidden);
  Tensor5<Scalar> x = top_.forward_train(in_proj_.forward_train(hidden));
  std::vector<Tensor5<Scalar>> skips{x};
  for (auto& d : down_) {
    x = d.forward_train(x);
    skips.push_back(x);
  }
  for (std::size_t l = up_.size(); l-- > 0;) {
    Tensor5<Scalar> u = up_act_[l].forward_train(up_norm_[l].forward_train(up_[l].forward_train(x)));
    x = fuse_[l].forward_train(concat_channels(u, skips[l]));
  }
  head_logits_ = head_.forward_train(x);
  head_sigmoid_ = sigmoid_forward(head_logits_);
  const auto lo = static_cast<Scalar>(kProbFloor);
  return clamp_forward(head_sigmoid_, lo, static_cast<Scalar>(1.0 - kProbFloor));
}

template <typename Scalar>
Tensor5<Scalar> E2VModel<Scalar>::decode_backward(const Tensor5<Scalar>& grad_probs) {
  const auto lo = static_cast<Scalar>(kProbFloor);
  Tensor5<Scalar> g = clamp_backward(grad_probs, head_sigmoid_, lo, static_cast<Scalar>(1.0 - kProbFloor));
  g = head_.backward(sigmoid_backward(g, head_sigmoid_));
  std::vector<Tensor5<Scalar>> skip_grads;
  for (std::size_t l = 0; l < up_.size(); ++l) {
    auto [gu, gskip] = split_channels(fuse_[l].backward(g), cfg_.decoder.channels[l]);
    skip_grads.push_back(std::move(gskip));
    g = up_[l].backward(up_norm_[l].backward(up_act_[l].backward(gu)));
  }
  for (std::size_t l = down_.size(); l-- > 0;) {
    g = down_[l].backward(g);
    g.data() += skip_grads[l].data();
  }
  return in_proj_.backward(top_.backward(g));
}

template <typename Scalar>
Tensor5<Scalar> frames_to_tensor(const FrameStack& frames) {
  Tensor5<Scalar> t(Shape5{1, 1, frames.depth, frames.height, frames.width});
  for (Index i = 0; i < t.size(); ++i) t[i] = frames.cells[static_cast<std::size_t>(i)] ? Scalar(1) : Scalar(0);
  return t;
}

template <typename Scalar>
Tensor5<Scalar> voxels_to_tensor(const std::vector<const VoxelGrid*>& grids) {
  if (grids.empty()) throw Error(Errc::EmptyDataset, "no voxel grids");
  const Index r = grids.front()->resolution();
  Tensor5<Scalar> t(Shape5{static_cast<Index>(grids.size()), 1, r, r, r});
  const Index vol = r * r * r;
  for (std::size_t n = 0; n < grids.size(); ++n) {
    if (grids[n]->resolution() != r) throw Error(Errc::ResolutionMismatch, "mixed label resolutions");
    for (Index i = 0; i < vol; ++i) t[static_cast<Index>(n) * vol + i] = (*grids[n])[i] ? Scalar(1) : Scalar(0);
  }
  return t;
}

template <typename Scalar>
ProbGrid tensor_to_probgrid(const Tensor5<Scalar>& probs, Index n) {
  const Shape5& s = probs.shape();
  if (s.c != 1 || s.d != s.h || s.d != s.w || n < 0 || n >= s.n) {
    throw Error(Errc::ShapeMismatch, "expected N x 1 x R^3 probabilities, got " + s.str());
  }
  const Index vol = s.volume();
  Eigen::ArrayXd v = probs.data().segment(n * vol, vol).template cast<double>().array();
  return ProbGrid(s.d, std::move(v));
}

}  // namespace e2v
