#include "e2v/model.hpp"

namespace e2v {

EncoderConfig EncoderConfig::full() {
  EncoderConfig c;
  c.stem = StemConfig{{7, 7, 7}, {2, 2, 2}, 64, true};
  c.stages = {{3, 64, {1, 1, 1}}, {8, 128, {2, 2, 2}}, {36, 256, {2, 2, 2}}, {3, 512, {2, 2, 2}}};
  c.hidden = {32, 32, 32};
  return c;
}

EncoderConfig EncoderConfig::toy() {
  EncoderConfig c;
  c.stem = StemConfig{{3, 3, 3}, {2, 2, 2}, 8, false};
  c.stages = {{1, 8, {1, 1, 1}}, {1, 16, {2, 2, 2}}};
  c.hidden = {8, 8, 8};
  return c;
}

DecoderConfig DecoderConfig::full() { return DecoderConfig{{64, 128, 256}, nn::NormKind::batch}; }

DecoderConfig DecoderConfig::toy() { return DecoderConfig{{16, 32}, nn::NormKind::none}; }

std::vector<std::pair<std::string, Shape5>> encoder_shape_trace(const EncoderConfig& enc, const Shape5& input) {
  std::vector<std::pair<std::string, Shape5>> trace{{"input", input}};
  const Index3 pad{enc.stem.kernel[0] / 2, enc.stem.kernel[1] / 2, enc.stem.kernel[2] / 2};
  Index3 dims = conv_output_dims(input.spatial(), ConvSpec{1, 1, enc.stem.kernel, enc.stem.stride, pad});
  Index channels = enc.stem.out_channels;
  trace.emplace_back("stem", Shape5{input.n, channels, dims[0], dims[1], dims[2]});
  if (enc.stem.pool) {
    dims = conv_output_dims(dims, ConvSpec{1, 1, {3, 3, 3}, {2, 2, 2}, {1, 1, 1}});
    trace.emplace_back("pool", Shape5{input.n, channels, dims[0], dims[1], dims[2]});
  }
  for (std::size_t s = 0; s < enc.stages.size(); ++s) {
    dims = conv_output_dims(dims, ConvSpec{1, 1, {3, 3, 3}, enc.stages[s].stride, {1, 1, 1}});
    channels = enc.stages[s].width * nn::Bottleneck<float>::kExpansion;
    trace.emplace_back("stage" + std::to_string(s + 1), Shape5{input.n, channels, dims[0], dims[1], dims[2]});
  }
  trace.emplace_back("hidden", Shape5{input.n, channels, enc.hidden[0], enc.hidden[1], enc.hidden[2]});
  return trace;
}

}  // namespace e2v
