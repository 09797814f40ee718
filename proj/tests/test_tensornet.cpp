#include <doctest.h>

#include <cmath>

#include "e2v/layers.hpp"
#include "e2v/nn.hpp"
#include "layer_checks.hpp"

using namespace e2v;
using e2v::testing::inner;
using e2v::testing::random_tensor;

namespace {

/// Seven-deep loop cross-correlation, written without im2col.
Tensor5<double> naive_conv(const Tensor5<double>& x, const Tensor5<double>& w, const Tensor5<double>& b,
                           const ConvSpec& s) {
  const Shape5 xs = x.shape();
  const Index od = (xs.d + 2 * s.padding[0] - s.kernel[0]) / s.stride[0] + 1;
  const Index oh = (xs.h + 2 * s.padding[1] - s.kernel[1]) / s.stride[1] + 1;
  const Index ow = (xs.w + 2 * s.padding[2] - s.kernel[2]) / s.stride[2] + 1;
  Tensor5<double> y({xs.n, s.out_channels, od, oh, ow});
  for (Index n = 0; n < xs.n; ++n)
    for (Index co = 0; co < s.out_channels; ++co)
      for (Index d = 0; d < od; ++d)
        for (Index h = 0; h < oh; ++h)
          for (Index q = 0; q < ow; ++q) {
            double acc = b[co];
            for (Index ci = 0; ci < xs.c; ++ci)
              for (Index a = 0; a < s.kernel[0]; ++a)
                for (Index bb = 0; bb < s.kernel[1]; ++bb)
                  for (Index e = 0; e < s.kernel[2]; ++e) {
                    const Index id = d * s.stride[0] - s.padding[0] + a;
                    const Index ih = h * s.stride[1] - s.padding[1] + bb;
                    const Index iw = q * s.stride[2] - s.padding[2] + e;
                    if (id < 0 || ih < 0 || iw < 0 || id >= xs.d || ih >= xs.h || iw >= xs.w) continue;
                    acc += w(co, ci, a, bb, e) * x(n, ci, id, ih, iw);
                  }
            y(n, co, d, h, q) = acc;
          }
  return y;
}

Tensor5<double> ones(const Shape5& s) { return Tensor5<double>::constant(s, 1.0); }

}  // namespace

TEST_SUITE("conv3d") {
  TEST_CASE("1x1x1 identity kernel reproduces the input") {
    Rng rng(1);
    const auto x = random_tensor({2, 1, 3, 4, 5}, rng);
    const auto y = conv3d_forward(x, ones({1, 1, 1, 1, 1}), Tensor5<double>({1, 1, 1, 1, 1}), ConvSpec{1, 1});
    CHECK(y == x);
  }

  TEST_CASE("all-ones 2x2x2 kernel over all-ones input sums to 8") {
    ConvSpec spec{1, 1, {2, 2, 2}};
    const auto y = conv3d_forward(ones({1, 1, 2, 2, 2}), ones({1, 1, 2, 2, 2}), Tensor5<double>({1, 1, 1, 1, 1}), spec);
    REQUIRE(y.shape() == Shape5{1, 1, 1, 1, 1});
    CHECK(y[0] == 8.0);
  }

  TEST_CASE("matches the naive loop reference") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      Rng rng(seed);
      const Index st = 1 + static_cast<Index>(seed % 2), pad = static_cast<Index>(seed / 2 % 2);
      ConvSpec spec{2, 3, {2, 2, 2}, {st, st, st}, {pad, pad, pad}};
      const auto x = random_tensor({1, 2, 3, 4, 4}, rng);
      const auto w = random_tensor({3, 2, 2, 2, 2}, rng);
      const auto b = random_tensor({1, 3, 1, 1, 1}, rng);
      const auto fast = conv3d_forward(x, w, b, spec);
      const auto slow = naive_conv(x, w, b, spec);
      REQUIRE(fast.shape() == slow.shape());
      CHECK((fast.data() - slow.data()).cwiseAbs().maxCoeff() < 1e-13);
    }
  }

  TEST_CASE("odd kernel with stride 1 and half padding preserves spatial dims") {
    for (Index k : {1, 3, 5}) {
      ConvSpec spec{1, 2, {k, k, k}, {1, 1, 1}, {k / 2, k / 2, k / 2}};
      CHECK(conv_output_dims({5, 6, 7}, spec) == Index3{5, 6, 7});
    }
  }

  TEST_CASE("zero upstream gradient leaves everything zero") {
    Rng rng(3);
    ConvSpec spec{2, 3, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}};
    const auto x = random_tensor({1, 2, 3, 4, 4}, rng);
    const auto w = random_tensor({3, 2, 3, 3, 3}, rng);
    Tensor5<double> gw(w.shape()), gb({1, 3, 1, 1, 1});
    const auto gx = conv3d_backward(Tensor5<double>({1, 3, 3, 4, 4}), x, w, spec, gw, gb);
    CHECK(gx.data().isZero(0.0));
    CHECK(gw.data().isZero(0.0));
    CHECK(gb.data().isZero(0.0));
  }

  TEST_CASE("scalar convolution: d(out)/d(weight) is the input value") {
    Tensor5<double> x = Tensor5<double>::constant({1, 1, 1, 1, 1}, 0.37);
    Tensor5<double> w = Tensor5<double>::constant({1, 1, 1, 1, 1}, 2.0);
    Tensor5<double> gw(w.shape()), gb(w.shape());
    conv3d_backward(ones({1, 1, 1, 1, 1}), x, w, ConvSpec{1, 1}, gw, gb);
    CHECK(gw[0] == 0.37);
    CHECK(gb[0] == 1.0);
  }

  TEST_CASE("backward is linear in the upstream gradient") {
    Rng rng(4);
    ConvSpec spec{2, 2, {3, 3, 3}, {2, 2, 2}, {1, 1, 1}};
    const auto x = random_tensor({1, 2, 4, 4, 4}, rng);
    const auto w = random_tensor({2, 2, 3, 3, 3}, rng);
    const auto g = random_tensor({1, 2, 2, 2, 2}, rng);
    Tensor5<double> gw1(w.shape()), gb1({1, 2, 1, 1, 1}), gw2(w.shape()), gb2({1, 2, 1, 1, 1});
    Tensor5<double> g3(g.shape(), 3.0 * g.data());
    const auto a = conv3d_backward(g, x, w, spec, gw1, gb1);
    const auto b = conv3d_backward(g3, x, w, spec, gw2, gb2);
    CHECK((b.data() - 3.0 * a.data()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((gw2.data() - 3.0 * gw1.data()).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto s = e2v::testing::gradcheck_conv3d(seed);
      CHECK(s.max_rel < 1e-6);
      CHECK(s.checked > 100);
    }
  }

  TEST_CASE("channel mismatch is rejected") {
    CHECK_THROWS_AS(conv3d_forward(ones({1, 2, 2, 2, 2}), ones({1, 1, 1, 1, 1}), ones({1, 1, 1, 1, 1}),
                                   ConvSpec{1, 1}),
                    Error);
  }

  TEST_CASE("forward is bitwise deterministic in float") {
    Rng rng(9);
    ConvSpec spec{3, 4, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}};
    const auto x = random_tensor({2, 3, 5, 8, 8}, rng).cast<float>();
    const auto w = random_tensor({4, 3, 3, 3, 3}, rng).cast<float>();
    const auto b = random_tensor({1, 4, 1, 1, 1}, rng).cast<float>();
    CHECK(conv3d_forward(x, w, b, spec) == conv3d_forward(x, w, b, spec));
  }
}

TEST_SUITE("deconv3d") {
  TEST_CASE("stride-2 k=2 impulse response is a copy of the kernel") {
    Rng rng(5);
    ConvSpec spec{1, 1, {2, 2, 2}, {2, 2, 2}};
    const auto w = random_tensor({1, 1, 2, 2, 2}, rng);
    const auto y = deconv3d_forward(ones({1, 1, 1, 1, 1}), w, Tensor5<double>({1, 1, 1, 1, 1}), spec);
    REQUIRE(y.shape() == Shape5{1, 1, 2, 2, 2});
    CHECK(y.data() == w.data());
  }

  TEST_CASE("output extent is (in - 1) * s - 2p + k") {
    CHECK(deconv_extent(4, 2, 2, 0) == 8);
    CHECK(deconv_extent(3, 3, 2, 1) == 5);
  }

  TEST_CASE("forward equals the conv input-gradient with the same kernel") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      const Index st = 1 + static_cast<Index>(seed % 2);
      // conv maps 3 -> 2 channels; the deconv maps 2 -> 3
      ConvSpec conv{3, 2, {3, 3, 3}, {st, st, st}, {1, 1, 1}};
      ConvSpec deconv{2, 3, {3, 3, 3}, {st, st, st}, {1, 1, 1}};
      const auto big = random_tensor({1, 3, 5, 5, 5}, rng);
      const auto w = random_tensor({2, 3, 3, 3, 3}, rng);
      const Index3 small = conv_output_dims({5, 5, 5}, conv);
      const auto y = random_tensor({1, 2, small[0], small[1], small[2]}, rng);
      Tensor5<double> gw(w.shape()), gb({1, 2, 1, 1, 1});
      const auto adj = conv3d_backward(y, big, w, conv, gw, gb);
      if (deconv_output_dims(small, deconv) != big.shape().spatial()) continue;
      const auto fwd = deconv3d_forward(y, w, Tensor5<double>({1, 3, 1, 1, 1}), deconv);
      CHECK((fwd.data() - adj.data()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("adjoint identity <conv(x), y> = <x, deconv(y)>") {
    for (std::uint64_t seed = 10; seed < 20; ++seed) {
      Rng rng(seed);
      ConvSpec conv{2, 3, {2, 2, 2}, {2, 2, 2}, {0, 0, 0}};
      ConvSpec deconv{3, 2, {2, 2, 2}, {2, 2, 2}, {0, 0, 0}};
      const auto x = random_tensor({2, 2, 4, 6, 4}, rng);
      const auto w = random_tensor({3, 2, 2, 2, 2}, rng);
      const Tensor5<double> zb3({1, 3, 1, 1, 1}), zb2({1, 2, 1, 1, 1});
      const auto cx = conv3d_forward(x, w, zb3, conv);
      const auto y = random_tensor(cx.shape(), rng);
      const auto dy = deconv3d_forward(y, w, zb2, deconv);
      CHECK(std::abs(inner(cx, y) - inner(x, dy)) < 1e-10);
    }
  }

  TEST_CASE("gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) CHECK(e2v::testing::gradcheck_deconv3d(seed).max_rel < 1e-6);
  }
}

TEST_SUITE("norm") {
  TEST_CASE("constant channel maps to the shift") {
    const auto x = Tensor5<double>::constant({2, 1, 2, 2, 2}, 4.2);
    const auto gain = Tensor5<double>::constant({1, 1, 1, 1, 1}, 1.7);
    const auto shift = Tensor5<double>::constant({1, 1, 1, 1, 1}, -0.3);
    NormCache<double> cache;
    const auto y = norm_forward_train(x, gain, shift, 1e-5, cache);
    CHECK(y.data().isApproxToConstant(-0.3, 0.0));
  }

  TEST_CASE("unit gain, zero shift standardizes each channel") {
    Rng rng(2);
    const auto x = random_tensor({3, 2, 3, 4, 4}, rng, -5.0, 9.0);
    NormCache<double> cache;
    const auto y = norm_forward_train(x, ones({1, 2, 1, 1, 1}), Tensor5<double>({1, 2, 1, 1, 1}), 1e-5, cache);
    for (Index c = 0; c < 2; ++c) {
      double sum = 0.0, sq = 0.0, n = 0.0;
      for (Index b = 0; b < 3; ++b)
        for (Index i = 0; i < y.shape().volume(); ++i) {
          const double v = y.sample(b)(c, i);
          sum += v, sq += v * v, n += 1.0;
        }
      const double mean = sum / n;
      CHECK(std::abs(mean) < 1e-5);
      CHECK(std::abs(sq / n - mean * mean - 1.0) < 1e-3);
    }
  }

  TEST_CASE("zero batch volume is rejected") {
    NormCache<double> cache;
    CHECK_THROWS_AS(norm_forward_train(Tensor5<double>({0, 1, 2, 2, 2}), ones({1, 1, 1, 1, 1}),
                                       ones({1, 1, 1, 1, 1}), 1e-5, cache),
                    Error);
  }

  TEST_CASE("eval mode uses running statistics") {
    nn::Norm3d<double> norm("n", 1, nn::NormKind::batch);
    Rng rng(3);
    norm.init(rng);
    const auto x = random_tensor({1, 1, 2, 2, 2}, rng);
    // fresh running stats are (0, 1): eval output is x / sqrt(1 + eps)
    const auto y = norm.forward(x);
    CHECK((y.data() - x.data() / std::sqrt(1.0 + 1e-5)).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) CHECK(e2v::testing::gradcheck_norm(seed).max_rel < 1e-6);
  }
}

TEST_SUITE("activations") {
  TEST_CASE("relu and sigmoid spot values") {
    Tensor5<double> x({1, 1, 1, 1, 3});
    x[0] = -1.0, x[1] = 2.0, x[2] = 0.0;
    const auto r = relu_forward(x);
    CHECK(r[0] == 0.0);
    CHECK(r[1] == 2.0);
    CHECK(sigmoid_forward(x)[2] == 0.5);
    CHECK(sigmoid_forward(x.cast<float>())[2] == 0.5f);
  }

  TEST_CASE("sigmoid stays inside (0, 1) for moderate inputs and is finite everywhere") {
    Tensor5<double> x({1, 1, 1, 1, 4});
    x[0] = -30, x[1] = 30, x[2] = -800, x[3] = 800;
    const auto s = sigmoid_forward(x);
    CHECK(s[0] > 0.0);
    CHECK(s[1] < 1.0);
    CHECK(s.all_finite());
  }

  TEST_CASE("gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      CHECK(e2v::testing::gradcheck_relu(seed).max_rel < 1e-6);
      CHECK(e2v::testing::gradcheck_sigmoid(seed).max_rel < 1e-6);
    }
  }
}

TEST_SUITE("resize and pooling") {
  TEST_CASE("matching target is the identity") {
    Rng rng(1);
    const auto x = random_tensor({1, 2, 3, 4, 5}, rng);
    CHECK(adaptive_resize_forward(x, {3, 4, 5}) == x);
  }

  TEST_CASE("4 -> 2 along depth keeps planes 0 and 2") {
    Tensor5<double> x({1, 1, 4, 1, 1});
    for (Index i = 0; i < 4; ++i) x[i] = 10.0 + i;
    const auto y = adaptive_resize_forward(x, {2, 1, 1});
    CHECK(y[0] == 10.0);
    CHECK(y[1] == 12.0);
  }

  TEST_CASE("downsample then matching upsample recovers the kept planes") {
    Tensor5<double> x({1, 1, 2, 1, 1});
    x[0] = 1.0, x[1] = 2.0;
    const auto up = adaptive_resize_forward(x, {4, 1, 1});
    CHECK(adaptive_resize_forward(up, {2, 1, 1}) == x);
  }

  TEST_CASE("gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      CHECK(e2v::testing::gradcheck_adaptive_resize(seed).max_rel < 1e-6);
      CHECK(e2v::testing::gradcheck_maxpool(seed).max_rel < 1e-6);
    }
  }

  TEST_CASE("concat then split round-trips") {
    Rng rng(6);
    const auto a = random_tensor({2, 2, 2, 2, 2}, rng);
    const auto b = random_tensor({2, 3, 2, 2, 2}, rng);
    const auto [ga, gb] = split_channels(concat_channels(a, b), 2);
    CHECK(ga == a);
    CHECK(gb == b);
  }
}
