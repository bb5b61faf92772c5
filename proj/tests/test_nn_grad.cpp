#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "fcvsr/backbone.hpp"
#include "fcvsr/codec.hpp"
#include "fcvsr/train.hpp"

using namespace fcvsr;

namespace {

Tensor<double> random_tensor(int c, int h, int w, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(c, h, w);
  std::uniform_real_distribution<double> uni(lo, hi);
  for (auto& v : t.data) v = uni(rng);
  return t;
}

void randomize(Param<double>& p, Rng& rng, double scale = 0.1) {
  std::uniform_real_distribution<double> uni(-scale, scale);
  for (auto& v : p.v) v = uni(rng);
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.same_shape(b));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

/// Central finite difference through an arbitrary scalar function, perturbing
/// one double slot in place.
double fd(const std::function<double()>& loss, double& slot, double h) {
  const double orig = slot;
  slot = orig + h;
  const double lp = loss();
  slot = orig - h;
  const double lm = loss();
  slot = orig;
  return (lp - lm) / (2.0 * h);
}

int check_grads(const std::function<double()>& loss, std::vector<double>& values,
                const std::vector<double>& analytic, double tol, double h = 1e-5) {
  REQUIRE(values.size() == analytic.size());
  int bad = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double num = fd(loss, values[i], h);
    const double scale = std::max({1.0, std::fabs(num), std::fabs(analytic[i])});
    if (std::fabs(num - analytic[i]) > tol * scale) {
      ++bad;
      INFO("slot " << i << ": analytic " << analytic[i] << " vs fd " << num);
      CHECK(std::fabs(num - analytic[i]) <= tol * scale);
    }
  }
  return bad;
}

int check_param_grads(const std::function<double()>& loss, ParamRefs<double> refs, double tol,
                      double h = 1e-5) {
  int bad = 0;
  for (auto& [name, p] : refs) {
    INFO("parameter " << name);
    std::vector<double> analytic(p->g.begin(), p->g.end());
    bad += check_grads(loss, p->v, analytic, tol, h);
  }
  return bad;
}

}  // namespace

TEST_CASE("leaky relu gradient") {
  Rng rng(1);
  Tensor<double> x = random_tensor(2, 4, 5, rng);
  const Tensor<double> w = random_tensor(2, 4, 5, rng);
  auto loss = [&] { return dot(lrelu(x), w); };
  const Tensor<double> dx = lrelu_backward(x, w);
  std::vector<double> analytic(dx.data.begin(), dx.data.end());
  CHECK(check_grads(loss, x.data, analytic, 1e-7) == 0);
}

TEST_CASE("convolution gradients for input, weight, and bias") {
  Rng rng(2);
  Conv2d<double> conv;
  conv.init(2, 3, 3, rng);
  Tensor<double> x = random_tensor(2, 6, 5, rng);
  const Tensor<double> w = random_tensor(3, 6, 5, rng);
  auto loss = [&] { return dot(conv.forward(x), w); };

  conv.weight.zero_grad();
  conv.bias.zero_grad();
  const Tensor<double> dx = conv.backward(x, w, true);
  std::vector<double> analytic(dx.data.begin(), dx.data.end());
  CHECK(check_grads(loss, x.data, analytic, 1e-7) == 0);
  ParamRefs<double> refs;
  conv.collect(refs, "conv");
  CHECK(check_param_grads(loss, refs, 1e-7) == 0);
}

TEST_CASE("channel attention gradients") {
  Rng rng(3);
  ChannelAttention<double> attn;
  attn.init(4, 2, rng);
  randomize(attn.b1, rng);
  randomize(attn.b2, rng);
  Tensor<double> x = random_tensor(4, 4, 5, rng);
  const Tensor<double> w = random_tensor(4, 4, 5, rng);
  auto loss = [&] { return dot(attn.forward(x), w); };

  typename ChannelAttention<double>::Cache cache;
  attn.forward(x, &cache);
  for (auto& [name, p] : [&] {
         ParamRefs<double> r;
         attn.collect(r, "attn");
         return r;
       }())
    p->zero_grad();
  const Tensor<double> dx = attn.backward(cache, w, true);
  std::vector<double> analytic(dx.data.begin(), dx.data.end());
  CHECK(check_grads(loss, x.data, analytic, 1e-7) == 0);
  ParamRefs<double> refs;
  attn.collect(refs, "attn");
  CHECK(check_param_grads(loss, refs, 1e-7) == 0);
}

TEST_CASE("residual block gradients") {
  Rng rng(4);
  ResBlock<double> block;
  block.init(3, rng);
  Tensor<double> x = random_tensor(3, 6, 5, rng);
  const Tensor<double> w = random_tensor(3, 6, 5, rng);
  auto loss = [&] { return dot(block.forward(x), w); };

  ParamRefs<double> refs;
  block.collect(refs, "block");
  for (auto& [name, p] : refs) p->zero_grad();
  typename ResBlock<double>::Cache cache;
  block.forward(x, &cache);
  const Tensor<double> dx = block.backward(cache, w, true);
  std::vector<double> analytic(dx.data.begin(), dx.data.end());
  CHECK(check_grads(loss, x.data, analytic, 1e-7) == 0);
  CHECK(check_param_grads(loss, refs, 1e-7) == 0);
}

TEST_CASE("pixel shuffle round trip and exact adjoint") {
  Rng rng(5);
  const Tensor<double> x = random_tensor(8, 3, 4, rng);
  const Tensor<double> y = pixel_shuffle(x, 2);
  REQUIRE(y.channels == 2);
  REQUIRE(y.height == 6);
  REQUIRE(y.width == 8);
  const Tensor<double> back = pixel_shuffle_backward(y, 2);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(back.data[i] == x.data[i]);

  const Tensor<double> w = random_tensor(2, 6, 8, rng);
  CHECK(dot(pixel_shuffle(x, 2), w) == Catch::Approx(dot(x, pixel_shuffle_backward(w, 2))));
  CHECK_THROWS_AS(pixel_shuffle(random_tensor(3, 4, 4, rng), 2), ShapeError);
}

TEST_CASE("bicubic upsample adjoint identity") {
  Rng rng(6);
  const Tensor<double> x = random_tensor(3, 5, 6, rng);
  const Tensor<double> w = random_tensor(3, 10, 12, rng);
  const double lhs = dot(bicubic_upsample(x, 2), w);
  const double rhs = dot(x, bicubic_upsample_backward(w, 2, 5, 6));
  CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("bicubic upsample reproduces constants and known ratios") {
  Tensor<double> flat(1, 4, 4);
  flat.fill(0.7);
  const auto up = bicubic_upsample(flat, 4);
  for (double v : up.data) CHECK(v == Catch::Approx(0.7).epsilon(1e-12));
  // kernel weights at the sampled offsets sum to one
  const auto taps = fcvsr::detail::bicubic_taps(1, 4);
  CHECK(taps.w[0] + taps.w[1] + taps.w[2] + taps.w[3] == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cleaning network gradients") {
  Rng rng(7);
  CleaningNet<double> net;
  net.init(3, 4, 1, rng);
  randomize(net.out_conv.weight, rng);  // zero-initialized otherwise
  Tensor<double> x = random_tensor(3, 6, 6, rng, 0.0, 1.0);
  const Tensor<double> w = random_tensor(3, 6, 6, rng);
  auto loss = [&] { return dot(net.forward(x), w); };

  ParamRefs<double> refs;
  net.collect(refs, "cleaning");
  for (auto& [name, p] : refs) p->zero_grad();
  typename CleaningNet<double>::Cache cache;
  net.forward(x, &cache);
  const Tensor<double> dx = net.backward(cache, w, true);
  std::vector<double> analytic(dx.data.begin(), dx.data.end());
  CHECK(check_grads(loss, x.data, analytic, 1e-6) == 0);
  CHECK(check_param_grads(loss, refs, 1e-6) == 0);
}

TEST_CASE("group coder gradients") {
  Rng rng(8);
  GroupCoder<double> coder;
  coder.init(5, 2, 4, 1, 2, rng);
  Tensor<double> x = random_tensor(5, 6, 6, rng, 0.0, 1.0);
  const Tensor<double> w = random_tensor(2, 6, 6, rng);
  auto loss = [&] { return dot(coder.forward(x), w); };

  ParamRefs<double> refs;
  coder.collect(refs, "coder");
  for (auto& [name, p] : refs) p->zero_grad();
  typename GroupCoder<double>::Cache cache;
  coder.forward(x, &cache);
  const Tensor<double> dx = coder.backward(cache, w, true);
  std::vector<double> analytic(dx.data.begin(), dx.data.end());
  CHECK(check_grads(loss, x.data, analytic, 1e-6) == 0);
  CHECK(check_param_grads(loss, refs, 1e-6) == 0);
}

TEST_CASE("group coder gradients with mean skip") {
  Rng rng(81);
  GroupCoder<double> coder;
  coder.init(8, 3, 4, 1, 2, rng);  // 6 group channels + 2 flow channels in
  coder.skip = CoderSkip::group_mean;
  coder.skip_colors = 3;
  coder.skip_span = 6;
  Tensor<double> x = random_tensor(8, 5, 5, rng, 0.0, 1.0);
  const Tensor<double> w = random_tensor(3, 5, 5, rng);
  auto loss = [&] { return dot(coder.forward(x), w); };

  ParamRefs<double> refs;
  coder.collect(refs, "coder");
  for (auto& [name, p] : refs) p->zero_grad();
  typename GroupCoder<double>::Cache cache;
  coder.forward(x, &cache);
  const Tensor<double> dx = coder.backward(cache, w, true);
  std::vector<double> analytic(dx.data.begin(), dx.data.end());
  CHECK(check_grads(loss, x.data, analytic, 1e-6) == 0);
  CHECK(check_param_grads(loss, refs, 1e-6) == 0);
}

TEST_CASE("group coder gradients with replicate skip") {
  Rng rng(82);
  GroupCoder<double> coder;
  coder.init(3, 6, 4, 1, 2, rng);
  coder.skip = CoderSkip::replicate;
  coder.skip_colors = 3;
  Tensor<double> x = random_tensor(3, 5, 5, rng, 0.0, 1.0);
  const Tensor<double> w = random_tensor(6, 5, 5, rng);
  auto loss = [&] { return dot(coder.forward(x), w); };

  ParamRefs<double> refs;
  coder.collect(refs, "coder");
  for (auto& [name, p] : refs) p->zero_grad();
  typename GroupCoder<double>::Cache cache;
  coder.forward(x, &cache);
  const Tensor<double> dx = coder.backward(cache, w, true);
  std::vector<double> analytic(dx.data.begin(), dx.data.end());
  CHECK(check_grads(loss, x.data, analytic, 1e-6) == 0);
  CHECK(check_param_grads(loss, refs, 1e-6) == 0);
}

TEST_CASE("toy backbone gradients") {
  Rng rng(9);
  BackboneConfig cfg;
  cfg.scale = 2;
  cfg.width = 4;
  cfg.blocks = 1;
  ToyBackbone<double> bb(cfg, rng);
  randomize(bb.up_conv.weight, rng);  // zero-initialized otherwise
  Tensor<double> x = random_tensor(3, 5, 5, rng, 0.0, 1.0);
  const Tensor<double> w = random_tensor(3, 10, 10, rng);
  auto loss = [&] { return dot(bb.run(x), w); };

  bb.zero_grad();
  typename ToyBackbone<double>::Cache cache;
  bb.run_train(x, &cache);
  const Tensor<double> dx = bb.backward(cache, w, true);
  std::vector<double> analytic(dx.data.begin(), dx.data.end());
  CHECK(check_grads(loss, x.data, analytic, 1e-6) == 0);
  CHECK(check_param_grads(loss, bb.params(), 1e-6) == 0);
}

TEST_CASE("color correction gradient") {
  Rng rng(10);
  Tensor<double> x = random_tensor(3, 6, 6, rng, 0.0, 1.0);
  const Tensor<double> ref = random_tensor(3, 4, 4, rng, 0.0, 1.0);
  const Tensor<double> w = random_tensor(3, 6, 6, rng);
  auto loss = [&] { return dot(color_correct(x, ref), w); };
  const Tensor<double> dx = color_correct_backward(x, ref, w);
  std::vector<double> analytic(dx.data.begin(), dx.data.end());
  CHECK(check_grads(loss, x.data, analytic, 1e-6) == 0);
}

TEST_CASE("charbonnier values and gradient") {
  Tensor<double> pred(1, 2, 2), gt(1, 2, 2);
  pred.fill(0.3);
  gt.fill(0.3);
  CHECK(charbonnier_loss(pred, gt, 1e-3) == Catch::Approx(1e-3).epsilon(1e-12));
  pred.fill(0.3 + 3e-3);
  CHECK(charbonnier_loss(pred, gt, 4e-3) == Catch::Approx(5e-3).epsilon(1e-12));

  Rng rng(11);
  Tensor<double> p = random_tensor(2, 3, 3, rng);
  const Tensor<double> g = random_tensor(2, 3, 3, rng);
  auto loss = [&] { return charbonnier_loss(p, g, 1e-3); };
  std::vector<double> analytic(p.size());
  const double inv = 1.0 / static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p.data[i] - g.data[i];
    analytic[i] = d / std::sqrt(d * d + 1e-6) * inv;
  }
  CHECK(check_grads(loss, p.data, analytic, 1e-7) == 0);
}

TEST_CASE("full pipeline gradients through merge, color correction, and padding") {
  Rng rng(12);
  CodecHyper hyper;
  hyper.group_size = 6;
  hyper.overlap = 3;
  hyper.coder_width = 4;
  hyper.coder_blocks = 1;
  hyper.cleaning_width = 4;
  hyper.cleaning_blocks = 1;
  hyper.cleaning_passes = 2;
  hyper.attention_reduction = 2;
  CodecModel<double> codec;
  codec.init(hyper, rng);
  randomize(codec.cleaning.out_conv.weight, rng, 0.05);

  BackboneConfig bcfg;
  bcfg.scale = 2;
  bcfg.width = 4;
  bcfg.blocks = 1;
  ToyBackbone<double> backbone(bcfg, rng);
  randomize(backbone.up_conv.weight, rng, 0.05);

  VideoSequence<double> input, target;
  for (int t = 0; t < 3; ++t) {
    input.frames.push_back(random_tensor(3, 8, 8, rng, 0.0, 1.0));
    target.frames.push_back(random_tensor(3, 16, 16, rng, 0.0, 1.0));
  }

  FlowConfig flow;
  flow.method = FlowMethod::zero;  // conditioning is a constant either way

  codec.zero_grad();
  backbone.zero_grad();
  supervised_step(codec, backbone, input, target, flow, 1e-3, true, true);

  auto loss = [&] {
    return supervised_step(codec, backbone, input, target, flow, 1e-3, false, false);
  };
  ParamRefs<double> refs = codec.params();
  for (auto& ref : backbone.params()) refs.push_back(ref);
  CHECK(check_param_grads(loss, refs, 1e-5, 3e-6) == 0);
}
