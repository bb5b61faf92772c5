#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fcvsr/archive.hpp"
#include "fcvsr/nn.hpp"
#include "fcvsr/video.hpp"

namespace fcvsr {

/// A video super-resolution backbone consumes 3-channel frames (here: codec
/// latents, which look like a plain short video) and upscales them by a fixed
/// integer factor. One invocation = one frame processed.
template <typename T>
struct Backbone {
  virtual ~Backbone() = default;
  virtual std::string name() const = 0;
  virtual int scale() const = 0;
  virtual Tensor<T> run(const Tensor<T>& frame) const = 0;
};

template <typename T>
std::vector<Tensor<T>> super_resolve(const Backbone<T>& backbone,
                                     const std::vector<Tensor<T>>& frames) {
  std::vector<Tensor<T>> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(backbone.run(f));
  return out;
}

/// How many backbone invocations a clip costs once frames are grouped:
/// the group count of the plan, instead of one per frame.
inline int backbone_invocation_count(int frame_count, int group_size, int overlap,
                                     int colors = 3) {
  return plan_groups(frame_count * colors, group_size, overlap).group_count();
}

struct BackboneConfig {
  std::string name = "toy";
  int scale = 4;
  int width = 64;
  int blocks = 8;
};

template <typename T>
struct IdentityBackbone final : Backbone<T> {
  std::string name() const override { return "identity"; }
  int scale() const override { return 1; }
  Tensor<T> run(const Tensor<T>& frame) const override { return frame; }

  struct Cache {};
  ParamRefs<T> params() { return {}; }
  void zero_grad() {}
  Tensor<T> run_train(const Tensor<T>& x, Cache*) const { return x; }
  Tensor<T> backward(const Cache&, const Tensor<T>& dout, bool) { return dout; }
};

template <typename T>
struct BicubicBackbone final : Backbone<T> {
  int factor = 4;
  explicit BicubicBackbone(int s = 4) : factor(s) {}
  std::string name() const override { return "bicubic"; }
  int scale() const override { return factor; }
  Tensor<T> run(const Tensor<T>& frame) const override { return bicubic_upsample(frame, factor); }

  struct Cache {
    int in_h = 0, in_w = 0;
  };
  ParamRefs<T> params() { return {}; }
  void zero_grad() {}
  Tensor<T> run_train(const Tensor<T>& x, Cache* c) const {
    if (c) *c = {x.height, x.width};
    return bicubic_upsample(x, factor);
  }
  Tensor<T> backward(const Cache& c, const Tensor<T>& dout, bool) {
    return bicubic_upsample_backward(dout, factor, c.in_h, c.in_w);
  }
};

/// Small trainable reference backbone: residual trunk, pixel-shuffle upscale,
/// bicubic skip. The upscale conv starts zeroed, so an untrained net is
/// exactly bicubic interpolation.
template <typename T>
struct ToyBackbone final : Backbone<T> {
  int factor = 4, width = 64;
  Conv2d<T> in_conv, up_conv;
  std::vector<ResBlock<T>> blocks;

  ToyBackbone() = default;
  ToyBackbone(const BackboneConfig& cfg, Rng& rng) { init(cfg, rng); }

  void init(const BackboneConfig& cfg, Rng& rng) {
    if (cfg.scale < 1) throw ConfigError("toy backbone: scale must be >= 1");
    if (cfg.width < 1 || cfg.blocks < 0) throw ConfigError("toy backbone: bad width/blocks");
    factor = cfg.scale;
    width = cfg.width;
    in_conv.init(3, width, 3, rng);
    blocks.resize(cfg.blocks);
    for (auto& b : blocks) b.init(width, rng);
    up_conv.init(width, 3 * factor * factor, 3, rng);
    up_conv.zero_output();
  }

  std::string name() const override { return "toy"; }
  int scale() const override { return factor; }

  struct Cache {
    Tensor<T> x, pre_in, act_in, feat;
    std::vector<typename ResBlock<T>::Cache> bl;
  };

  Tensor<T> run_train(const Tensor<T>& x, Cache* cache) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    c.x = x;
    c.pre_in = in_conv.forward(x);
    c.act_in = lrelu(c.pre_in);
    Tensor<T> h = c.act_in;
    c.bl.resize(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i)
      h = blocks[i].forward(h, cache ? &c.bl[i] : nullptr);
    c.feat = std::move(h);
    Tensor<T> y = pixel_shuffle(up_conv.forward(c.feat), factor);
    const Tensor<T> skip = bicubic_upsample(x, factor);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += skip.data[i];
    return y;
  }

  Tensor<T> run(const Tensor<T>& frame) const override { return run_train(frame, nullptr); }

  Tensor<T> backward(const Cache& c, const Tensor<T>& dout, bool accumulate_grads) {
    Tensor<T> dup = pixel_shuffle_backward(dout, factor);
    Tensor<T> dh = up_conv.backward(c.feat, dup, accumulate_grads);
    for (std::size_t i = blocks.size(); i-- > 0;) dh = blocks[i].backward(c.bl[i], dh, accumulate_grads);
    Tensor<T> dpre = lrelu_backward(c.pre_in, dh);
    Tensor<T> dx = in_conv.backward(c.x, dpre, accumulate_grads);
    Tensor<T> dskip = bicubic_upsample_backward(dout, factor, c.x.height, c.x.width);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dskip.data[i];
    return dx;
  }

  ParamRefs<T> params() {
    ParamRefs<T> refs;
    in_conv.collect(refs, "backbone/in");
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(refs, "backbone/block" + std::to_string(i));
    up_conv.collect(refs, "backbone/up");
    return refs;
  }

  void zero_grad() {
    for (auto& [name, p] : params()) p->zero_grad();
  }
};

template <typename T>
using BackboneFactory =
    std::function<std::unique_ptr<Backbone<T>>(const BackboneConfig&, Rng&)>;

template <typename T>
std::map<std::string, BackboneFactory<T>>& backbone_registry() {
  static std::map<std::string, BackboneFactory<T>> reg = {
      {"identity",
       [](const BackboneConfig&, Rng&) { return std::make_unique<IdentityBackbone<T>>(); }},
      {"bicubic",
       [](const BackboneConfig& cfg, Rng&) { return std::make_unique<BicubicBackbone<T>>(cfg.scale); }},
      {"toy",
       [](const BackboneConfig& cfg, Rng& rng) { return std::make_unique<ToyBackbone<T>>(cfg, rng); }},
  };
  return reg;
}

template <typename T>
void register_backbone(const std::string& name, BackboneFactory<T> factory) {
  backbone_registry<T>()[name] = std::move(factory);
}

template <typename T>
std::unique_ptr<Backbone<T>> make_backbone(const BackboneConfig& cfg, Rng& rng) {
  auto& reg = backbone_registry<T>();
  auto it = reg.find(cfg.name);
  if (it == reg.end()) {
    std::string known;
    for (const auto& [k, v] : reg) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError("unknown backbone '" + cfg.name + "' (known: " + known + ")");
  }
  return it->second(cfg, rng);
}

template <typename T>
void save_backbone(const std::filesystem::path& dir, ToyBackbone<T>& bb, long step = 0) {
  nlohmann::json header = {{"format", "fcvsr-params"},
                           {"version", 1},
                           {"kind", "backbone"},
                           {"step", step},
                           {"arch",
                            {{"name", "toy"},
                             {"scale", bb.factor},
                             {"width", bb.width},
                             {"blocks", static_cast<int>(bb.blocks.size())}}}};
  archive::write_header(dir, header);
  archive::save_tensors(dir, bb.params());
}

template <typename T>
ToyBackbone<T> load_toy_backbone(const std::filesystem::path& dir, long* step_out = nullptr) {
  const auto header = archive::read_header(dir);
  if (header.value("kind", "") != "backbone")
    throw DataError("archive under " + dir.string() + " is not a backbone archive");
  const auto& arch = header.at("arch");
  if (arch.value("name", "") != "toy")
    throw DataError("only 'toy' backbone archives can be loaded, got '" +
                    arch.value("name", "") + "'");
  BackboneConfig cfg;
  try {
    cfg.scale = arch.at("scale").get<int>();
    cfg.width = arch.at("width").get<int>();
    cfg.blocks = arch.at("blocks").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("backbone archive header is incomplete: ") + e.what());
  }
  ToyBackbone<T> bb;
  Rng rng(0);
  bb.init(cfg, rng);
  archive::load_tensors(dir, bb.params());
  if (step_out) *step_out = header.value("step", 0L);
  return bb;
}

}  // namespace fcvsr
