#pragma once

#include <filesystem>
#include <vector>

#include "fcvsr/archive.hpp"
#include "fcvsr/core.hpp"
#include "fcvsr/flow.hpp"
#include "fcvsr/nn.hpp"
#include "fcvsr/video.hpp"

namespace fcvsr {

struct CodecHyper {
  int group_size = 9;   // channels per group (S)
  int overlap = 3;      // shared channels between neighbors (O)
  int latent_channels = 3;
  int coder_width = 64;
  int coder_blocks = 2;
  int cleaning_width = 64;
  int cleaning_blocks = 5;
  int cleaning_passes = 3;
  int attention_reduction = 4;
  int colors = 3;

  int frames_per_group() const { return group_size / colors; }
  int flow_channels() const { return 2 * (frames_per_group() - 1); }
  int encoder_inputs() const { return group_size + flow_channels(); }

  void validate() const {
    if (colors != 3) throw ConfigError("codec: colors must be 3 (RGB frames)");
    if (group_size <= 0 || group_size % colors != 0)
      throw ConfigError("codec: group_size must be a positive multiple of the color count");
    if (overlap < 0 || overlap >= group_size || overlap % colors != 0)
      throw ConfigError("codec: overlap must be a multiple of the color count in [0, group_size)");
    if (latent_channels != colors)
      throw ConfigError("codec: latent_channels must equal the color count so latents form a video");
    if (coder_width < 1 || coder_blocks < 0 || cleaning_width < 1 || cleaning_blocks < 0)
      throw ConfigError("codec: widths must be positive and block counts non-negative");
    if (cleaning_passes < 1) throw ConfigError("codec: cleaning_passes must be >= 1");
    if (attention_reduction < 1) throw ConfigError("codec: attention_reduction must be >= 1");
  }

  bool operator==(const CodecHyper&) const = default;
};

/// Residual artifact remover: x + out(blocks(lrelu(in(x)))). The output conv
/// starts zeroed, so an untrained net is exactly the identity.
template <typename T>
struct CleaningNet {
  Conv2d<T> in_conv, out_conv;
  std::vector<ResBlock<T>> blocks;

  struct Cache {
    Tensor<T> x, pre_in, act_in, feat;
    std::vector<typename ResBlock<T>::Cache> bl;
  };

  void init(int colors, int width, int block_count, Rng& rng) {
    in_conv.init(colors, width, 3, rng);
    blocks.resize(block_count);
    for (auto& b : blocks) b.init(width, rng);
    out_conv.init(width, colors, 3, rng);
    out_conv.zero_output();
  }

  void collect(ParamRefs<T>& refs, const std::string& prefix) {
    in_conv.collect(refs, prefix + "/in");
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(refs, prefix + "/block" + std::to_string(i));
    out_conv.collect(refs, prefix + "/out");
  }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    c.x = x;
    c.pre_in = in_conv.forward(x);
    c.act_in = lrelu(c.pre_in);
    c.bl.resize(blocks.size());
    Tensor<T> h = c.act_in;
    for (std::size_t i = 0; i < blocks.size(); ++i)
      h = blocks[i].forward(h, cache ? &c.bl[i] : nullptr);
    c.feat = std::move(h);
    Tensor<T> y = out_conv.forward(c.feat);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += x.data[i];
    return y;
  }

  Tensor<T> backward(const Cache& c, const Tensor<T>& dout, bool accumulate_grads) {
    Tensor<T> dh = out_conv.backward(c.feat, dout, accumulate_grads);
    for (std::size_t i = blocks.size(); i-- > 0;)
      dh = blocks[i].backward(c.bl[i], dh, accumulate_grads);
    Tensor<T> dpre = lrelu_backward(c.pre_in, dh);
    Tensor<T> dx = in_conv.backward(c.x, dpre, accumulate_grads);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dout.data[i];
    return dx;
  }
};

/// Parameter-free shortcut around the coder trunk. The encoder adds the
/// channelwise mean frame of the group to the latent; the decoder adds the
/// latent replicated across the group's frame slots. Together they make
/// mean-frame replication the zero-effort round trip, so the trunks only
/// have to regress residual motion and artifact corrections.
enum class CoderSkip { none, group_mean, replicate };

/// Shared trunk of the group encoder and decoder: 3x3 in conv, residual
/// blocks, 1x1 channel mixer, channel attention, 3x3 out conv, plus an
/// optional parameter-free skip (see CoderSkip).
template <typename T>
struct GroupCoder {
  Conv2d<T> in_conv, mix, out_conv;
  std::vector<ResBlock<T>> blocks;
  ChannelAttention<T> attn;
  CoderSkip skip = CoderSkip::none;
  int skip_colors = 3;  // channels per frame slot
  int skip_span = 0;    // leading input channels covered by the mean skip

  struct Cache {
    Tensor<T> x, pre_in, act_in, feat, pre_mix, act_mix, attn_out;
    std::vector<typename ResBlock<T>::Cache> bl;
    typename ChannelAttention<T>::Cache at;
  };

  void init(int in_ch, int out_ch, int width, int block_count, int reduction, Rng& rng) {
    in_conv.init(in_ch, width, 3, rng);
    blocks.resize(block_count);
    for (auto& b : blocks) b.init(width, rng);
    mix.init(width, width, 1, rng);
    attn.init(width, reduction, rng);
    out_conv.init(width, out_ch, 3, rng);
  }

  void collect(ParamRefs<T>& refs, const std::string& prefix) {
    in_conv.collect(refs, prefix + "/in");
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(refs, prefix + "/block" + std::to_string(i));
    mix.collect(refs, prefix + "/mix");
    attn.collect(refs, prefix + "/attn");
    out_conv.collect(refs, prefix + "/out");
  }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
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
    c.pre_mix = mix.forward(c.feat);
    c.act_mix = lrelu(c.pre_mix);
    c.attn_out = attn.forward(c.act_mix, cache ? &c.at : nullptr);
    Tensor<T> out = out_conv.forward(c.attn_out);
    add_skip(x, out);
    return out;
  }

  Tensor<T> backward(const Cache& c, const Tensor<T>& dout, bool accumulate_grads) {
    Tensor<T> d = out_conv.backward(c.attn_out, dout, accumulate_grads);
    d = attn.backward(c.at, d, accumulate_grads);
    d = lrelu_backward(c.pre_mix, d);
    d = mix.backward(c.feat, d, accumulate_grads);
    for (std::size_t i = blocks.size(); i-- > 0;) d = blocks[i].backward(c.bl[i], d, accumulate_grads);
    d = lrelu_backward(c.pre_in, d);
    Tensor<T> dx = in_conv.backward(c.x, d, accumulate_grads);
    add_skip_grad(dout, dx);
    return dx;
  }

 private:
  void add_skip(const Tensor<T>& x, Tensor<T>& out) const {
    if (skip == CoderSkip::group_mean) {
      const int fpg = skip_span / skip_colors;
      const T inv = T(1) / static_cast<T>(fpg);
      for (int c0 = 0; c0 < skip_colors; ++c0) {
        T* o = out.plane(c0);
        for (int f = 0; f < fpg; ++f) {
          const T* p = x.plane(f * skip_colors + c0);
          for (std::size_t i = 0; i < out.plane_size(); ++i) o[i] += inv * p[i];
        }
      }
    } else if (skip == CoderSkip::replicate) {
      for (int s = 0; s < out.channels; ++s) {
        T* o = out.plane(s);
        const T* p = x.plane(s % skip_colors);
        for (std::size_t i = 0; i < out.plane_size(); ++i) o[i] += p[i];
      }
    }
  }

  void add_skip_grad(const Tensor<T>& dout, Tensor<T>& dx) const {
    if (skip == CoderSkip::group_mean) {
      const int fpg = skip_span / skip_colors;
      const T inv = T(1) / static_cast<T>(fpg);
      for (int c0 = 0; c0 < skip_colors; ++c0) {
        const T* g = dout.plane(c0);
        for (int f = 0; f < fpg; ++f) {
          T* d = dx.plane(f * skip_colors + c0);
          for (std::size_t i = 0; i < dout.plane_size(); ++i) d[i] += inv * g[i];
        }
      }
    } else if (skip == CoderSkip::replicate) {
      for (int s = 0; s < dout.channels; ++s) {
        const T* g = dout.plane(s);
        T* d = dx.plane(s % skip_colors);
        for (std::size_t i = 0; i < dout.plane_size(); ++i) d[i] += g[i];
      }
    }
  }
};

/// The full learned codec: cleaning applied per frame, an encoder squeezing a
/// flow-conditioned channel group to one latent frame, and a decoder
/// expanding a (possibly super-resolved) latent back to its group.
template <typename T>
struct CodecModel {
  CodecHyper hyper;
  CleaningNet<T> cleaning;
  GroupCoder<T> encoder;  // (S + flow channels) -> latent_channels
  GroupCoder<T> decoder;  // latent_channels -> S, scale-agnostic

  void init(const CodecHyper& h, Rng& rng) {
    h.validate();
    hyper = h;
    cleaning.init(h.colors, h.cleaning_width, h.cleaning_blocks, rng);
    encoder.init(h.encoder_inputs(), h.latent_channels, h.coder_width, h.coder_blocks,
                 h.attention_reduction, rng);
    decoder.init(h.latent_channels, h.group_size, h.coder_width, h.coder_blocks,
                 h.attention_reduction, rng);
    if (h.latent_channels == h.colors) {
      encoder.skip = CoderSkip::group_mean;
      encoder.skip_colors = h.colors;
      encoder.skip_span = h.group_size;
      decoder.skip = CoderSkip::replicate;
      decoder.skip_colors = h.colors;
    }
  }

  ParamRefs<T> params() {
    ParamRefs<T> refs;
    cleaning.collect(refs, "cleaning");
    encoder.collect(refs, "encoder");
    decoder.collect(refs, "decoder");
    return refs;
  }

  void zero_grad() {
    for (auto& [name, p] : params()) p->zero_grad();
  }
};

/// Matches the statistics of `sr` to `ref` channel by channel:
/// out = (sr - mean_sr) / max(std_sr, eps) * std_ref + mean_ref.
/// eps only guards the degenerate constant-channel case; above it the
/// normalization is exact, which keeps the operation idempotent. Population
/// standard deviation, accumulation in double. The two frames may differ in
/// spatial size (only channel statistics cross over).
template <typename T>
Tensor<T> color_correct(const Tensor<T>& sr, const Tensor<T>& ref, double eps = 1e-6) {
  if (sr.channels != ref.channels) throw ShapeError("color_correct: channel count mismatch");
  Tensor<T> out(sr.channels, sr.height, sr.width);
  for (int c = 0; c < sr.channels; ++c) {
    const T* sp = sr.plane(c);
    const T* rp = ref.plane(c);
    double ms = 0.0, ms2 = 0.0, mr = 0.0, mr2 = 0.0;
    for (std::size_t i = 0; i < sr.plane_size(); ++i) {
      ms += sp[i];
      ms2 += static_cast<double>(sp[i]) * sp[i];
    }
    for (std::size_t i = 0; i < ref.plane_size(); ++i) {
      mr += rp[i];
      mr2 += static_cast<double>(rp[i]) * rp[i];
    }
    ms /= static_cast<double>(sr.plane_size());
    ms2 /= static_cast<double>(sr.plane_size());
    mr /= static_cast<double>(ref.plane_size());
    mr2 /= static_cast<double>(ref.plane_size());
    const double ss = std::sqrt(std::max(0.0, ms2 - ms * ms));
    const double rs = std::sqrt(std::max(0.0, mr2 - mr * mr));
    const double gain = rs / std::max(ss, eps);
    T* op = out.plane(c);
    for (std::size_t i = 0; i < sr.plane_size(); ++i)
      op[i] = static_cast<T>((static_cast<double>(sp[i]) - ms) * gain + mr);
  }
  return out;
}

/// d(color_correct)/d(sr) applied to an upstream gradient. The reference is a
/// constant. For channel values x with mean m, std s > eps, gain k = std_ref/s:
/// dx_j = k*(g_j - mean(g)) - k/s * (sum_i g_i (x_i-m)) * (x_j-m)/(n*s).
/// At or below eps the gain is locally constant, so the second term vanishes.
template <typename T>
Tensor<T> color_correct_backward(const Tensor<T>& sr, const Tensor<T>& ref, const Tensor<T>& dout,
                                 double eps = 1e-6) {
  require_same_shape(sr, dout, "color_correct_backward");
  Tensor<T> dx(sr.channels, sr.height, sr.width);
  const double n = static_cast<double>(sr.plane_size());
  for (int c = 0; c < sr.channels; ++c) {
    const T* sp = sr.plane(c);
    const T* rp = ref.plane(c);
    const T* gp = dout.plane(c);
    double ms = 0.0, ms2 = 0.0, mr = 0.0, mr2 = 0.0;
    for (std::size_t i = 0; i < sr.plane_size(); ++i) {
      ms += sp[i];
      ms2 += static_cast<double>(sp[i]) * sp[i];
    }
    for (std::size_t i = 0; i < ref.plane_size(); ++i) {
      mr += rp[i];
      mr2 += static_cast<double>(rp[i]) * rp[i];
    }
    ms /= n;
    ms2 /= n;
    mr /= static_cast<double>(ref.plane_size());
    mr2 /= static_cast<double>(ref.plane_size());
    const double ss = std::sqrt(std::max(0.0, ms2 - ms * ms));
    const double rs = std::sqrt(std::max(0.0, mr2 - mr * mr));
    const double gain = rs / std::max(ss, eps);

    double gsum = 0.0, gdot = 0.0;
    for (std::size_t i = 0; i < sr.plane_size(); ++i) {
      gsum += gp[i];
      gdot += static_cast<double>(gp[i]) * (static_cast<double>(sp[i]) - ms);
    }
    const double gmean = gsum / n;
    const double std_coef = ss > eps ? gain / ss * gdot / (n * ss) : 0.0;
    T* dp = dx.plane(c);
    for (std::size_t i = 0; i < sr.plane_size(); ++i)
      dp[i] = static_cast<T>(gain * (static_cast<double>(gp[i]) - gmean) -
                             std_coef * (static_cast<double>(sp[i]) - ms));
  }
  return dx;
}

/// One latent frame per channel group plus everything needed to invert the
/// mapping. Latents have latent_channels channels, so downstream tools can
/// treat them as a plain (shorter) video.
template <typename T>
struct LatentClip {
  std::vector<Tensor<T>> latents;
  GroupingPlan plan;
  double frame_rate = 25.0;
};

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.height != b.height || a.width != b.width)
    throw ShapeError("concat_channels: spatial mismatch");
  Tensor<T> out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

template <typename T>
VideoSequence<T> clean_sequence(const VideoSequence<T>& video, const CodecModel<T>& codec) {
  VideoSequence<T> cleaned;
  cleaned.frame_rate = video.frame_rate;
  for (const auto& f : video.frames) {
    Tensor<T> h = f;
    for (int p = 0; p < codec.hyper.cleaning_passes; ++p) h = codec.cleaning.forward(h);
    cleaned.frames.push_back(std::move(h));
  }
  return cleaned;
}

/// Full analysis path: clean every frame, stack, group with overlap, estimate
/// per-group flows to the center frame, encode each group to one latent frame.
template <typename T>
LatentClip<T> compress_sequence(const VideoSequence<T>& video, const CodecModel<T>& codec,
                                const FlowConfig& flow = {}) {
  video.validate("compress_sequence");
  if (video.frames[0].channels != codec.hyper.colors)
    throw ShapeError("compress_sequence: frame channel count disagrees with the codec");
  const VideoSequence<T> cleaned = clean_sequence(video, codec);
  const FrameCube<T> cube = stack(cleaned);
  LatentClip<T> out;
  out.frame_rate = video.frame_rate;
  out.plan = plan_groups(cube.data.channels, codec.hyper.group_size, codec.hyper.overlap);
  const auto groups = extract_groups(cube, out.plan);
  out.latents.reserve(groups.size());
  for (const auto& g : groups) {
    const Tensor<T> flows = group_flows(g, flow, codec.hyper.colors);
    out.latents.push_back(codec.encoder.forward(concat_channels(g.data, flows)));
  }
  return out;
}

/// Synthesis path: decode every latent back to its channel group (at whatever
/// spatial scale the latents now carry), average overlapped channels, split
/// into frames, then match each frame's color statistics to its source frame.
template <typename T>
VideoSequence<T> decompress_sequence(const std::vector<Tensor<T>>& latents,
                                     const GroupingPlan& plan, const VideoSequence<T>& reference,
                                     const CodecModel<T>& codec, double eps = 1e-6) {
  if (static_cast<int>(latents.size()) != plan.group_count())
    throw ShapeError("decompress_sequence: latent count disagrees with the plan");
  std::vector<ChannelGroup<T>> groups(latents.size());
  for (std::size_t g = 0; g < latents.size(); ++g) {
    groups[g].data = codec.decoder.forward(latents[g]);
    groups[g].range = plan.ranges[g];
  }
  const FrameCube<T> cube =
      merge_groups(groups, plan, codec.hyper.colors, reference.frame_rate);
  VideoSequence<T> video = unstack(cube);
  if (video.frame_count() != reference.frame_count())
    throw ShapeError("decompress_sequence: reference frame count disagrees with the plan");
  for (int t = 0; t < video.frame_count(); ++t)
    video.frames[t] = color_correct(video.frames[t], reference.frames[t], eps);
  return video;
}

inline nlohmann::json hyper_to_json(const CodecHyper& h) {
  return {{"group_size", h.group_size},
          {"overlap", h.overlap},
          {"latent_channels", h.latent_channels},
          {"coder_width", h.coder_width},
          {"coder_blocks", h.coder_blocks},
          {"cleaning_width", h.cleaning_width},
          {"cleaning_blocks", h.cleaning_blocks},
          {"cleaning_passes", h.cleaning_passes},
          {"attention_reduction", h.attention_reduction},
          {"colors", h.colors}};
}

inline CodecHyper hyper_from_json(const nlohmann::json& j) {
  CodecHyper h;
  try {
    h.group_size = j.at("group_size").get<int>();
    h.overlap = j.at("overlap").get<int>();
    h.latent_channels = j.at("latent_channels").get<int>();
    h.coder_width = j.at("coder_width").get<int>();
    h.coder_blocks = j.at("coder_blocks").get<int>();
    h.cleaning_width = j.at("cleaning_width").get<int>();
    h.cleaning_blocks = j.at("cleaning_blocks").get<int>();
    h.cleaning_passes = j.at("cleaning_passes").get<int>();
    h.attention_reduction = j.at("attention_reduction").get<int>();
    h.colors = j.at("colors").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("codec archive header is incomplete: ") + e.what());
  }
  h.validate();
  return h;
}

template <typename T>
void save_codec(const std::filesystem::path& dir, CodecModel<T>& codec, long step = 0) {
  nlohmann::json header = {{"format", "fcvsr-params"},
                           {"version", 1},
                           {"kind", "codec"},
                           {"step", step},
                           {"arch", hyper_to_json(codec.hyper)}};
  archive::write_header(dir, header);
  archive::save_tensors(dir, codec.params());
}

template <typename T>
CodecModel<T> load_codec(const std::filesystem::path& dir, long* step_out = nullptr) {
  const auto header = archive::read_header(dir);
  if (header.value("kind", "") != "codec")
    throw DataError("archive under " + dir.string() + " is not a codec archive");
  CodecModel<T> codec;
  Rng rng(0);
  codec.init(hyper_from_json(header.at("arch")), rng);
  archive::load_tensors(dir, codec.params());
  if (step_out) *step_out = header.value("step", 0L);
  return codec;
}

}  // namespace fcvsr
