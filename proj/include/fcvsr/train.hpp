#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fcvsr/backbone.hpp"
#include "fcvsr/codec.hpp"
#include "fcvsr/degrade.hpp"
#include "fcvsr/metrics.hpp"
#include "fcvsr/synth.hpp"

namespace fcvsr {

/// Smooth L1 surrogate: mean over elements of sqrt(d^2 + eps^2). Identical
/// inputs give eps (up to summation rounding).
template <typename T>
double charbonnier_loss(const Tensor<T>& pred, const Tensor<T>& gt, double eps = 1e-3) {
  require_same_shape(pred, gt, "charbonnier_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(gt.data[i]);
    acc += std::sqrt(d * d + eps * eps);
  }
  return acc / static_cast<double>(pred.size());
}

/// Half-cosine decay from lr0 at step 0 to 0 at step total.
inline double cosine_lr(long step, long total_steps, double lr0) {
  if (total_steps <= 0) throw ParamError("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps) throw ParamError("cosine_lr: step outside [0, total]");
  const double pi = std::acos(-1.0);
  return lr0 * 0.5 * (1.0 + std::cos(pi * static_cast<double>(step) / total_steps));
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// First/second moment buffers keyed by parameter name; double precision so
/// the update sequence is reproducible across widths.
struct AdamState {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments;
  long t = 0;
};

/// One bias-corrected Adam update over every listed parameter. Throws on
/// non-finite gradients, naming the offending tensor.
template <typename T>
void adam_step(ParamRefs<T>& params, AdamState& state, double lr, const AdamConfig& cfg = {}) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    auto& [m, v] = state.moments[name];
    if (m.size() != p->count()) {
      m.assign(p->count(), 0.0);
      v.assign(p->count(), 0.0);
    }
    for (std::size_t i = 0; i < p->count(); ++i) {
      const double g = static_cast<double>(p->g[i]);
      if (!std::isfinite(g))
        throw std::runtime_error("training aborted: non-finite gradient in '" + name +
                                 "' at optimizer step " + std::to_string(state.t));
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      p->v[i] = static_cast<T>(static_cast<double>(p->v[i]) - lr * mh / (std::sqrt(vh) + cfg.eps));
    }
  }
}

inline void save_optimizer(const std::filesystem::path& dir, const AdamState& state) {
  for (const auto& [name, mv] : state.moments) {
    std::vector<float> m(mv.first.begin(), mv.first.end());
    std::vector<float> v(mv.second.begin(), mv.second.end());
    archive::write_blob(dir, "opt/" + name + "/m", m);
    archive::write_blob(dir, "opt/" + name + "/v", v);
  }
  nlohmann::json j = {{"t", state.t}};
  std::ofstream out(dir / "opt_state.json");
  out << j.dump(2) << "\n";
}

template <typename T>
bool load_optimizer(const std::filesystem::path& dir, const ParamRefs<T>& params,
                    AdamState& state) {
  std::ifstream in(dir / "opt_state.json");
  if (!in) return false;
  nlohmann::json j;
  in >> j;
  state.t = j.value("t", 0L);
  state.moments.clear();
  for (const auto& [name, p] : params) {
    if (!archive::blob_exists(dir, "opt/" + name + "/m")) return false;
    const auto m = archive::read_blob(dir, "opt/" + name + "/m", p->count());
    const auto v = archive::read_blob(dir, "opt/" + name + "/v", p->count());
    auto& mv = state.moments[name];
    mv.first.assign(m.begin(), m.end());
    mv.second.assign(v.begin(), v.end());
  }
  return true;
}

/// One supervised example: a degraded LR input, its pre-compression version
/// (stage-1 target) and the original HR clip (stage-2 target).
template <typename T>
struct TrainClip {
  VideoSequence<T> lr;
  VideoSequence<T> lr_clean;
  VideoSequence<T> hr;
  int crf = 0;
};

template <typename T>
struct Dataset {
  std::vector<TrainClip<T>> train;
  std::vector<TrainClip<T>> heldout;
};

struct DatasetConfig {
  int train_clips = 12;
  int heldout_clips = 4;
  std::uint64_t seed = 7;
  SynthConfig synth;
  DegradeConfig degrade;                  // crf field ignored; the mix decides
  double compressed_fraction = 0.5;
  std::vector<int> crf_set = {15, 25, 35};
};

template <typename T>
Dataset<T> build_dataset(const DatasetConfig& cfg) {
  Dataset<T> ds;
  const int total = cfg.train_clips + cfg.heldout_clips;
  const auto crf = mix_dataset(total, cfg.compressed_fraction, cfg.crf_set, cfg.seed);
  for (int i = 0; i < total; ++i) {
    TrainClip<T> clip;
    clip.hr = make_clip<T>(cfg.seed + 1000003ull * i, cfg.synth);
    DegradeConfig d = cfg.degrade;
    d.crf = crf[i];
    auto res = make_lr(clip.hr, d);
    clip.lr = std::move(res.lr);
    clip.lr_clean = std::move(res.lr_clean);
    clip.crf = crf[i];
    (i < cfg.train_clips ? ds.train : ds.heldout).push_back(std::move(clip));
  }
  return ds;
}

namespace detail {

template <typename T>
void add_noise(VideoSequence<T>& video, double gauss_sigma, double salt_density, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, std::max(gauss_sigma, 1e-12));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (auto& f : video.frames)
    for (auto& v : f.data) {
      if (gauss_sigma > 0.0) v = static_cast<T>(clamp01(static_cast<double>(v) + gauss(rng)));
      if (salt_density > 0.0 && uni(rng) < salt_density)
        v = static_cast<T>(uni(rng) < 0.5 ? 0.0 : 1.0);
    }
}

}  // namespace detail

/// Forward + backward through the full pipeline for one clip. Gradients are
/// accumulated into codec and/or backbone parameters per the two flags; flow
/// conditioning is treated as a constant (no gradient flows through it).
/// Returns the Charbonnier loss against `target` at the pipeline output.
template <typename T, typename BB>
double supervised_step(CodecModel<T>& codec, BB& backbone, const VideoSequence<T>& input,
                       const VideoSequence<T>& target, const FlowConfig& flow,
                       double charb_eps, bool codec_grads, bool backbone_grads) {
  input.validate("supervised_step input");
  target.validate("supervised_step target");
  if (input.frame_count() != target.frame_count())
    throw ShapeError("supervised_step: input/target frame counts differ");
  const auto& h = codec.hyper;
  const int n = input.frame_count();

  // cleaning, with per-pass caches
  std::vector<std::vector<typename CleaningNet<T>::Cache>> clean_caches(n);
  VideoSequence<T> cleaned;
  cleaned.frame_rate = input.frame_rate;
  for (int t = 0; t < n; ++t) {
    clean_caches[t].resize(h.cleaning_passes);
    Tensor<T> x = input.frames[t];
    for (int p = 0; p < h.cleaning_passes; ++p) x = codec.cleaning.forward(x, &clean_caches[t][p]);
    cleaned.frames.push_back(std::move(x));
  }

  const FrameCube<T> cube = stack(cleaned);
  const GroupingPlan plan = plan_groups(cube.data.channels, h.group_size, h.overlap);
  const auto groups = extract_groups(cube, plan);
  const int k = plan.group_count();

  std::vector<Tensor<T>> enc_inputs(k);
  std::vector<typename GroupCoder<T>::Cache> enc_caches(k);
  std::vector<typename BB::Cache> bb_caches(k);
  std::vector<typename GroupCoder<T>::Cache> dec_caches(k);
  std::vector<ChannelGroup<T>> decoded(k);
  for (int g = 0; g < k; ++g) {
    const Tensor<T> flows = group_flows(groups[g], flow, h.colors);
    enc_inputs[g] = concat_channels(groups[g].data, flows);
    Tensor<T> latent = codec.encoder.forward(enc_inputs[g], &enc_caches[g]);
    Tensor<T> sr_latent = backbone.run_train(latent, &bb_caches[g]);
    decoded[g].data = codec.decoder.forward(sr_latent, &dec_caches[g]);
    decoded[g].range = plan.ranges[g];
  }

  const FrameCube<T> merged = merge_groups(decoded, plan, h.colors, input.frame_rate);
  const VideoSequence<T> raw = unstack(merged);
  VideoSequence<T> out;
  out.frame_rate = raw.frame_rate;
  for (int t = 0; t < n; ++t)
    out.frames.push_back(color_correct(raw.frames[t], input.frames[t]));

  // loss over the whole clip as one element pool
  std::size_t total_elems = 0;
  for (int t = 0; t < n; ++t) {
    require_same_shape(out.frames[t], target.frames[t], "supervised_step target");
    total_elems += out.frames[t].size();
  }
  double loss = 0.0;
  const double inv_total = 1.0 / static_cast<double>(total_elems);
  std::vector<Tensor<T>> dout(n);
  for (int t = 0; t < n; ++t) {
    const auto& o = out.frames[t];
    const auto& gt = target.frames[t];
    dout[t] = Tensor<T>(o.channels, o.height, o.width);
    for (std::size_t i = 0; i < o.size(); ++i) {
      const double d = static_cast<double>(o.data[i]) - static_cast<double>(gt.data[i]);
      const double root = std::sqrt(d * d + charb_eps * charb_eps);
      loss += root;
      dout[t].data[i] = static_cast<T>(d / root * inv_total);
    }
  }
  loss *= inv_total;

  if (!codec_grads && !backbone_grads) return loss;

  // color correction + unstack adjoints: rebuild a gradient cube
  FrameCube<T> dmerged;
  dmerged.colors = h.colors;
  dmerged.data = Tensor<T>(merged.data.channels, merged.data.height, merged.data.width);
  for (int t = 0; t < n; ++t) {
    const Tensor<T> dframe = color_correct_backward(raw.frames[t], input.frames[t], dout[t]);
    for (int c = 0; c < h.colors; ++c)
      std::copy_n(dframe.plane(c), dframe.plane_size(), dmerged.data.plane(t * h.colors + c));
  }

  // merge adjoint: every covering group receives dout/count; padded group
  // channels received nothing (they were dropped before the loss)
  Tensor<T> dcube(cube.data.channels, cube.data.height, cube.data.width);
  for (int g = 0; g < k; ++g) {
    Tensor<T> ddec(h.group_size, merged.data.height, merged.data.width);
    const auto& r = plan.ranges[g];
    for (int c = r.begin; c < r.end; ++c) {
      if (c >= plan.total_channels) continue;
      const T scale = static_cast<T>(1.0 / plan.encode_counts[c]);
      const T* src = dmerged.data.plane(c);
      T* dst = ddec.plane(c - r.begin);
      for (std::size_t i = 0; i < ddec.plane_size(); ++i) dst[i] = src[i] * scale;
    }

    Tensor<T> dsr_latent = codec.decoder.backward(dec_caches[g], ddec, codec_grads);
    Tensor<T> dlatent = backbone.backward(bb_caches[g], dsr_latent, backbone_grads);
    if (!codec_grads) continue;
    Tensor<T> denc_in = codec.encoder.backward(enc_caches[g], dlatent, true);
    // keep only the group channels; flow conditioning channels are constants
    for (int c = r.begin; c < r.end; ++c) {
      const int src = pad_source_channel(plan, h.colors, c);
      const T* dp = denc_in.plane(c - r.begin);
      T* acc = dcube.plane(src);
      for (std::size_t i = 0; i < dcube.plane_size(); ++i) acc[i] += dp[i];
    }
  }

  if (codec_grads) {
    for (int t = 0; t < n; ++t) {
      Tensor<T> d(h.colors, dcube.height, dcube.width);
      for (int c = 0; c < h.colors; ++c)
        std::copy_n(dcube.plane(t * h.colors + c), d.plane_size(), d.plane(c));
      for (int p = h.cleaning_passes; p-- > 0;)
        d = codec.cleaning.backward(clean_caches[t][p], d, true);
    }
  }
  return loss;
}

struct TrainLogEntry {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double millis = 0.0;
  std::optional<double> heldout_psnr;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  double final_heldout_psnr = 0.0;
  long steps = 0;
};

inline void write_train_log(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write train log " + path.string());
  for (const auto& e : log.entries) {
    nlohmann::json j = {{"step", e.step}, {"loss", e.loss}, {"lr", e.lr}, {"ms", e.millis}};
    if (e.heldout_psnr) j["heldout_psnr"] = *e.heldout_psnr;
    out << j.dump() << "\n";
  }
  nlohmann::json tail = {{"final_heldout_psnr", log.final_heldout_psnr}, {"steps", log.steps}};
  out << tail.dump() << "\n";
}

template <typename T>
VideoSequence<T> clamp_video(VideoSequence<T> v) {
  for (auto& f : v.frames)
    for (auto& x : f.data) x = clamp01(x);
  return v;
}

/// Held-out quality of the codec alone: identity-backbone round trip against
/// the uncompressed LR clips, mean Y-PSNR (outputs clamped to [0,1] first,
/// matching what saved frames would measure).
template <typename T>
double eval_roundtrip_psnr(const std::vector<TrainClip<T>>& clips, const CodecModel<T>& codec,
                           const FlowConfig& flow) {
  if (clips.empty()) throw ParamError("eval_roundtrip_psnr: no clips");
  double acc = 0.0;
  int count = 0;
  for (const auto& clip : clips) {
    const LatentClip<T> lat = compress_sequence(clip.lr, codec, flow);
    const VideoSequence<T> rec =
        clamp_video(decompress_sequence(lat.latents, lat.plan, clip.lr, codec));
    for (int t = 0; t < rec.frame_count(); ++t) {
      const double p = psnr_y(rec.frames[t], clip.lr_clean.frames[t]);
      if (std::isfinite(p)) {
        acc += p;
        ++count;
      }
    }
  }
  return count > 0 ? acc / count : std::numeric_limits<double>::infinity();
}

/// Held-out quality of the full pipeline: compress, super-resolve latents,
/// decompress, mean Y-PSNR against HR.
template <typename T>
double eval_sr_psnr(const std::vector<TrainClip<T>>& clips, const CodecModel<T>& codec,
                    const Backbone<T>& backbone, const FlowConfig& flow) {
  if (clips.empty()) throw ParamError("eval_sr_psnr: no clips");
  double acc = 0.0;
  int count = 0;
  for (const auto& clip : clips) {
    const LatentClip<T> lat = compress_sequence(clip.lr, codec, flow);
    const auto sr_latents = super_resolve(backbone, lat.latents);
    const VideoSequence<T> sr =
        clamp_video(decompress_sequence(sr_latents, lat.plan, clip.lr, codec));
    for (int t = 0; t < sr.frame_count(); ++t) {
      const double p = psnr_y(sr.frames[t], clip.hr.frames[t]);
      if (std::isfinite(p)) {
        acc += p;
        ++count;
      }
    }
  }
  return count > 0 ? acc / count : std::numeric_limits<double>::infinity();
}

struct PretrainConfig {
  long steps = 400000;
  double lr = 1e-4;
  AdamConfig adam;
  std::uint64_t seed = 1;
  FlowConfig flow;
  double charb_eps = 1e-3;
  bool augment = true;
  double noise_gaussian = 0.02;  // max sigma drawn per step
  double noise_salt = 0.005;     // max salt/pepper density drawn per step
  long flow_freeze_steps = 5000; // kept for parity with learned-flow setups;
                                 // the built-in flow has no parameters
  long log_every = 50;
  long eval_every = 0;  // 0 = final evaluation only
  long checkpoint_every = 0;
  bool resume = false;
};

namespace detail {

/// Epoch-shuffled clip order, reconstructible from (seed, step) alone.
inline int pick_clip(long step, std::size_t count, std::uint64_t seed, std::vector<int>& order) {
  const std::size_t n = count;
  const std::size_t pos = static_cast<std::size_t>(step) % n;
  if (pos == 0) {
    order.resize(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    Rng rng(seed ^ (0x5bf03635ull + static_cast<std::uint64_t>(step / n) * 0x9e3779b97f4a7c15ull));
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order[pos];
}

}  // namespace detail

/// Stage 1: train cleaning + encoder + decoder so the identity-backbone round
/// trip restores the uncompressed LR clip from its compressed, noise-augmented
/// version. Checkpoints (params + optimizer moments) land in `checkpoint_dir`
/// when given; with cfg.resume an existing checkpoint continues in place.
template <typename T>
TrainLog pretrain_codec(const Dataset<T>& dataset, CodecModel<T>& codec,
                        const PretrainConfig& cfg,
                        const std::filesystem::path& checkpoint_dir = {}) {
  if (dataset.train.empty()) throw ParamError("pretrain_codec: empty training set");
  TrainLog log;
  log.steps = cfg.steps;
  ParamRefs<T> params = codec.params();
  AdamState opt;
  long start_step = 0;
  if (cfg.resume && !checkpoint_dir.empty() &&
      std::filesystem::exists(checkpoint_dir / "header.json")) {
    long saved = 0;
    codec = load_codec<T>(checkpoint_dir, &saved);
    params = codec.params();
    if (!load_optimizer(checkpoint_dir, params, opt))
      throw DataError("resume requested but optimizer state is missing under " +
                      checkpoint_dir.string());
    start_step = saved;
  }

  IdentityBackbone<T> identity;
  std::vector<int> order;
  for (long step = 0; step < start_step; ++step)
    detail::pick_clip(step, dataset.train.size(), cfg.seed, order);

  for (long step = start_step; step < cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const int ci = detail::pick_clip(step, dataset.train.size(), cfg.seed, order);
    const TrainClip<T>& clip = dataset.train[ci];

    VideoSequence<T> input = clip.lr;
    if (cfg.augment) {
      Rng rng(cfg.seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(step + 1));
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      detail::add_noise(input, uni(rng) * cfg.noise_gaussian, uni(rng) * cfg.noise_salt, rng);
    }

    codec.zero_grad();
    const double loss = supervised_step(codec, identity, input, clip.lr_clean, cfg.flow,
                                        cfg.charb_eps, true, false);
    const double lr = cosine_lr(step, cfg.steps, cfg.lr);
    adam_step(params, opt, lr, cfg.adam);

    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step == cfg.steps - 1)) {
      TrainLogEntry e{step, loss, lr, ms, std::nullopt};
      if (cfg.eval_every > 0 && step > 0 && step % cfg.eval_every == 0 &&
          !dataset.heldout.empty())
        e.heldout_psnr = eval_roundtrip_psnr(dataset.heldout, codec, cfg.flow);
      log.entries.push_back(e);
    }
    if (!checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
        (step + 1) % cfg.checkpoint_every == 0) {
      save_codec(checkpoint_dir, codec, step + 1);
      save_optimizer(checkpoint_dir, opt);
    }
  }
  if (!checkpoint_dir.empty()) {
    save_codec(checkpoint_dir, codec, cfg.steps);
    save_optimizer(checkpoint_dir, opt);
  }
  if (!dataset.heldout.empty())
    log.final_heldout_psnr = eval_roundtrip_psnr(dataset.heldout, codec, cfg.flow);
  return log;
}

enum class TrainMode { frozen_codec, joint };

inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "frozen_codec" || s == "frozen") return TrainMode::frozen_codec;
  if (s == "joint") return TrainMode::joint;
  throw ConfigError("unknown train mode '" + s + "' (frozen_codec, joint)");
}

struct StageTwoConfig {
  long steps = 400000;
  double lr = 1e-4;
  AdamConfig adam;
  std::uint64_t seed = 2;
  FlowConfig flow;
  double charb_eps = 1e-3;
  TrainMode mode = TrainMode::frozen_codec;
  long log_every = 50;
  long eval_every = 0;
};

/// Stage 2: train the backbone (and, in joint mode, the codec) on the final
/// color-corrected SR output against HR. In frozen_codec mode the codec
/// parameters receive no gradients and no optimizer updates.
template <typename T, typename BB>
TrainLog train_backbone(const Dataset<T>& dataset, CodecModel<T>& codec, BB& backbone,
                        const StageTwoConfig& cfg) {
  if (dataset.train.empty()) throw ParamError("train_backbone: empty training set");
  TrainLog log;
  log.steps = cfg.steps;
  const bool joint = cfg.mode == TrainMode::joint;
  ParamRefs<T> params = backbone.params();
  if (params.empty() && !joint)
    throw ConfigError("train_backbone: backbone has no trainable parameters");
  if (joint)
    for (auto& ref : codec.params()) params.push_back(ref);
  AdamState opt;
  std::vector<int> order;

  for (long step = 0; step < cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const int ci = detail::pick_clip(step, dataset.train.size(), cfg.seed, order);
    const TrainClip<T>& clip = dataset.train[ci];

    backbone.zero_grad();
    if (joint) codec.zero_grad();
    const double loss = supervised_step(codec, backbone, clip.lr, clip.hr, cfg.flow,
                                        cfg.charb_eps, joint, true);
    const double lr = cosine_lr(step, cfg.steps, cfg.lr);
    adam_step(params, opt, lr, cfg.adam);

    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step == cfg.steps - 1)) {
      TrainLogEntry e{step, loss, lr, ms, std::nullopt};
      if (cfg.eval_every > 0 && step > 0 && step % cfg.eval_every == 0 &&
          !dataset.heldout.empty())
        e.heldout_psnr = eval_sr_psnr(dataset.heldout, codec, backbone, cfg.flow);
      log.entries.push_back(e);
    }
  }
  if (!dataset.heldout.empty())
    log.final_heldout_psnr = eval_sr_psnr(dataset.heldout, codec, backbone, cfg.flow);
  return log;
}

}  // namespace fcvsr
