#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fcvsr/bench.hpp"
#include "fcvsr/codec.hpp"
#include "fcvsr/degrade.hpp"
#include "fcvsr/train.hpp"

namespace fcvsr {

namespace detail {

/// Wrapper that tracks which keys a section consumed and rejects leftovers,
/// so typos in config files fail loudly with their full path.
class StrictSection {
 public:
  StrictSection(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(path_ + ": expected a JSON object");
  }

  bool has(const std::string& key) {
    return j_.contains(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  template <typename T>
  T require(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(path_ + "." + key + ": missing required key");
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  nlohmann::json sub(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? j_.at(key) : nlohmann::json::object();
  }

  void finish() {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline CodecHyper codec_from_json(const nlohmann::json& j, const std::string& path = "codec") {
  detail::StrictSection s(j, path);
  CodecHyper h;
  h.group_size = s.get("group_size", h.group_size);
  h.overlap = s.get("overlap", h.overlap);
  h.latent_channels = s.get("latent_channels", h.latent_channels);
  h.coder_width = s.get("coder_width", h.coder_width);
  h.coder_blocks = s.get("coder_blocks", h.coder_blocks);
  h.cleaning_width = s.get("cleaning_width", h.cleaning_width);
  h.cleaning_blocks = s.get("cleaning_blocks", h.cleaning_blocks);
  h.cleaning_passes = s.get("cleaning_passes", h.cleaning_passes);
  h.attention_reduction = s.get("attention_reduction", h.attention_reduction);
  h.colors = s.get("colors", h.colors);
  s.finish();
  h.validate();
  return h;
}

inline BackboneConfig backbone_from_json(const nlohmann::json& j,
                                         const std::string& path = "backbone") {
  detail::StrictSection s(j, path);
  BackboneConfig b;
  b.name = s.get("name", b.name);
  b.scale = s.get("scale", b.scale);
  b.width = s.get("width", b.width);
  b.blocks = s.get("blocks", b.blocks);
  s.finish();
  return b;
}

inline FlowConfig flow_from_json(const nlohmann::json& j, const std::string& path = "flow") {
  detail::StrictSection s(j, path);
  FlowConfig f;
  f.method = flow_method_from_string(s.get<std::string>("method", "horn_schunck"));
  f.pyramid_levels = s.get("pyramid_levels", f.pyramid_levels);
  f.iterations = s.get("iterations", f.iterations);
  f.smoothness = s.get("smoothness", f.smoothness);
  s.finish();
  if (f.pyramid_levels < 1 || f.iterations < 0 || f.smoothness <= 0.0)
    throw ConfigError(path + ": invalid flow parameters");
  return f;
}

inline DegradeConfig degrade_from_json(const nlohmann::json& j,
                                       const std::string& path = "degrade") {
  detail::StrictSection s(j, path);
  DegradeConfig d;
  d.blur_sigma = s.get("blur_sigma", d.blur_sigma);
  d.scale = s.get("scale", d.scale);
  d.crf = s.get("crf", d.crf);
  d.mode = compressor_mode_from_string(s.get<std::string>("compressor", "external"));
  d.encoder = s.get("encoder", d.encoder);
  s.finish();
  if (d.blur_sigma <= 0.0 || d.scale < 1 || d.crf < 0 || d.crf > 51)
    throw ConfigError(path + ": invalid degradation parameters");
  return d;
}

inline SynthConfig synth_from_json(const nlohmann::json& j, const std::string& path = "synth") {
  detail::StrictSection s(j, path);
  SynthConfig c;
  c.frames = s.get("frames", c.frames);
  c.height = s.get("height", c.height);
  c.width = s.get("width", c.width);
  c.waves = s.get("waves", c.waves);
  c.detail_waves = s.get("detail_waves", c.detail_waves);
  c.blobs = s.get("blobs", c.blobs);
  c.max_speed = s.get("max_speed", c.max_speed);
  s.finish();
  if (c.frames < 1 || c.height < 1 || c.width < 1)
    throw ConfigError(path + ": invalid clip dimensions");
  return c;
}

inline DatasetConfig dataset_from_json(const nlohmann::json& j,
                                       const std::string& path = "dataset") {
  detail::StrictSection s(j, path);
  DatasetConfig d;
  d.train_clips = s.get("train_clips", d.train_clips);
  d.heldout_clips = s.get("heldout_clips", d.heldout_clips);
  d.seed = s.get("seed", d.seed);
  d.compressed_fraction = s.get("compressed_fraction", d.compressed_fraction);
  d.crf_set = s.get("crf_set", d.crf_set);
  d.synth = synth_from_json(s.sub("synth"), path + ".synth");
  d.degrade = degrade_from_json(s.sub("degrade"), path + ".degrade");
  s.finish();
  if (d.train_clips < 1 || d.heldout_clips < 0)
    throw ConfigError(path + ": invalid clip counts");
  return d;
}

inline PretrainConfig pretrain_from_json(const nlohmann::json& j, const FlowConfig& flow,
                                         const std::string& path = "pretrain") {
  detail::StrictSection s(j, path);
  PretrainConfig p;
  p.flow = flow;
  p.steps = s.get("steps", p.steps);
  p.lr = s.get("lr", p.lr);
  p.adam.beta1 = s.get("beta1", p.adam.beta1);
  p.adam.beta2 = s.get("beta2", p.adam.beta2);
  p.adam.eps = s.get("adam_eps", p.adam.eps);
  p.seed = s.get("seed", p.seed);
  p.charb_eps = s.get("charbonnier_eps", p.charb_eps);
  p.augment = s.get("augment", p.augment);
  p.noise_gaussian = s.get("noise_gaussian", p.noise_gaussian);
  p.noise_salt = s.get("noise_salt", p.noise_salt);
  p.flow_freeze_steps = s.get("flow_freeze_steps", p.flow_freeze_steps);
  p.log_every = s.get("log_every", p.log_every);
  p.eval_every = s.get("eval_every", p.eval_every);
  p.checkpoint_every = s.get("checkpoint_every", p.checkpoint_every);
  p.resume = s.get("resume", p.resume);
  s.finish();
  if (p.steps < 1 || p.lr <= 0.0) throw ConfigError(path + ": invalid steps/lr");
  return p;
}

inline StageTwoConfig stage2_from_json(const nlohmann::json& j, const FlowConfig& flow,
                                       const std::string& path = "train") {
  detail::StrictSection s(j, path);
  StageTwoConfig t;
  t.flow = flow;
  t.steps = s.get("steps", t.steps);
  t.lr = s.get("lr", t.lr);
  t.adam.beta1 = s.get("beta1", t.adam.beta1);
  t.adam.beta2 = s.get("beta2", t.adam.beta2);
  t.adam.eps = s.get("adam_eps", t.adam.eps);
  t.seed = s.get("seed", t.seed);
  t.charb_eps = s.get("charbonnier_eps", t.charb_eps);
  t.mode = train_mode_from_string(s.get<std::string>("mode", "frozen_codec"));
  t.log_every = s.get("log_every", t.log_every);
  t.eval_every = s.get("eval_every", t.eval_every);
  s.finish();
  if (t.steps < 1 || t.lr <= 0.0) throw ConfigError(path + ": invalid steps/lr");
  return t;
}

inline BenchScenario bench_from_json(const nlohmann::json& j, const CodecHyper& codec,
                                     const BackboneConfig& backbone, const FlowConfig& flow,
                                     const std::string& path = "bench") {
  detail::StrictSection s(j, path);
  BenchScenario b;
  b.codec = codec;
  b.backbone = backbone;
  b.flow = flow;
  b.frame_counts = s.get("frame_counts", b.frame_counts);
  b.resolutions = s.get("resolutions", b.resolutions);
  b.repetitions = s.get("repetitions", b.repetitions);
  b.seed = s.get("seed", b.seed);
  b.unstable_iqr_ratio = s.get("unstable_iqr_ratio", b.unstable_iqr_ratio);
  s.finish();
  if (b.frame_counts.empty() || b.resolutions.empty())
    throw ConfigError(path + ": empty frame_counts/resolutions");
  for (int f : b.frame_counts)
    if (f < 1) throw ConfigError(path + ": frame counts must be positive");
  for (int r : b.resolutions)
    if (r < 16) throw ConfigError(path + ": resolutions must be at least 16");
  return b;
}

struct PipelineConfig {
  CodecHyper codec;
  BackboneConfig backbone;
  FlowConfig flow;
  DegradeConfig degrade;
  DatasetConfig dataset;
  PretrainConfig pretrain;
  StageTwoConfig stage2;
  BenchScenario bench;
  double color_eps = 1e-6;

  void validate() const {
    codec.validate();
    if (backbone.name != "identity" && backbone.scale != degrade.scale)
      throw ConfigError("backbone scale " + std::to_string(backbone.scale) +
                        " disagrees with degradation scale " + std::to_string(degrade.scale));
  }
};

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  detail::StrictSection s(j, "config");
  PipelineConfig cfg;
  cfg.codec = codec_from_json(s.sub("codec"));
  cfg.backbone = backbone_from_json(s.sub("backbone"));
  cfg.flow = flow_from_json(s.sub("flow"));
  cfg.degrade = degrade_from_json(s.sub("degrade"));
  cfg.dataset = dataset_from_json(s.sub("dataset"));
  cfg.pretrain = pretrain_from_json(s.sub("pretrain"), cfg.flow);
  cfg.stage2 = stage2_from_json(s.sub("train"), cfg.flow);
  cfg.bench = bench_from_json(s.sub("bench"), cfg.codec, cfg.backbone, cfg.flow);
  cfg.color_eps = s.get("color_eps", cfg.color_eps);
  s.finish();
  cfg.validate();
  return cfg;
}

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return pipeline_config_from_json(load_json_file(path));
}

/// Clip inventory shared by the CLI commands. Degradation writes one; training
/// and evaluation can consume one instead of the procedural corpus.
struct ClipEntry {
  std::string id;
  std::string hr_dir;  // may be empty when only LR exists
  std::string lr_dir;
  int crf = 0;
  bool used_fallback = false;
};

struct Manifest {
  std::vector<ClipEntry> clips;
};

inline Manifest manifest_from_json(const nlohmann::json& j) {
  detail::StrictSection s(j, "manifest");
  Manifest m;
  if (!s.has("clips")) throw DataError("manifest: missing 'clips'");
  const auto arr = s.sub("clips");
  if (!arr.is_array()) throw DataError("manifest: 'clips' must be an array");
  int idx = 0;
  for (const auto& cj : arr) {
    detail::StrictSection cs(cj, "manifest.clips[" + std::to_string(idx) + "]");
    ClipEntry e;
    e.id = cs.get<std::string>("id", "clip" + std::to_string(idx));
    e.hr_dir = cs.get<std::string>("hr_dir", "");
    e.lr_dir = cs.get<std::string>("lr_dir", "");
    e.crf = cs.get("crf", 0);
    e.used_fallback = cs.get("used_fallback", false);
    cs.finish();
    m.clips.push_back(std::move(e));
    ++idx;
  }
  s.finish();
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  try {
    return manifest_from_json(load_json_file(path));
  } catch (const ConfigError& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : m.clips) {
    nlohmann::json cj = {{"id", e.id}, {"crf", e.crf}, {"used_fallback", e.used_fallback}};
    if (!e.hr_dir.empty()) cj["hr_dir"] = e.hr_dir;
    if (!e.lr_dir.empty()) cj["lr_dir"] = e.lr_dir;
    arr.push_back(cj);
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << nlohmann::json{{"clips", arr}}.dump(2) << "\n";
}

}  // namespace fcvsr
