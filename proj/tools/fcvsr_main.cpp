// fcvsr: grouped-compression video super-resolution pipeline CLI.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime error.
// Errors print a single machine-parsable line: "error: <kind>: <message>".

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>

#include "fcvsr/backbone.hpp"
#include "fcvsr/bench.hpp"
#include "fcvsr/codec.hpp"
#include "fcvsr/config.hpp"
#include "fcvsr/degrade.hpp"
#include "fcvsr/metrics.hpp"
#include "fcvsr/png_io.hpp"
#include "fcvsr/synth.hpp"
#include "fcvsr/train.hpp"

namespace fs = std::filesystem;
using namespace fcvsr;

namespace {

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

PipelineConfig load_config(const CommonFlags& flags) {
  PipelineConfig cfg;
  if (!flags.config_path.empty()) cfg = load_pipeline_config(flags.config_path);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "pipeline config JSON")
      ->envname("FCVSR_CONFIG");
  cmd->add_option("--seed", flags.seed, "seed override")
      ->envname("FCVSR_SEED")
      ->each([&flags](const std::string&) { flags.seed_set = true; });
}

Dataset<float> dataset_from_sources(const PipelineConfig& cfg, const std::string& manifest_path) {
  if (manifest_path.empty()) return build_dataset<float>(cfg.dataset);
  const Manifest m = load_manifest(manifest_path);
  if (m.clips.empty()) throw DataError("manifest lists no clips");
  Dataset<float> ds;
  for (const auto& e : m.clips) {
    if (e.hr_dir.empty())
      throw DataError("clip '" + e.id + "' has no hr_dir; training needs HR frames");
    TrainClip<float> clip;
    clip.hr = read_frames<float>(e.hr_dir);
    DegradeConfig d = cfg.dataset.degrade;
    d.crf = e.crf;
    auto res = make_lr(clip.hr, d);
    clip.lr = std::move(res.lr);
    clip.lr_clean = std::move(res.lr_clean);
    clip.crf = e.crf;
    ds.train.push_back(std::move(clip));
  }
  const int heldout = std::min<int>(cfg.dataset.heldout_clips,
                                    static_cast<int>(ds.train.size()) - 1);
  for (int i = 0; i < heldout; ++i) {
    ds.heldout.push_back(std::move(ds.train.back()));
    ds.train.pop_back();
  }
  if (ds.train.empty()) throw DataError("manifest clips all consumed by the held-out split");
  return ds;
}

nlohmann::json metrics_to_json(const MetricsReport& rep) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : rep.frames) {
    nlohmann::json fj = {{"frame", f.frame}, {"ssim", f.ssim}};
    if (std::isinf(f.psnr))
      fj["psnr"] = "inf";
    else
      fj["psnr"] = f.psnr;
    frames.push_back(fj);
  }
  nlohmann::json j = {{"frames", frames},
                      {"mean_ssim", rep.mean_ssim},
                      {"infinite_psnr_frames", rep.infinite_psnr_frames}};
  if (std::isinf(rep.mean_psnr))
    j["mean_psnr"] = "inf";
  else
    j["mean_psnr"] = rep.mean_psnr;
  return j;
}

int cmd_degrade(const CommonFlags& flags, const std::string& in_dir, int synth_clips,
                const std::string& out_dir, int crf_override) {
  PipelineConfig cfg = load_config(flags);
  if (crf_override >= 0) cfg.degrade.crf = crf_override;
  if (flags.seed_set) cfg.dataset.seed = flags.seed;
  if (out_dir.empty()) throw ConfigError("degrade: --out is required");
  if (in_dir.empty() && synth_clips <= 0)
    throw ConfigError("degrade: give --in FRAMES_DIR or --synth N");

  Manifest manifest;
  fs::create_directories(out_dir);
  auto process = [&](const std::string& id, const VideoSequence<float>& hr, bool save_hr) {
    const auto res = make_lr(hr, cfg.degrade);
    ClipEntry e;
    e.id = id;
    e.crf = cfg.degrade.crf;
    e.used_fallback = res.used_fallback;
    e.lr_dir = (fs::path(out_dir) / (id + "_lr")).string();
    write_frames(e.lr_dir, res.lr);
    if (save_hr) {
      e.hr_dir = (fs::path(out_dir) / (id + "_hr")).string();
      write_frames(e.hr_dir, hr);
    }
    manifest.clips.push_back(e);
    if (res.used_fallback)
      std::cerr << "warning: external encoder unavailable for clip '" << id
                << "', dct proxy used instead\n";
  };

  if (!in_dir.empty()) {
    VideoSequence<float> hr = read_frames<float>(in_dir);
    ClipEntry e;
    process(fs::path(in_dir).filename().string(), hr, false);
    manifest.clips.back().hr_dir = in_dir;
  } else {
    for (int i = 0; i < synth_clips; ++i) {
      const auto hr = make_clip<float>(cfg.dataset.seed + 1000003ull * i, cfg.dataset.synth);
      process("clip" + std::to_string(i), hr, true);
    }
  }
  save_manifest(fs::path(out_dir) / "manifest.json", manifest);
  std::cout << "wrote " << manifest.clips.size() << " clip(s) under " << out_dir << "\n";
  return 0;
}

int cmd_pretrain(const CommonFlags& flags, const std::string& manifest_path,
                 const std::string& out_dir, long steps_override) {
  PipelineConfig cfg = load_config(flags);
  if (out_dir.empty()) throw ConfigError("pretrain: --out is required");
  if (steps_override > 0) cfg.pretrain.steps = steps_override;
  if (flags.seed_set) cfg.pretrain.seed = flags.seed;

  Dataset<float> ds = dataset_from_sources(cfg, manifest_path);
  CodecModel<float> codec;
  Rng rng(cfg.pretrain.seed);
  codec.init(cfg.codec, rng);
  const TrainLog log = pretrain_codec(ds, codec, cfg.pretrain, out_dir);
  write_train_log(fs::path(out_dir) / "trainlog.jsonl", log);
  std::cout << "pretrained codec for " << cfg.pretrain.steps << " steps, held-out round-trip "
            << format_db(log.final_heldout_psnr) << " dB, archive under " << out_dir << "\n";
  return 0;
}

int cmd_train(const CommonFlags& flags, const std::string& manifest_path,
              const std::string& codec_dir, const std::string& out_dir, long steps_override,
              const std::string& mode_override) {
  PipelineConfig cfg = load_config(flags);
  if (out_dir.empty()) throw ConfigError("train: --out is required");
  if (steps_override > 0) cfg.stage2.steps = steps_override;
  if (flags.seed_set) cfg.stage2.seed = flags.seed;
  if (!mode_override.empty()) cfg.stage2.mode = train_mode_from_string(mode_override);
  if (cfg.backbone.name != "toy")
    throw ConfigError("train: only the 'toy' backbone is trainable, got '" + cfg.backbone.name +
                      "'");

  Dataset<float> ds = dataset_from_sources(cfg, manifest_path);
  Rng rng(cfg.stage2.seed);
  CodecModel<float> codec;
  if (!codec_dir.empty()) {
    codec = load_codec<float>(codec_dir);
    if (!(codec.hyper == cfg.codec))
      throw ConfigError("train: codec archive architecture disagrees with the config");
  } else {
    if (cfg.stage2.mode == TrainMode::frozen_codec)
      throw ConfigError("train: frozen_codec mode needs --codec ARCHIVE from pretraining");
    codec.init(cfg.codec, rng);
  }
  ToyBackbone<float> backbone(cfg.backbone, rng);
  const TrainLog log = train_backbone(ds, codec, backbone, cfg.stage2);
  save_backbone(out_dir, backbone, cfg.stage2.steps);
  if (cfg.stage2.mode == TrainMode::joint) save_codec(fs::path(out_dir) / "codec", codec);
  write_train_log(fs::path(out_dir) / "trainlog.jsonl", log);
  std::cout << "trained backbone for " << cfg.stage2.steps << " steps, held-out SR "
            << format_db(log.final_heldout_psnr) << " dB, archive under " << out_dir << "\n";
  return 0;
}

int cmd_infer(const CommonFlags& flags, const std::string& codec_dir,
              const std::string& backbone_params, const std::string& backbone_name,
              const std::string& in_dir, const std::string& out_dir,
              const std::string& latents_dir) {
  PipelineConfig cfg = load_config(flags);
  if (codec_dir.empty()) throw ConfigError("infer: --codec is required");
  if (in_dir.empty() || out_dir.empty()) throw ConfigError("infer: --in and --out are required");

  CodecModel<float> codec = load_codec<float>(codec_dir);
  Rng rng(flags.seed_set ? flags.seed : 0);
  std::unique_ptr<Backbone<float>> backbone;
  ToyBackbone<float> loaded;
  if (!backbone_params.empty()) {
    loaded = load_toy_backbone<float>(backbone_params);
    backbone = std::make_unique<ToyBackbone<float>>(loaded);
  } else {
    BackboneConfig bc = cfg.backbone;
    if (!backbone_name.empty()) bc.name = backbone_name;
    backbone = make_backbone<float>(bc, rng);
  }

  const VideoSequence<float> lr = read_frames<float>(in_dir);
  const LatentClip<float> lat = compress_sequence(lr, codec, cfg.flow);
  if (!latents_dir.empty()) {
    fs::create_directories(latents_dir);
    nlohmann::json meta = {{"count", lat.latents.size()},
                           {"group_size", lat.plan.group_size},
                           {"overlap", lat.plan.overlap},
                           {"total_channels", lat.plan.total_channels},
                           {"pad_channels", lat.plan.pad_channels}};
    for (std::size_t g = 0; g < lat.latents.size(); ++g) {
      const auto& t = lat.latents[g];
      archive::write_blob(latents_dir, "latent" + std::to_string(g),
                          std::vector<float>(t.data.begin(), t.data.end()));
      meta["shape"] = {t.channels, t.height, t.width};
    }
    std::ofstream meta_out(fs::path(latents_dir) / "latents.json");
    meta_out << meta.dump(2) << "\n";
  }
  const auto sr_latents = super_resolve(*backbone, lat.latents);
  const VideoSequence<float> sr =
      decompress_sequence(sr_latents, lat.plan, lr, codec, cfg.color_eps);
  write_frames(out_dir, sr);
  std::cout << "super-resolved " << lr.frame_count() << " frames with "
            << lat.plan.group_count() << " backbone invocation(s) into " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& test_dir, const std::string& ref_dir,
             const std::string& out_path) {
  if (test_dir.empty() || ref_dir.empty())
    throw ConfigError("eval: --test and --ref are required");
  const auto test = read_frames<float>(test_dir);
  const auto ref = read_frames<float>(ref_dir);
  const MetricsReport rep = sequence_metrics(test, ref);
  const nlohmann::json j = metrics_to_json(rep);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot write report " + out_path);
    out << j.dump(2) << "\n";
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_bench(const CommonFlags& flags, const std::string& out_csv,
              const std::string& speedup_csv, const std::string& chart_png) {
  PipelineConfig cfg = load_config(flags);
  if (out_csv.empty()) throw ConfigError("bench: --out is required");
  if (flags.seed_set) cfg.bench.seed = flags.seed;
  const BenchResult result = run_latency_grid(cfg.bench);
  write_bench_csv(out_csv, result);
  std::cout << "protocol: " << result.protocol << "\n";
  if (!speedup_csv.empty()) {
    const SpeedupReport rep = speedup_report(result);
    write_speedup_csv(speedup_csv, rep);
    std::cout << "speedup non-decreasing in frame count: "
              << (rep.non_decreasing_in_frames ? "yes" : "no") << "\n";
    for (const auto& note : rep.notes) std::cout << "note: " << note << "\n";
  }
  if (!chart_png.empty()) write_png(chart_png, render_latency_chart(result));
  std::cout << "wrote " << result.cells.size() << " cells to " << out_csv << "\n";
  return 0;
}

int cmd_roundtrip(const CommonFlags& flags, const std::string& in_dir, int group_size,
                  int overlap) {
  VideoSequence<float> video;
  if (!in_dir.empty()) {
    video = read_frames<float>(in_dir);
  } else {
    SynthConfig synth;
    video = make_clip<float>(flags.seed_set ? flags.seed : 99, synth);
  }
  const FrameCube<float> cube = stack(video);
  const GroupingPlan plan = plan_groups(cube.data.channels, group_size, overlap);
  const auto groups = extract_groups(cube, plan);
  const FrameCube<float> merged = merge_groups(groups, plan, cube.colors, cube.frame_rate);
  const VideoSequence<float> rec = unstack(merged);

  bool identical = rec.frame_count() == video.frame_count();
  for (int t = 0; identical && t < video.frame_count(); ++t)
    identical = rec.frames[t].data == video.frames[t].data;
  nlohmann::json j = {{"frames", video.frame_count()},
                      {"groups", plan.group_count()},
                      {"pad_channels", plan.pad_channels},
                      {"identical", identical}};
  std::cout << j.dump(2) << "\n";
  if (!identical) throw std::runtime_error("grouping round trip is not bitwise identical");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grouped-compression video super-resolution pipeline"};
  app.require_subcommand(1);
  std::function<int()> action;

  CommonFlags flags;

  auto* degrade = app.add_subcommand("degrade", "blur, downsample and compress clips");
  {
    static std::string in_dir, out_dir;
    static int synth = 0, crf = -1;
    add_common(degrade, flags);
    degrade->add_option("--in", in_dir, "HR frames directory (%08d.png)");
    degrade->add_option("--synth", synth, "generate N procedural clips instead of --in");
    degrade->add_option("--out", out_dir, "output directory")->envname("FCVSR_OUT");
    degrade->add_option("--crf", crf, "compression level override");
    degrade->callback([&] { action = [&] { return cmd_degrade(flags, in_dir, synth, out_dir, crf); }; });
  }

  auto* pretrain = app.add_subcommand("pretrain", "stage 1: train the codec round trip");
  {
    static std::string manifest, out_dir;
    static long steps = 0;
    add_common(pretrain, flags);
    pretrain->add_option("--manifest", manifest, "clip manifest instead of procedural clips")
        ->envname("FCVSR_MANIFEST");
    pretrain->add_option("--out", out_dir, "codec archive directory")->envname("FCVSR_OUT");
    pretrain->add_option("--steps", steps, "step count override");
    pretrain->callback(
        [&] { action = [&] { return cmd_pretrain(flags, manifest, out_dir, steps); }; });
  }

  auto* train = app.add_subcommand("train", "stage 2: train the backbone");
  {
    static std::string manifest, codec_dir, out_dir, mode;
    static long steps = 0;
    add_common(train, flags);
    train->add_option("--manifest", manifest, "clip manifest instead of procedural clips")
        ->envname("FCVSR_MANIFEST");
    train->add_option("--codec", codec_dir, "pretrained codec archive");
    train->add_option("--out", out_dir, "backbone archive directory")->envname("FCVSR_OUT");
    train->add_option("--steps", steps, "step count override");
    train->add_option("--mode", mode, "frozen_codec or joint");
    train->callback([&] {
      action = [&] { return cmd_train(flags, manifest, codec_dir, out_dir, steps, mode); };
    });
  }

  auto* infer = app.add_subcommand("infer", "compress, super-resolve and reconstruct a clip");
  {
    static std::string codec_dir, backbone_params, backbone_name, in_dir, out_dir, latents;
    add_common(infer, flags);
    infer->add_option("--codec", codec_dir, "codec archive");
    infer->add_option("--backbone-params", backbone_params, "trained toy backbone archive");
    infer->add_option("--backbone", backbone_name, "builtin backbone name override");
    infer->add_option("--in", in_dir, "LR frames directory");
    infer->add_option("--out", out_dir, "SR frames directory")->envname("FCVSR_OUT");
    infer->add_option("--dump-latents", latents, "directory for latent tensors");
    infer->callback([&] {
      action = [&] {
        return cmd_infer(flags, codec_dir, backbone_params, backbone_name, in_dir, out_dir,
                         latents);
      };
    });
  }

  auto* eval = app.add_subcommand("eval", "Y-channel PSNR/SSIM between two frame directories");
  {
    static std::string test_dir, ref_dir, out_path;
    eval->add_option("--test", test_dir, "frames under test");
    eval->add_option("--ref", ref_dir, "reference frames");
    eval->add_option("--out", out_path, "write the JSON report here too")->envname("FCVSR_OUT");
    eval->callback([&] { action = [&] { return cmd_eval(test_dir, ref_dir, out_path); }; });
  }

  auto* bench = app.add_subcommand("bench", "latency grid: compression on vs off");
  {
    static std::string out_csv, speedup_csv, chart_png;
    add_common(bench, flags);
    bench->add_option("--out", out_csv, "benchmark CSV path")->envname("FCVSR_OUT");
    bench->add_option("--speedup", speedup_csv, "also write a speedup CSV");
    bench->add_option("--chart", chart_png, "also render a PNG line chart");
    bench->callback(
        [&] { action = [&] { return cmd_bench(flags, out_csv, speedup_csv, chart_png); }; });
  }

  auto* roundtrip = app.add_subcommand("roundtrip", "verify the grouping layer is lossless");
  {
    static std::string in_dir;
    static int group_size = 9, overlap = 3;
    add_common(roundtrip, flags);
    roundtrip->add_option("--in", in_dir, "frames directory (procedural clip when absent)");
    roundtrip->add_option("--group-size", group_size, "channels per group");
    roundtrip->add_option("--overlap", overlap, "shared channels between neighbors");
    roundtrip->callback(
        [&] { action = [&] { return cmd_roundtrip(flags, in_dir, group_size, overlap); }; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  auto one_line = [](std::string s) {
    for (auto& c : s)
      if (c == '\n') c = ' ';
    return s;
  };
  try {
    return action ? action() : 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: data: " << one_line(e.what()) << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << one_line(e.what()) << "\n";
    return 4;
  }
}
