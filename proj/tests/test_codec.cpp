#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "fcvsr/backbone.hpp"
#include "fcvsr/codec.hpp"
#include "fcvsr/synth.hpp"

using namespace fcvsr;
namespace fs = std::filesystem;

namespace {

CodecHyper small_hyper() {
  CodecHyper h;
  h.coder_width = 8;
  h.coder_blocks = 1;
  h.cleaning_width = 8;
  h.cleaning_blocks = 1;
  return h;
}

struct ChannelStats {
  double mean = 0.0, stddev = 0.0;
};

ChannelStats stats(const Tensor<float>& f, int c) {
  double m = 0.0, m2 = 0.0;
  const float* p = f.plane(c);
  for (std::size_t i = 0; i < f.plane_size(); ++i) {
    m += p[i];
    m2 += static_cast<double>(p[i]) * p[i];
  }
  m /= static_cast<double>(f.plane_size());
  m2 /= static_cast<double>(f.plane_size());
  return {m, std::sqrt(std::max(0.0, m2 - m * m))};
}

fs::path temp_dir(const char* tag) {
  const fs::path p = fs::temp_directory_path() / (std::string("fcvsr-codec-") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("hyperparameter validation") {
  CodecHyper h;
  CHECK_NOTHROW(h.validate());
  h.group_size = 8;
  CHECK_THROWS_AS(h.validate(), ConfigError);
  h = CodecHyper{};
  h.overlap = 9;
  CHECK_THROWS_AS(h.validate(), ConfigError);
  h = CodecHyper{};
  h.overlap = 2;
  CHECK_THROWS_AS(h.validate(), ConfigError);
  h = CodecHyper{};
  h.latent_channels = 4;
  CHECK_THROWS_AS(h.validate(), ConfigError);
  h = CodecHyper{};
  h.cleaning_passes = 0;
  CHECK_THROWS_AS(h.validate(), ConfigError);
  h = CodecHyper{};
  h.colors = 1;
  CHECK_THROWS_AS(h.validate(), ConfigError);

  CHECK(CodecHyper{}.frames_per_group() == 3);
  CHECK(CodecHyper{}.flow_channels() == 4);
  CHECK(CodecHyper{}.encoder_inputs() == 13);
}

TEST_CASE("an untrained cleaning network is the exact identity") {
  Rng rng(1);
  CodecModel<float> codec;
  codec.init(small_hyper(), rng);
  SynthConfig cfg;
  cfg.frames = 3;
  cfg.height = cfg.width = 24;
  const auto clip = make_clip<float>(5, cfg);
  const auto cleaned = clean_sequence(clip, codec);
  REQUIRE(cleaned.frame_count() == 3);
  for (int t = 0; t < 3; ++t)
    CHECK(std::memcmp(cleaned.frames[t].data.data(), clip.frames[t].data.data(),
                      clip.frames[t].size() * sizeof(float)) == 0);
}

TEST_CASE("color correction worked example: 0.7 maps to 0.4") {
  // sr channel with mean 0.5 and std 0.2; reference with mean 0.3 and std 0.1.
  // Two-valued planes {0.7, 0.3} and {0.4, 0.2} realize those statistics.
  Tensor<float> sr(3, 2, 2), ref(3, 2, 2);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i) {
      sr.plane(c)[i] = i % 2 == 0 ? 0.7f : 0.3f;
      ref.plane(c)[i] = i % 2 == 0 ? 0.4f : 0.2f;
    }
  const auto out = color_correct(sr, ref);
  // (x - mu)/sigma is exactly +-1 here and the stats are exact in double,
  // so the mapping reproduces the reference values bitwise.
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i)
      CHECK(out.plane(c)[i] == (i % 2 == 0 ? 0.4f : 0.2f));
}

TEST_CASE("color correction matches target statistics within 1e-5") {
  const auto sr = make_frame<float>(31, 32, 32);
  const auto ref = make_frame<float>(77, 16, 16);
  const auto out = color_correct(sr, ref);
  for (int c = 0; c < 3; ++c) {
    const auto so = stats(out, c);
    const auto sref = stats(ref, c);
    CHECK(so.mean == Catch::Approx(sref.mean).margin(1e-5));
    CHECK(so.stddev == Catch::Approx(sref.stddev).margin(1e-5));
  }
}

TEST_CASE("color correction with matching statistics is a no-op within 1e-6") {
  const auto f = make_frame<float>(41, 24, 24);
  const auto out = color_correct(f, f);
  for (std::size_t i = 0; i < f.size(); ++i)
    CHECK(out.data[i] == Catch::Approx(f.data[i]).margin(1e-6));
}

TEST_CASE("color correction is idempotent within 1e-6") {
  const auto sr = make_frame<float>(51, 24, 24);
  const auto ref = make_frame<float>(52, 24, 24);
  const auto once = color_correct(sr, ref);
  const auto twice = color_correct(once, ref);
  for (std::size_t i = 0; i < once.size(); ++i)
    CHECK(twice.data[i] == Catch::Approx(once.data[i]).margin(1e-6));
}

TEST_CASE("a constant frame collapses to the reference mean") {
  Tensor<float> sr(3, 8, 8);
  sr.fill(0.8f);
  const auto ref = make_frame<float>(61, 8, 8);
  const auto out = color_correct(sr, ref);
  for (int c = 0; c < 3; ++c) {
    const double mu = stats(ref, c).mean;
    for (std::size_t i = 0; i < out.plane_size(); ++i)
      CHECK(out.plane(c)[i] == Catch::Approx(mu).margin(1e-6));
  }
}

TEST_CASE("channel concatenation keeps both blocks in order") {
  Tensor<float> a(2, 3, 3), b(1, 3, 3);
  a.fill(1.0f);
  b.fill(2.0f);
  const auto cat = concat_channels(a, b);
  REQUIRE(cat.channels == 3);
  CHECK(cat.plane(0)[0] == 1.0f);
  CHECK(cat.plane(1)[0] == 1.0f);
  CHECK(cat.plane(2)[0] == 2.0f);
  Tensor<float> c(1, 4, 4);
  CHECK_THROWS_AS(concat_channels(a, c), ShapeError);
}

TEST_CASE("compression yields one latent frame per group") {
  Rng rng(2);
  CodecModel<float> codec;
  codec.init(small_hyper(), rng);
  SynthConfig cfg;
  cfg.frames = 7;
  cfg.height = cfg.width = 24;
  const auto clip = make_clip<float>(9, cfg);

  FlowConfig flow;
  flow.method = FlowMethod::zero;
  const auto lat = compress_sequence(clip, codec, flow);
  CHECK(lat.plan.group_count() == 3);
  REQUIRE(lat.latents.size() == 3);
  for (const auto& l : lat.latents) {
    CHECK(l.channels == 3);
    CHECK(l.height == 24);
    CHECK(l.width == 24);
  }

  // three frames form a single group
  SynthConfig three = cfg;
  three.frames = 3;
  const auto single = compress_sequence(make_clip<float>(9, three), codec, flow);
  CHECK(single.latents.size() == 1);

  // compression is deterministic
  const auto again = compress_sequence(clip, codec, flow);
  CHECK(std::memcmp(lat.latents[0].data.data(), again.latents[0].data.data(),
                    lat.latents[0].size() * sizeof(float)) == 0);
}

TEST_CASE("decompression restores the frame count and matches reference statistics") {
  Rng rng(3);
  CodecModel<float> codec;
  codec.init(small_hyper(), rng);
  SynthConfig cfg;
  cfg.frames = 7;
  cfg.height = cfg.width = 24;
  const auto clip = make_clip<float>(15, cfg);
  FlowConfig flow;
  flow.method = FlowMethod::zero;

  const auto lat = compress_sequence(clip, codec, flow);
  const auto rec = decompress_sequence(lat.latents, lat.plan, clip, codec);
  REQUIRE(rec.frame_count() == 7);
  for (int t = 0; t < 7; ++t) {
    REQUIRE(rec.frames[t].same_shape(clip.frames[t]));
    for (int c = 0; c < 3; ++c) {
      const auto got = stats(rec.frames[t], c);
      const auto want = stats(clip.frames[t], c);
      CHECK(got.mean == Catch::Approx(want.mean).margin(1e-5));
      CHECK(got.stddev == Catch::Approx(want.stddev).margin(1e-5));
    }
  }

  // upscaled latents decode to upscaled frames (decoder is scale-agnostic)
  std::vector<Tensor<float>> big;
  for (const auto& l : lat.latents) big.push_back(bicubic_upsample(l, 2));
  const auto rec2 = decompress_sequence(big, lat.plan, clip, codec);
  CHECK(rec2.frames[0].height == 48);
  CHECK(rec2.frames[0].width == 48);
  CHECK(rec2.frame_count() == 7);

  std::vector<Tensor<float>> wrong(big.begin(), big.end() - 1);
  CHECK_THROWS_AS(decompress_sequence(wrong, lat.plan, clip, codec), ShapeError);
}

TEST_CASE("codec archives round-trip parameters bitwise") {
  Rng rng(4);
  CodecModel<float> codec;
  codec.init(small_hyper(), rng);
  const auto dir = temp_dir("roundtrip");
  save_codec(dir, codec, 123);

  long step = 0;
  auto loaded = load_codec<float>(dir, &step);
  CHECK(step == 123);
  CHECK(loaded.hyper == codec.hyper);
  auto a = codec.params();
  auto b = loaded.params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second->v == b[i].second->v);
  }

  // re-saving the loaded model reproduces the archive byte for byte
  const auto dir2 = temp_dir("roundtrip2");
  save_codec(dir2, loaded, 123);
  CHECK(archive::tensor_checksum(dir) == archive::tensor_checksum(dir2));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("archives reject missing, truncated, or foreign data") {
  Rng rng(5);
  CodecModel<float> codec;
  codec.init(small_hyper(), rng);
  const auto dir = temp_dir("reject");
  save_codec(dir, codec);

  SECTION("missing directory") {
    CHECK_THROWS_AS(load_codec<float>(dir / "nope"), DataError);
  }
  SECTION("truncated tensor blob") {
    const fs::path blob = dir / "tensors" / "cleaning" / "in" / "weight.f32";
    REQUIRE(fs::exists(blob));
    fs::resize_file(blob, fs::file_size(blob) - 4);
    CHECK_THROWS_AS(load_codec<float>(dir), DataError);
  }
  SECTION("wrong archive kind") {
    Rng r2(6);
    BackboneConfig bcfg;
    bcfg.scale = 2;
    bcfg.width = 4;
    bcfg.blocks = 1;
    ToyBackbone<float> bb(bcfg, r2);
    const auto bdir = temp_dir("bbkind");
    save_backbone(bdir, bb);
    CHECK_THROWS_AS(load_codec<float>(bdir), DataError);
    CHECK_THROWS_AS(load_toy_backbone<float>(dir), DataError);
    fs::remove_all(bdir);
  }
  SECTION("incomplete header") {
    auto header = archive::read_header(dir);
    header["arch"].erase("group_size");
    archive::write_header(dir, header);
    CHECK_THROWS_AS(load_codec<float>(dir), DataError);
  }
  fs::remove_all(dir);
}

TEST_CASE("hyperparameters survive the json round trip") {
  CodecHyper h = small_hyper();
  h.group_size = 18;
  h.overlap = 6;
  const CodecHyper back = hyper_from_json(hyper_to_json(h));
  CHECK(back == h);
}
