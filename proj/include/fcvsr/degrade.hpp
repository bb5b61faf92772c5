#pragma once

#include <unistd.h>

#include <array>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fcvsr/core.hpp"
#include "fcvsr/png_io.hpp"
#include "fcvsr/video.hpp"

namespace fcvsr {

inline std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) throw ParamError("gaussian_kernel: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// Separable Gaussian blur with symmetric (mirror) boundary handling.
template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& frame, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  Tensor<double> tmp(frame.channels, frame.height, frame.width);
  for (int c = 0; c < frame.channels; ++c)
    for (int y = 0; y < frame.height; ++y)
      for (int x = 0; x < frame.width; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * static_cast<double>(frame.at(c, y, reflect_index(x + i, frame.width)));
        tmp.at(c, y, x) = acc;
      }
  Tensor<T> out(frame.channels, frame.height, frame.width);
  for (int c = 0; c < frame.channels; ++c)
    for (int y = 0; y < frame.height; ++y)
      for (int x = 0; x < frame.width; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * tmp.at(c, reflect_index(y + i, frame.height), x);
        out.at(c, y, x) = static_cast<T>(acc);
      }
  return out;
}

/// Point decimation by an integer factor, sampling index 0 first. Dimensions
/// that are not a multiple of the factor are cropped at the bottom/right.
template <typename T>
Tensor<T> downsample(const Tensor<T>& frame, int factor) {
  if (factor < 1) throw ParamError("downsample: factor must be >= 1");
  const int h = frame.height / factor;
  const int w = frame.width / factor;
  if (h < 1 || w < 1) throw ShapeError("downsample: frame smaller than the factor");
  Tensor<T> out(frame.channels, h, w);
  for (int c = 0; c < frame.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = frame.at(c, y * factor, x * factor);
  return out;
}

namespace detail {

struct Dct8 {
  std::array<std::array<double, 8>, 8> m{};
  Dct8() {
    const double pi = std::acos(-1.0);
    for (int k = 0; k < 8; ++k) {
      const double s = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n) m[k][n] = s * std::cos(pi * (2 * n + 1) * k / 16.0);
    }
  }
};

inline const Dct8& dct8() {
  static const Dct8 d;
  return d;
}

}  // namespace detail

/// Quantization step used by the stand-in codec: doubles every 6 CRF points,
/// anchored so crf=12 maps to step 1 (identity stays nearly lossless), and
/// clamped at 1 below that.
inline double dct_proxy_step(int crf) { return std::max(1.0, std::exp2((crf - 12) / 6.0)); }

/// Deterministic stand-in for H.264: blockwise 8x8 orthonormal DCT on values
/// scaled to [0,255], uniform quantization of all coefficients, inverse
/// transform. Edges are mirror-padded to whole blocks.
template <typename T>
Tensor<T> dct_proxy_frame(const Tensor<T>& frame, int crf) {
  const double step = dct_proxy_step(crf);
  const auto& d = detail::dct8().m;
  Tensor<T> out(frame.channels, frame.height, frame.width);
  double block[8][8], tmp[8][8];
  for (int c = 0; c < frame.channels; ++c)
    for (int by = 0; by < frame.height; by += 8)
      for (int bx = 0; bx < frame.width; bx += 8) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            block[y][x] = 255.0 * static_cast<double>(frame.at(
                              c, reflect_index(by + y, frame.height),
                              reflect_index(bx + x, frame.width)));
        // forward: rows then columns
        for (int y = 0; y < 8; ++y)
          for (int k = 0; k < 8; ++k) {
            double acc = 0.0;
            for (int n = 0; n < 8; ++n) acc += d[k][n] * block[y][n];
            tmp[y][k] = acc;
          }
        for (int x = 0; x < 8; ++x)
          for (int k = 0; k < 8; ++k) {
            double acc = 0.0;
            for (int n = 0; n < 8; ++n) acc += d[k][n] * tmp[n][x];
            block[k][x] = acc;
          }
        for (auto& row : block)
          for (auto& v : row) v = std::round(v / step) * step;
        // inverse: transpose of the orthonormal transform
        for (int x = 0; x < 8; ++x)
          for (int n = 0; n < 8; ++n) {
            double acc = 0.0;
            for (int k = 0; k < 8; ++k) acc += d[k][n] * block[k][x];
            tmp[n][x] = acc;
          }
        for (int y = 0; y < 8; ++y)
          for (int n = 0; n < 8; ++n) {
            double acc = 0.0;
            for (int k = 0; k < 8; ++k) acc += d[k][n] * tmp[y][k];
            const int py = by + y, px = bx + n;
            if (py < frame.height && px < frame.width)
              out.at(c, py, px) = static_cast<T>(clamp01(acc / 255.0));
          }
      }
  return out;
}

enum class CompressorMode { external, dct_proxy };

inline std::string to_string(CompressorMode m) {
  return m == CompressorMode::external ? "external" : "dct_proxy";
}

inline CompressorMode compressor_mode_from_string(const std::string& s) {
  if (s == "external") return CompressorMode::external;
  if (s == "dct_proxy") return CompressorMode::dct_proxy;
  throw ConfigError("unknown compressor mode '" + s + "'");
}

template <typename T>
struct CompressResult {
  VideoSequence<T> video;
  bool used_fallback = false;  // external mode fell back to the dct proxy
  std::string encoder_log;
};

namespace detail {

inline std::filesystem::path make_temp_dir(const char* tag) {
  static std::atomic<unsigned> counter{0};
  auto base = std::filesystem::temp_directory_path();
  for (int attempt = 0; attempt < 64; ++attempt) {
    auto p = base / ("fcvsr-" + std::string(tag) + "-" + std::to_string(::getpid()) + "-" +
                     std::to_string(counter.fetch_add(1)));
    std::error_code ec;
    if (std::filesystem::create_directories(p, ec)) return p;
  }
  throw DataError("could not create a temporary directory");
}

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  out += "'";
  return out;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Round-trips the clip through an external H.264 encoder (x264 settings:
/// preset medium, yuv420p, constant rate factor). Returns false on any
/// subprocess or frame-count failure, leaving stderr in `log`.
template <typename T>
bool compress_external(const VideoSequence<T>& video, int crf, const std::string& encoder,
                       VideoSequence<T>& out, std::string& log) {
  namespace fs = std::filesystem;
  const fs::path work = detail::make_temp_dir("enc");
  const fs::path in_dir = work / "in";
  const fs::path dec_dir = work / "dec";
  const fs::path err = work / "stderr.txt";
  bool ok = false;
  try {
    write_frames(in_dir, video);
    fs::create_directories(dec_dir);
    std::ostringstream enc_cmd;
    enc_cmd << detail::shell_quote(encoder) << " -y -v error -framerate 25 -start_number 0 -i "
            << detail::shell_quote((in_dir / "%08d.png").string())
            << " -c:v libx264 -preset medium -crf " << crf << " -pix_fmt yuv420p "
            << detail::shell_quote((work / "clip.mp4").string()) << " 2>"
            << detail::shell_quote(err.string());
    std::ostringstream dec_cmd;
    dec_cmd << detail::shell_quote(encoder) << " -y -v error -i "
            << detail::shell_quote((work / "clip.mp4").string()) << " -start_number 0 "
            << detail::shell_quote((dec_dir / "%08d.png").string()) << " 2>>"
            << detail::shell_quote(err.string());
    if (std::system(enc_cmd.str().c_str()) == 0 && std::system(dec_cmd.str().c_str()) == 0) {
      VideoSequence<T> decoded = read_frames<T>(dec_dir, video.frame_rate);
      if (decoded.frame_count() == video.frame_count() &&
          decoded.frames[0].same_shape(video.frames[0])) {
        out = std::move(decoded);
        ok = true;
      } else {
        log = "decoded clip shape mismatch";
      }
    }
    if (!ok && log.empty()) log = detail::slurp(err);
  } catch (const std::exception& e) {
    log = e.what();
    ok = false;
  }
  std::error_code ec;
  fs::remove_all(work, ec);
  return ok;
}

/// CRF 0 is a no-op (uncompressed). In external mode a missing or failing
/// encoder binary degrades to the deterministic dct proxy and flags it.
template <typename T>
CompressResult<T> compress_crf(const VideoSequence<T>& video, int crf,
                               CompressorMode mode = CompressorMode::external,
                               const std::string& encoder = "ffmpeg") {
  if (crf < 0 || crf > 51) throw ParamError("compress_crf: crf must be in [0,51]");
  video.validate("compress_crf");
  CompressResult<T> res;
  if (crf == 0) {
    res.video = video;
    return res;
  }
  if (mode == CompressorMode::external) {
    if (compress_external(video, crf, encoder, res.video, res.encoder_log)) return res;
    res.used_fallback = true;
  }
  res.video.frame_rate = video.frame_rate;
  res.video.frames.clear();
  for (const auto& f : video.frames) res.video.frames.push_back(dct_proxy_frame(f, crf));
  return res;
}

struct DegradeConfig {
  double blur_sigma = 1.5;
  int scale = 4;
  int crf = 25;
  CompressorMode mode = CompressorMode::external;
  std::string encoder = "ffmpeg";
};

template <typename T>
struct DegradeResult {
  VideoSequence<T> lr;        // blurred, decimated, compressed
  VideoSequence<T> lr_clean;  // blurred, decimated, no compression
  bool used_fallback = false;
  int cropped_x = 0;  // HR columns/rows dropped to reach a multiple of scale
  int cropped_y = 0;
};

template <typename T>
DegradeResult<T> make_lr(const VideoSequence<T>& hr, const DegradeConfig& cfg) {
  hr.validate("make_lr");
  DegradeResult<T> res;
  res.cropped_x = hr.frames[0].width % cfg.scale;
  res.cropped_y = hr.frames[0].height % cfg.scale;
  res.lr_clean.frame_rate = hr.frame_rate;
  for (const auto& f : hr.frames)
    res.lr_clean.frames.push_back(downsample(gaussian_blur(f, cfg.blur_sigma), cfg.scale));
  auto compressed = compress_crf(res.lr_clean, cfg.crf, cfg.mode, cfg.encoder);
  res.lr = std::move(compressed.video);
  res.used_fallback = compressed.used_fallback;
  return res;
}

/// Deterministic assignment of compression levels to clips: a seeded shuffle
/// picks round(fraction*n) clips, each drawing a CRF uniformly from the set;
/// the rest stay uncompressed (crf 0).
inline std::vector<int> mix_dataset(int clip_count, double fraction, const std::vector<int>& crf_set,
                                    std::uint64_t seed) {
  if (clip_count < 0) throw ParamError("mix_dataset: negative clip count");
  if (fraction < 0.0 || fraction > 1.0) throw ParamError("mix_dataset: fraction outside [0,1]");
  if (fraction > 0.0 && crf_set.empty()) throw ParamError("mix_dataset: empty crf set");
  std::vector<int> order(clip_count);
  for (int i = 0; i < clip_count; ++i) order[i] = i;
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> crf(clip_count, 0);
  const int compressed = static_cast<int>(std::lround(fraction * clip_count));
  std::uniform_int_distribution<std::size_t> pick(0, crf_set.empty() ? 0 : crf_set.size() - 1);
  for (int i = 0; i < compressed; ++i) crf[order[i]] = crf_set[pick(rng)];
  return crf;
}

}  // namespace fcvsr
