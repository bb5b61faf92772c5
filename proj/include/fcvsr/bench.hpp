#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <new>
#include <string>
#include <vector>

#include "fcvsr/backbone.hpp"
#include "fcvsr/codec.hpp"

namespace fcvsr {

struct BenchScenario {
  std::vector<int> frame_counts = {10, 50, 100, 200};
  std::vector<int> resolutions = {64, 96, 128, 160, 192, 224};  // input (LR) side lengths
  int repetitions = 5;  // timed runs per cell, after one warm-up
  std::uint64_t seed = 1234;
  CodecHyper codec;
  BackboneConfig backbone;
  FlowConfig flow;
  double unstable_iqr_ratio = 0.2;  // IQR/median above this flags the cell
};

struct BenchCell {
  int frames = 0;
  int resolution = 0;
  bool compression = false;
  double median_ms = 0.0;
  double iqr_ms = 0.0;
  int invocations = 0;
  std::string status;  // "ok", "unstable", "failed: ..."
  std::vector<double> runs_ms;
};

struct BenchResult {
  std::vector<BenchCell> cells;
  std::string protocol;  // human-readable measurement description
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * (sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - lo;
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

template <typename T>
VideoSequence<T> noise_clip(int frames, int side, Rng& rng) {
  VideoSequence<T> v;
  v.frames.reserve(frames);
  for (int t = 0; t < frames; ++t) {
    Tensor<T> f(3, side, side);
    fill_uniform(f, rng);
    v.frames.push_back(std::move(f));
  }
  return v;
}

}  // namespace detail

/// Times the full pipeline (compression on: clean+group+flow+encode, backbone
/// on latents, decode+merge+correct) against the plain per-frame backbone
/// (compression off) over a frames x resolution grid. Both modes of a cell
/// pair share one clip and are timed back to back within each repetition, so
/// slow machine-state drift (frequency scaling, scheduler quota) hits both
/// sides of a repetition equally and cancels out of the speedup ratio. One
/// untimed warm-up per mode precedes the timed repetitions. Pairs that
/// exhaust memory or otherwise fail are reported as failed and the grid
/// continues. Strictly serial, one clip in flight.
inline BenchResult run_latency_grid(const BenchScenario& scenario) {
  if (scenario.repetitions < 3)
    throw ParamError("run_latency_grid: at least 3 repetitions are required");
  BenchResult result;
  result.protocol = "monotonic clock, 1 warm-up per mode + " +
                    std::to_string(scenario.repetitions) +
                    " timed runs per cell, off/on interleaved within each repetition, median "
                    "and interquartile range reported, serial single-worker execution";

  Rng rng(scenario.seed);
  CodecModel<float> codec;
  codec.init(scenario.codec, rng);
  auto backbone = make_backbone<float>(scenario.backbone, rng);

  for (int res : scenario.resolutions)
    for (int frames : scenario.frame_counts) {
      BenchCell off_cell, on_cell;
      off_cell.frames = on_cell.frames = frames;
      off_cell.resolution = on_cell.resolution = res;
      on_cell.compression = true;
      off_cell.invocations = frames;
      on_cell.invocations = backbone_invocation_count(
          frames, scenario.codec.group_size, scenario.codec.overlap, scenario.codec.colors);

      const auto finalize = [&](BenchCell& cell) {
        std::vector<double> sorted = cell.runs_ms;
        std::sort(sorted.begin(), sorted.end());
        cell.median_ms = detail::quantile_sorted(sorted, 0.5);
        cell.iqr_ms =
            detail::quantile_sorted(sorted, 0.75) - detail::quantile_sorted(sorted, 0.25);
        cell.status = (cell.median_ms > 0.0 &&
                       cell.iqr_ms / cell.median_ms > scenario.unstable_iqr_ratio)
                          ? "unstable"
                          : "ok";
      };

      try {
        Rng clip_rng(scenario.seed ^ (static_cast<std::uint64_t>(frames) << 20) ^ res);
        const VideoSequence<float> clip = detail::noise_clip<float>(frames, res, clip_rng);
        const auto run_off = [&] {
          const auto t0 = std::chrono::steady_clock::now();
          auto sr = super_resolve(*backbone, clip.frames);
          volatile float sink = sr[0].data[0];
          (void)sink;
          return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                           t0)
              .count();
        };
        const auto run_on = [&] {
          const auto t0 = std::chrono::steady_clock::now();
          LatentClip<float> lat = compress_sequence(clip, codec, scenario.flow);
          auto sr = super_resolve(*backbone, lat.latents);
          volatile float sink = decompress_sequence(sr, lat.plan, clip, codec).frames[0].data[0];
          (void)sink;
          return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                           t0)
              .count();
        };
        run_off();
        run_on();
        for (int rep = 0; rep < scenario.repetitions; ++rep) {
          off_cell.runs_ms.push_back(run_off());
          on_cell.runs_ms.push_back(run_on());
        }
        finalize(off_cell);
        finalize(on_cell);
      } catch (const std::bad_alloc&) {
        off_cell.status = on_cell.status = "failed: out of memory";
      } catch (const std::exception& e) {
        off_cell.status = on_cell.status = std::string("failed: ") + e.what();
      }
      result.cells.push_back(std::move(off_cell));
      result.cells.push_back(std::move(on_cell));
    }
  return result;
}

inline void write_bench_csv(const std::filesystem::path& path, const BenchResult& result) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write benchmark csv " + path.string());
  out << "frames,resolution,compression,median_ms,iqr_ms,invocations,status\n";
  for (const auto& c : result.cells) {
    out << c.frames << "," << c.resolution << "," << (c.compression ? "on" : "off") << ",";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f,%.3f", c.median_ms, c.iqr_ms);
    out << buf << "," << c.invocations << "," << c.status << "\n";
  }
}

struct SpeedupRow {
  int frames = 0;
  int resolution = 0;
  double off_ms = 0.0;
  double on_ms = 0.0;
  double speedup = 0.0;  // off/on
  bool on_faster = false;
};

struct SpeedupReport {
  std::vector<SpeedupRow> rows;
  bool non_decreasing_in_frames = true;  // per resolution, over ok/unstable cells
  std::vector<std::string> notes;
};

inline SpeedupReport speedup_report(const BenchResult& result) {
  SpeedupReport rep;
  auto find_cell = [&](int frames, int res, bool comp) -> const BenchCell* {
    for (const auto& c : result.cells)
      if (c.frames == frames && c.resolution == res && c.compression == comp) return &c;
    return nullptr;
  };
  std::vector<std::pair<int, int>> keys;
  for (const auto& c : result.cells)
    if (c.compression) keys.emplace_back(c.resolution, c.frames);
  std::sort(keys.begin(), keys.end());

  int last_res = -1;
  double last_speedup = 0.0;
  for (const auto& [res, frames] : keys) {
    const BenchCell* on = find_cell(frames, res, true);
    const BenchCell* off = find_cell(frames, res, false);
    if (!on || !off) continue;
    if (on->status.starts_with("failed") || off->status.starts_with("failed")) {
      rep.notes.push_back("cell " + std::to_string(frames) + "x" + std::to_string(res) +
                          " skipped: " + on->status + " / " + off->status);
      continue;
    }
    SpeedupRow row;
    row.frames = frames;
    row.resolution = res;
    row.on_ms = on->median_ms;
    row.off_ms = off->median_ms;
    if (!on->runs_ms.empty() && on->runs_ms.size() == off->runs_ms.size()) {
      // Paired repetitions: the ratio within one repetition is immune to
      // drift between repetitions, so take the median of the ratios rather
      // than the ratio of the medians.
      std::vector<double> ratios(on->runs_ms.size());
      for (std::size_t i = 0; i < ratios.size(); ++i)
        ratios[i] = on->runs_ms[i] > 0.0 ? off->runs_ms[i] / on->runs_ms[i] : 0.0;
      std::sort(ratios.begin(), ratios.end());
      row.speedup = detail::quantile_sorted(ratios, 0.5);
    } else {
      row.speedup = on->median_ms > 0.0 ? off->median_ms / on->median_ms : 0.0;
    }
    row.on_faster = on->median_ms < off->median_ms;
    if (res == last_res && row.speedup < last_speedup) rep.non_decreasing_in_frames = false;
    last_res = res;
    last_speedup = row.speedup;
    rep.rows.push_back(row);
  }
  return rep;
}

inline void write_speedup_csv(const std::filesystem::path& path, const SpeedupReport& rep) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write speedup csv " + path.string());
  out << "frames,resolution,off_ms,on_ms,speedup,on_faster\n";
  for (const auto& r : rep.rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d,%d,%.3f,%.3f,%.4f,%s", r.frames, r.resolution, r.off_ms,
                  r.on_ms, r.speedup, r.on_faster ? "yes" : "no");
    out << buf << "\n";
  }
}

namespace detail {

// 4x6 digit glyphs for chart tick labels
inline const char* digit_glyph(char c) {
  static const char* glyphs[10] = {
      "011010011001100110010110", "001001100010001000100111", "011010010010010010001111",
      "111000010110000110010110", "100110011111000100010001", "111110001110000110010110",
      "011010001110100110010110", "111100010010010001000100", "011010010110100110010110",
      "011010011001011100010110"};
  if (c < '0' || c > '9') return nullptr;
  return glyphs[c - '0'];
}

inline void draw_text(Tensor<float>& img, int x, int y, const std::string& text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char* g = digit_glyph(text[i]);
    if (!g) continue;
    for (int gy = 0; gy < 6; ++gy)
      for (int gx = 0; gx < 4; ++gx)
        if (g[gy * 4 + gx] == '1') {
          const int px = x + static_cast<int>(i) * 5 + gx, py = y + gy;
          if (px >= 0 && px < img.width && py >= 0 && py < img.height)
            for (int c = 0; c < 3; ++c) img.at(c, py, px) = 0.0f;
        }
  }
}

inline void draw_line(Tensor<float>& img, int x0, int y0, int x1, int y1, const float rgb[3]) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    if (x0 >= 0 && x0 < img.width && y0 >= 0 && y0 < img.height)
      for (int c = 0; c < 3; ++c) img.at(c, y0, x0) = rgb[c];
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace detail

/// Median latency vs frame count, one line per (resolution, mode). Modes share
/// a hue per resolution; the compression-off line is the lighter one.
inline Tensor<float> render_latency_chart(const BenchResult& result) {
  const int w = 640, h = 420, ml = 56, mr = 16, mt = 16, mb = 36;
  Tensor<float> img(3, h, w, 1.0f);
  double max_ms = 1.0;
  int max_frames = 1;
  for (const auto& c : result.cells)
    if (!c.status.starts_with("failed")) {
      max_ms = std::max(max_ms, c.median_ms);
      max_frames = std::max(max_frames, c.frames);
    }
  const float axis[3] = {0.0f, 0.0f, 0.0f};
  detail::draw_line(img, ml, h - mb, w - mr, h - mb, axis);
  detail::draw_line(img, ml, mt, ml, h - mb, axis);
  auto px = [&](double frames) {
    return ml + static_cast<int>((w - ml - mr - 1) * frames / max_frames);
  };
  auto py = [&](double ms) {
    return h - mb - static_cast<int>((h - mt - mb - 1) * ms / max_ms);
  };
  for (int tick = 0; tick <= 4; ++tick) {
    const double ms = max_ms * tick / 4.0;
    detail::draw_text(img, 4, py(ms) - 3, std::to_string(static_cast<long>(ms)));
    detail::draw_line(img, ml - 3, py(ms), ml, py(ms), axis);
  }
  std::vector<int> frame_ticks;
  for (const auto& c : result.cells)
    if (std::find(frame_ticks.begin(), frame_ticks.end(), c.frames) == frame_ticks.end())
      frame_ticks.push_back(c.frames);
  std::sort(frame_ticks.begin(), frame_ticks.end());
  for (int f : frame_ticks) {
    detail::draw_text(img, px(f) - 6, h - mb + 6, std::to_string(f));
    detail::draw_line(img, px(f), h - mb, px(f), h - mb + 3, axis);
  }

  std::vector<int> resolutions;
  for (const auto& c : result.cells)
    if (std::find(resolutions.begin(), resolutions.end(), c.resolution) == resolutions.end())
      resolutions.push_back(c.resolution);
  std::sort(resolutions.begin(), resolutions.end());

  for (std::size_t ri = 0; ri < resolutions.size(); ++ri) {
    const double hue = static_cast<double>(ri) / std::max<std::size_t>(1, resolutions.size());
    for (int mode = 0; mode < 2; ++mode) {
      const bool comp = mode == 1;
      float rgb[3] = {static_cast<float>(0.2 + 0.7 * hue), 0.2f,
                      static_cast<float>(0.9 - 0.7 * hue)};
      if (!comp)
        for (float& v : rgb) v = 0.55f + 0.45f * v;  // lighter: compression off
      int prev_x = -1, prev_y = -1;
      for (int f : frame_ticks)
        for (const auto& c : result.cells)
          if (c.frames == f && c.resolution == resolutions[ri] && c.compression == comp &&
              !c.status.starts_with("failed")) {
            const int x = px(c.frames), y = py(c.median_ms);
            if (prev_x >= 0) detail::draw_line(img, prev_x, prev_y, x, y, rgb);
            prev_x = x;
            prev_y = y;
          }
    }
  }
  return img;
}

}  // namespace fcvsr
