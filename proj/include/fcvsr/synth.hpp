#pragma once

#include <cmath>
#include <vector>

#include "fcvsr/core.hpp"
#include "fcvsr/video.hpp"

namespace fcvsr {

/// Procedural test footage: a seeded mixture of drifting plane waves and
/// moving Gaussian blobs, evaluated analytically per pixel so motion is exact
/// at subpixel velocities and every call is reproducible.
struct SynthConfig {
  int frames = 7;
  int height = 64;
  int width = 64;
  int waves = 5;         // broad structure
  int detail_waves = 2;  // fine texture that survives only in the HR version
  int blobs = 3;
  double max_speed = 2.5;  // pixels per frame, HR scale
};

namespace detail {

struct Wave {
  double fx, fy, phase, amp, chroma;  // chroma shifts the phase per channel
};

struct Blob {
  double cx, cy, vx, vy, radius, gain;
  double tint[3];
};

struct Scene {
  double base[3];
  double pan_x, pan_y;
  std::vector<Wave> waves;
  std::vector<Blob> blobs;

  double sample(int c, double x, double y, double t) const {
    double v = base[c];
    const double sx = x - pan_x * t;
    const double sy = y - pan_y * t;
    for (const auto& w : waves)
      v += w.amp * std::sin(2.0 * std::acos(-1.0) * (w.fx * sx + w.fy * sy) + w.phase +
                            w.chroma * c);
    for (const auto& b : blobs) {
      const double dx = x - (b.cx + b.vx * t);
      const double dy = y - (b.cy + b.vy * t);
      v += b.gain * b.tint[c] * std::exp(-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius));
    }
    return clamp01(v);
  }
};

inline Scene make_scene(std::uint64_t seed, const SynthConfig& cfg) {
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Scene s;
  for (int c = 0; c < 3; ++c) s.base[c] = 0.35 + 0.3 * uni(rng);
  s.pan_x = (2.0 * uni(rng) - 1.0) * cfg.max_speed;
  s.pan_y = (2.0 * uni(rng) - 1.0) * cfg.max_speed;
  const double pi = std::acos(-1.0);
  for (int i = 0; i < cfg.waves + cfg.detail_waves; ++i) {
    Wave w;
    const bool fine = i >= cfg.waves;
    const double wavelength = fine ? 4.0 + 4.0 * uni(rng) : 12.0 + 36.0 * uni(rng);
    const double angle = 2.0 * pi * uni(rng);
    w.fx = std::cos(angle) / wavelength;
    w.fy = std::sin(angle) / wavelength;
    w.phase = 2.0 * pi * uni(rng);
    w.amp = (fine ? 0.05 : 0.08 + 0.1 * uni(rng)) / std::sqrt(static_cast<double>(cfg.waves));
    w.chroma = 0.6 * uni(rng);
    s.waves.push_back(w);
  }
  for (int i = 0; i < cfg.blobs; ++i) {
    Blob b;
    b.cx = cfg.width * uni(rng);
    b.cy = cfg.height * uni(rng);
    b.vx = (2.0 * uni(rng) - 1.0) * cfg.max_speed;
    b.vy = (2.0 * uni(rng) - 1.0) * cfg.max_speed;
    b.radius = 4.0 + 8.0 * uni(rng);
    b.gain = (uni(rng) < 0.5 ? -1.0 : 1.0) * (0.15 + 0.15 * uni(rng));
    for (double& t : b.tint) t = 0.5 + 0.5 * uni(rng);
    s.blobs.push_back(b);
  }
  return s;
}

}  // namespace detail

template <typename T>
VideoSequence<T> make_clip(std::uint64_t seed, const SynthConfig& cfg = {}) {
  const detail::Scene scene = detail::make_scene(seed, cfg);
  VideoSequence<T> video;
  for (int t = 0; t < cfg.frames; ++t) {
    Tensor<T> frame(3, cfg.height, cfg.width);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x)
          frame.at(c, y, x) = static_cast<T>(scene.sample(c, x, y, t));
    video.frames.push_back(std::move(frame));
  }
  return video;
}

template <typename T>
std::vector<VideoSequence<T>> make_corpus(int clips, std::uint64_t seed,
                                          const SynthConfig& cfg = {}) {
  std::vector<VideoSequence<T>> out;
  out.reserve(clips);
  for (int i = 0; i < clips; ++i) out.push_back(make_clip<T>(seed + 1000003ull * i, cfg));
  return out;
}

/// Single frame helper for image-level tests.
template <typename T>
Tensor<T> make_frame(std::uint64_t seed, int height = 64, int width = 64) {
  SynthConfig cfg;
  cfg.frames = 1;
  cfg.height = height;
  cfg.width = width;
  return make_clip<T>(seed, cfg).frames[0];
}

}  // namespace fcvsr
