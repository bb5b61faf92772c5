#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "fcvsr/core.hpp"
#include "fcvsr/video.hpp"

namespace fcvsr {

/// BT.601 studio-range luma of normalized RGB. Written with the coefficients
/// scaled by 1000 (exactly representable integers) so that pure white lands
/// bitwise on 235/255 and pure black on 16/255.
inline double luma601(double r, double g, double b) {
  return (65481.0 * r + 128553.0 * g + 24966.0 * b + 16000.0) / 255000.0;
}

template <typename T>
Tensor<double> rgb_to_y(const Tensor<T>& frame) {
  if (frame.channels != 3) throw ShapeError("rgb_to_y: expected a 3-channel frame");
  Tensor<double> y(1, frame.height, frame.width);
  const T* r = frame.plane(0);
  const T* g = frame.plane(1);
  const T* b = frame.plane(2);
  for (std::size_t i = 0; i < frame.plane_size(); ++i)
    y.data[i] = luma601(static_cast<double>(r[i]), static_cast<double>(g[i]),
                        static_cast<double>(b[i]));
  return y;
}

/// Peak signal-to-noise ratio on the luma plane, peak 1.0. Identical inputs
/// return +infinity.
template <typename T>
double psnr_y(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "psnr_y");
  Tensor<double> ya = rgb_to_y(a);
  Tensor<double> yb = rgb_to_y(b);
  double se = 0.0;
  for (std::size_t i = 0; i < ya.size(); ++i) {
    const double d = ya.data[i] - yb.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(ya.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

inline std::vector<double> gaussian_window_11() {
  std::vector<double> w(11);
  const double sigma = 1.5;
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

namespace detail {

/// Horizontal then vertical pass with the 11-tap window, valid region only.
/// Input is (1,H,W); output is (1,H-10,W-10).
inline Tensor<double> window_filter_valid(const Tensor<double>& img, const std::vector<double>& w) {
  const int h = img.height, wd = img.width;
  Tensor<double> horiz(1, h, wd - 10);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < wd - 10; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 11; ++k) acc += w[k] * img.at(0, y, x + k);
      horiz.at(0, y, x) = acc;
    }
  Tensor<double> out(1, h - 10, wd - 10);
  for (int y = 0; y < h - 10; ++y)
    for (int x = 0; x < wd - 10; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 11; ++k) acc += w[k] * horiz.at(0, y + k, x);
      out.at(0, y, x) = acc;
    }
  return out;
}

}  // namespace detail

/// Mean structural similarity on the luma plane: 11x11 Gaussian window
/// (sigma 1.5), K1=0.01, K2=0.03, L=1, no padding (valid windows only).
template <typename T>
double ssim_y(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "ssim_y");
  if (a.height < 11 || a.width < 11)
    throw ShapeError("ssim_y: frames smaller than the 11x11 window");
  const Tensor<double> ya = rgb_to_y(a);
  const Tensor<double> yb = rgb_to_y(b);

  Tensor<double> aa(1, ya.height, ya.width), bb(1, ya.height, ya.width),
      ab(1, ya.height, ya.width);
  for (std::size_t i = 0; i < ya.size(); ++i) {
    aa.data[i] = ya.data[i] * ya.data[i];
    bb.data[i] = yb.data[i] * yb.data[i];
    ab.data[i] = ya.data[i] * yb.data[i];
  }

  const auto w = gaussian_window_11();
  const Tensor<double> mu_a = detail::window_filter_valid(ya, w);
  const Tensor<double> mu_b = detail::window_filter_valid(yb, w);
  const Tensor<double> e_aa = detail::window_filter_valid(aa, w);
  const Tensor<double> e_bb = detail::window_filter_valid(bb, w);
  const Tensor<double> e_ab = detail::window_filter_valid(ab, w);

  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a.data[i], mb = mu_b.data[i];
    const double va = e_aa.data[i] - ma * ma;
    const double vb = e_bb.data[i] - mb * mb;
    const double cov = e_ab.data[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

struct FrameMetrics {
  int frame = 0;
  double psnr = 0.0;  // +inf encodes identical frames
  double ssim = 0.0;
};

struct MetricsReport {
  std::vector<FrameMetrics> frames;
  double mean_psnr = 0.0;  // over finite entries only
  double mean_ssim = 0.0;
  int infinite_psnr_frames = 0;
};

template <typename T>
MetricsReport sequence_metrics(const VideoSequence<T>& test, const VideoSequence<T>& ref) {
  if (test.frame_count() != ref.frame_count())
    throw ShapeError("sequence_metrics: frame counts differ");
  if (test.frame_count() == 0) throw ShapeError("sequence_metrics: empty sequences");
  MetricsReport rep;
  double psum = 0.0, ssum = 0.0;
  int finite = 0;
  for (int t = 0; t < test.frame_count(); ++t) {
    FrameMetrics fm;
    fm.frame = t;
    fm.psnr = psnr_y(test.frames[t], ref.frames[t]);
    fm.ssim = ssim_y(test.frames[t], ref.frames[t]);
    if (std::isinf(fm.psnr)) {
      rep.infinite_psnr_frames++;
    } else {
      psum += fm.psnr;
      finite++;
    }
    ssum += fm.ssim;
    rep.frames.push_back(fm);
  }
  rep.mean_psnr = finite > 0 ? psum / finite : std::numeric_limits<double>::infinity();
  rep.mean_ssim = ssum / test.frame_count();
  return rep;
}

/// Render +inf as the literal "inf" for reports.
inline std::string format_db(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace fcvsr
