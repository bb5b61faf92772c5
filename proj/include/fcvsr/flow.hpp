#pragma once

#include <string>
#include <vector>

#include "fcvsr/core.hpp"
#include "fcvsr/degrade.hpp"
#include "fcvsr/video.hpp"

namespace fcvsr {

/// Displacement field, channel 0 = dx, channel 1 = dy, in pixels of its own
/// resolution.
template <typename T>
using FlowField = Tensor<T>;

enum class FlowMethod { horn_schunck, zero };

struct FlowConfig {
  FlowMethod method = FlowMethod::horn_schunck;
  int pyramid_levels = 3;
  int iterations = 100;
  double smoothness = 0.1;  // alpha; alpha^2 weights the update denominator
};

inline FlowMethod flow_method_from_string(const std::string& s) {
  if (s == "horn_schunck") return FlowMethod::horn_schunck;
  if (s == "zero") return FlowMethod::zero;
  throw ConfigError("unknown flow method '" + s + "'");
}

template <typename T>
double bilinear_sample(const Tensor<T>& t, int c, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  const int x0c = clamp_index(x0, t.width), x1c = clamp_index(x0 + 1, t.width);
  const int y0c = clamp_index(y0, t.height), y1c = clamp_index(y0 + 1, t.height);
  const double v00 = t.at(c, y0c, x0c), v01 = t.at(c, y0c, x1c);
  const double v10 = t.at(c, y1c, x0c), v11 = t.at(c, y1c, x1c);
  return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
}

/// Shifts image content by (+dx,+dy) pixels: out(p) = frame(p - v).
template <typename T>
Tensor<T> translate(const Tensor<T>& frame, double dx, double dy) {
  Tensor<T> out(frame.channels, frame.height, frame.width);
  for (int c = 0; c < frame.channels; ++c)
    for (int y = 0; y < frame.height; ++y)
      for (int x = 0; x < frame.width; ++x)
        out.at(c, y, x) = static_cast<T>(bilinear_sample(frame, c, x - dx, y - dy));
  return out;
}

/// Pulls samples along the flow: out(p) = frame(p + flow(p)), bilinear with
/// border clamp. With flow = estimate_flow(ref, target), warp(target, flow)
/// approximates ref.
template <typename T>
Tensor<T> warp(const Tensor<T>& frame, const FlowField<T>& flow) {
  if (flow.channels != 2 || flow.height != frame.height || flow.width != frame.width)
    throw ShapeError("warp: flow must be (2,H,W) matching the frame");
  Tensor<T> out(frame.channels, frame.height, frame.width);
  for (int c = 0; c < frame.channels; ++c)
    for (int y = 0; y < frame.height; ++y)
      for (int x = 0; x < frame.width; ++x)
        out.at(c, y, x) = static_cast<T>(
            bilinear_sample(frame, c, x + flow.at(0, y, x), y + flow.at(1, y, x)));
  return out;
}

namespace detail {

template <typename T>
Tensor<double> flow_luma(const Tensor<T>& frame) {
  if (frame.channels == 1) return frame.template cast<double>();
  if (frame.channels != 3) throw ShapeError("flow: frames must be RGB or single-channel");
  Tensor<double> y(1, frame.height, frame.width);
  for (std::size_t i = 0; i < frame.plane_size(); ++i)
    y.data[i] = 0.299 * static_cast<double>(frame.plane(0)[i]) +
                0.587 * static_cast<double>(frame.plane(1)[i]) +
                0.114 * static_cast<double>(frame.plane(2)[i]);
  return y;
}

inline Tensor<double> half_size(const Tensor<double>& img) {
  return downsample(gaussian_blur(img, 1.0), 2);
}

inline Tensor<double> resize_flow(const Tensor<double>& flow, int h, int w) {
  Tensor<double> out(2, h, w);
  const double sx = static_cast<double>(flow.width) / w;
  const double sy = static_cast<double>(flow.height) / h;
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double src = bilinear_sample(flow, c, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
        out.at(c, y, x) = src * (c == 0 ? 1.0 / sx : 1.0 / sy);
      }
  return out;
}

/// One pyramid level: warp the target by the incoming flow once, then run
/// Horn-Schunck iterations for the residual displacement.
inline void hs_refine(const Tensor<double>& ref, const Tensor<double>& target,
                      Tensor<double>& flow, int iterations, double smoothness) {
  const int h = ref.height, w = ref.width;
  Tensor<double> warped(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      warped.at(0, y, x) = bilinear_sample(target, 0, x + flow.at(0, y, x), y + flow.at(1, y, x));

  Tensor<double> ix(1, h, w), iy(1, h, w), it(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int xm = clamp_index(x - 1, w), xp = clamp_index(x + 1, w);
      const int ym = clamp_index(y - 1, h), yp = clamp_index(y + 1, h);
      ix.at(0, y, x) = 0.25 * (warped.at(0, y, xp) - warped.at(0, y, xm) + ref.at(0, y, xp) -
                               ref.at(0, y, xm));
      iy.at(0, y, x) = 0.25 * (warped.at(0, yp, x) - warped.at(0, ym, x) + ref.at(0, yp, x) -
                               ref.at(0, ym, x));
      it.at(0, y, x) = warped.at(0, y, x) - ref.at(0, y, x);
    }

  Tensor<double> du(2, h, w);
  Tensor<double> next(2, h, w);
  for (int iter = 0; iter < iterations; ++iter) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int xm = clamp_index(x - 1, w), xp = clamp_index(x + 1, w);
        const int ym = clamp_index(y - 1, h), yp = clamp_index(y + 1, h);
        const double ubar = 0.25 * (du.at(0, y, xm) + du.at(0, y, xp) + du.at(0, ym, x) +
                                    du.at(0, yp, x));
        const double vbar = 0.25 * (du.at(1, y, xm) + du.at(1, y, xp) + du.at(1, ym, x) +
                                    du.at(1, yp, x));
        const double gx = ix.at(0, y, x), gy = iy.at(0, y, x);
        const double num = gx * ubar + gy * vbar + it.at(0, y, x);
        const double den = smoothness * smoothness + gx * gx + gy * gy;
        next.at(0, y, x) = ubar - gx * num / den;
        next.at(1, y, x) = vbar - gy * num / den;
      }
    std::swap(du.data, next.data);
  }
  for (std::size_t i = 0; i < flow.size(); ++i) flow.data[i] += du.data[i];
}

}  // namespace detail

/// Coarse-to-fine Horn-Schunck estimate of the motion of `reference`'s content
/// toward `target`: warp(target, flow) reconstructs reference.
template <typename T>
FlowField<T> estimate_flow(const Tensor<T>& reference, const Tensor<T>& target,
                           const FlowConfig& cfg = {}) {
  if (reference.height != target.height || reference.width != target.width ||
      reference.channels != target.channels)
    throw ShapeError("estimate_flow: frames disagree in shape");
  if (cfg.method == FlowMethod::zero)
    return FlowField<T>(2, reference.height, reference.width);

  std::vector<Tensor<double>> ref_pyr{detail::flow_luma(reference)};
  std::vector<Tensor<double>> tgt_pyr{detail::flow_luma(target)};
  for (int l = 1; l < cfg.pyramid_levels; ++l) {
    if (ref_pyr.back().height < 16 || ref_pyr.back().width < 16) break;
    ref_pyr.push_back(detail::half_size(ref_pyr.back()));
    tgt_pyr.push_back(detail::half_size(tgt_pyr.back()));
  }

  Tensor<double> flow(2, ref_pyr.back().height, ref_pyr.back().width);
  for (int l = static_cast<int>(ref_pyr.size()) - 1; l >= 0; --l) {
    if (flow.height != ref_pyr[l].height || flow.width != ref_pyr[l].width)
      flow = detail::resize_flow(flow, ref_pyr[l].height, ref_pyr[l].width);
    detail::hs_refine(ref_pyr[l], tgt_pyr[l], flow, cfg.iterations, cfg.smoothness);
  }

  FlowField<T> out(2, reference.height, reference.width);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = static_cast<T>(flow.data[i]);
  return out;
}

/// Flow conditioning for one channel group: motion from every non-center frame
/// to the center frame (center = floor(F/2)), concatenated in frame order as
/// (dx,dy) pairs, giving 2*(F-1) channels.
template <typename T>
Tensor<T> group_flows(const ChannelGroup<T>& group, const FlowConfig& cfg = {}, int colors = 3) {
  if (group.data.channels % colors != 0)
    throw ShapeError("group_flows: group channels not a multiple of the color count");
  const int f = group.data.channels / colors;
  if (f < 1) throw ShapeError("group_flows: empty group");
  const int center = f / 2;
  const int h = group.data.height, w = group.data.width;

  auto frame_view = [&](int idx) {
    Tensor<T> fr(colors, h, w);
    for (int c = 0; c < colors; ++c)
      std::copy_n(group.data.plane(idx * colors + c), fr.plane_size(), fr.plane(c));
    return fr;
  };

  Tensor<T> out(2 * (f - 1), h, w);
  const Tensor<T> center_frame = frame_view(center);
  int slot = 0;
  for (int i = 0; i < f; ++i) {
    if (i == center) continue;
    const FlowField<T> fl = estimate_flow(frame_view(i), center_frame, cfg);
    std::copy_n(fl.plane(0), fl.plane_size(), out.plane(2 * slot));
    std::copy_n(fl.plane(1), fl.plane_size(), out.plane(2 * slot + 1));
    ++slot;
  }
  return out;
}

}  // namespace fcvsr
