#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "fcvsr/core.hpp"

namespace fcvsr {

/// A learnable tensor plus its gradient accumulator.
template <typename T>
struct Param {
  std::vector<int> shape;
  std::vector<T> v;
  std::vector<T> g;

  void resize(std::vector<int> s) {
    shape = std::move(s);
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    v.assign(n, T(0));
    g.assign(n, T(0));
  }
  std::size_t count() const { return v.size(); }
  void zero_grad() { std::fill(g.begin(), g.end(), T(0)); }
};

/// Named views over a network's parameters, in a stable declaration order.
/// The names double as archive paths ("cleaning/in/weight", ...).
template <typename T>
using ParamRefs = std::vector<std::pair<std::string, Param<T>*>>;

template <typename T>
void he_normal(Param<T>& p, std::size_t fan_in, Rng& rng, double gain = 1.0) {
  std::normal_distribution<double> d(0.0, gain * std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& x : p.v) x = static_cast<T>(d(rng));
}

template <typename T>
T lrelu_slope() {
  return static_cast<T>(0.1);
}

template <typename T>
Tensor<T> lrelu(const Tensor<T>& x) {
  Tensor<T> y(x.channels, x.height, x.width);
  const T s = lrelu_slope<T>();
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] >= T(0) ? x.data[i] : s * x.data[i];
  return y;
}

template <typename T>
Tensor<T> lrelu_backward(const Tensor<T>& pre, const Tensor<T>& dout) {
  Tensor<T> dx(pre.channels, pre.height, pre.width);
  const T s = lrelu_slope<T>();
  for (std::size_t i = 0; i < pre.size(); ++i)
    dx.data[i] = pre.data[i] >= T(0) ? dout.data[i] : s * dout.data[i];
  return dx;
}

/// Stride-1 zero-padded convolution with odd square kernels.
template <typename T>
struct Conv2d {
  int in_ch = 0, out_ch = 0, ksize = 3;
  Param<T> weight;  // [out][in][k][k]
  Param<T> bias;    // [out]

  void init(int in, int out, int k, Rng& rng) {
    if (k % 2 == 0 || k < 1) throw ParamError("Conv2d: kernel size must be odd");
    in_ch = in;
    out_ch = out;
    ksize = k;
    weight.resize({out, in, k, k});
    bias.resize({out});
    he_normal(weight, static_cast<std::size_t>(in) * k * k, rng);
  }

  /// Zeroing the weights makes the layer emit pure bias (zero): used by nets
  /// whose residual output should start as the identity / skip path.
  void zero_output() {
    std::fill(weight.v.begin(), weight.v.end(), T(0));
    std::fill(bias.v.begin(), bias.v.end(), T(0));
  }

  void collect(ParamRefs<T>& refs, const std::string& prefix) {
    refs.emplace_back(prefix + "/weight", &weight);
    refs.emplace_back(prefix + "/bias", &bias);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.channels != in_ch) throw ShapeError("Conv2d: input channel mismatch");
    const int r = ksize / 2, h = x.height, w = x.width;
    Tensor<T> y(out_ch, h, w);
    for (int o = 0; o < out_ch; ++o) {
      T* yp = y.plane(o);
      std::fill_n(yp, y.plane_size(), bias.v[o]);
      for (int i = 0; i < in_ch; ++i) {
        const T* xp = x.plane(i);
        const T* wb = &weight.v[(static_cast<std::size_t>(o) * in_ch + i) * ksize * ksize];
        for (int ky = 0; ky < ksize; ++ky) {
          const int dy = ky - r;
          const int y0 = std::max(0, -dy), y1 = h - std::max(0, dy);
          for (int kx = 0; kx < ksize; ++kx) {
            const int dx = kx - r;
            const int x0 = std::max(0, -dx), x1 = w - std::max(0, dx);
            const T wv = wb[ky * ksize + kx];
            for (int yy = y0; yy < y1; ++yy) {
              T* yrow = yp + static_cast<std::size_t>(yy) * w;
              const T* xrow = xp + static_cast<std::size_t>(yy + dy) * w + dx;
              for (int xx = x0; xx < x1; ++xx) yrow[xx] += wv * xrow[xx];
            }
          }
        }
      }
    }
    return y;
  }

  /// Returns d(loss)/d(input); accumulates weight/bias gradients unless the
  /// layer is frozen.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dout, bool accumulate_grads) {
    if (dout.channels != out_ch || dout.height != x.height || dout.width != x.width)
      throw ShapeError("Conv2d: upstream gradient shape mismatch");
    const int r = ksize / 2, h = x.height, w = x.width;
    Tensor<T> dx(in_ch, h, w);
    for (int o = 0; o < out_ch; ++o) {
      const T* dop = dout.plane(o);
      if (accumulate_grads) {
        double bg = 0.0;
        for (std::size_t i = 0; i < dout.plane_size(); ++i) bg += static_cast<double>(dop[i]);
        bias.g[o] += static_cast<T>(bg);
      }
      for (int i = 0; i < in_ch; ++i) {
        T* dxp = dx.plane(i);
        const T* xp = x.plane(i);
        const std::size_t wbase = (static_cast<std::size_t>(o) * in_ch + i) * ksize * ksize;
        for (int ky = 0; ky < ksize; ++ky) {
          const int dy = ky - r;
          const int y0 = std::max(0, -dy), y1 = h - std::max(0, dy);
          for (int kx = 0; kx < ksize; ++kx) {
            const int dx_off = kx - r;
            const int x0 = std::max(0, -dx_off), x1 = w - std::max(0, dx_off);
            const T wv = weight.v[wbase + ky * ksize + kx];
            double wg = 0.0;
            for (int yy = y0; yy < y1; ++yy) {
              const T* dorow = dop + static_cast<std::size_t>(yy) * w;
              T* dxrow = dxp + static_cast<std::size_t>(yy + dy) * w + dx_off;
              const T* xrow = xp + static_cast<std::size_t>(yy + dy) * w + dx_off;
              for (int xx = x0; xx < x1; ++xx) {
                dxrow[xx] += wv * dorow[xx];
                wg += static_cast<double>(xrow[xx]) * static_cast<double>(dorow[xx]);
              }
            }
            if (accumulate_grads) weight.g[wbase + ky * ksize + kx] += static_cast<T>(wg);
          }
        }
      }
    }
    return dx;
  }
};

/// Squeeze-and-excite gate: global average pool, two-layer MLP with a
/// reduction-ratio bottleneck, sigmoid scales multiplying each channel.
template <typename T>
struct ChannelAttention {
  int ch = 0, mid = 0;
  Param<T> w1, b1;  // [mid][ch], [mid]
  Param<T> w2, b2;  // [ch][mid], [ch]

  struct Cache {
    Tensor<T> x;
    std::vector<T> pooled, h_pre, h_act, scale;
  };

  void init(int channels, int reduction, Rng& rng) {
    ch = channels;
    mid = std::max(1, channels / reduction);
    w1.resize({mid, ch});
    b1.resize({mid});
    w2.resize({ch, mid});
    b2.resize({ch});
    he_normal(w1, ch, rng);
    he_normal(w2, mid, rng);
  }

  void collect(ParamRefs<T>& refs, const std::string& prefix) {
    refs.emplace_back(prefix + "/w1", &w1);
    refs.emplace_back(prefix + "/b1", &b1);
    refs.emplace_back(prefix + "/w2", &w2);
    refs.emplace_back(prefix + "/b2", &b2);
  }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
    if (x.channels != ch) throw ShapeError("ChannelAttention: channel mismatch");
    const double inv = 1.0 / static_cast<double>(x.plane_size());
    std::vector<T> pooled(ch), h_pre(mid), h_act(mid), scale(ch);
    for (int c = 0; c < ch; ++c) {
      double s = 0.0;
      const T* p = x.plane(c);
      for (std::size_t i = 0; i < x.plane_size(); ++i) s += static_cast<double>(p[i]);
      pooled[c] = static_cast<T>(s * inv);
    }
    for (int m = 0; m < mid; ++m) {
      double s = static_cast<double>(b1.v[m]);
      for (int c = 0; c < ch; ++c) s += static_cast<double>(w1.v[m * ch + c]) * pooled[c];
      h_pre[m] = static_cast<T>(s);
      h_act[m] = h_pre[m] >= T(0) ? h_pre[m] : lrelu_slope<T>() * h_pre[m];
    }
    for (int c = 0; c < ch; ++c) {
      double s = static_cast<double>(b2.v[c]);
      for (int m = 0; m < mid; ++m) s += static_cast<double>(w2.v[c * mid + m]) * h_act[m];
      scale[c] = static_cast<T>(1.0 / (1.0 + std::exp(-s)));
    }
    Tensor<T> y(ch, x.height, x.width);
    for (int c = 0; c < ch; ++c) {
      const T* xp = x.plane(c);
      T* yp = y.plane(c);
      for (std::size_t i = 0; i < x.plane_size(); ++i) yp[i] = xp[i] * scale[c];
    }
    if (cache) {
      cache->x = x;
      cache->pooled = std::move(pooled);
      cache->h_pre = std::move(h_pre);
      cache->h_act = std::move(h_act);
      cache->scale = std::move(scale);
    }
    return y;
  }

  Tensor<T> backward(const Cache& c, const Tensor<T>& dout, bool accumulate_grads) {
    const auto& x = c.x;
    const double inv = 1.0 / static_cast<double>(x.plane_size());
    Tensor<T> dx(ch, x.height, x.width);
    std::vector<double> dscale(ch, 0.0);
    for (int cc = 0; cc < ch; ++cc) {
      const T* xp = x.plane(cc);
      const T* dop = dout.plane(cc);
      T* dxp = dx.plane(cc);
      double acc = 0.0;
      for (std::size_t i = 0; i < x.plane_size(); ++i) {
        acc += static_cast<double>(dop[i]) * static_cast<double>(xp[i]);
        dxp[i] = dop[i] * c.scale[cc];
      }
      dscale[cc] = acc;
    }
    std::vector<double> dz(ch), dh(mid, 0.0), dpooled(ch, 0.0);
    for (int cc = 0; cc < ch; ++cc) {
      const double s = static_cast<double>(c.scale[cc]);
      dz[cc] = dscale[cc] * s * (1.0 - s);
    }
    for (int m = 0; m < mid; ++m) {
      double acc = 0.0;
      for (int cc = 0; cc < ch; ++cc) acc += static_cast<double>(w2.v[cc * mid + m]) * dz[cc];
      const double grad_gate = c.h_pre[m] >= T(0) ? 1.0 : static_cast<double>(lrelu_slope<T>());
      dh[m] = acc * grad_gate;
    }
    for (int cc = 0; cc < ch; ++cc) {
      double acc = 0.0;
      for (int m = 0; m < mid; ++m) acc += static_cast<double>(w1.v[m * ch + cc]) * dh[m];
      dpooled[cc] = acc;
    }
    if (accumulate_grads) {
      for (int cc = 0; cc < ch; ++cc) {
        b2.g[cc] += static_cast<T>(dz[cc]);
        for (int m = 0; m < mid; ++m)
          w2.g[cc * mid + m] += static_cast<T>(dz[cc] * static_cast<double>(c.h_act[m]));
      }
      for (int m = 0; m < mid; ++m) {
        b1.g[m] += static_cast<T>(dh[m]);
        for (int cc = 0; cc < ch; ++cc)
          w1.g[m * ch + cc] += static_cast<T>(dh[m] * static_cast<double>(c.pooled[cc]));
      }
    }
    for (int cc = 0; cc < ch; ++cc) {
      const T add = static_cast<T>(dpooled[cc] * inv);
      T* dxp = dx.plane(cc);
      for (std::size_t i = 0; i < x.plane_size(); ++i) dxp[i] += add;
    }
    return dx;
  }
};

/// conv -> leaky relu -> conv with an identity skip.
template <typename T>
struct ResBlock {
  Conv2d<T> conv1, conv2;

  struct Cache {
    Tensor<T> x, pre1, act1;
  };

  void init(int width, Rng& rng) {
    conv1.init(width, width, 3, rng);
    conv2.init(width, width, 3, rng);
  }

  void collect(ParamRefs<T>& refs, const std::string& prefix) {
    conv1.collect(refs, prefix + "/conv1");
    conv2.collect(refs, prefix + "/conv2");
  }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
    Tensor<T> pre1 = conv1.forward(x);
    Tensor<T> act1 = lrelu(pre1);
    Tensor<T> y = conv2.forward(act1);
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += x.data[i];
    if (cache) {
      cache->x = x;
      cache->pre1 = std::move(pre1);
      cache->act1 = std::move(act1);
    }
    return y;
  }

  Tensor<T> backward(const Cache& c, const Tensor<T>& dout, bool accumulate_grads) {
    Tensor<T> dact1 = conv2.backward(c.act1, dout, accumulate_grads);
    Tensor<T> dpre1 = lrelu_backward(c.pre1, dact1);
    Tensor<T> dx = conv1.backward(c.x, dpre1, accumulate_grads);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dout.data[i];
    return dx;
  }
};

/// (C*r^2, H, W) -> (C, r*H, r*W).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  if (r < 1 || x.channels % (r * r) != 0)
    throw ShapeError("pixel_shuffle: channels not divisible by r^2");
  const int oc = x.channels / (r * r);
  Tensor<T> y(oc, x.height * r, x.width * r);
  for (int c = 0; c < oc; ++c)
    for (int yy = 0; yy < y.height; ++yy)
      for (int xx = 0; xx < y.width; ++xx)
        y.at(c, yy, xx) = x.at(c * r * r + (yy % r) * r + (xx % r), yy / r, xx / r);
  return y;
}

template <typename T>
Tensor<T> pixel_shuffle_backward(const Tensor<T>& dout, int r) {
  const int ic = dout.channels * r * r;
  Tensor<T> dx(ic, dout.height / r, dout.width / r);
  for (int c = 0; c < dout.channels; ++c)
    for (int yy = 0; yy < dout.height; ++yy)
      for (int xx = 0; xx < dout.width; ++xx)
        dx.at(c * r * r + (yy % r) * r + (xx % r), yy / r, xx / r) = dout.at(c, yy, xx);
  return dx;
}

namespace detail {

/// Catmull-Rom weight (cubic convolution, a = -0.5).
inline double bicubic_weight(double t) {
  const double a = -0.5;
  t = std::fabs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

struct BicubicTaps {
  int base;          // index of the first of four source taps
  double w[4];
};

inline BicubicTaps bicubic_taps(int dst, int scale) {
  const double src = (dst + 0.5) / scale - 0.5;
  const int i0 = static_cast<int>(std::floor(src)) - 1;
  BicubicTaps t{i0, {}};
  for (int k = 0; k < 4; ++k) t.w[k] = bicubic_weight(src - (i0 + k));
  return t;
}

}  // namespace detail

/// Integer-factor bicubic upsampling (Catmull-Rom, center-aligned sampling,
/// border clamp). Works per channel on any channel count.
template <typename T>
Tensor<T> bicubic_upsample(const Tensor<T>& x, int scale) {
  if (scale < 1) throw ParamError("bicubic_upsample: scale must be >= 1");
  if (scale == 1) return x;
  const int oh = x.height * scale, ow = x.width * scale;
  std::vector<detail::BicubicTaps> tx(ow), ty(oh);
  for (int i = 0; i < ow; ++i) tx[i] = detail::bicubic_taps(i, scale);
  for (int i = 0; i < oh; ++i) ty[i] = detail::bicubic_taps(i, scale);

  Tensor<T> y(x.channels, oh, ow);
  for (int c = 0; c < x.channels; ++c)
    for (int yy = 0; yy < oh; ++yy) {
      const auto& wy = ty[yy];
      for (int xx = 0; xx < ow; ++xx) {
        const auto& wx = tx[xx];
        double acc = 0.0;
        for (int ky = 0; ky < 4; ++ky) {
          const int sy = clamp_index(wy.base + ky, x.height);
          double row = 0.0;
          for (int kx = 0; kx < 4; ++kx)
            row += wx.w[kx] * static_cast<double>(x.at(c, sy, clamp_index(wx.base + kx, x.width)));
          acc += wy.w[ky] * row;
        }
        y.at(c, yy, xx) = static_cast<T>(acc);
      }
    }
  return y;
}

/// Adjoint of bicubic_upsample: scatters output gradients back through the
/// same taps and clamped indices.
template <typename T>
Tensor<T> bicubic_upsample_backward(const Tensor<T>& dout, int scale, int in_h, int in_w) {
  if (scale == 1) return dout;
  std::vector<detail::BicubicTaps> tx(dout.width), ty(dout.height);
  for (int i = 0; i < dout.width; ++i) tx[i] = detail::bicubic_taps(i, scale);
  for (int i = 0; i < dout.height; ++i) ty[i] = detail::bicubic_taps(i, scale);

  Tensor<T> dx(dout.channels, in_h, in_w);
  for (int c = 0; c < dout.channels; ++c)
    for (int yy = 0; yy < dout.height; ++yy) {
      const auto& wy = ty[yy];
      for (int xx = 0; xx < dout.width; ++xx) {
        const auto& wx = tx[xx];
        const double g = static_cast<double>(dout.at(c, yy, xx));
        for (int ky = 0; ky < 4; ++ky) {
          const int sy = clamp_index(wy.base + ky, in_h);
          for (int kx = 0; kx < 4; ++kx) {
            const int sx = clamp_index(wx.base + kx, in_w);
            dx.at(c, sy, sx) += static_cast<T>(g * wy.w[ky] * wx.w[kx]);
          }
        }
      }
    }
  return dx;
}

}  // namespace fcvsr
