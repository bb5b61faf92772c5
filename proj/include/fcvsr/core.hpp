#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcvsr {

// Error kinds map onto CLI exit codes: ConfigError=2, DataError=3, anything else=4.
struct ConfigError : std::runtime_error { using std::runtime_error::runtime_error; };
struct DataError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ShapeError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ParamError : std::runtime_error { using std::runtime_error::runtime_error; };

/// Planar channel-major (C,H,W) tensor. Frames are Tensor with channels==3,
/// flow fields channels==2, stacked cubes channels==3*N.
template <typename T>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c, int h, int w, T value = T(0))
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, value) {
    if (c < 0 || h < 0 || w < 0) throw ShapeError("tensor dims must be non-negative");
  }

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  T* plane(int c) { return data.data() + static_cast<std::size_t>(c) * plane_size(); }
  const T* plane(int c) const { return data.data() + static_cast<std::size_t>(c) * plane_size(); }

  T& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  const T& at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(channels, height, width);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <typename T>
void require_shape(const Tensor<T>& t, int c, int h, int w, const char* what) {
  if (t.channels != c || t.height != h || t.width != w)
    throw ShapeError(std::string(what) + ": expected (" + std::to_string(c) + "," +
                     std::to_string(h) + "," + std::to_string(w) + "), got (" +
                     std::to_string(t.channels) + "," + std::to_string(t.height) + "," +
                     std::to_string(t.width) + ")");
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.channels) +
                     "," + std::to_string(a.height) + "," + std::to_string(a.width) + ") vs (" +
                     std::to_string(b.channels) + "," + std::to_string(b.height) + "," +
                     std::to_string(b.width) + ")");
}

template <typename T>
bool all_finite(const std::vector<T>& v) {
  for (T x : v)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

template <typename T>
T clamp01(T v) {
  return std::clamp(v, T(0), T(1));
}

inline int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

///// Half-sample symmetric reflection (mirror about the array edge, period 2n):
/// -1 -> 0, -2 -> 1, n -> n-1, n+1 -> n-2.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -1 - i;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

/// All randomness in the library flows through explicitly seeded engines.
using Rng = std::mt19937_64;

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, T lo = T(0), T hi = T(1)) {
  std::uniform_real_distribution<double> d(static_cast<double>(lo), static_cast<double>(hi));
  for (auto& v : t.data) v = static_cast<T>(d(rng));
}

}  // namespace fcvsr
