#pragma once

#include <vector>

#include "fcvsr/core.hpp"

namespace fcvsr {

/// Ordered RGB frame sequence; every frame shares one (3,H,W) shape.
template <typename T>
struct VideoSequence {
  std::vector<Tensor<T>> frames;
  double frame_rate = 25.0;

  int frame_count() const { return static_cast<int>(frames.size()); }

  void validate(const char* what = "video") const {
    if (frames.empty()) throw ShapeError(std::string(what) + ": empty sequence");
    for (const auto& f : frames) {
      if (f.channels != frames[0].channels || !f.same_shape(frames[0]))
        throw ShapeError(std::string(what) + ": frames disagree in shape");
    }
  }
};

/// A whole clip flattened along the channel axis: (C*N, H, W), frame t's color
/// channel c living at plane t*C + c.
template <typename T>
struct FrameCube {
  Tensor<T> data;
  int colors = 3;
  double frame_rate = 25.0;

  int frame_count() const { return colors > 0 ? data.channels / colors : 0; }
};

struct ChannelRange {
  int begin = 0;  // inclusive
  int end = 0;    // exclusive
  int size() const { return end - begin; }
  bool contains(int c) const { return c >= begin && c < end; }
};

/// Result of carving a channel total into overlapped fixed-size windows.
/// Ranges live on the padded channel axis [0, total_channels + pad_channels).
struct GroupingPlan {
  int group_size = 0;
  int overlap = 0;
  int total_channels = 0;
  int pad_channels = 0;
  std::vector<ChannelRange> ranges;
  std::vector<int> encode_counts;  // per padded channel, always >= 1

  int group_count() const { return static_cast<int>(ranges.size()); }
  int padded_channels() const { return total_channels + pad_channels; }
};

/// One extracted window of the cube: (S, H, W) slice ready for the group coder.
template <typename T>
struct ChannelGroup {
  Tensor<T> data;
  ChannelRange range;
};

///// Pure channel arithmetic: windows of size S advancing by stride S-O, first
/// window at 0, enough windows that every channel is covered, final window
/// padded past the end when the stride doesn't land exactly.
inline GroupingPlan plan_groups(int total_channels, int group_size, int overlap) {
  if (total_channels <= 0) throw ParamError("plan_groups: total_channels must be positive");
  if (group_size <= 0) throw ParamError("plan_groups: group_size must be positive");
  if (overlap < 0 || overlap >= group_size)
    throw ParamError("plan_groups: overlap must satisfy 0 <= O < S");

  const int stride = group_size - overlap;
  int k = 1;
  if (total_channels > group_size)
    k = 1 + (total_channels - group_size + stride - 1) / stride;

  GroupingPlan plan;
  plan.group_size = group_size;
  plan.overlap = overlap;
  plan.total_channels = total_channels;
  plan.pad_channels = (k - 1) * stride + group_size - total_channels;
  plan.ranges.resize(k);
  for (int g = 0; g < k; ++g) plan.ranges[g] = {g * stride, g * stride + group_size};

  plan.encode_counts.assign(plan.padded_channels(), 0);
  for (const auto& r : plan.ranges)
    for (int c = r.begin; c < r.end; ++c) plan.encode_counts[c]++;
  for (int n : plan.encode_counts)
    if (n < 1) throw ShapeError("plan_groups: uncovered channel");
  return plan;
}

template <typename T>
FrameCube<T> stack(const VideoSequence<T>& video) {
  video.validate("stack");
  const int c = video.frames[0].channels;
  const int h = video.frames[0].height;
  const int w = video.frames[0].width;
  FrameCube<T> cube;
  cube.colors = c;
  cube.frame_rate = video.frame_rate;
  cube.data = Tensor<T>(c * video.frame_count(), h, w);
  for (int t = 0; t < video.frame_count(); ++t)
    for (int ch = 0; ch < c; ++ch)
      std::copy_n(video.frames[t].plane(ch), cube.data.plane_size(),
                  cube.data.plane(t * c + ch));
  return cube;
}

template <typename T>
VideoSequence<T> unstack(const FrameCube<T>& cube) {
  if (cube.colors <= 0 || cube.data.channels % cube.colors != 0)
    throw ShapeError("unstack: cube channels not a multiple of color count");
  VideoSequence<T> video;
  video.frame_rate = cube.frame_rate;
  video.frames.resize(cube.frame_count());
  for (int t = 0; t < cube.frame_count(); ++t) {
    video.frames[t] = Tensor<T>(cube.colors, cube.data.height, cube.data.width);
    for (int ch = 0; ch < cube.colors; ++ch)
      std::copy_n(cube.data.plane(t * cube.colors + ch), cube.data.plane_size(),
                  video.frames[t].plane(ch));
  }
  return video;
}

/// Padded channels replicate the final color-frame block of the cube, so the
/// pad is always a whole repeated frame when S and O are frame-aligned.
inline int pad_source_channel(const GroupingPlan& plan, int colors, int channel) {
  if (channel < plan.total_channels) return channel;
  return plan.total_channels - colors + (channel - plan.total_channels) % colors;
}

template <typename T>
std::vector<ChannelGroup<T>> extract_groups(const FrameCube<T>& cube, const GroupingPlan& plan) {
  if (cube.data.channels != plan.total_channels)
    throw ShapeError("extract_groups: plan built for a different channel total");
  std::vector<ChannelGroup<T>> groups(plan.group_count());
  for (int g = 0; g < plan.group_count(); ++g) {
    const auto& r = plan.ranges[g];
    groups[g].range = r;
    groups[g].data = Tensor<T>(r.size(), cube.data.height, cube.data.width);
    for (int c = r.begin; c < r.end; ++c) {
      const int src = pad_source_channel(plan, cube.colors, c);
      std::copy_n(cube.data.plane(src), cube.data.plane_size(),
                  groups[g].data.plane(c - r.begin));
    }
  }
  return groups;
}

/// Inverse of extract_groups: channels encoded more than once are averaged.
/// The mean is computed as first + sum(v_i - first)/n so that identical
/// contributions reproduce the input bitwise. Padded channels are dropped.
/// Groups may arrive at any (common) spatial size, e.g. after super-resolution.
template <typename T>
FrameCube<T> merge_groups(const std::vector<ChannelGroup<T>>& groups, const GroupingPlan& plan,
                          int colors = 3, double frame_rate = 25.0) {
  if (static_cast<int>(groups.size()) != plan.group_count())
    throw ShapeError("merge_groups: group count disagrees with plan");
  for (int g = 0; g < plan.group_count(); ++g) {
    if (groups[g].data.channels != plan.group_size)
      throw ShapeError("merge_groups: group channel count disagrees with plan");
    if (!groups[g].data.same_shape(groups[0].data))
      throw ShapeError("merge_groups: groups disagree in spatial shape");
  }

  const int h = groups[0].data.height;
  const int w = groups[0].data.width;
  FrameCube<T> cube;
  cube.colors = colors;
  cube.frame_rate = frame_rate;
  cube.data = Tensor<T>(plan.total_channels, h, w);

  const std::size_t ps = cube.data.plane_size();
  std::vector<const T*> sources;
  for (int c = 0; c < plan.total_channels; ++c) {
    sources.clear();
    for (int g = 0; g < plan.group_count(); ++g)
      if (plan.ranges[g].contains(c))
        sources.push_back(groups[g].data.plane(c - plan.ranges[g].begin));
    if (static_cast<int>(sources.size()) != plan.encode_counts[c])
      throw ShapeError("merge_groups: coverage disagrees with plan encode_counts");

    T* out = cube.data.plane(c);
    std::copy_n(sources[0], ps, out);
    if (sources.size() > 1) {
      const double inv = 1.0 / static_cast<double>(sources.size());
      for (std::size_t i = 0; i < ps; ++i) {
        double delta = 0.0;
        for (std::size_t s = 1; s < sources.size(); ++s)
          delta += static_cast<double>(sources[s][i]) - static_cast<double>(sources[0][i]);
        out[i] = static_cast<T>(static_cast<double>(sources[0][i]) + delta * inv);
      }
    }
  }
  return cube;
}

}  // namespace fcvsr
