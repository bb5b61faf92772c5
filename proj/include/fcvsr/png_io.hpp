#pragma once

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "fcvsr/core.hpp"
#include "fcvsr/video.hpp"

namespace fcvsr {

/// Values are quantized to 8 bits on write and mapped back to [0,1] on read.
template <typename T>
void write_png(const std::filesystem::path& path, const Tensor<T>& frame) {
  if (frame.channels != 3) throw ShapeError("write_png: expected a 3-channel frame");
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw DataError("write_png: cannot open " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw DataError("write_png: libpng failure for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, frame.width, frame.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> row(static_cast<std::size_t>(frame.width) * 3);
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = static_cast<double>(frame.at(c, y, x));
        row[x * 3 + c] =
            static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

template <typename T>
Tensor<T> read_png(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw DataError("read_png: cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw DataError("read_png: libpng failure for " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  if (png_get_channels(png, info) != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("read_png: could not normalize " + path.string() + " to RGB");
  }

  Tensor<T> frame(3, h, w);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        frame.at(c, y, x) = static_cast<T>(row[x * 3 + c] / 255.0);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return frame;
}

inline std::string frame_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08d.png", index);
  return buf;
}

template <typename T>
void write_frames(const std::filesystem::path& dir, const VideoSequence<T>& video) {
  std::filesystem::create_directories(dir);
  for (int t = 0; t < video.frame_count(); ++t)
    write_png(dir / frame_name(t), video.frames[t]);
}

/// Reads 00000000.png, 00000001.png, ... until the first missing index.
template <typename T>
VideoSequence<T> read_frames(const std::filesystem::path& dir, double frame_rate = 25.0) {
  VideoSequence<T> video;
  video.frame_rate = frame_rate;
  for (int t = 0;; ++t) {
    const auto path = dir / frame_name(t);
    if (!std::filesystem::exists(path)) break;
    video.frames.push_back(read_png<T>(path));
  }
  if (video.frames.empty())
    throw DataError("read_frames: no frames found under " + dir.string());
  video.validate("read_frames");
  return video;
}

}  // namespace fcvsr
