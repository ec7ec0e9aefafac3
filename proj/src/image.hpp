#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace tsdn {

// Interleaved HWC image with float values nominally in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t ch) { return pixels[(y * width + x) * channels + ch]; }
  double at(std::size_t y, std::size_t x, std::size_t ch) const { return pixels[(y * width + x) * channels + ch]; }

  bool same_shape(const Image& o) const { return height == o.height && width == o.width && channels == o.channels; }
  std::size_t size() const { return pixels.size(); }

  friend bool operator==(const Image&, const Image&) = default;
};

// Window copy with optional horizontal flip of the cropped window.
Image crop(const Image& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w, bool flip);
Image center_crop(const Image& img, std::size_t h, std::size_t w);

// Stacks images as rows of an NCHW tensor.
Tensor to_tensor(std::span<const Image* const> images);
Tensor to_tensor(const Image& image);
Image from_tensor(const Tensor& t, std::size_t n);

// 8-bit PNG, values mapped linearly from [0,1] with rounding.
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);
// Quantize to 8 bits and back, matching what a PNG round trip produces.
Image quantize8(const Image& img);

// Single-channel little-endian Portable FloatMap (scale -1.0).
void write_pfm(const std::filesystem::path& path, const Image& img);
Image read_pfm(const std::filesystem::path& path);

}  // namespace tsdn
