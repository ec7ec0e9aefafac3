#include "image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace tsdn {

Image crop(const Image& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w, bool flip) {
  require(top + h <= img.height && left + w <= img.width, ErrorCode::InvalidInput, "crop window outside image");
  Image out(h, w, img.channels);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sx = left + (flip ? w - 1 - x : x);
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(top + y, sx, c);
    }
  return out;
}

Image center_crop(const Image& img, std::size_t h, std::size_t w) {
  require(h <= img.height && w <= img.width, ErrorCode::InvalidInput, "center crop larger than image");
  return crop(img, (img.height - h) / 2, (img.width - w) / 2, h, w, false);
}

Tensor to_tensor(std::span<const Image* const> images) {
  require(!images.empty(), ErrorCode::InvalidInput, "to_tensor of no images");
  const Image& first = *images.front();
  Tensor t = Tensor::nchw(images.size(), first.channels, first.height, first.width);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = *images[n];
    require(img.same_shape(first), ErrorCode::Shape, "to_tensor: images differ in shape");
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        for (std::size_t c = 0; c < img.channels; ++c) t.at(n, c, y, x) = img.at(y, x, c);
  }
  return t;
}

Tensor to_tensor(const Image& image) {
  const Image* p[] = {&image};
  return to_tensor(p);
}

Image from_tensor(const Tensor& t, std::size_t n) {
  require(t.rank() == 4 && n < t.dim(0), ErrorCode::Shape, "from_tensor: bad index or rank");
  Image img(t.dim(2), t.dim(3), t.dim(1));
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) img.at(y, x, c) = t.at(n, c, y, x);
  return img;
}

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

Image quantize8(const Image& img) {
  Image out = img;
  for (double& v : out.pixels) v = to_byte(v) / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  require(img.channels == 1 || img.channels == 3, ErrorCode::InvalidInput, "png supports 1 or 3 channels");
  std::vector<std::uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(img.pixels[i]);
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&pi, path.c_str(), 0, bytes.data(), 0, nullptr))
    fail(ErrorCode::Io, "cannot write " + path.string() + ": " + pi.message);
}

Image read_png(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) fail(ErrorCode::Io, "no such file: " + path.string());
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.c_str()))
    fail(ErrorCode::Io, "not a readable PNG: " + path.string() + ": " + pi.message);
  pi.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, bytes.data(), 0, nullptr)) {
    const std::string msg = pi.message;
    png_image_free(&pi);
    fail(ErrorCode::Io, "cannot decode " + path.string() + ": " + msg);
  }
  Image img(pi.height, pi.width, 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0;
  return img;
}

void write_pfm(const std::filesystem::path& path, const Image& img) {
  require(img.channels == 1, ErrorCode::InvalidInput, "pfm writer expects a single channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out << "Pf\n" << img.width << ' ' << img.height << "\n-1.0\n";
  // PFM rows run bottom-to-top.
  for (std::size_t r = 0; r < img.height; ++r) {
    const std::size_t y = img.height - 1 - r;
    for (std::size_t x = 0; x < img.width; ++x) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(img.at(y, x, 0)));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      out.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

Image read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  in.get();
  require(in && magic == "Pf", ErrorCode::Schema, "not a single-channel PFM: " + path.string());
  const bool little = scale < 0.0;
  Image img(h, w, 1);
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t y = h - 1 - r;
    for (std::size_t x = 0; x < w; ++x) {
      std::uint32_t bits = 0;
      in.read(reinterpret_cast<char*>(&bits), 4);
      const bool swap = little != (std::endian::native == std::endian::little);
      if (swap) bits = __builtin_bswap32(bits);
      img.at(y, x, 0) = std::bit_cast<float>(bits);
    }
  }
  require(static_cast<bool>(in), ErrorCode::Io, "truncated PFM: " + path.string());
  return img;
}

}  // namespace tsdn
