#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace ferfusion {

// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(std::size_t height, std::size_t width, std::size_t channels, std::uint8_t fill = 0);
  ImageBuffer(std::size_t height, std::size_t width, std::size_t channels, std::vector<std::uint8_t> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return height_ * width_; }

  const std::vector<std::uint8_t>& data() const noexcept { return data_; }
  std::vector<std::uint8_t>& data() noexcept { return data_; }

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return data_[(y * width_ + x) * channels_ + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return data_[(y * width_ + x) * channels_ + c];
  }

  bool operator==(const ImageBuffer&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 1;
  std::vector<std::uint8_t> data_;
};

/// Bilinear resampling with corner-aligned pixel centres: output pixel i maps
/// to source coordinate i * (in - 1) / (out - 1), or 0 when out == 1.
/// Interpolated values are rounded half away from zero.
ImageBuffer resize_bilinear(const ImageBuffer& img, std::size_t out_h, std::size_t out_w);

// Binary Netpbm: P5 (gray) and P6 (RGB), maxval 255.
ImageBuffer read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const ImageBuffer& img);

}  // namespace ferfusion
