#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dwellmap {

/// 8-bit RGBA pixels, row-major, no padding. Default-constructed pixels are
/// transparent black.
class RgbaImage {
public:
  RgbaImage() = default;
  RgbaImage(std::int64_t width, std::int64_t height);

  [[nodiscard]] std::int64_t width() const noexcept { return width_; }
  [[nodiscard]] std::int64_t height() const noexcept { return height_; }
  [[nodiscard]] std::span<const std::uint8_t> data() const noexcept { return pixels_; }
  [[nodiscard]] std::uint8_t* row(std::int64_t y) noexcept {
    return pixels_.data() + static_cast<std::size_t>(y * width_) * 4;
  }
  [[nodiscard]] const std::uint8_t* row(std::int64_t y) const noexcept {
    return pixels_.data() + static_cast<std::size_t>(y * width_) * 4;
  }
  [[nodiscard]] std::uint8_t* pixel(std::int64_t x, std::int64_t y) noexcept { return row(y) + x * 4; }
  [[nodiscard]] const std::uint8_t* pixel(std::int64_t x, std::int64_t y) const noexcept {
    return row(y) + x * 4;
  }

  void fill(std::uint8_t r, std::uint8_t g, std::uint8_t b, std::uint8_t a);

  friend bool operator==(const RgbaImage&, const RgbaImage&) = default;

private:
  std::int64_t width_ = 0;
  std::int64_t height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// PNG encoding is deterministic for a given image: fixed compression level,
// no timestamps or text chunks.
std::string encode_png(const RgbaImage& image);
RgbaImage decode_png(const std::string& bytes);
void write_png(const std::filesystem::path& path, const RgbaImage& image);

std::string base64_encode(std::string_view bytes);

}  // namespace dwellmap
