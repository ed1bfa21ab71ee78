#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "dwellmap/types.hpp"

namespace dwellmap {

/// Shape of a (possibly downsampled) grid laid over an image. Cell (r, c)
/// covers pixels [c*scale, (c+1)*scale) x [r*scale, (r+1)*scale), clipped to
/// the image; trailing cells may therefore be narrower than `scale`.
struct GridShape {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::int64_t scale = 1;

  static GridShape for_image(const ImageMeta& meta, std::int64_t scale);

  [[nodiscard]] std::size_t cell_count() const noexcept {
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }
  [[nodiscard]] std::size_t index(std::int64_t row, std::int64_t col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(cols) +
           static_cast<std::size_t>(col);
  }

  friend bool operator==(const GridShape&, const GridShape&) = default;
};

/// Half-open cell range [row0, row1) x [col0, col1).
struct CellRect {
  std::int64_t row0 = 0;
  std::int64_t row1 = 0;
  std::int64_t col0 = 0;
  std::int64_t col1 = 0;

  [[nodiscard]] bool is_empty() const noexcept { return row1 <= row0 || col1 <= col0; }
};

/// The cells a pixel box maps onto. At most three rectangles: the run of
/// fully covered rows, plus the partially covered first and last rows.
class CellCover {
public:
  void push(const CellRect& rect) {
    if (!rect.is_empty()) rects_[count_++] = rect;
  }
  [[nodiscard]] const CellRect* begin() const noexcept { return rects_.data(); }
  [[nodiscard]] const CellRect* end() const noexcept { return rects_.data() + count_; }
  [[nodiscard]] std::size_t size() const noexcept { return count_; }

private:
  std::array<CellRect, 3> rects_{};
  std::size_t count_ = 0;
};

// A cell belongs to the cover when the (clamped) box overlaps at least half of
// the cell's in-image area, ties included. With scale 1 this is exactly the
// set of pixels inside the box.
CellCover cover_cells(const BoundingBox& box, const ImageMeta& meta, std::int64_t scale);

/// Binary per-cell mask over a grid (thresholded interest or rasterized marks).
struct RegionMask {
  ImageMeta meta;
  GridShape shape;
  std::vector<std::uint8_t> bits;

  static RegionMask empty(const ImageMeta& meta, std::int64_t scale);

  [[nodiscard]] bool test(std::int64_t row, std::int64_t col) const noexcept {
    return bits[shape.index(row, col)] != 0;
  }
  [[nodiscard]] std::size_t population() const noexcept;
  [[nodiscard]] bool same_dimensions(const RegionMask& other) const noexcept {
    return shape == other.shape && meta.width == other.meta.width &&
           meta.height == other.meta.height;
  }
};

}  // namespace dwellmap
