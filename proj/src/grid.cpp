#include "dwellmap/grid.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "dwellmap/error.hpp"

namespace dwellmap {

GridShape GridShape::for_image(const ImageMeta& meta, std::int64_t scale) {
  meta.validate();
  if (scale < 1) {
    throw Error(ErrorCode::invalid_argument, fmt::format("scale must be >= 1, got {}", scale));
  }
  return GridShape{(meta.height + scale - 1) / scale, (meta.width + scale - 1) / scale, scale};
}

namespace {

// A run of cells along one axis sharing the same covered fraction
// `covered / extent`. Fully covered runs use covered == extent == 1.
struct AxisRun {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  std::int64_t covered = 1;
  std::int64_t extent = 1;
};

struct AxisRuns {
  std::array<AxisRun, 3> runs{};
  std::size_t count = 0;
};

AxisRun edge_run(std::int64_t cell, std::int64_t lo, std::int64_t hi, std::int64_t scale,
                 std::int64_t limit) {
  const std::int64_t cell_lo = cell * scale;
  const std::int64_t cell_hi = std::min(cell_lo + scale, limit);
  const std::int64_t covered = std::min(hi, cell_hi) - std::max(lo, cell_lo);
  const std::int64_t extent = cell_hi - cell_lo;
  if (covered == extent) return AxisRun{cell, cell + 1, 1, 1};
  return AxisRun{cell, cell + 1, covered, extent};
}

AxisRuns split_axis(std::int64_t lo, std::int64_t hi, std::int64_t scale, std::int64_t limit) {
  AxisRuns out;
  const std::int64_t first = lo / scale;
  const std::int64_t last = (hi - 1) / scale;
  out.runs[out.count++] = edge_run(first, lo, hi, scale, limit);
  if (last == first) return out;
  if (last > first + 1) out.runs[out.count++] = AxisRun{first + 1, last, 1, 1};
  out.runs[out.count++] = edge_run(last, lo, hi, scale, limit);
  return out;
}

}  // namespace

CellCover cover_cells(const BoundingBox& box, const ImageMeta& meta, std::int64_t scale) {
  CellCover cover;
  const BoundingBox clamped = clamp_to(box, meta);
  if (clamped.is_empty()) return cover;

  const AxisRuns rows = split_axis(clamped.y0, clamped.y1, scale, meta.height);
  const AxisRuns cols = split_axis(clamped.x0, clamped.x1, scale, meta.width);

  for (std::size_t r = 0; r < rows.count; ++r) {
    const AxisRun& row = rows.runs[r];
    std::int64_t col0 = -1;
    std::int64_t col1 = -1;
    for (std::size_t c = 0; c < cols.count; ++c) {
      const AxisRun& col = cols.runs[c];
      // overlap / cell_area >= 1/2, in integers.
      if (2 * row.covered * col.covered >= row.extent * col.extent) {
        if (col0 < 0) col0 = col.begin;
        col1 = col.end;
      }
    }
    if (col0 >= 0) cover.push(CellRect{row.begin, row.end, col0, col1});
  }
  return cover;
}

RegionMask RegionMask::empty(const ImageMeta& meta, std::int64_t scale) {
  RegionMask mask;
  mask.meta = meta;
  mask.shape = GridShape::for_image(meta, scale);
  mask.bits.assign(mask.shape.cell_count(), 0);
  return mask;
}

std::size_t RegionMask::population() const noexcept {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

}  // namespace dwellmap
