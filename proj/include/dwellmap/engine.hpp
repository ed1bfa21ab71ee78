#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dwellmap/grid.hpp"
#include "dwellmap/raster.hpp"
#include "dwellmap/types.hpp"

namespace dwellmap {

/// Interest credited to the viewport of `prev` for the dwell until `next`:
/// (|W - w| + |H - h|) / 2 * (next.t - prev.t), where (w, h) is prev's box
/// and (W, H) the image. Units are pixel-milliseconds.
double get_interest(const ViewportEvent& prev, const ViewportEvent& next, const ImageMeta& meta);

/// Per-(user, image) interest state.
///
/// Each event credits the *previous* viewport with the interest of the dwell
/// that just ended; the first event of a session only records the viewport.
/// A session_end event credits the final viewport and closes the session.
///
/// Credits are recorded into a 2-D difference array, so add_event costs O(1)
/// regardless of box size; the cell grid is produced by a single prefix-sum
/// pass on read. Every credit is a multiple of 1/2 well below 2^52, so the
/// prefix sums are exact.
///
/// Single writer. Const members are safe to call concurrently with each other.
class InterestAccumulator {
public:
  explicit InterestAccumulator(ImageMeta meta, std::int64_t scale = 1);

  /// Throws order_violation when e.t precedes the last accepted timestamp
  /// and invalid_argument for mark events or boxes outside the image. The
  /// accumulator is unchanged on error.
  void add_event(const ViewportEvent& event);

  [[nodiscard]] const ImageMeta& meta() const noexcept { return meta_; }
  [[nodiscard]] const GridShape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::int64_t scale() const noexcept { return shape_.scale; }
  [[nodiscard]] const std::optional<ViewportEvent>& prev_event() const noexcept { return prev_; }
  [[nodiscard]] std::size_t events_seen() const noexcept { return events_seen_; }

  /// Row-major cell values; allocates and runs the prefix-sum pass.
  [[nodiscard]] std::vector<double> grid() const;
  [[nodiscard]] double max_interest() const;

  /// Writes the cell grid into `out` (resized as needed) and returns its max.
  double materialize(std::vector<double>& out) const;

private:
  void credit(const BoundingBox& box, double interest);

  ImageMeta meta_;
  GridShape shape_;
  std::vector<double> diff_;  // (rows + 1) x (cols + 1)
  std::optional<ViewportEvent> prev_;
  std::optional<std::int64_t> last_t_;
  std::size_t events_seen_ = 0;
};

/// Normalized interest in [0, 1] over the accumulator grid.
struct HeatMap {
  ImageMeta meta;
  GridShape shape;
  std::vector<double> values;
  double threshold = 0.0;     // above-average cutoff in normalized units
  double max_interest = 0.0;  // raw maximum before normalization
  std::size_t user_count = 1;

  [[nodiscard]] double at(std::int64_t row, std::int64_t col) const noexcept {
    return values[shape.index(row, col)];
  }
};

double mean_of(std::span<const double> values) noexcept;

/// values = grid / max_interest (all zeros when nothing was credited);
/// threshold = mean over every cell, zeros included.
HeatMap get_heatmap(const InterestAccumulator& acc);

/// Same normalization over an already materialized raw grid.
HeatMap heatmap_from_grid(const ImageMeta& meta, std::int64_t scale, std::vector<double> grid);

/// Cells strictly above `hm.threshold`.
RegionMask threshold_mask(const HeatMap& hm);
RegionMask threshold_mask(const HeatMap& hm, double threshold);

/// Cell-wise mean of per-user maps, min-max renormalized to span [0, 1]
/// (all-equal input gives all zeros). Throws invalid_argument on an empty
/// list or mismatched grids.
HeatMap aggregate_users(std::span<const HeatMap> maps);

/// Red tint with alpha = round_half_up(value * 127) for positive cells and a
/// fully transparent pixel elsewhere, upsampled nearest-neighbour to the full
/// image resolution.
RgbaImage render_rgba(const HeatMap& hm);

std::uint8_t alpha_for(double value) noexcept;

}  // namespace dwellmap
