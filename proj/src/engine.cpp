#include "dwellmap/engine.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include <fmt/format.h>

#include "dwellmap/error.hpp"

namespace dwellmap {

double get_interest(const ViewportEvent& prev, const ViewportEvent& next, const ImageMeta& meta) {
  assert(prev.bbox.has_value());
  assert(next.t >= prev.t);
  const BoundingBox& box = *prev.bbox;
  const std::int64_t area_width = std::llabs(box.x0 - box.x1);
  const std::int64_t area_height = std::llabs(box.y0 - box.y1);
  const std::int64_t time_diff = next.t - prev.t;
  const std::int64_t area_diff =
      std::llabs(meta.width - area_width) + std::llabs(meta.height - area_height);
  return static_cast<double>(area_diff) / 2.0 * static_cast<double>(time_diff);
}

InterestAccumulator::InterestAccumulator(ImageMeta meta, std::int64_t scale)
    : meta_(std::move(meta)), shape_(GridShape::for_image(meta_, scale)) {
  diff_.assign(static_cast<std::size_t>(shape_.rows + 1) * static_cast<std::size_t>(shape_.cols + 1),
               0.0);
}

void InterestAccumulator::add_event(const ViewportEvent& event) {
  if (event.kind == EventKind::mark) {
    throw Error(ErrorCode::invalid_argument, "mark records are not viewport events");
  }
  validate_event_shape(event);
  if (event.bbox && !event.bbox->within(meta_)) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("bounding box outside image '{}'", meta_.image_id));
  }
  if (last_t_ && event.t < *last_t_) {
    throw Error(ErrorCode::order_violation,
                fmt::format("event at t={} precedes previous t={}", event.t, *last_t_));
  }

  if (prev_ && prev_->bbox) {
    const double interest = get_interest(*prev_, event, meta_);
    if (interest > 0.0) credit(*prev_->bbox, interest);
  }
  last_t_ = event.t;
  ++events_seen_;
  if (event.kind == EventKind::session_end) {
    prev_.reset();
  } else {
    prev_ = event;
  }
}

void InterestAccumulator::credit(const BoundingBox& box, double interest) {
  const auto stride = static_cast<std::size_t>(shape_.cols + 1);
  for (const CellRect& rect : cover_cells(box, meta_, shape_.scale)) {
    const auto r0 = static_cast<std::size_t>(rect.row0) * stride;
    const auto r1 = static_cast<std::size_t>(rect.row1) * stride;
    const auto c0 = static_cast<std::size_t>(rect.col0);
    const auto c1 = static_cast<std::size_t>(rect.col1);
    diff_[r0 + c0] += interest;
    diff_[r0 + c1] -= interest;
    diff_[r1 + c0] -= interest;
    diff_[r1 + c1] += interest;
  }
}

double InterestAccumulator::materialize(std::vector<double>& out) const {
  const auto rows = static_cast<std::size_t>(shape_.rows);
  const auto cols = static_cast<std::size_t>(shape_.cols);
  const std::size_t stride = cols + 1;
  out.resize(rows * cols);
  double max_value = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* d = diff_.data() + r * stride;
    double* row = out.data() + r * cols;
    const double* above = r > 0 ? row - cols : nullptr;
    double running = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      running += d[c];
      const double v = above ? above[c] + running : running;
      row[c] = v;
      max_value = std::max(max_value, v);
    }
  }
  return max_value;
}

std::vector<double> InterestAccumulator::grid() const {
  std::vector<double> out;
  materialize(out);
  return out;
}

double InterestAccumulator::max_interest() const {
  std::vector<double> scratch;
  return materialize(scratch);
}

double mean_of(std::span<const double> values) noexcept {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

namespace {

void normalize_in_place(HeatMap& hm, double max_value) {
  hm.max_interest = max_value;
  if (max_value > 0.0) {
    for (double& v : hm.values) v /= max_value;
  } else {
    std::fill(hm.values.begin(), hm.values.end(), 0.0);
  }
  hm.threshold = mean_of(hm.values);
}

}  // namespace

HeatMap get_heatmap(const InterestAccumulator& acc) {
  HeatMap hm;
  hm.meta = acc.meta();
  hm.shape = acc.shape();
  const double max_value = acc.materialize(hm.values);
  normalize_in_place(hm, max_value);
  return hm;
}

HeatMap heatmap_from_grid(const ImageMeta& meta, std::int64_t scale, std::vector<double> grid) {
  HeatMap hm;
  hm.meta = meta;
  hm.shape = GridShape::for_image(meta, scale);
  if (grid.size() != hm.shape.cell_count()) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("grid has {} cells, expected {}", grid.size(), hm.shape.cell_count()));
  }
  hm.values = std::move(grid);
  const double max_value =
      hm.values.empty() ? 0.0 : *std::max_element(hm.values.begin(), hm.values.end());
  normalize_in_place(hm, std::max(0.0, max_value));
  return hm;
}

RegionMask threshold_mask(const HeatMap& hm) { return threshold_mask(hm, hm.threshold); }

RegionMask threshold_mask(const HeatMap& hm, double threshold) {
  RegionMask mask;
  mask.meta = hm.meta;
  mask.shape = hm.shape;
  mask.bits.resize(hm.values.size());
  std::transform(hm.values.begin(), hm.values.end(), mask.bits.begin(),
                 [threshold](double v) { return static_cast<std::uint8_t>(v > threshold); });
  return mask;
}

HeatMap aggregate_users(std::span<const HeatMap> maps) {
  if (maps.empty()) {
    throw Error(ErrorCode::invalid_argument, "cannot aggregate an empty list of heatmaps");
  }
  const HeatMap& first = maps.front();
  for (const HeatMap& m : maps) {
    if (m.shape != first.shape || m.meta.width != first.meta.width ||
        m.meta.height != first.meta.height || m.values.size() != first.values.size()) {
      throw Error(ErrorCode::invalid_argument, "heatmaps to aggregate have mismatched dimensions");
    }
  }

  HeatMap out;
  out.meta = first.meta;
  out.shape = first.shape;
  out.values.assign(first.values.size(), 0.0);
  out.user_count = 0;
  for (const HeatMap& m : maps) {
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += m.values[i];
    out.max_interest = std::max(out.max_interest, m.max_interest);
    out.user_count += m.user_count;
  }
  const auto n = static_cast<double>(maps.size());
  for (double& v : out.values) v /= n;

  const auto [lo_it, hi_it] = std::minmax_element(out.values.begin(), out.values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (hi > lo) {
    const double span = hi - lo;
    for (double& v : out.values) v = (v - lo) / span;
  } else {
    std::fill(out.values.begin(), out.values.end(), 0.0);
  }
  out.threshold = mean_of(out.values);
  return out;
}

std::uint8_t alpha_for(double value) noexcept {
  const double clamped = std::clamp(value, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 127.0 + 0.5));
}

RgbaImage render_rgba(const HeatMap& hm) {
  RgbaImage img(hm.meta.width, hm.meta.height);
  const std::int64_t scale = hm.shape.scale;
  for (std::int64_t y = 0; y < hm.meta.height; ++y) {
    const std::int64_t row = y / scale;
    std::uint8_t* px = img.row(y);
    for (std::int64_t x = 0; x < hm.meta.width; ++x, px += 4) {
      const double v = hm.at(row, x / scale);
      if (v > 0.0) {
        px[0] = 255;
        px[1] = 0;
        px[2] = 0;
        px[3] = alpha_for(v);
      }
    }
  }
  return img;
}

}  // namespace dwellmap
