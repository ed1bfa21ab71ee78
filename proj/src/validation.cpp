#include "dwellmap/validation.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "dwellmap/error.hpp"

namespace dwellmap {

RegionMask rasterize(const MarkSet& marks, std::int64_t scale) {
  RegionMask mask = RegionMask::empty(marks.meta, scale);
  for (const BoundingBox& rect : marks.rects) {
    for (const CellRect& cells : cover_cells(rect, marks.meta, scale)) {
      for (std::int64_t r = cells.row0; r < cells.row1; ++r) {
        auto* row = mask.bits.data() + mask.shape.index(r, 0);
        std::fill(row + cells.col0, row + cells.col1, std::uint8_t{1});
      }
    }
  }
  return mask;
}

JaccardResult jaccard(const RegionMask& a, const RegionMask& b) {
  if (!a.same_dimensions(b) || a.bits.size() != b.bits.size()) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("mask dimensions differ: {}x{} vs {}x{}", a.shape.cols, a.shape.rows,
                            b.shape.cols, b.shape.rows));
  }
  JaccardResult out;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool in_a = a.bits[i] != 0;
    const bool in_b = b.bits[i] != 0;
    out.a_count += in_a;
    out.b_count += in_b;
    out.intersection += in_a && in_b;
    out.union_size += in_a || in_b;
  }
  if (out.union_size == 0) {
    out.degenerate = true;
    out.value = 0.0;
  } else {
    out.value = static_cast<double>(out.intersection) / static_cast<double>(out.union_size);
  }
  return out;
}

void blend_half(std::uint8_t* px, const std::uint8_t* tint) noexcept {
  for (int c = 0; c < 3; ++c) {
    px[c] = static_cast<std::uint8_t>((px[c] + tint[c] + 1) / 2);
  }
  px[3] = static_cast<std::uint8_t>((px[3] + 255 + 1) / 2);
}

RgbaImage overlay(const RegionMask& hm_mask, const RegionMask& marks_mask, const RgbaImage& base) {
  if (!hm_mask.same_dimensions(marks_mask) || base.width() != hm_mask.shape.cols ||
      base.height() != hm_mask.shape.rows) {
    throw Error(ErrorCode::invalid_argument, "overlay inputs have mismatched dimensions");
  }
  RgbaImage out = base;
  for (std::int64_t r = 0; r < hm_mask.shape.rows; ++r) {
    for (std::int64_t c = 0; c < hm_mask.shape.cols; ++c) {
      const bool in_hm = hm_mask.test(r, c);
      const bool in_marks = marks_mask.test(r, c);
      if (in_hm && in_marks) {
        blend_half(out.pixel(c, r), tint::yellow);
      } else if (in_hm) {
        blend_half(out.pixel(c, r), tint::red);
      } else if (in_marks) {
        blend_half(out.pixel(c, r), tint::green);
      }
    }
  }
  return out;
}

SweepResult sweep_threshold(const HeatMap& hm, const MarkSet& marks, std::span<const double> grid) {
  if (grid.empty()) throw Error(ErrorCode::invalid_argument, "threshold grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) {
      throw Error(ErrorCode::invalid_argument,
                  fmt::format("threshold {} outside [0, 1]", grid[i]));
    }
    if (i > 0 && grid[i] < grid[i - 1]) {
      throw Error(ErrorCode::invalid_argument, "threshold grid must be sorted ascending");
    }
  }
  const RegionMask marks_mask = rasterize(marks, hm.shape.scale);
  SweepResult out;
  out.points.reserve(grid.size());
  bool have_best = false;
  for (double t : grid) {
    SweepPoint p{t, jaccard(threshold_mask(hm, t), marks_mask)};
    if (!have_best || p.jaccard.value > out.best_jaccard) {
      out.best_threshold = t;
      out.best_jaccard = p.jaccard.value;
      have_best = true;
    }
    out.points.push_back(p);
  }
  return out;
}

std::vector<double> uniform_threshold_grid(int steps) {
  if (steps < 1) throw Error(ErrorCode::invalid_argument, "threshold grid needs >= 1 step");
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) grid.push_back(static_cast<double>(i) / steps);
  return grid;
}

ImageStats summarize(std::span<const UserOutcome> outcomes) {
  ImageStats s;
  s.users = outcomes.size();
  if (outcomes.empty()) return s;
  s.min = outcomes.front().jaccard;
  s.max = outcomes.front().jaccard;
  double sum = 0.0;
  for (const auto& o : outcomes) {
    s.min = std::min(s.min, o.jaccard);
    s.max = std::max(s.max, o.jaccard);
    sum += o.jaccard;
  }
  const auto n = static_cast<double>(outcomes.size());
  s.avg = std::clamp(sum / n, s.min, s.max);
  double sq = 0.0;
  for (const auto& o : outcomes) sq += (o.jaccard - s.avg) * (o.jaccard - s.avg);
  s.variance = sq / n;
  return s;
}

RegionMask upsample_to_pixels(const RegionMask& mask) {
  if (mask.shape.scale == 1) return mask;
  RegionMask out = RegionMask::empty(mask.meta, 1);
  const std::int64_t s = mask.shape.scale;
  for (std::int64_t y = 0; y < out.shape.rows; ++y) {
    for (std::int64_t x = 0; x < out.shape.cols; ++x) {
      out.bits[out.shape.index(y, x)] = mask.bits[mask.shape.index(y / s, x / s)];
    }
  }
  return out;
}

UserOutcome score_user(const std::string& user_id, const HeatMap& hm, const MarkSet& marks,
                       std::optional<double> threshold, bool full_resolution) {
  const double cutoff = threshold.value_or(hm.threshold);
  RegionMask hm_mask = threshold_mask(hm, cutoff);
  if (full_resolution) hm_mask = upsample_to_pixels(hm_mask);
  const RegionMask marks_mask = rasterize(marks, full_resolution ? 1 : hm.shape.scale);
  const JaccardResult j = jaccard(hm_mask, marks_mask);
  UserOutcome o;
  o.user_id = user_id;
  o.jaccard = j.value;
  o.mask_pixels = j.a_count;
  o.mark_pixels = j.b_count;
  o.intersection_pixels = j.intersection;
  o.union_pixels = j.union_size;
  o.degenerate_union = j.degenerate;
  o.degenerate_mask = j.a_count == 0;
  o.threshold = cutoff;
  return o;
}

ValidationReport build_report(std::string test_id, std::string image_id, std::int64_t scale,
                              std::optional<double> fixed_threshold,
                              std::vector<UserOutcome> outcomes) {
  std::sort(outcomes.begin(), outcomes.end(),
            [](const UserOutcome& a, const UserOutcome& b) { return a.user_id < b.user_id; });
  ValidationReport r;
  r.test_id = std::move(test_id);
  r.image_id = std::move(image_id);
  r.scale = scale;
  r.threshold_mode = fixed_threshold ? "fixed" : "mean";
  r.fixed_threshold = fixed_threshold;
  r.per_user = std::move(outcomes);
  r.per_image = summarize(r.per_user);
  return r;
}

nlohmann::ordered_json to_json(const ValidationReport& report) {
  nlohmann::ordered_json users = nlohmann::ordered_json::array();
  for (const auto& o : report.per_user) {
    users.push_back({{"user_id", o.user_id},
                     {"jaccard", o.jaccard},
                     {"mask_pixels", o.mask_pixels},
                     {"mark_pixels", o.mark_pixels},
                     {"intersection_pixels", o.intersection_pixels},
                     {"union_pixels", o.union_pixels},
                     {"threshold", o.threshold},
                     {"degenerate_union", o.degenerate_union},
                     {"degenerate_mask", o.degenerate_mask}});
  }
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["test_id"] = report.test_id;
  j["image_id"] = report.image_id;
  j["scale"] = report.scale;
  j["threshold_mode"] = report.threshold_mode;
  j["threshold_used"] = report.fixed_threshold ? nlohmann::ordered_json(*report.fixed_threshold)
                                               : nlohmann::ordered_json("mean");
  j["per_user"] = std::move(users);
  j["per_image"] = {{"users", report.per_image.users},
                    {"min", report.per_image.min},
                    {"avg", report.per_image.avg},
                    {"max", report.per_image.max},
                    {"variance", report.per_image.variance}};
  return j;
}

std::string stats_table_header() { return "image_id,users,min,avg,max,variance\n"; }

std::string stats_table_row(const ValidationReport& report) {
  const ImageStats& s = report.per_image;
  return fmt::format("{},{},{:.6f},{:.6f},{:.6f},{:.6f}\n", report.image_id, s.users, s.min, s.avg,
                     s.max, s.variance);
}

}  // namespace dwellmap
