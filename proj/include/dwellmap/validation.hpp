#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwellmap/engine.hpp"
#include "dwellmap/grid.hpp"
#include "dwellmap/raster.hpp"
#include "dwellmap/types.hpp"

namespace dwellmap {

/// Rectangles a user marked as interesting. Rects are clamped to the image
/// and may overlap.
struct MarkSet {
  ImageMeta meta;
  std::vector<BoundingBox> rects;
};

/// Union of the rectangles on the grid of the given scale, using the same
/// cell-cover rule as the engine.
RegionMask rasterize(const MarkSet& marks, std::int64_t scale = 1);

struct JaccardResult {
  double value = 0.0;
  std::size_t intersection = 0;
  std::size_t union_size = 0;
  std::size_t a_count = 0;
  std::size_t b_count = 0;
  bool degenerate = false;  // both masks empty; value is 0 by convention
};

/// |a ∩ b| / |a ∪ b|. Throws invalid_argument on dimension mismatch.
JaccardResult jaccard(const RegionMask& a, const RegionMask& b);

namespace tint {
inline constexpr std::uint8_t red[3] = {255, 0, 0};
inline constexpr std::uint8_t green[3] = {0, 255, 0};
inline constexpr std::uint8_t yellow[3] = {255, 255, 0};
}  // namespace tint

/// Blends a 50% tint over `base`: red where only the heatmap mask is set,
/// green where only the marks are, yellow where both are. Untouched elsewhere.
/// `base` must have the grid dimensions of the masks.
RgbaImage overlay(const RegionMask& hm_mask, const RegionMask& marks_mask, const RgbaImage& base);

// Result of blending `tint` at 50% over a base pixel.
void blend_half(std::uint8_t* px, const std::uint8_t* tint) noexcept;

struct SweepPoint {
  double threshold = 0.0;
  JaccardResult jaccard;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  double best_threshold = 0.0;  // ties resolve to the lowest threshold
  double best_jaccard = 0.0;
};

/// Evaluates Jaccard against the marks for each threshold of an ascending
/// grid in [0, 1].
SweepResult sweep_threshold(const HeatMap& hm, const MarkSet& marks, std::span<const double> grid);

/// Evenly spaced thresholds 0, 1/steps, ..., 1.
std::vector<double> uniform_threshold_grid(int steps);

struct UserOutcome {
  std::string user_id;
  double jaccard = 0.0;
  std::size_t mask_pixels = 0;
  std::size_t mark_pixels = 0;
  std::size_t intersection_pixels = 0;
  std::size_t union_pixels = 0;
  bool degenerate_union = false;  // mask and marks both empty
  bool degenerate_mask = false;   // nothing strictly above the threshold
  double threshold = 0.0;
};

struct ImageStats {
  double min = 0.0;
  double avg = 0.0;
  double max = 0.0;
  double variance = 0.0;  // population variance
  std::size_t users = 0;
};

ImageStats summarize(std::span<const UserOutcome> outcomes);

struct ValidationReport {
  std::string test_id;
  std::string image_id;
  std::int64_t scale = 1;
  std::string threshold_mode;  // "mean" or "fixed"
  std::optional<double> fixed_threshold;
  std::vector<UserOutcome> per_user;  // ordered by user_id
  ImageStats per_image;
};

/// Nearest-neighbour expansion of a grid mask to one cell per pixel.
RegionMask upsample_to_pixels(const RegionMask& mask);

/// Scores one user's heatmap against their marks. By default both sides are
/// compared on the heatmap's grid; `full_resolution` expands the thresholded
/// mask to pixels and rasterizes the marks at scale 1 instead. `threshold`
/// overrides the heatmap's mean cutoff.
UserOutcome score_user(const std::string& user_id, const HeatMap& hm, const MarkSet& marks,
                       std::optional<double> threshold = std::nullopt,
                       bool full_resolution = false);

ValidationReport build_report(std::string test_id, std::string image_id, std::int64_t scale,
                              std::optional<double> fixed_threshold,
                              std::vector<UserOutcome> outcomes);

nlohmann::ordered_json to_json(const ValidationReport& report);

/// One CSV row per image: image_id,users,min,avg,max,variance.
std::string stats_table_header();
std::string stats_table_row(const ValidationReport& report);

}  // namespace dwellmap
