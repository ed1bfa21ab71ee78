#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwellmap/engine.hpp"
#include "dwellmap/types.hpp"
#include "dwellmap/validation.hpp"

namespace dwellmap::sim {

/// One scripted viewport held for `dwell_ms` before the next one.
struct Step {
  BoundingBox bbox;
  std::int64_t dwell_ms = 0;
};

/// Optional seeded perturbation. Zero jitter makes generation exact.
struct Jitter {
  std::int64_t dwell_ms = 0;  // dwell += uniform [-dwell_ms, dwell_ms], floored at 0
  std::int64_t shift_px = 0;  // box translated by uniform [-shift_px, shift_px] per axis
};

struct BehaviorScript {
  std::string name;
  std::string user_id;
  std::uint64_t seed = 0;
  ImageMeta image;
  std::vector<BoundingBox> planted_rois;
  std::vector<Step> steps;
  Jitter jitter;

  // Throws invalid_argument for negative dwells or boxes outside the image.
  void validate() const;
};

/// Events at cumulative timestamps, terminated by session_end. A step is a
/// zoom when its area differs from the previous viewport (the full image for
/// the first step), a pan otherwise.
std::vector<ViewportEvent> generate(const BehaviorScript& script);

struct RecoveryResult {
  JaccardResult jaccard;
  HeatMap heatmap;
  RegionMask mask;
  RegionMask truth;
  bool degenerate_mask = false;  // no cell strictly above the threshold
};

/// generate -> accumulate -> threshold -> Jaccard against the planted ROIs.
RecoveryResult recovery_score(const BehaviorScript& script, std::int64_t scale = 1,
                              std::optional<double> threshold = std::nullopt);

// Scripts and suites are JSON documents:
//   {"name": ..., "user_id": ..., "seed": 7,
//    "image": {"image_id": ..., "width": W, "height": H},
//    "planted_rois": [[x0, y0, x1, y1], ...],
//    "steps": [{"bbox": [x0, y0, x1, y1], "dwell_ms": N}, ...],
//    "jitter": {"dwell_ms": N, "shift_px": N}}
// A suite is {"test_id": ..., "scripts": [script, ...]}.
BehaviorScript script_from_json(const nlohmann::json& j);
nlohmann::ordered_json script_to_json(const BehaviorScript& script);

struct Suite {
  std::string test_id;
  std::vector<BehaviorScript> scripts;
};

/// Parse errors are reported as validation errors naming the line.
Suite parse_suite(std::istream& in);

}  // namespace dwellmap::sim
