#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwellmap/engine.hpp"
#include "dwellmap/storage.hpp"
#include "dwellmap/validation.hpp"

namespace dwellmap {

// Ingest path shared by the HTTP service and the CLI simulator.

/// Clamps the box to the image. Throws validation when the clamped box is
/// empty or the event shape is malformed, invalid_argument for mark events.
ViewportEvent clamp_event(const ViewportEvent& event, const ImageMeta& meta);

/// Throws not_found for unregistered images; otherwise clamps and appends.
std::vector<std::uint64_t> ingest_events(EventStore& store, const StreamKey& key,
                                         std::span<const ViewportEvent> events);

/// Clamps each rectangle, drops those left empty, and replaces the user's
/// marks. Throws validation when nothing survives. Returns the stored count.
std::size_t submit_marks(EventStore& store, const StreamKey& key,
                         std::span<const BoundingBox> rects);

enum class PayloadFormat { raster, grid, none };

struct AnalysisOptions {
  std::int64_t scale = 1;
  std::optional<double> threshold;  // nullopt: mean of the heatmap
  bool full_resolution = false;     // validation only
  PayloadFormat format = PayloadFormat::raster;
};

/// Replays one user stream into a fresh accumulator.
HeatMap user_heatmap(const EventStore& store, const StreamKey& key, const ImageMeta& meta,
                     std::int64_t scale);

struct ImageAnalysis {
  std::string test_id;
  HeatMap heatmap;
  std::vector<std::string> users;  // sorted
  RegionMask mask;
  double threshold_used = 0.0;
  bool fixed_threshold = false;
};

/// Runs every user of the image (or just `user`) through the engine in
/// parallel and merges in user_id order; several users are aggregated.
/// Throws not_found when the image or its streams are missing.
ImageAnalysis analyze_image(const EventStore& store, const std::string& test_id,
                            const std::string& image_id, const std::optional<std::string>& user,
                            const AnalysisOptions& options);

/// Versioned JSON payload: metadata, RLE mask rows, and a PNG (base64) or
/// numeric grid. Serialized text is identical for CLI and HTTP callers.
std::string heatmap_payload(const ImageAnalysis& analysis, PayloadFormat format);

/// key=value sidecar for exported rasters.
std::string heatmap_sidecar(const ImageAnalysis& analysis);

/// Runs of set cells per row as [start, length] pairs.
nlohmann::ordered_json encode_mask_rle(const RegionMask& mask);
RegionMask decode_mask_rle(const nlohmann::json& rle, const ImageMeta& meta, std::int64_t scale);

struct ValidationRun {
  ValidationReport report;
  std::map<std::string, std::string> overlay_names;  // user_id -> overlay file name
  bool full_resolution = false;
};

/// Scores every user holding both events and marks. Throws not_found when
/// there is none.
ValidationRun validate_image(const EventStore& store, const std::string& test_id,
                             const std::string& image_id, const AnalysisOptions& options);

/// Report JSON with an "overlay" reference per user.
std::string validation_payload(const ValidationRun& run);

/// Red/green/yellow overlay for one user over an opaque white canvas at the
/// comparison resolution.
RgbaImage user_overlay(const EventStore& store, const StreamKey& key,
                       const AnalysisOptions& options);

}  // namespace dwellmap
