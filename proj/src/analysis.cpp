#include "dwellmap/analysis.hpp"

#include <algorithm>
#include <future>
#include <thread>

#include <fmt/format.h>

#include "dwellmap/error.hpp"
#include "dwellmap/raster.hpp"

using nlohmann::ordered_json;

namespace dwellmap {

ViewportEvent clamp_event(const ViewportEvent& event, const ImageMeta& meta) {
  if (event.kind == EventKind::mark) {
    throw Error(ErrorCode::validation, "mark records go to the marks endpoint");
  }
  ViewportEvent out = event;
  if (out.bbox) {
    out.bbox = clamp_to(*out.bbox, meta);
    if (out.bbox->is_empty()) {
      throw Error(ErrorCode::validation, "bounding box has zero area after clamping to the image");
    }
  }
  validate_event_shape(out);
  return out;
}

namespace {

ImageMeta require_image(const EventStore& store, const std::string& image_id) {
  auto meta = store.find_image(image_id);
  if (!meta) throw Error(ErrorCode::not_found, fmt::format("image '{}' is not registered", image_id));
  return *meta;
}

// Bounded fan-out over indices; results land in index order.
template <typename Result, typename Fn>
std::vector<Result> parallel_map(std::size_t count, Fn fn) {
  std::vector<Result> out(count);
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(count, std::thread::hardware_concurrency()));
  std::vector<std::future<void>> futures;
  futures.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < count; i += workers) out[i] = fn(i);
    }));
  }
  for (auto& f : futures) f.get();
  return out;
}

}  // namespace

std::vector<std::uint64_t> ingest_events(EventStore& store, const StreamKey& key,
                                         std::span<const ViewportEvent> events) {
  const ImageMeta meta = require_image(store, key.image_id);
  std::vector<ViewportEvent> clean;
  clean.reserve(events.size());
  for (const ViewportEvent& e : events) clean.push_back(clamp_event(e, meta));
  return store.append_batch(key, clean);
}

std::size_t submit_marks(EventStore& store, const StreamKey& key,
                         std::span<const BoundingBox> rects) {
  const ImageMeta meta = require_image(store, key.image_id);
  if (rects.empty()) throw Error(ErrorCode::validation, "mark list is empty");
  std::vector<BoundingBox> kept;
  for (const BoundingBox& r : rects) {
    const BoundingBox c = clamp_to(r, meta);
    if (!c.is_empty()) kept.push_back(c);
  }
  if (kept.empty()) throw Error(ErrorCode::validation, "every mark rectangle was degenerate or outside the image");
  store.replace_marks(key, kept);
  return kept.size();
}

HeatMap user_heatmap(const EventStore& store, const StreamKey& key, const ImageMeta& meta,
                     std::int64_t scale) {
  InterestAccumulator acc(meta, scale);
  for (const EventRecord& r : store.replay(key).records) acc.add_event(r.event);
  return get_heatmap(acc);
}

ImageAnalysis analyze_image(const EventStore& store, const std::string& test_id,
                            const std::string& image_id, const std::optional<std::string>& user,
                            const AnalysisOptions& options) {
  if (options.threshold && !(*options.threshold >= 0.0 && *options.threshold <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "threshold must lie in [0, 1]");
  }
  const ImageMeta meta = require_image(store, image_id);
  std::vector<StreamKey> keys;
  if (user) {
    StreamKey key{test_id, image_id, *user};
    if (!store.has_stream(key)) {
      throw Error(ErrorCode::not_found, fmt::format("no events for user '{}' on image '{}'", *user, image_id));
    }
    keys.push_back(std::move(key));
  } else {
    keys = store.list_streams(test_id, image_id);
    if (keys.empty()) {
      throw Error(ErrorCode::not_found, fmt::format("no event streams for image '{}' in test '{}'", image_id, test_id));
    }
  }
  std::sort(keys.begin(), keys.end());

  std::vector<HeatMap> maps = parallel_map<HeatMap>(
      keys.size(), [&](std::size_t i) { return user_heatmap(store, keys[i], meta, options.scale); });

  ImageAnalysis out;
  out.test_id = test_id;
  for (const auto& k : keys) out.users.push_back(k.user_id);
  out.heatmap = maps.size() == 1 ? std::move(maps.front()) : aggregate_users(maps);
  out.fixed_threshold = options.threshold.has_value();
  out.threshold_used = options.threshold.value_or(out.heatmap.threshold);
  out.mask = threshold_mask(out.heatmap, out.threshold_used);
  return out;
}

ordered_json encode_mask_rle(const RegionMask& mask) {
  ordered_json rows = ordered_json::array();
  for (std::int64_t r = 0; r < mask.shape.rows; ++r) {
    ordered_json runs = ordered_json::array();
    std::int64_t c = 0;
    while (c < mask.shape.cols) {
      if (!mask.test(r, c)) {
        ++c;
        continue;
      }
      const std::int64_t start = c;
      while (c < mask.shape.cols && mask.test(r, c)) ++c;
      runs.push_back(ordered_json::array({start, c - start}));
    }
    rows.push_back(std::move(runs));
  }
  return rows;
}

RegionMask decode_mask_rle(const nlohmann::json& rle, const ImageMeta& meta, std::int64_t scale) {
  RegionMask mask = RegionMask::empty(meta, scale);
  if (!rle.is_array() || static_cast<std::int64_t>(rle.size()) != mask.shape.rows) {
    throw Error(ErrorCode::validation, "RLE row count does not match the grid");
  }
  for (std::int64_t r = 0; r < mask.shape.rows; ++r) {
    for (const auto& run : rle[static_cast<std::size_t>(r)]) {
      const auto start = run.at(0).get<std::int64_t>();
      const auto len = run.at(1).get<std::int64_t>();
      if (start < 0 || len < 0 || start + len > mask.shape.cols) {
        throw Error(ErrorCode::validation, "RLE run outside the grid");
      }
      auto* row = mask.bits.data() + mask.shape.index(r, 0);
      std::fill(row + start, row + start + len, std::uint8_t{1});
    }
  }
  return mask;
}

std::string heatmap_payload(const ImageAnalysis& a, PayloadFormat format) {
  const HeatMap& hm = a.heatmap;
  ordered_json j;
  j["version"] = 1;
  j["test_id"] = a.test_id;
  j["image_id"] = hm.meta.image_id;
  j["width"] = hm.meta.width;
  j["height"] = hm.meta.height;
  j["scale"] = hm.shape.scale;
  j["rows"] = hm.shape.rows;
  j["cols"] = hm.shape.cols;
  j["users"] = a.users;
  j["user_count"] = hm.user_count;
  j["max_interest"] = hm.max_interest;
  j["mean"] = hm.threshold;
  j["threshold_mode"] = a.fixed_threshold ? "fixed" : "mean";
  j["threshold"] = a.threshold_used;
  j["mask"] = {{"encoding", "rle-rows"},
               {"population", a.mask.population()},
               {"rows", encode_mask_rle(a.mask)}};
  switch (format) {
    case PayloadFormat::raster:
      j["raster"] = {{"format", "png"},
                     {"encoding", "base64"},
                     {"data", base64_encode(encode_png(render_rgba(hm)))}};
      break;
    case PayloadFormat::grid: {
      ordered_json grid = ordered_json::array();
      for (std::int64_t r = 0; r < hm.shape.rows; ++r) {
        const auto begin = hm.values.begin() + static_cast<std::ptrdiff_t>(hm.shape.index(r, 0));
        grid.push_back(std::vector<double>(begin, begin + hm.shape.cols));
      }
      j["grid"] = std::move(grid);
      break;
    }
    case PayloadFormat::none:
      break;
  }
  return j.dump(2) + "\n";
}

std::string heatmap_sidecar(const ImageAnalysis& a) {
  return fmt::format("image_id={}\nuser_count={}\nmax_interest={}\nthreshold={}\nscale={}\n",
                     a.heatmap.meta.image_id, a.heatmap.user_count, a.heatmap.max_interest,
                     a.threshold_used, a.heatmap.shape.scale);
}

ValidationRun validate_image(const EventStore& store, const std::string& test_id,
                             const std::string& image_id, const AnalysisOptions& options) {
  if (options.threshold && !(*options.threshold >= 0.0 && *options.threshold <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "threshold must lie in [0, 1]");
  }
  const ImageMeta meta = require_image(store, image_id);
  std::vector<StreamKey> eligible;
  for (const StreamKey& key : store.list_streams(test_id, image_id)) {
    if (store.load_marks(key)) eligible.push_back(key);
  }
  if (eligible.empty()) {
    throw Error(ErrorCode::not_found,
                fmt::format("no user of image '{}' has both events and marks", image_id));
  }
  std::sort(eligible.begin(), eligible.end());

  std::vector<UserOutcome> outcomes = parallel_map<UserOutcome>(eligible.size(), [&](std::size_t i) {
    const HeatMap hm = user_heatmap(store, eligible[i], meta, options.scale);
    const MarkSet marks{meta, *store.load_marks(eligible[i])};
    return score_user(eligible[i].user_id, hm, marks, options.threshold, options.full_resolution);
  });

  ValidationRun run;
  run.report = build_report(test_id, image_id, options.scale, options.threshold, std::move(outcomes));
  run.full_resolution = options.full_resolution;
  for (std::size_t i = 0; i < run.report.per_user.size(); ++i) {
    const std::string& user = run.report.per_user[i].user_id;
    run.overlay_names[user] = fmt::format("{:03}-{}.png", i, sanitize_component(user));
  }
  return run;
}

std::string validation_payload(const ValidationRun& run) {
  ordered_json j = to_json(run.report);
  j["full_resolution"] = run.full_resolution;
  for (auto& entry : j["per_user"]) {
    entry["overlay"] = "overlays/" + run.overlay_names.at(entry["user_id"].get<std::string>());
  }
  return j.dump(2) + "\n";
}

RgbaImage user_overlay(const EventStore& store, const StreamKey& key,
                       const AnalysisOptions& options) {
  const ImageMeta meta = require_image(store, key.image_id);
  const auto marks = store.load_marks(key);
  if (!marks) throw Error(ErrorCode::not_found, fmt::format("no marks for user '{}'", key.user_id));
  const HeatMap hm = user_heatmap(store, key, meta, options.scale);
  RegionMask hm_mask = threshold_mask(hm, options.threshold.value_or(hm.threshold));
  RegionMask marks_mask = rasterize(MarkSet{meta, *marks}, options.full_resolution ? 1 : options.scale);
  if (options.full_resolution) hm_mask = upsample_to_pixels(hm_mask);
  RgbaImage base(hm_mask.shape.cols, hm_mask.shape.rows);
  base.fill(255, 255, 255, 255);
  return overlay(hm_mask, marks_mask, base);
}

}  // namespace dwellmap
