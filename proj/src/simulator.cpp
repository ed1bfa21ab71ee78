#include "dwellmap/simulator.hpp"

#include <algorithm>
#include <iterator>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "dwellmap/error.hpp"

using nlohmann::json;

namespace dwellmap::sim {

void BehaviorScript::validate() const {
  image.validate();
  for (const Step& s : steps) {
    if (s.dwell_ms < 0) {
      throw Error(ErrorCode::invalid_argument,
                  fmt::format("script '{}': negative dwell {}", name, s.dwell_ms));
    }
    if (!s.bbox.within(image)) {
      throw Error(ErrorCode::invalid_argument,
                  fmt::format("script '{}': step box outside image", name));
    }
  }
  for (const BoundingBox& roi : planted_rois) {
    if (!roi.within(image)) {
      throw Error(ErrorCode::invalid_argument,
                  fmt::format("script '{}': planted ROI outside image", name));
    }
  }
  if (jitter.dwell_ms < 0 || jitter.shift_px < 0) {
    throw Error(ErrorCode::invalid_argument, fmt::format("script '{}': negative jitter", name));
  }
}

namespace {

// Uniform draw in [-bound, bound] from the raw engine output, so traces are
// identical across standard library implementations.
std::int64_t draw(std::mt19937_64& rng, std::int64_t bound) {
  if (bound == 0) return 0;
  const auto span = static_cast<std::uint64_t>(2 * bound + 1);
  return static_cast<std::int64_t>(rng() % span) - bound;
}

BoundingBox shifted(const BoundingBox& box, std::int64_t dx, std::int64_t dy,
                    const ImageMeta& image) {
  dx = std::clamp(dx, -box.x0, image.width - box.x1);
  dy = std::clamp(dy, -box.y0, image.height - box.y1);
  return BoundingBox{box.x0 + dx, box.y0 + dy, box.x1 + dx, box.y1 + dy};
}

}  // namespace

std::vector<ViewportEvent> generate(const BehaviorScript& script) {
  script.validate();
  std::mt19937_64 rng(script.seed);
  std::vector<ViewportEvent> events;
  events.reserve(script.steps.size() + 1);
  std::int64_t t = 0;
  std::int64_t prev_area = full_image(script.image).area();
  for (const Step& step : script.steps) {
    BoundingBox box = step.bbox;
    std::int64_t dwell = step.dwell_ms;
    if (script.jitter.shift_px > 0) {
      const std::int64_t dx = draw(rng, script.jitter.shift_px);
      const std::int64_t dy = draw(rng, script.jitter.shift_px);
      box = shifted(box, dx, dy, script.image);
    }
    if (script.jitter.dwell_ms > 0) dwell = std::max<std::int64_t>(0, dwell + draw(rng, script.jitter.dwell_ms));
    const EventKind kind = box.area() != prev_area ? EventKind::zoom : EventKind::pan;
    events.push_back(ViewportEvent{kind, t, box});
    prev_area = box.area();
    t += dwell;
  }
  events.push_back(ViewportEvent{EventKind::session_end, t, std::nullopt});
  return events;
}

RecoveryResult recovery_score(const BehaviorScript& script, std::int64_t scale,
                              std::optional<double> threshold) {
  if (script.planted_rois.empty()) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("script '{}' has no planted ROI", script.name));
  }
  InterestAccumulator acc(script.image, scale);
  for (const ViewportEvent& e : generate(script)) acc.add_event(e);
  RecoveryResult out;
  out.heatmap = get_heatmap(acc);
  out.mask = threshold ? threshold_mask(out.heatmap, *threshold) : threshold_mask(out.heatmap);
  out.truth = rasterize(MarkSet{script.image, script.planted_rois}, scale);
  out.jaccard = jaccard(out.mask, out.truth);
  out.degenerate_mask = out.mask.population() == 0;
  return out;
}

namespace {

BoundingBox box_from_json(const json& j) {
  if (j.is_array()) {
    if (j.size() != 4) throw Error(ErrorCode::validation, "box must have 4 coordinates");
    return BoundingBox{j[0].get<std::int64_t>(), j[1].get<std::int64_t>(),
                       j[2].get<std::int64_t>(), j[3].get<std::int64_t>()};
  }
  return BoundingBox{j.at("x0").get<std::int64_t>(), j.at("y0").get<std::int64_t>(),
                     j.at("x1").get<std::int64_t>(), j.at("y1").get<std::int64_t>()};
}

nlohmann::ordered_json box_to_json(const BoundingBox& b) {
  return nlohmann::ordered_json::array({b.x0, b.y0, b.x1, b.y1});
}

}  // namespace

BehaviorScript script_from_json(const json& j) {
  BehaviorScript s;
  s.name = j.value("name", "");
  s.user_id = j.value("user_id", s.name);
  s.seed = j.value("seed", std::uint64_t{0});
  const json& image = j.at("image");
  s.image = ImageMeta{image.at("image_id").get<std::string>(), image.at("width").get<std::int64_t>(),
                      image.at("height").get<std::int64_t>()};
  for (const json& roi : j.value("planted_rois", json::array())) {
    s.planted_rois.push_back(box_from_json(roi));
  }
  for (const json& step : j.at("steps")) {
    s.steps.push_back(Step{box_from_json(step.at("bbox")), step.at("dwell_ms").get<std::int64_t>()});
  }
  if (j.contains("jitter")) {
    s.jitter.dwell_ms = j["jitter"].value("dwell_ms", std::int64_t{0});
    s.jitter.shift_px = j["jitter"].value("shift_px", std::int64_t{0});
  }
  return s;
}

nlohmann::ordered_json script_to_json(const BehaviorScript& s) {
  nlohmann::ordered_json j;
  j["name"] = s.name;
  j["user_id"] = s.user_id;
  j["seed"] = s.seed;
  j["image"] = {{"image_id", s.image.image_id}, {"width", s.image.width}, {"height", s.image.height}};
  j["planted_rois"] = nlohmann::ordered_json::array();
  for (const auto& roi : s.planted_rois) j["planted_rois"].push_back(box_to_json(roi));
  j["steps"] = nlohmann::ordered_json::array();
  for (const auto& step : s.steps) {
    j["steps"].push_back({{"bbox", box_to_json(step.bbox)}, {"dwell_ms", step.dwell_ms}});
  }
  j["jitter"] = {{"dwell_ms", s.jitter.dwell_ms}, {"shift_px", s.jitter.shift_px}};
  return j;
}

namespace {

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

// Position of the n-th element's opening brace inside "scripts", for error
// messages about semantically invalid scripts.
std::size_t locate_script(const std::string& text, std::size_t index) {
  std::size_t line = 1;
  std::size_t found = 0;
  std::size_t pos = text.find("\"scripts\"");
  if (pos == std::string::npos) return 1;
  line = line_of(text, pos);
  pos = text.find('[', pos);
  int depth = 0;
  for (std::size_t i = pos + 1; i < text.size() && pos != std::string::npos; ++i) {
    const char c = text[i];
    if (c == '{' && depth == 0) {
      if (found == index) return line_of(text, i);
      ++found;
    }
    if (c == '{' || c == '[') ++depth;
    if (c == '}' || c == ']') {
      if (depth == 0) break;
      --depth;
    }
  }
  return line;
}

}  // namespace

Suite parse_suite(std::istream& in) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::validation,
                fmt::format("suite line {}: {}", line_of(text, e.byte > 0 ? e.byte - 1 : 0), e.what()));
  }
  Suite suite;
  try {
    suite.test_id = j.at("test_id").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::validation, fmt::format("suite line 1: {}", e.what()));
  }
  const json scripts = j.value("scripts", json::array());
  for (std::size_t i = 0; i < scripts.size(); ++i) {
    try {
      BehaviorScript s = script_from_json(scripts[i]);
      s.validate();
      if (s.user_id.empty()) throw Error(ErrorCode::invalid_argument, "script needs a user_id or name");
      suite.scripts.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::validation,
                  fmt::format("suite line {}: script {}: {}", locate_script(text, i), i, e.what()));
    }
  }
  return suite;
}

}  // namespace dwellmap::sim
