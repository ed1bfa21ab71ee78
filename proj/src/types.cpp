#include "dwellmap/types.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "dwellmap/error.hpp"

namespace dwellmap {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::order_violation: return "order_violation";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::validation: return "validation";
    case ErrorCode::io: return "io";
    case ErrorCode::corrupt: return "corrupt";
  }
  return "unknown";
}

void ImageMeta::validate() const {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::invalid_argument,
                fmt::format("image '{}' has invalid dimensions {}x{}", image_id, width, height));
  }
}

BoundingBox clamp_to(const BoundingBox& box, const ImageMeta& meta) noexcept {
  return BoundingBox{std::clamp<std::int64_t>(box.x0, 0, meta.width),
                     std::clamp<std::int64_t>(box.y0, 0, meta.height),
                     std::clamp<std::int64_t>(box.x1, 0, meta.width),
                     std::clamp<std::int64_t>(box.y1, 0, meta.height)};
}

BoundingBox full_image(const ImageMeta& meta) noexcept {
  return BoundingBox{0, 0, meta.width, meta.height};
}

std::string_view to_string(EventKind kind) noexcept {
  switch (kind) {
    case EventKind::zoom: return "zoom";
    case EventKind::pan: return "pan";
    case EventKind::session_end: return "session_end";
    case EventKind::mark: return "mark";
  }
  return "unknown";
}

std::optional<EventKind> parse_event_kind(std::string_view text) noexcept {
  if (text == "zoom") return EventKind::zoom;
  if (text == "pan") return EventKind::pan;
  if (text == "session_end") return EventKind::session_end;
  if (text == "mark") return EventKind::mark;
  return std::nullopt;
}

void validate_event_shape(const ViewportEvent& event) {
  if (event.t < 0) {
    throw Error(ErrorCode::validation, fmt::format("negative timestamp {}", event.t));
  }
  const bool wants_bbox = event.kind != EventKind::session_end;
  if (wants_bbox != event.bbox.has_value()) {
    throw Error(ErrorCode::validation,
                fmt::format("{} event must {}carry a bounding box", to_string(event.kind),
                            wants_bbox ? "" : "not "));
  }
  if (event.bbox) {
    const auto& b = *event.bbox;
    if (b.is_empty() || b.x0 < 0 || b.y0 < 0) {
      throw Error(ErrorCode::validation,
                  fmt::format("degenerate bounding box [{},{})x[{},{})", b.x0, b.x1, b.y0, b.y1));
    }
  }
}

}  // namespace dwellmap
