#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace dwellmap {

struct ImageMeta {
  std::string image_id;
  std::int64_t width = 0;
  std::int64_t height = 0;

  // Throws invalid_argument unless both dimensions are positive.
  void validate() const;
};

/// Half-open pixel rectangle [x0, x1) x [y0, y1) in image coordinates.
struct BoundingBox {
  std::int64_t x0 = 0;
  std::int64_t y0 = 0;
  std::int64_t x1 = 0;
  std::int64_t y1 = 0;

  [[nodiscard]] std::int64_t width() const noexcept { return x1 - x0; }
  [[nodiscard]] std::int64_t height() const noexcept { return y1 - y0; }
  [[nodiscard]] std::int64_t area() const noexcept {
    return is_empty() ? 0 : width() * height();
  }
  [[nodiscard]] bool is_empty() const noexcept { return x1 <= x0 || y1 <= y0; }
  [[nodiscard]] bool within(const ImageMeta& meta) const noexcept {
    return !is_empty() && x0 >= 0 && y0 >= 0 && x1 <= meta.width && y1 <= meta.height;
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Intersection with the image rectangle. Never grows the box; the result may
// be empty, which callers must reject.
BoundingBox clamp_to(const BoundingBox& box, const ImageMeta& meta) noexcept;

BoundingBox full_image(const ImageMeta& meta) noexcept;

enum class EventKind { zoom, pan, session_end, mark };

std::string_view to_string(EventKind kind) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view text) noexcept;

/// One viewport change. `t` is milliseconds since session start; `bbox` is
/// absent exactly for session_end.
struct ViewportEvent {
  EventKind kind = EventKind::pan;
  std::int64_t t = 0;
  std::optional<BoundingBox> bbox;

  friend bool operator==(const ViewportEvent&, const ViewportEvent&) = default;
};

// Structural checks shared by ingestion and storage: non-negative time,
// bbox present iff kind != session_end, bbox non-empty with non-negative origin.
void validate_event_shape(const ViewportEvent& event);

}  // namespace dwellmap
