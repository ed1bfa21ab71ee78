#include <doctest.h>

#include <cmath>

#include "dwellmap/engine.hpp"
#include "dwellmap/error.hpp"
#include "interest_table.hpp"

using namespace dwellmap;

namespace {

ViewportEvent at(std::int64_t t, BoundingBox box, EventKind kind = EventKind::pan) {
  return ViewportEvent{kind, t, box};
}

ViewportEvent end_at(std::int64_t t) { return ViewportEvent{EventKind::session_end, t, std::nullopt}; }

const ImageMeta kBig{"big", 1000, 800};

}  // namespace

TEST_CASE("init sizes the grid by ceiling division") {
  InterestAccumulator a(ImageMeta{"i", 4, 3}, 1);
  CHECK(a.shape().rows == 3);
  CHECK(a.shape().cols == 4);
  CHECK(a.max_interest() == 0.0);
  CHECK_FALSE(a.prev_event().has_value());
  for (double v : a.grid()) CHECK(v == 0.0);

  InterestAccumulator b(ImageMeta{"i", 4, 3}, 2);
  CHECK(b.shape().rows == 2);
  CHECK(b.shape().cols == 2);

  InterestAccumulator c(kBig, 1);
  CHECK(c.shape().rows == 800);
  CHECK(c.shape().cols == 1000);
}

TEST_CASE("init rejects bad dimensions and scales") {
  CHECK_THROWS_AS(InterestAccumulator(ImageMeta{"i", 0, 3}, 1), Error);
  CHECK_THROWS_AS(InterestAccumulator(ImageMeta{"i", 4, -1}, 1), Error);
  CHECK_THROWS_AS(InterestAccumulator(ImageMeta{"i", 4, 3}, 0), Error);
  try {
    InterestAccumulator(ImageMeta{"i", 4, 3}, -2);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::invalid_argument);
  }
}

TEST_CASE("get_interest matches the hand-evaluated table") {
  for (const auto& row : dwellmap::testing::kInterestTable) {
    const ImageMeta meta{"t", row.image_w, row.image_h};
    const ViewportEvent prev = at(1000, BoundingBox{0, 0, row.box_w, row.box_h});
    const ViewportEvent next = at(1000 + row.dt, BoundingBox{0, 0, 1, 1});
    CAPTURE(row.image_w);
    CAPTURE(row.box_w);
    CAPTURE(row.dt);
    CHECK(get_interest(prev, next, meta) == row.expected);
  }
}

TEST_CASE("get_interest worked examples") {
  CHECK(get_interest(at(0, full_image(kBig)), at(500, full_image(kBig)), kBig) == 0.0);
  CHECK(get_interest(at(0, {0, 0, 100, 80}), at(500, full_image(kBig)), kBig) == 405000.0);
  CHECK(get_interest(at(300, {5, 5, 17, 90}), at(300, {0, 0, 1, 1}), kBig) == 0.0);
}

TEST_CASE("first event only records the viewport") {
  InterestAccumulator acc(kBig);
  acc.add_event(at(0, {0, 0, 100, 80}, EventKind::zoom));
  CHECK(acc.max_interest() == 0.0);
  REQUIRE(acc.prev_event().has_value());
  CHECK(acc.prev_event()->t == 0);
}

TEST_CASE("worked dwell example credits the previous box") {
  InterestAccumulator acc(kBig);
  acc.add_event(at(0, {0, 0, 100, 80}, EventKind::zoom));
  acc.add_event(at(500, full_image(kBig), EventKind::zoom));
  const auto grid = acc.grid();
  CHECK(acc.max_interest() == 405000.0);
  std::size_t credited = 0;
  for (std::int64_t r = 0; r < 800; ++r) {
    for (std::int64_t c = 0; c < 1000; ++c) {
      const double v = grid[acc.shape().index(r, c)];
      if (r < 80 && c < 100) {
        CHECK_MESSAGE(v == 405000.0, "cell ", r, ",", c);
        ++credited;
      } else if (v != 0.0) {
        FAIL("cell outside the box credited: ", r, ",", c);
      }
    }
  }
  CHECK(credited == 8000);
}

TEST_CASE("stationary dwell credits the box once") {
  const ImageMeta meta{"s", 10, 10};
  InterestAccumulator acc(meta);
  acc.add_event(at(0, {2, 2, 4, 4}));
  acc.add_event(at(10, {2, 2, 4, 4}));
  // ((10-2)+(10-2))/2 * 10
  CHECK(acc.max_interest() == 80.0);
  CHECK(acc.prev_event()->t == 10);
  CHECK(acc.grid()[acc.shape().index(3, 3)] == 80.0);
  CHECK(acc.grid()[acc.shape().index(4, 4)] == 0.0);
}

TEST_CASE("session_end credits the final viewport and clears prev") {
  const ImageMeta meta{"s", 10, 10};
  InterestAccumulator acc(meta);
  acc.add_event(at(0, {0, 0, 5, 5}));
  acc.add_event(end_at(100));
  CHECK_FALSE(acc.prev_event().has_value());
  CHECK(acc.max_interest() == 500.0);
  // A new session starts uncredited.
  acc.add_event(at(200, {5, 5, 10, 10}));
  CHECK(acc.max_interest() == 500.0);
  CHECK(acc.grid()[acc.shape().index(7, 7)] == 0.0);
}

TEST_CASE("out-of-order events are rejected without side effects") {
  const ImageMeta meta{"s", 10, 10};
  InterestAccumulator acc(meta);
  acc.add_event(at(100, {0, 0, 5, 5}));
  const auto before = acc.grid();
  try {
    acc.add_event(at(50, {0, 0, 2, 2}));
    FAIL("expected order violation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::order_violation);
  }
  CHECK(acc.grid() == before);
  CHECK(acc.prev_event()->t == 100);

  // Ordering survives a session_end.
  acc.add_event(end_at(120));
  CHECK_THROWS_AS(acc.add_event(at(110, {0, 0, 2, 2})), Error);
}

TEST_CASE("mark events and boxes outside the image are rejected") {
  InterestAccumulator acc(ImageMeta{"s", 10, 10});
  CHECK_THROWS_AS(acc.add_event(at(0, {0, 0, 2, 2}, EventKind::mark)), Error);
  CHECK_THROWS_AS(acc.add_event(at(0, {0, 0, 11, 2})), Error);
  CHECK_THROWS_AS(acc.add_event(at(0, {3, 3, 3, 5})), Error);
  CHECK_THROWS_AS(acc.add_event(ViewportEvent{EventKind::pan, 0, std::nullopt}), Error);
  CHECK(acc.events_seen() == 0);
}

TEST_CASE("get_heatmap normalizes by the maximum") {
  SUBCASE("all zero") {
    InterestAccumulator acc(ImageMeta{"z", 5, 4});
    const HeatMap hm = get_heatmap(acc);
    for (double v : hm.values) CHECK(v == 0.0);
    CHECK(hm.threshold == 0.0);
  }
  SUBCASE("single saturated region") {
    InterestAccumulator acc(kBig, 10);
    acc.add_event(at(0, {0, 0, 100, 80}));
    acc.add_event(at(500, full_image(kBig)));
    const HeatMap hm = get_heatmap(acc);
    CHECK(hm.max_interest == 405000.0);
    CHECK(hm.at(0, 0) == 1.0);
    CHECK(hm.at(7, 9) == 1.0);
    CHECK(hm.at(8, 0) == 0.0);
    CHECK(hm.at(0, 10) == 0.0);
  }
  SUBCASE("thirds 0, 2, 4") {
    const ImageMeta meta{"t", 6, 2};
    const HeatMap hm = heatmap_from_grid(meta, 1, {0, 0, 2, 2, 4, 4, 0, 0, 2, 2, 4, 4});
    CHECK(hm.at(0, 0) == 0.0);
    CHECK(hm.at(1, 2) == 0.5);
    CHECK(hm.at(0, 5) == 1.0);
    CHECK(hm.threshold == 0.5);
  }
}

TEST_CASE("threshold_mask is strictly above the cutoff") {
  SUBCASE("all zero heatmap") {
    const HeatMap hm = heatmap_from_grid(ImageMeta{"z", 3, 3}, 1, std::vector<double>(9, 0.0));
    CHECK(threshold_mask(hm).population() == 0);
  }
  SUBCASE("thirds") {
    const HeatMap hm = heatmap_from_grid(ImageMeta{"t", 6, 2}, 1, {0, 0, 2, 2, 4, 4, 0, 0, 2, 2, 4, 4});
    const RegionMask mask = threshold_mask(hm);
    CHECK(mask.population() == 4);
    for (std::int64_t r = 0; r < 2; ++r) {
      for (std::int64_t c = 0; c < 6; ++c) CHECK(mask.test(r, c) == (c >= 4));
    }
  }
  SUBCASE("uniform heatmap is degenerate") {
    const HeatMap hm = heatmap_from_grid(ImageMeta{"u", 4, 4}, 1, std::vector<double>(16, 7.0));
    CHECK(hm.threshold == 1.0);
    CHECK(threshold_mask(hm).population() == 0);
  }
  SUBCASE("explicit cutoff") {
    const HeatMap hm = heatmap_from_grid(ImageMeta{"t", 6, 2}, 1, {0, 0, 2, 2, 4, 4, 0, 0, 2, 2, 4, 4});
    CHECK(threshold_mask(hm, 0.0).population() == 8);
    CHECK(threshold_mask(hm, 0.49).population() == 8);
    CHECK(threshold_mask(hm, 1.0).population() == 0);
  }
}

TEST_CASE("aggregate_users averages then min-max renormalizes") {
  const ImageMeta meta{"a", 4, 1};
  const HeatMap a = heatmap_from_grid(meta, 1, {1, 1, 0, 0});
  const HeatMap b = heatmap_from_grid(meta, 1, {0, 1, 1, 0});

  SUBCASE("single map is returned unchanged") {
    const HeatMap one = heatmap_from_grid(meta, 1, {0, 3, 6, 0});
    const HeatMap out = aggregate_users(std::span(&one, 1));
    CHECK(out.values == one.values);
    CHECK(out.threshold == one.threshold);
  }
  SUBCASE("overlapping regions") {
    const std::vector<HeatMap> maps{a, b};
    const HeatMap out = aggregate_users(maps);
    CHECK(out.values == std::vector<double>{0.5, 1.0, 0.5, 0.0});
    CHECK(out.user_count == 2);
    CHECK(out.threshold == 0.5);
  }
  SUBCASE("identical maps") {
    const std::vector<HeatMap> maps{a, a};
    CHECK(aggregate_users(maps).values == a.values);
  }
  SUBCASE("all-equal input gives zeros") {
    const HeatMap flat = heatmap_from_grid(meta, 1, {2, 2, 2, 2});
    const std::vector<HeatMap> maps{flat, flat};
    CHECK(aggregate_users(maps).values == std::vector<double>(4, 0.0));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(aggregate_users(std::span<const HeatMap>{}), Error);
    const HeatMap other = heatmap_from_grid(ImageMeta{"a", 2, 2}, 1, {1, 0, 0, 0});
    const std::vector<HeatMap> maps{a, other};
    CHECK_THROWS_AS(aggregate_users(maps), Error);
  }
}

TEST_CASE("render_rgba maps values to a half-opacity red ramp") {
  CHECK(alpha_for(1.0) == 127);
  CHECK(alpha_for(0.0) == 0);
  CHECK(alpha_for(0.5) == 64);
  CHECK(alpha_for(1.0 / 127.0) == 1);

  const HeatMap hm = heatmap_from_grid(ImageMeta{"r", 3, 1}, 1, {0, 1, 2});
  const RgbaImage img = render_rgba(hm);
  REQUIRE(img.width() == 3);
  const std::uint8_t* p0 = img.pixel(0, 0);
  CHECK(p0[3] == 0);
  const std::uint8_t* p1 = img.pixel(1, 0);
  CHECK((p1[0] == 255 && p1[1] == 0 && p1[2] == 0 && p1[3] == 64));
  const std::uint8_t* p2 = img.pixel(2, 0);
  CHECK((p2[0] == 255 && p2[1] == 0 && p2[2] == 0 && p2[3] == 127));
}

TEST_CASE("render_rgba upsamples downsampled grids to full resolution") {
  const ImageMeta meta{"u", 5, 3};
  InterestAccumulator acc(meta, 2);
  acc.add_event(at(0, {0, 0, 2, 2}));
  acc.add_event(end_at(10));
  const RgbaImage img = render_rgba(get_heatmap(acc));
  CHECK(img.width() == 5);
  CHECK(img.height() == 3);
  for (std::int64_t y = 0; y < 3; ++y) {
    for (std::int64_t x = 0; x < 5; ++x) {
      CHECK(img.pixel(x, y)[3] == ((x < 2 && y < 2) ? 127 : 0));
    }
  }
}
