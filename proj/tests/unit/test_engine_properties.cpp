#include <doctest.h>

#include <cstring>
#include <random>

#include "dwellmap/engine.hpp"
#include "dwellmap/grid.hpp"
#include "oracle.hpp"

using namespace dwellmap;
using oracle::uniform;

namespace {

InterestAccumulator run(const ImageMeta& meta, const std::vector<ViewportEvent>& events,
                        std::int64_t scale = 1) {
  InterestAccumulator acc(meta, scale);
  for (const auto& e : events) acc.add_event(e);
  return acc;
}

}  // namespace

TEST_CASE("cover_cells agrees with per-pixel cell membership") {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 2000; ++iter) {
    const ImageMeta meta{"c", uniform(rng, 1, 40), uniform(rng, 1, 40)};
    const std::int64_t scale = uniform(rng, 1, 7);
    const BoundingBox box = oracle::random_box(rng, meta.width, meta.height);
    const GridShape shape = GridShape::for_image(meta, scale);
    std::vector<int> hits(shape.cell_count(), 0);
    for (const CellRect& rect : cover_cells(box, meta, scale)) {
      for (auto r = rect.row0; r < rect.row1; ++r) {
        for (auto c = rect.col0; c < rect.col1; ++c) ++hits[shape.index(r, c)];
      }
    }
    for (std::int64_t r = 0; r < shape.rows; ++r) {
      for (std::int64_t c = 0; c < shape.cols; ++c) {
        const int expected = oracle::cell_in_box(r, c, scale, box, meta.width, meta.height) ? 1 : 0;
        if (hits[shape.index(r, c)] != expected) {
          FAIL("cell ", r, ",", c, " scale ", scale, " box [", box.x0, ",", box.x1, ")x[", box.y0,
               ",", box.y1, ") image ", meta.width, "x", meta.height);
        }
      }
    }
  }
}

TEST_CASE("accumulator equals the naive oracle at every scale") {
  std::mt19937_64 rng(2024);
  for (int iter = 0; iter < 300; ++iter) {
    const auto stream = oracle::random_stream(rng);
    const std::int64_t scale = iter % 3 == 0 ? uniform(rng, 2, 5) : 1;
    const auto acc = run(stream.meta, stream.events, scale);
    oracle::NaiveAccumulator naive(stream.meta.width, stream.meta.height, scale);
    for (const auto& e : stream.events) naive.add(e);
    const auto grid = acc.grid();
    REQUIRE(grid.size() == naive.grid().size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      REQUIRE(std::abs(grid[i] - naive.grid()[i]) <= 1e-9);
    }
  }
}

TEST_CASE("full-image viewports carry no information") {
  std::mt19937_64 rng(5);
  for (int iter = 0; iter < 100; ++iter) {
    const ImageMeta meta{"z", uniform(rng, 1, 64), uniform(rng, 1, 64)};
    std::vector<ViewportEvent> events;
    std::int64_t t = 0;
    for (int i = 0; i < 20; ++i) {
      t += uniform(rng, 0, 5000);
      events.push_back(ViewportEvent{EventKind::zoom, t, full_image(meta)});
    }
    events.push_back(ViewportEvent{EventKind::session_end, t + 100, std::nullopt});
    const auto acc = run(meta, events);
    CHECK(acc.max_interest() == 0.0);
  }
}

TEST_CASE("cells outside every credited viewport stay zero") {
  std::mt19937_64 rng(77);
  for (int iter = 0; iter < 200; ++iter) {
    const auto stream = oracle::random_stream(rng);
    const auto acc = run(stream.meta, stream.events);
    // A viewport is credited when a later event follows it before any session_end.
    std::vector<std::uint8_t> visited(acc.shape().cell_count(), 0);
    for (std::size_t i = 0; i + 1 < stream.events.size(); ++i) {
      const auto& e = stream.events[i];
      if (!e.bbox) continue;
      for (auto y = e.bbox->y0; y < e.bbox->y1; ++y) {
        for (auto x = e.bbox->x0; x < e.bbox->x1; ++x) visited[acc.shape().index(y, x)] = 1;
      }
    }
    const auto grid = acc.grid();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!visited[i]) REQUIRE(grid[i] == 0.0);
    }
  }
}

TEST_CASE("adding events never decreases a cell or the maximum") {
  std::mt19937_64 rng(99);
  for (int iter = 0; iter < 60; ++iter) {
    const auto stream = oracle::random_stream(rng, 32, 30);
    InterestAccumulator acc(stream.meta);
    auto previous = acc.grid();
    double previous_max = 0.0;
    for (const auto& e : stream.events) {
      acc.add_event(e);
      const auto grid = acc.grid();
      for (std::size_t i = 0; i < grid.size(); ++i) REQUIRE(grid[i] >= previous[i]);
      const double mx = acc.max_interest();
      REQUIRE(mx >= previous_max);
      REQUIRE(mx == *std::max_element(grid.begin(), grid.end()));
      previous = grid;
      previous_max = mx;
    }
  }
}

TEST_CASE("normalization range, saturation and idempotence") {
  std::mt19937_64 rng(31);
  for (int iter = 0; iter < 200; ++iter) {
    const auto stream = oracle::random_stream(rng);
    const auto acc = run(stream.meta, stream.events);
    const HeatMap hm = get_heatmap(acc);
    bool any_positive = false;
    double mx = 0.0;
    for (double v : hm.values) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
      any_positive = any_positive || v > 0.0;
      mx = std::max(mx, v);
    }
    if (acc.max_interest() > 0.0) {
      CHECK(mx == 1.0);
      const HeatMap again = heatmap_from_grid(hm.meta, 1, hm.values);
      CHECK(again.values == hm.values);
    } else {
      CHECK_FALSE(any_positive);
    }
  }
}

TEST_CASE("raising the threshold never adds cells to the mask") {
  std::mt19937_64 rng(123);
  for (int iter = 0; iter < 100; ++iter) {
    const auto stream = oracle::random_stream(rng);
    const HeatMap hm = get_heatmap(run(stream.meta, stream.events));
    double lo = static_cast<double>(uniform(rng, 0, 1000)) / 1000.0;
    double hi = static_cast<double>(uniform(rng, 0, 1000)) / 1000.0;
    if (lo > hi) std::swap(lo, hi);
    const RegionMask low = threshold_mask(hm, lo);
    const RegionMask high = threshold_mask(hm, hi);
    for (std::size_t i = 0; i < low.bits.size(); ++i) {
      if (high.bits[i]) REQUIRE(low.bits[i]);
    }
  }
}

TEST_CASE("scaled runs agree with box-summed full-resolution runs on aligned boxes") {
  std::mt19937_64 rng(8);
  for (int iter = 0; iter < 100; ++iter) {
    const std::int64_t s = uniform(rng, 2, 6);
    const ImageMeta meta{"s", s * uniform(rng, 1, 12), s * uniform(rng, 1, 12)};
    const std::int64_t cols = meta.width / s;
    const std::int64_t rows = meta.height / s;
    std::vector<ViewportEvent> events;
    std::int64_t t = 0;
    const int n = static_cast<int>(uniform(rng, 1, 25));
    for (int i = 0; i < n; ++i) {
      const std::int64_t c0 = uniform(rng, 0, cols - 1);
      const std::int64_t r0 = uniform(rng, 0, rows - 1);
      const BoundingBox box{c0 * s, r0 * s, uniform(rng, c0 + 1, cols) * s, uniform(rng, r0 + 1, rows) * s};
      events.push_back(ViewportEvent{EventKind::pan, t, box});
      t += uniform(rng, 0, 1000);
    }
    events.push_back(ViewportEvent{EventKind::session_end, t, std::nullopt});

    const auto full = run(meta, events, 1).grid();
    std::vector<double> summed(static_cast<std::size_t>(rows * cols), 0.0);
    for (std::int64_t y = 0; y < meta.height; ++y) {
      for (std::int64_t x = 0; x < meta.width; ++x) {
        summed[static_cast<std::size_t>((y / s) * cols + x / s)] +=
            full[static_cast<std::size_t>(y * meta.width + x)];
      }
    }
    const HeatMap expected = heatmap_from_grid(meta, s, summed);
    const HeatMap scaled = get_heatmap(run(meta, events, s));
    for (std::size_t i = 0; i < expected.values.size(); ++i) {
      REQUIRE(scaled.values[i] == doctest::Approx(expected.values[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("replaying the same stream is bit-identical") {
  std::mt19937_64 rng(4);
  for (int iter = 0; iter < 50; ++iter) {
    const auto stream = oracle::random_stream(rng);
    const HeatMap a = get_heatmap(run(stream.meta, stream.events));
    const HeatMap b = get_heatmap(run(stream.meta, stream.events));
    REQUIRE(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0);
    CHECK(threshold_mask(a).bits == threshold_mask(b).bits);
    CHECK(render_rgba(a) == render_rgba(b));
  }
}
