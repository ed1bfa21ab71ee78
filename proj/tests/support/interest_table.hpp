#pragma once

#include <array>
#include <cstdint>

namespace dwellmap::testing {

struct InterestCase {
  std::int64_t image_w;
  std::int64_t image_h;
  std::int64_t box_w;
  std::int64_t box_h;
  std::int64_t dt;
  double expected;
};

// Frozen from tests/oracles/compute_fixtures.py (exact rational arithmetic).
inline constexpr std::array<InterestCase, 20> kInterestTable{{
    {1000, 800, 1000, 800, 500, 0.0},
    {1000, 800, 100, 80, 500, 405000.0},
    {1000, 800, 100, 80, 0, 0.0},
    {1000, 800, 1, 1, 1, 899.0},
    {1000, 800, 500, 800, 1000, 250000.0},
    {1000, 800, 1000, 400, 1000, 200000.0},
    {1000, 800, 999, 799, 7, 7.0},
    {64, 64, 32, 32, 250, 8000.0},
    {64, 64, 1, 64, 3, 94.5},
    {64, 64, 64, 1, 3, 94.5},
    {3, 5, 1, 2, 9, 22.5},
    {4, 3, 2, 2, 1, 1.5},
    {4096, 4096, 1, 1, 10000, 40950000.0},
    {4096, 4096, 4096, 4096, 123456, 0.0},
    {1, 1, 1, 1, 1000, 0.0},
    {200, 160, 40, 30, 1000, 145000.0},
    {200, 160, 50, 40, 500, 67500.0},
    {200, 160, 40, 40, 8000, 1120000.0},
    {7, 9, 2, 3, 13, 71.5},
    {1920, 1080, 640, 360, 2500, 2500000.0},
}};

}  // namespace dwellmap::testing
