#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "scnp/grid.hpp"
#include "scnp/rng.hpp"

using namespace scnp;

namespace {

// O(N * cells) reference: scan every point for every cell.
ElevationGrid brute_force_bin(const std::vector<std::array<double, 3>>& pts,
                              const GridSpec& spec) {
  ElevationGrid g = ElevationGrid::empty(spec);
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      bool any = false;
      double mn = 0.0;
      for (const auto& p : pts) {
        const auto cell = cell_of(p[0], p[1], spec);
        if (!cell || cell->row != r || cell->col != c) continue;
        if (!any || p[2] < mn) mn = p[2];
        any = true;
      }
      if (any) {
        g.values[static_cast<std::size_t>(spec.flat(r, c))] = mn;
        g.valid[static_cast<std::size_t>(spec.flat(r, c))] = 1;
      }
    }
  }
  return g;
}

}  // namespace

TEST_CASE("cell_of matches the binning formula at the paper defaults") {
  GridSpec spec;  // 256x256, R=0.4, origin -51.2
  auto c = cell_of(0.05, 0.05, spec);
  REQUIRE(c.has_value());
  CHECK(c->row == 128);
  CHECK(c->col == 128);
  auto corner = cell_of(-51.2, -51.2, spec);
  REQUIRE(corner.has_value());
  CHECK(corner->row == 0);
  CHECK(corner->col == 0);
  CHECK_FALSE(cell_of(51.2, 0.0, spec).has_value());  // upper edge exclusive
}

TEST_CASE("cell_of of a cell center recovers the cell") {
  GridSpec spec;
  spec.height = 32;
  spec.width = 48;
  spec.resolution = 0.4;
  spec.origin_x = -9.6;
  spec.origin_y = -6.4;
  for (int r = 0; r < spec.height; r += 5) {
    for (int c = 0; c < spec.width; c += 7) {
      const auto [x, y] = spec.cell_center(r, c);
      const auto cell = cell_of(x, y, spec);
      REQUIRE(cell.has_value());
      CHECK(cell->row == r);
      CHECK(cell->col == c);
    }
  }
}

TEST_CASE("bin_min_height keeps the minimum of co-located points") {
  GridSpec spec;
  std::vector<std::array<double, 3>> pts{{0.0, 0.0, 1.0}, {0.1, 0.1, 0.5}};
  ElevationGrid g = bin_min_height(pts, spec);
  CHECK(g.valid_count() == 1);
  CHECK(g.value_at(128, 128) == doctest::Approx(0.5));
}

TEST_CASE("empty point set leaves every cell invalid") {
  GridSpec spec;
  ElevationGrid g = bin_min_height(std::vector<std::array<double, 3>>{}, spec);
  CHECK(g.valid_count() == 0);
}

TEST_CASE("binning equals the brute-force oracle on random points") {
  GridSpec spec;
  spec.height = 24;
  spec.width = 24;
  spec.resolution = 0.5;
  spec.origin_x = -6.0;
  spec.origin_y = -6.0;
  Rng rng(42);
  std::vector<std::array<double, 3>> pts;
  for (int i = 0; i < 10000; ++i) {
    pts.push_back({rng.uniform(-7.0, 7.0), rng.uniform(-7.0, 7.0),
                   rng.uniform(-3.0, 3.0)});
  }
  ElevationGrid fast = bin_min_height(pts, spec);
  ElevationGrid slow = brute_force_bin(pts, spec);
  CHECK(fast.valid == slow.valid);
  for (std::size_t i = 0; i < fast.values.size(); ++i) {
    if (fast.valid[i]) CHECK(fast.values[i] == slow.values[i]);
  }
}

TEST_CASE("binning is permutation invariant, exactly") {
  GridSpec spec;
  spec.height = 16;
  spec.width = 16;
  spec.resolution = 1.0;
  spec.origin_x = -8.0;
  spec.origin_y = -8.0;
  Rng rng(11);
  std::vector<std::array<double, 3>> pts;
  for (int i = 0; i < 500; ++i) {
    pts.push_back({rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0),
                   rng.normal()});
  }
  ElevationGrid a = bin_min_height(pts, spec);
  std::reverse(pts.begin(), pts.end());
  ElevationGrid b = bin_min_height(pts, spec);
  CHECK(a.values.size() == b.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    CHECK(a.valid[i] == b.valid[i]);
    if (a.valid[i]) CHECK(a.values[i] == b.values[i]);
  }
}

TEST_CASE("every cell value bounds its points from below") {
  GridSpec spec;
  spec.height = 8;
  spec.width = 8;
  spec.resolution = 1.0;
  spec.origin_x = 0.0;
  spec.origin_y = 0.0;
  Rng rng(3);
  std::vector<std::array<double, 3>> pts;
  for (int i = 0; i < 200; ++i) {
    pts.push_back({rng.uniform(0.0, 8.0), rng.uniform(0.0, 8.0), rng.normal()});
  }
  ElevationGrid g = bin_min_height(pts, spec);
  for (const auto& p : pts) {
    const auto cell = cell_of(p[0], p[1], spec);
    REQUIRE(cell.has_value());
    CHECK(g.value_at(cell->row, cell->col) <= p[2]);
  }
}

TEST_CASE("observed_mask mirrors validity") {
  GridSpec spec;
  ElevationGrid empty = ElevationGrid::empty(spec);
  auto m = observed_mask(empty);
  CHECK(std::count(m.begin(), m.end(), 1) == 0);
  ElevationGrid one = bin_min_height(
      std::vector<std::array<double, 3>>{{0.0, 0.0, 1.0}}, spec);
  auto m1 = observed_mask(one);
  CHECK(std::count(m1.begin(), m1.end(), 1) == 1);
}

TEST_CASE("observed_mask cardinality equals the distinct occupied cells") {
  GridSpec spec;
  spec.height = 20;
  spec.width = 20;
  spec.resolution = 0.4;
  spec.origin_x = -4.0;
  spec.origin_y = -4.0;
  Rng rng(77);
  std::vector<std::array<double, 3>> pts;
  for (int i = 0; i < 3000; ++i) {
    pts.push_back({rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0), 0.0});
  }
  std::vector<std::int64_t> occupied;
  for (const auto& p : pts) {
    const auto cell = cell_of(p[0], p[1], spec);
    if (cell) occupied.push_back(spec.flat(cell->row, cell->col));
  }
  std::sort(occupied.begin(), occupied.end());
  occupied.erase(std::unique(occupied.begin(), occupied.end()),
                 occupied.end());
  auto m = observed_mask(bin_min_height(pts, spec));
  CHECK(std::count(m.begin(), m.end(), 1) ==
        static_cast<std::ptrdiff_t>(occupied.size()));
}

TEST_CASE("window of one reduces aggregation to plain binning") {
  GridSpec spec;
  spec.height = 16;
  spec.width = 16;
  spec.resolution = 0.5;
  spec.origin_x = -4.0;
  spec.origin_y = -4.0;
  Rng rng(5);
  std::vector<PointSet> frames(3);
  for (auto& f : frames) {
    for (int i = 0; i < 100; ++i) {
      f.points.push_back({rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0),
                          rng.normal()});
    }
  }
  frames[1].pose = EgoPose{};  // identity: ego frame == world frame
  ElevationGrid agg = aggregate_ground_truth(frames, 1, 1, spec);
  ElevationGrid direct = bin_min_height(frames[1], spec);
  CHECK(agg.valid == direct.valid);
  for (std::size_t i = 0; i < agg.values.size(); ++i) {
    if (agg.valid[i]) CHECK(agg.values[i] == direct.values[i]);
  }
}

TEST_CASE("disjoint frames union their coverage") {
  GridSpec spec;
  spec.height = 10;
  spec.width = 10;
  spec.resolution = 1.0;
  spec.origin_x = 0.0;
  spec.origin_y = 0.0;
  std::vector<PointSet> frames(2);
  frames[0].points = {{1.5, 1.5, 0.3}};
  frames[1].points = {{7.5, 7.5, -0.2}};
  ElevationGrid agg = aggregate_ground_truth(frames, 0, 10, spec);
  CHECK(agg.valid_count() == 2);
  CHECK(agg.value_at(1, 1) == doctest::Approx(0.3));
  CHECK(agg.value_at(7, 7) == doctest::Approx(-0.2));
}

TEST_CASE("aggregation compensates the reference pose") {
  GridSpec spec;
  spec.height = 10;
  spec.width = 10;
  spec.resolution = 1.0;
  spec.origin_x = -5.0;
  spec.origin_y = -5.0;
  std::vector<PointSet> frames(1);
  frames[0].points = {{3.0, 2.0, 4.0}};
  frames[0].pose = EgoPose{2.0, 1.0, 3.0, M_PI / 2.0};
  ElevationGrid agg = aggregate_ground_truth(frames, 0, 1, spec);
  // world (3,2,4) in ego frame: rotate (1,1) by -90deg -> (1,-1); z - 3 = 1
  const auto cell = cell_of(1.0, -1.0, spec);
  REQUIRE(cell.has_value());
  CHECK(agg.is_valid(cell->row, cell->col));
  CHECK(agg.value_at(cell->row, cell->col) == doctest::Approx(1.0));
}

TEST_CASE("aggregate_ground_truth rejects out-of-range frames") {
  std::vector<PointSet> frames(2);
  GridSpec spec;
  CHECK_THROWS_AS(aggregate_ground_truth(frames, 5, 2, spec), UsageError);
}

TEST_CASE("grid CSV round trip") {
  GridSpec spec;
  spec.height = 3;
  spec.width = 4;
  spec.resolution = 1.0;
  spec.origin_x = 0.0;
  spec.origin_y = 0.0;
  ElevationGrid g = ElevationGrid::empty(spec);
  g.values[5] = 1.25;
  g.valid[5] = 1;
  g.values[7] = -0.5;
  g.valid[7] = 1;
  std::stringstream ss;
  write_grid_csv(g, ss);
  ElevationGrid back = read_grid_csv(ss);
  CHECK(back.spec.height == 3);
  CHECK(back.spec.width == 4);
  CHECK(back.valid == g.valid);
  CHECK(back.values[5] == doctest::Approx(1.25));
  CHECK(back.values[7] == doctest::Approx(-0.5));
}
