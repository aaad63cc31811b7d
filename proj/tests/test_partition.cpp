#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "mfbo/partition.hpp"
#include "mfbo/rng.hpp"

using mfbo::BoxDomain;
using mfbo::Cell;
using mfbo::Interval;

namespace {

std::vector<Cell> cells_at_depth(const BoxDomain& domain, int depth) {
  std::vector<Cell> level{Cell::root(domain)};
  for (int h = 0; h < depth; ++h) {
    std::vector<Cell> next;
    for (const Cell& c : level) {
      auto [lo, hi] = c.split();
      next.push_back(lo);
      next.push_back(hi);
    }
    level = std::move(next);
  }
  return level;
}

double volume(const Cell& c) {
  double v = 1.0;
  for (const Interval& b : c.bounds()) v *= b.width();
  return v;
}

}  // namespace

TEST_CASE("root cell covers the whole domain") {
  const Cell unit2 = Cell::root(BoxDomain::unit_cube(2));
  CHECK(unit2.depth() == 0);
  CHECK(unit2.index() == 1);
  CHECK(unit2.bounds()[0].lo == 0.0);
  CHECK(unit2.bounds()[0].hi == 1.0);
  CHECK(unit2.bounds()[1].lo == 0.0);
  CHECK(unit2.bounds()[1].hi == 1.0);

  const Cell rect = Cell::root(BoxDomain({Interval{-5.0, 10.0}, Interval{0.0, 15.0}}));
  CHECK(rect.bounds()[0].lo == -5.0);
  CHECK(rect.bounds()[0].hi == 10.0);
  CHECK(rect.bounds()[1].hi == 15.0);

  const Cell cube6 = Cell::root(BoxDomain::unit_cube(6));
  CHECK(cube6.bounds().size() == 6);
  for (const Interval& b : cube6.bounds()) {
    CHECK(b.lo == 0.0);
    CHECK(b.hi == 1.0);
  }
}

TEST_CASE("split halves the widest coordinate, left child low") {
  const Cell root = Cell::root(BoxDomain::unit_cube(2));
  auto [left, right] = root.split();
  CHECK(left.depth() == 1);
  CHECK(left.index() == 1);
  CHECK(right.index() == 2);
  CHECK(left.bounds()[0].lo == 0.0);
  CHECK(left.bounds()[0].hi == 0.5);
  CHECK(left.bounds()[1].hi == 1.0);
  CHECK(right.bounds()[0].lo == 0.5);
  CHECK(right.bounds()[0].hi == 1.0);

  // second coordinate is now the widest
  auto [ll, lr] = left.split();
  CHECK(ll.bounds()[0].hi == 0.5);
  CHECK(ll.bounds()[1].lo == 0.0);
  CHECK(ll.bounds()[1].hi == 0.5);
  CHECK(lr.bounds()[1].lo == 0.5);
  CHECK(lr.bounds()[1].hi == 1.0);

  // equal widths break toward the lowest coordinate index
  auto [c0, c1] = Cell::root(BoxDomain::unit_cube(3)).split();
  CHECK(c0.bounds()[0].hi == 0.5);
  CHECK(c0.bounds()[1].hi == 1.0);
  CHECK(c0.bounds()[2].hi == 1.0);
  CHECK(c1.bounds()[0].lo == 0.5);
}

TEST_CASE("representative point is the midpoint") {
  const Cell root2 = Cell::root(BoxDomain::unit_cube(2));
  const Cell left = root2.split().first;
  CHECK(left.representative() == std::vector<double>{0.25, 0.5});

  CHECK(Cell::root(BoxDomain::unit_cube(1)).representative() == std::vector<double>{0.5});

  const Cell rect = Cell::root(BoxDomain({Interval{-5.0, 10.0}, Interval{0.0, 15.0}}));
  CHECK(rect.representative() == std::vector<double>{2.5, 7.5});
}

TEST_CASE("child and parent index arithmetic") {
  const BoxDomain domain = BoxDomain::unit_cube(2);
  std::function<void(const Cell&)> walk = [&](const Cell& cell) {
    if (cell.depth() >= 8) return;
    auto [left, right] = cell.split();
    const std::uint64_t i = cell.index();
    CHECK(left.index() == 2 * i - 1);
    CHECK(right.index() == 2 * i);
    // parent recovery
    CHECK((left.index() + 1) / 2 == i);
    CHECK((right.index() + 1) / 2 == i);
    CHECK(cell.is_ancestor_or_self_of(left));
    CHECK(cell.is_ancestor_or_self_of(right));
    CHECK_FALSE(left.is_ancestor_or_self_of(cell));
    if (cell.index() % 3 == 0 || cell.depth() < 3) {  // keep the walk sparse
      walk(left);
      walk(right);
    }
  };
  walk(Cell::root(domain));
}

TEST_CASE("depth-h level partitions the domain exactly") {
  for (int dim : {1, 2, 3}) {
    const BoxDomain domain = BoxDomain::unit_cube(dim);
    for (int h : {1, 3, 6, 10}) {
      const auto level = cells_at_depth(domain, h);
      REQUIRE(level.size() == (std::size_t{1} << h));

      double total = 0.0;
      for (const Cell& c : level) total += volume(c);
      CHECK_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-12));

      // every sampled point falls in exactly one cell per depth
      mfbo::Rng rng(900 + static_cast<std::uint64_t>(dim * 16 + h));
      for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(static_cast<std::size_t>(dim));
        for (double& v : x) v = rng.uniform();
        int owners = 0;
        for (const Cell& c : level) owners += c.contains(x) ? 1 : 0;
        CHECK(owners == 1);
      }
    }
  }
}

TEST_CASE("max cell width shrinks as 2^(-floor(h/d))") {
  for (int dim : {1, 2, 3}) {
    const BoxDomain domain = BoxDomain::unit_cube(dim);
    for (int h = 0; h <= 10; ++h) {
      const auto level = cells_at_depth(domain, h);
      double max_width = 0.0;
      for (const Cell& c : level) {
        for (const Interval& b : c.bounds()) max_width = std::max(max_width, b.width());
      }
      CHECK_THAT(max_width, Catch::Matchers::WithinAbs(std::pow(2.0, -(h / dim)), 1e-12));
    }
  }
}

TEST_CASE("decimal index matches the 62-bit index and survives deep splits") {
  const BoxDomain line = BoxDomain::unit_cube(1);
  Cell cell = Cell::root(line);
  mfbo::Rng rng(7);
  for (int h = 0; h < 40; ++h) {
    CHECK(cell.index_decimal() == std::to_string(cell.index()));
    cell = rng.coin() ? cell.split().second : cell.split().first;
  }

  // all-right path to depth 70: index 2^70
  Cell right = Cell::root(line);
  for (int h = 0; h < 70; ++h) right = right.split().second;
  CHECK(right.index_decimal() == "1180591620717411303424");
  CHECK_THROWS_AS(right.index(), std::logic_error);

  // all-left path keeps index 1
  Cell left = Cell::root(line);
  for (int h = 0; h < 70; ++h) left = left.split().first;
  CHECK(left.index_decimal() == "1");
}

TEST_CASE("domain validation") {
  CHECK_THROWS_AS(BoxDomain({Interval{1.0, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(BoxDomain({Interval{2.0, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(BoxDomain(std::vector<Interval>{}), std::invalid_argument);
}
