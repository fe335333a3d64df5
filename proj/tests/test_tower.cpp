#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "doctest.h"
#include "semiflow/tower.hpp"

using namespace semiflow;

namespace {

std::shared_ptr<const InducedMap> pm_small() {
  static auto ind = std::make_shared<const InducedMap>(induce_pm(0.5, 400, 2000));
  return ind;
}

// Cell index of a base point by direct comparison with the stored boundaries.
int cell_by_scan(const InducedMap& ind, double y) {
  for (std::size_t j = 0; j < ind.size(); ++j)
    if (y >= ind.cells()[j].left && y <= ind.cells()[j].right) return static_cast<int>(j);
  return -1;
}

// First return by iterating T until the orbit is back in Y.
double first_return_direct(const MapModel& T, double y) {
  double x = T(y);
  while (x < 0.5) x = T(x);
  return x;
}

}  // namespace

TEST_CASE("build_tower: doubling map gives a single-level tower") {
  auto t = build_tower(std::make_shared<const InducedMap>(induce_doubling()));
  CHECK(t->theta() == doctest::Approx(0.5));
  REQUIRE(t->size() == 2);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(t->columns()[j].r == 1);
    CHECK(t->cell_measure(j) == doctest::Approx(t->columns()[j].mu));
  }
  CHECK(t->excluded_mass() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(t->invariance_defect() < 1e-14);
  CHECK_THROWS_AS(build_tower(pm_small(), 1.0), ParameterError);
  CHECK_THROWS_AS(build_tower(pm_small(), 0.0), ParameterError);
}

TEST_CASE("build_tower: PM total mass by direct summation") {
  auto ind = pm_small();
  auto t = build_tower(ind, 0.5);
  CHECK(t->size() == 2000);
  double direct = 0.0;
  for (const auto& c : ind->cells()) direct += c.r * c.mu;
  for (const auto& c : ind->tail_columns()) direct += c.r * c.mu;
  direct /= ind->rbar();
  double cells = 0.0;
  for (std::size_t j = 0; j < t->size(); ++j) cells += t->columns()[j].r * t->cell_measure(j);
  CHECK(cells == doctest::Approx(direct).epsilon(1e-13));
  CHECK(cells + t->excluded_mass() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t->excluded_mass() < 0.05);
  CHECK(t->invariance_defect() < 1e-12);
  CHECK(t->projection_defect(2000) < 1e-9);
}

TEST_CASE("tower map climbs columns and drops to the base") {
  auto t = build_tower(pm_small(), 0.5);
  const auto& c = t->columns()[2];  // r = 3
  TowerPoint x{2, 0, 0.5 * (c.left + c.right)};
  auto x1 = t->f(x);
  CHECK(x1.column == 2);
  CHECK(x1.level == 1);
  auto x3 = t->f(t->f(x1));
  CHECK(x3.level == 0);
  CHECK(x3.y == doctest::Approx(first_return_direct(t->induced().map(), x.y)).epsilon(1e-12));
  CHECK(t->project(x1) == doctest::Approx(t->induced().map()(x.y)));
  CHECK_THROWS_AS(t->lift(0.5 + 1e-12, 0), DomainError);
}

TEST_CASE("truncate: mass identities for r' on stored mass") {
  auto ind = pm_small();
  auto t = build_tower(ind, 0.5);
  for (int N : {1, 2, 5, 20, 50, 200, 1000, 1999, 2000, 5000}) {
    auto tt = truncate(t, N);
    CHECK(tt.identity_i_defect() < 1e-12);
    CHECK(tt.identity_ii_defect() < 1e-12);
  }
  // Independent sum for N = 50: sum_{n>50} mu(r >= n) from the tail function.
  auto tt = truncate(t, 50);
  double oracle = 0.0;
  for (long n = 51; n <= 2000; ++n) oracle += ind->tail_at_least(n).explicit_part;
  double diff = 0.0;
  for (const auto& c : t->columns()) diff += (c.r - std::min(c.r, 50)) * c.mu;
  CHECK(std::abs(diff - oracle) < 1e-12);
  CHECK(std::abs(tt.tail_sum_represented() - oracle) < 1e-12);
}

TEST_CASE("truncate: degenerate levels and idempotence") {
  auto t = build_tower(pm_small(), 0.5);
  auto top = truncate(t, 5000);
  CHECK(top.rbar_trunc_represented() == doctest::Approx(t->rbar_represented()).epsilon(1e-15));
  auto base = truncate(t, 1);
  for (std::size_t j = 0; j < t->size(); j += 97) CHECK(base.r_trunc(j) == 1);
  CHECK(base.left_mass() == 0.0);
  double sum_mu = 0.0;
  for (const auto& c : t->columns()) sum_mu += c.mu;
  CHECK(base.rbar_trunc_represented() == doctest::Approx(sum_mu).epsilon(1e-14));
  auto t20 = truncate(t, 20);
  CHECK(t20.truncate(40).same_as(t20));
  CHECK(t20.truncate(20).same_as(t20));
  CHECK(t20.truncate(10).same_as(truncate(t, 10)));
  CHECK_FALSE(t20.same_as(truncate(t, 21)));
  for (std::size_t j = 0; j < t->size(); ++j) {
    CHECK(t20.r_trunc(j) <= 20);
    if (t20.is_left(j)) CHECK(t20.r_trunc(j) == t->columns()[j].r);
  }
  CHECK_THROWS_AS(truncate(t, 0), ParameterError);
}

TEST_CASE("ek_measure: doubling map is zero") {
  auto t = build_tower(std::make_shared<const InducedMap>(induce_doubling()), 0.5);
  for (int N : {2, 5})
    for (int k : {1, 10}) CHECK(ek_measure(*t, N, k).measured == doctest::Approx(0.0));
}

TEST_CASE("ek_measure: PM(0.5) N=20 k=10 against cylinder enumeration") {
  auto ind = std::make_shared<const InducedMap>(induce_pm(0.5, 60, 200));
  auto t = build_tower(ind, 0.5);
  const int N = 20, k = 10;
  auto res = ek_measure(*t, N, k);
  CHECK(res.measured <= res.bound);
  CHECK(res.g[0] == doctest::Approx(truncate(t, N).right_mass()));
  for (int j = 1; j <= k; ++j) CHECK(res.g[j] <= ind->tail_at_least(N).total() / ind->rbar() + 1e-15);

  // Enumerate cylinders [c, i_1, ..., i_m] of left cells ending in {r >= N}; a point at
  // level l of column c first reaches the base at time r_c - l.
  const double rbar = ind->rbar();
  const double right_lo = ind->y_lo(), right_hi = ind->cells()[N - 2].left;
  std::vector<double> g(k + 1, 0.0);
  std::function<void(std::vector<int>&, int)> walk = [&](std::vector<int>& seq, int elapsed) {
    // seq[0] is the starting cell; elapsed counts time since the first base arrival.
    double a = right_lo, b = right_hi;
    for (auto it = seq.rbegin(); it != seq.rend(); ++it) {
      a = ind->inverse(*it, a);
      b = ind->inverse(*it, b);
    }
    const Cell& c0 = ind->cells()[seq[0]];
    double frac = std::abs(b - a) / c0.width();
    for (int l = 0; l < c0.r; ++l) {
      int t_hit = c0.r - l + elapsed;
      if (t_hit <= k) g[t_hit] += c0.mu / rbar * frac;
    }
    for (int i = 0; i + 1 < N; ++i) {
      int step = ind->cells()[i].r;
      if (1 + elapsed + step > k) break;
      seq.push_back(i);
      walk(seq, elapsed + step);
      seq.pop_back();
    }
  };
  for (int c = 0; c + 1 < N; ++c) {
    std::vector<int> seq{c};
    walk(seq, 0);
  }
  double oracle = res.g[0];
  for (int j = 1; j <= k; ++j) oracle += g[j];
  CHECK(res.measured == doctest::Approx(oracle).epsilon(0.02));
  MESSAGE("E_k measured " << res.measured << " oracle " << oracle << " bound " << res.bound);
}

TEST_CASE("ek_measure: monotone in k and below the bound") {
  auto t = build_tower(pm_small(), 0.5);
  for (int N : {10, 20, 40}) {
    double prev = 0.0;
    for (int k = 1; k <= 30; k += 3) {
      auto res = ek_measure(*t, N, k);
      CHECK(res.measured >= prev);
      CHECK(res.measured <= res.bound);
      prev = res.measured;
    }
  }
}

TEST_CASE("separation time and d_theta") {
  auto ind = pm_small();
  auto t = build_tower(ind, 0.5);
  const auto& c0 = t->columns()[0];
  const auto& c2 = t->columns()[2];
  TowerPoint a{0, 0, 0.5 * (c0.left + c0.right)};
  TowerPoint b{2, 0, 0.5 * (c2.left + c2.right)};
  CHECK(t->separation_time(a, b) == 0);
  CHECK(t->d_theta(a, b) == 1.0);
  CHECK(t->separation_time(a, a) == kInfiniteSeparation);
  CHECK(t->d_theta(a, a) == 0.0);

  // Two points of Y_3 whose images lie in Y_1 and Y_2.
  double y1 = ind->inverse(2, 0.9), y2 = ind->inverse(2, 0.7);
  REQUIRE(cell_by_scan(*ind, y1) == 2);
  REQUIRE(cell_by_scan(*ind, y2) == 2);
  const MapModel& T = ind->map();
  CHECK(cell_by_scan(*ind, first_return_direct(T, y1)) !=
        cell_by_scan(*ind, first_return_direct(T, y2)));
  TowerPoint p{2, 1, y1}, q{2, 1, y2};
  CHECK(t->separation_time(p, q) == 1);
  CHECK(t->d_theta(p, q) == doctest::Approx(0.5));
  // Different levels of one column are not related.
  CHECK(t->separation_time(TowerPoint{2, 0, y1}, q) == 0);
}

TEST_CASE("d_theta is ultrametric on triples within a column") {
  auto ind = pm_small();
  auto t = build_tower(ind, 0.5);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t j : {0u, 1u, 4u}) {
    const auto& c = t->columns()[j];
    for (int trial = 0; trial < 200; ++trial) {
      TowerPoint x{j, 0, c.left + u(rng) * c.width()}, y{j, 0, c.left + u(rng) * c.width()},
          z{j, 0, c.left + u(rng) * c.width()};
      double dxz = t->d_theta(x, z), dxy = t->d_theta(x, y), dyz = t->d_theta(y, z);
      CHECK(dxz <= std::max(dxy, dyz) + 1e-15);
    }
  }
}

TEST_CASE("tower CSV rows follow the truncated heights") {
  auto ind = std::make_shared<const InducedMap>(induce_pm(0.5, 10, 10));
  auto t = build_tower(ind, 0.5);
  std::ostringstream full, cut;
  t->write_csv(full);
  truncate(t, 4).write_csv(cut);
  auto lines = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
  CHECK(lines(full.str()) == 1 + 55);
  CHECK(lines(cut.str()) == 1 + (1 + 2 + 3) + 7 * 4);
  CHECK(full.str().rfind("j,l,measure,r,r_trunc,left,right\n", 0) == 0);
}
