#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "semiflow/periodic.hpp"

using namespace semiflow;

namespace {

constexpr double kPi = std::numbers::pi;

std::shared_ptr<const InducedMap> doubling_map() {
  static auto m = std::make_shared<const InducedMap>(induce_doubling());
  return m;
}

std::shared_ptr<const InducedMap> pm_map() {
  static auto m = std::make_shared<const InducedMap>(induce_pm(0.5, 60, 2000));
  return m;
}

std::vector<std::string> rotations(const std::vector<int>& w) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    std::string s;
    for (std::size_t j = 0; j < w.size(); ++j) s += char('0' + w[(i + j) % w.size()]);
    out.push_back(s);
  }
  return out;
}

// brute force: words of length n with n distinct rotations, divided by n
long brute_primitive(int k, int n) {
  long count = 0, total = 1;
  for (int i = 0; i < n; ++i) total *= k;
  for (long c = 0; c < total; ++c) {
    std::vector<int> w(n);
    long x = c;
    for (int i = 0; i < n; ++i) {
      w[i] = int(x % k);
      x /= k;
    }
    auto rot = rotations(w);
    if (std::set<std::string>(rot.begin(), rot.end()).size() == std::size_t(n)) ++count;
  }
  return count / n;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(a + (b - a) * i / (n - 1));
  return v;
}

}  // namespace

TEST_CASE("necklace count matches brute force") {
  for (int k = 2; k <= 3; ++k)
    for (int n = 1; n <= 6; ++n) CHECK(primitive_necklaces(k, n) == brute_primitive(k, n));
}

TEST_CASE("doubling: period points 0, 1, 1/3, 2/3") {
  FiniteSubsystem sub(doubling_map(), {0, 1});
  CHECK(sub.full_branch_defect() < 1e-14);
  auto tr = enumerate_periodic(sub, RoofFunction::constant(1.0), 2);
  REQUIRE(tr.size() == 3);
  CHECK(tr[0].point == doctest::Approx(0.0));
  CHECK(tr[1].point == doctest::Approx(1.0));
  CHECK(tr[2].q == 2);
  CHECK(tr[2].d == 2);
  CHECK(tr[2].tau == doctest::Approx(2.0));
  // word (0,1): p in [0,1/2) with 2p in [1/2,1]: p = 1/3
  CHECK(tr[2].point == doctest::Approx(1.0 / 3).epsilon(1e-14));
  // orbit of 1/3 under the cosine roof
  auto tc = enumerate_periodic(sub, RoofFunction::cosine(), 2);
  const double expect = 4.0 + std::cos(2 * kPi / 3) + std::cos(4 * kPi / 3);
  CHECK(tc[2].tau == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("PM subsystem on two cells: necklaces, triples, invariants") {
  auto ind = pm_map();
  FiniteSubsystem sub(ind, {0, 1});
  CHECK(sub.full_branch_defect() < 1e-12);
  const auto h = RoofFunction::cosine();
  auto tr = enumerate_periodic(sub, h, 3);
  long expected = 0;
  for (int n = 1; n <= 3; ++n) expected += primitive_necklaces(2, n);
  CHECK(expected == 5);
  REQUIRE(long(tr.size()) == expected);
  std::set<std::string> classes;
  for (const auto& t : tr) {
    auto rot = rotations(t.word);
    classes.insert(*std::min_element(rot.begin(), rot.end()));
    long d = 0;
    for (int s : t.word) d += sub.r(s);
    CHECK(t.d == d);
    CHECK(t.tau >= t.d * h.inf() - 1e-12);
    CHECK(std::abs(t.tau - recompute_tau(sub, h, t.word)) < 1e-9);
    // the point returns to itself after q steps of F, d steps of T
    double x = t.point;
    for (long i = 0; i < t.d; ++i) x = ind->map()(x);
    CHECK(std::abs(x - t.point) < 1e-8);
  }
  CHECK(classes.size() == tr.size());
  std::ostringstream os;
  write_triples_csv(os, tr);
  CHECK(os.str().rfind("word,q,d,tau\n", 0) == 0);
}

TEST_CASE("periodic point contraction failure raises") {
  FiniteSubsystem sub(doubling_map(), {0, 1});
  CHECK_THROWS_AS(sub.periodic_point({}), ParameterError);
  CHECK_THROWS_AS(FiniteSubsystem(doubling_map(), {0, 0}), ParameterError);
  CHECK_THROWS_AS(FiniteSubsystem(doubling_map(), {5}), ParameterError);
}

TEST_CASE("diophantine: constant roof passes at b = 2 pi") {
  FiniteSubsystem sub(doubling_map(), {0, 1});
  auto tr = enumerate_periodic(sub, RoofFunction::constant(1.0), 3);
  for (double alpha : {1.0, 2.0, 4.0}) {
    auto rep = diophantine_check(tr, {2 * kPi}, {0.0}, 1.0, alpha, 1.0);
    CHECK(rep.rows[0].pass);
    CHECK(rep.rows[0].residual < 1e-6);
  }
}

TEST_CASE("diophantine: random periodic data leaves the passing set empty") {
  const auto b = linspace(10.0, 1000.0, 400);
  for (unsigned seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<PeriodicTriple> tr;
    for (int q = 1; q <= 3; ++q)
      for (int j = 0; j < 2; ++j) {
        PeriodicTriple t;
        t.q = q;
        t.d = q + j;
        t.tau = t.d * (2.0 + 0.3 * (U(rng) - 0.5));
        tr.push_back(t);
      }
    auto rep = diophantine_check(tr, b, {0.0}, 1.0, 2.0, 1.0);
    CHECK(rep.passing_b.empty());
    CHECK(rep.label.rfind("EVIDENCE-AGAINST", 0) == 0);
  }
}

TEST_CASE("diophantine: single triple is degenerate, passing set monotone in C and alpha") {
  FiniteSubsystem sub(pm_map(), {0, 1});
  auto tr = enumerate_periodic(sub, RoofFunction::cosine(), 2);
  auto one = diophantine_check({tr[0]}, {17.0}, {0.0}, 1.0, 2.0, 1.0);
  CHECK(one.degenerate);
  CHECK(one.rows[0].pass);

  const auto b = linspace(1.0, 40.0, 200);
  for (double alpha : {4.0, 2.0, 1.0})
    for (double C : {1.0, 10.0}) {
      auto rep = diophantine_check(tr, b, {0.0, 0.5}, 1.0, alpha, C);
      // pointwise: a pass at (alpha, C) implies a pass at larger C and smaller alpha
      auto wider = diophantine_check(tr, b, {0.0, 0.5}, 1.0, alpha, C * 10.0);
      auto lower = diophantine_check(tr, b, {0.0, 0.5}, 1.0, alpha * 0.5, C);
      CHECK(wider.passing_b.size() >= rep.passing_b.size());
      CHECK(lower.passing_b.size() >= rep.passing_b.size());
      for (std::size_t i = 0; i < rep.rows.size(); ++i)
        if (rep.rows[i].pass) {
          CHECK(wider.rows[i].pass);
          CHECK(lower.rows[i].pass);
        }
    }
  std::ostringstream os;
  diophantine_check(tr, {5.0}, {0.0}, 1.0, 2.0, 1.0).write_csv(os);
  CHECK(os.str().rfind("b,omega,phi_star,residual,pass_flag\n", 0) == 0);
}

TEST_CASE("phase minimizer finds a narrow minimum") {
  auto f = [](double x) { return std::abs(std::sin(7.0 * (x - 1.2345))); };
  auto [x, v] = minimize_phase(f);
  CHECK(v < 1e-8);
  CHECK(std::abs(std::sin(7.0 * (x - 1.2345))) < 1e-8);
}

TEST_CASE("eigenfunction search: doubling, unit roof, b = 2 pi k") {
  FiniteSubsystem sub(doubling_map(), {0, 1});
  std::vector<double> b;
  for (int k = 1; k <= 5; ++k) b.push_back(2 * kPi * k);
  auto rep = approx_eigenfunction_search(sub, RoofFunction::constant(1.0), b, {0.0}, 1.0, 2.0, 1.0, 4);
  for (const auto& r : rep.rows) {
    CHECK(r.residual < 1e-9);
    CHECK(r.pass);
  }
}

TEST_CASE("eigenfunction search: cosine roof stays away from eigenvalues") {
  FiniteSubsystem sub(doubling_map(), {0, 1});
  const auto b = linspace(10.0, 200.0, 191);
  auto rep = approx_eigenfunction_search(sub, RoofFunction::cosine(), b, {0.0}, 1.0, 2.0, 1.0, 4);
  double lo = 1e300;
  for (double s : rep.scaled) lo = std::min(lo, s);
  CHECK(lo > 1.0);
  CHECK(rep.flagged_b.empty());
  // a diophantine pass on the same grid implies a small residual
  auto tr = enumerate_periodic(sub, RoofFunction::cosine(), 4);
  auto dio = diophantine_check(tr, b, {0.0}, 1.0, 2.0, 1.0);
  for (double x : dio.passing_b)
    CHECK(std::find(rep.flagged_b.begin(), rep.flagged_b.end(), x) != rep.flagged_b.end());
}

TEST_CASE("constant roof: both detectors agree at b = 2 pi / c; eigenvalue 1 only on 2 pi Z") {
  FiniteSubsystem sub(doubling_map(), {0, 1});
  const double c = 2.0, b = 2 * kPi / c;
  const auto h = RoofFunction::constant(c);
  auto tr = enumerate_periodic(sub, h, 3);
  for (const auto& t : tr) CHECK(t.tau == doctest::Approx(c * t.d).epsilon(1e-15));
  CHECK(diophantine_check(tr, {b}, {0.0}, 1.0, 2.0, 1.0).rows[0].pass);
  auto e = approx_eigenfunction_search(sub, h, {b}, {0.0}, 1.0, 2.0, 1.0, 3);
  CHECK(e.rows[0].residual < 1e-9);

  const auto one = RoofFunction::constant(1.0);
  auto fixed = approx_eigenfunction_search(sub, one, {2 * kPi, 5.0, 4 * kPi, 9.0}, {0.0}, 1.0, 2.0, 1.0, 3, 0, 0.0);
  CHECK(fixed.rows[0].residual < 1e-9);
  CHECK(fixed.rows[1].residual > 0.1);
  CHECK(fixed.rows[2].residual < 1e-9);
  CHECK(fixed.rows[3].residual > 0.1);
}
