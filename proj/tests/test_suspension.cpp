#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "semiflow/suspension.hpp"

using namespace semiflow;

namespace {

std::shared_ptr<const Tower> doubling_tower() {
  static auto t = build_tower(std::make_shared<const InducedMap>(induce_doubling()), 0.5);
  return t;
}

std::shared_ptr<const Tower> pm_tower() {
  static auto t = build_tower(std::make_shared<const InducedMap>(induce_pm(0.5, 200, 2000)), 0.5);
  return t;
}

double doubling(double x) { return x < 0.5 ? 2.0 * x : 2.0 * x - 1.0; }

}  // namespace

TEST_CASE("roof functions: values, bounds and level sets") {
  auto c = RoofFunction::constant(1.5);
  CHECK(c(0.3) == 1.5);
  CHECK(c.integral(0.0, 1.0) == doctest::Approx(1.5));
  auto cs = RoofFunction::cosine();
  CHECK(cs(0.0) == doctest::Approx(3.0));
  CHECK(cs(0.5) == doctest::Approx(1.0));
  CHECK(cs.inf() == doctest::Approx(1.0));
  CHECK(cs.sup_on(0.1, 0.2) == doctest::Approx(cs(0.1)));
  CHECK(cs.inf_on(0.4, 0.6) == doctest::Approx(1.0));
  CHECK(cs.integral(0.0, 1.0) == doctest::Approx(2.0));
  auto pw = RoofFunction::power(1.0);
  CHECK_FALSE(pw.bounded());
  CHECK(pw(0.25) == doctest::Approx(3.0));
  CHECK(pw.integral(0.0, 1.0) == doctest::Approx(3.0));
  // {1 + x^{-1/2} > n} = [0, (n-1)^{-2})
  CHECK(pw.level_set_measure(11.0) == doctest::Approx(0.01));
  CHECK(pw.level_set_integral(11.0) == doctest::Approx(0.01 + 2.0 * 0.1));
  CHECK_THROWS_AS(RoofFunction::from_name("square"), ParameterError);
}

TEST_CASE("power roof: weighted sampler matches the density") {
  auto pw = RoofFunction::power(1.0);
  std::mt19937_64 rng(3);
  std::vector<double> xs(20000);
  for (double& x : xs) x = pw.sample_weighted(rng);
  // CDF of h / 3: (x + 2 sqrt(x)) / 3.
  double d = ks_statistic(xs, [](double x) { return (x + 2.0 * std::sqrt(x)) / 3.0; });
  CHECK(ks_pvalue(d, static_cast<double>(xs.size())) > 0.01);
}

TEST_CASE("check_roof on PM and doubling towers") {
  auto r = check_roof(*pm_tower(), RoofFunction::cosine(), 2.0 * M_PI);
  CHECK(r.ok);
  CHECK(r.inf_h == doctest::Approx(1.0));
  CHECK(r.min_H_over_r >= 1.0);
  CHECK(r.max_cell_lipschitz <= 2.0 * M_PI + 1e-9);
  CHECK_FALSE(check_roof(*pm_tower(), RoofFunction::cosine(), 1.0).ok);
  CHECK(check_roof(*doubling_tower(), RoofFunction::power(1.0), 0.0).ok);
}

TEST_CASE("induced roof sums h along the column") {
  auto t = pm_tower();
  const InducedMap& ind = t->induced();
  auto h = RoofFunction::cosine();
  double y = 0.5 * (t->columns()[3].left + t->columns()[3].right);
  double direct = 0.0, x = y;
  for (int l = 0; l < 4; ++l) {
    direct += h(x);
    x = ind.map()(x);
  }
  CHECK(induced_roof(ind, h, y) == doctest::Approx(direct).epsilon(1e-12));
  CHECK(induced_roof(ind, h, y, 2) == doctest::Approx(h(y) + h(ind.map()(y))).epsilon(1e-12));
}

TEST_CASE("Delta(n) for the power roof decays like n^-2") {
  auto pw = RoofFunction::power(1.0);
  CHECK(delta_n_measure(pw, 11.0) == doctest::Approx(0.01).epsilon(1e-6));
  double slope = fit_delta_n_exponent(pw, 10.0, 1000.0);
  CHECK(slope == doctest::Approx(-2.0).epsilon(0.1));
}

TEST_CASE("flow: identity, constant roof arithmetic and crossings") {
  SuspensionFlow fl(doubling_tower(), RoofFunction::constant(1.0));
  auto p = fl.make_point(0.3, 0, 0.0);
  auto same = fl.flow(p, 0.0);
  CHECK(same.px == p.px);
  CHECK(same.u == p.u);
  long n = 0;
  auto q = fl.flow(p, 2.5, &n);
  CHECK(q.px == doctest::Approx(doubling(doubling(0.3))).epsilon(1e-14));
  CHECK(q.u == doctest::Approx(0.5));
  CHECK(n == 2);
  fl.flow(p, 10.0, &n);
  CHECK(n == 10);
  CHECK_THROWS_AS(fl.make_point(0.3, 0, 1.0), DomainError);
  CHECK_THROWS_AS(fl.flow(p, -1.0), DomainError);
}

TEST_CASE("flow: semigroup property and crossing bound on PM") {
  SuspensionFlow fl(pm_tower(), RoofFunction::cosine());
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    auto p = fl.draw(rng);
    double s = U(rng), t = U(rng);
    long n = 0;
    auto a = fl.flow(fl.flow(p, s), t);
    auto b = fl.flow(p, s + t, &n);
    CHECK(std::abs(a.px - b.px) < 1e-9);
    CHECK(std::abs(a.u - b.u) < 1e-9);
    CHECK(n <= static_cast<long>((s + t) / fl.roof().inf()) + 1);
  }
}

TEST_CASE("truncated flow jumps from level N-1 to the base") {
  auto t = pm_tower();
  FlowOptions o;
  o.tower_cap = 3;
  SuspensionFlow fl(t, RoofFunction::constant(1.0), o);
  const Column& c = t->columns()[9];  // r = 10
  double y = 0.5 * (c.left + c.right);
  auto p = fl.make_point(y, 2, 0.0);
  auto q = fl.next_base(p);
  CHECK(q.level == 0);
  CHECK(q.px == doctest::Approx(t->induced().first_return(y)).epsilon(1e-12));
  CHECK_THROWS_AS(fl.make_point(y, 3, 0.0), DomainError);
}

TEST_CASE("sampling: constant roof product measure") {
  SuspensionFlow fl(doubling_tower(), RoofFunction::constant(1.0));
  auto pts = fl.sample(11, 100000);
  std::vector<double> u, x;
  for (const auto& p : pts) {
    u.push_back(p.u);
    x.push_back(p.px);
  }
  auto uniform = [](double z) { return std::clamp(z, 0.0, 1.0); };
  CHECK(ks_pvalue(ks_statistic(u, uniform), 1e5) > 0.01);
  CHECK(ks_pvalue(ks_statistic(x, uniform), 1e5) > 0.01);
  auto again = fl.sample(11, 100000);
  CHECK(again[77777].u == pts[77777].u);
}

TEST_CASE("sampling: mean roof under base samples against quadrature") {
  auto t = pm_tower();
  auto h = RoofFunction::cosine();
  SuspensionFlow fl(t, h);
  double skipped = 0.0;
  double oracle = hbar_quadrature(*t, h, 5000, &skipped);
  CHECK(skipped == doctest::Approx(t->excluded_mass()).epsilon(1e-6));
  const std::size_t n = 200000;
  auto pts = fl.sample_tower(13, n);
  double s = 0.0, s2 = 0.0;
  for (const auto& p : pts) {
    double v = h(p.px);
    s += v;
    s2 += v * v;
  }
  double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(std::abs(mean - oracle) < 3.0 * se);
}

TEST_CASE("stationarity of the sampled measure under the flow") {
  SuspensionFlow fl(doubling_tower(), RoofFunction::cosine());
  CHECK(stationarity_ks_pvalue(fl, 3.7, 20000, 2) > 0.001);
}

TEST_CASE("correlation_mc: constant observable, refusal and CSV") {
  SuspensionFlow fl(doubling_tower(), RoofFunction::cosine());
  auto one = make_observable("one");
  auto cx = make_observable("coordinate");
  auto s = correlation_mc(fl, one, cx, {0.0, 1.0, 5.0}, 2000, 1);
  for (std::size_t i = 0; i < s.t.size(); ++i) CHECK(std::abs(s.rho[i]) <= 2.0 * s.stderr_[i] + 1e-15);
  CHECK_THROWS_AS(correlation_mc(fl, one, cx, {1.0}, 99, 1), ParameterError);
  CHECK_THROWS_AS(make_observable("velocity"), ParameterError);
  std::ostringstream os;
  s.write_csv(os);
  CHECK(os.str().rfind("t,rho,stderr,n_samples,seed\n", 0) == 0);
}

TEST_CASE("correlation_mc: rho(0) is the variance") {
  SuspensionFlow fl(doubling_tower(), RoofFunction::cosine());
  auto cx = make_observable("coordinate");
  auto s = correlation_mc(fl, cx, cx, {0.0}, 50000, 4);
  // Under nu^h the base density is h/2; variance of x - 1/2 by the midpoint rule.
  double m1 = 0.0, m2 = 0.0;
  const int K = 100000;
  for (int i = 0; i < K; ++i) {
    double x = (i + 0.5) / K, w = (2.0 + std::cos(2.0 * M_PI * x)) / 2.0 / K;
    m1 += (x - 0.5) * w;
    m2 += (x - 0.5) * (x - 0.5) * w;
  }
  double var = m2 - m1 * m1;
  CHECK(s.rho[0] == doctest::Approx(var).epsilon(0.02));
}

TEST_CASE("correlation_mc: constant roof does not mix, cosine roof does") {
  auto cu = make_observable("cos-u");
  SuspensionFlow c(doubling_tower(), RoofFunction::constant(1.0));
  auto s = correlation_mc(c, cu, cu, {0.0, 1.0, 5.0, 20.0}, 20000, 6);
  for (std::size_t i = 1; i < s.t.size(); ++i)
    CHECK(std::abs(s.rho[i] - s.rho[0]) <= 0.1 * std::abs(s.rho[0]));
  SuspensionFlow g(doubling_tower(), RoofFunction::cosine());
  auto cx = make_observable("coordinate");
  auto r = correlation_mc(g, cx, cx, {0.0, 20.0}, 100000, 6);
  CHECK(std::abs(r.rho[1]) < 0.01);
}

TEST_CASE("correlation_mc is independent of the worker count") {
  SuspensionFlow fl(pm_tower(), RoofFunction::cosine());
  auto cx = make_observable("coordinate");
  auto a = correlation_mc(fl, cx, cx, {0.0, 3.0, 9.0}, 3000, 9, 1);
  auto b = correlation_mc(fl, cx, cx, {0.0, 3.0, 9.0}, 3000, 9, 4);
  for (std::size_t i = 0; i < a.rho.size(); ++i) {
    CHECK(a.rho[i] == b.rho[i]);
    CHECK(a.stderr_[i] == b.stderr_[i]);
  }
}

TEST_CASE("truncation experiment: errors, trivial N and bound monotonicity") {
  auto t = pm_tower();
  auto cx = make_observable("coordinate");
  CHECK_THROWS_AS(truncation_error_experiment(t, RoofFunction::power(1.0), cx, cx, {10}, {1.0}),
                  ParameterError);
  CHECK_THROWS_AS(roof_truncation_experiment(t, RoofFunction::cosine(), cx, cx, {10}, {1.0}),
                  ParameterError);
  TruncationOptions o;
  o.n_samples = 5000;
  auto tab = truncation_error_experiment(t, RoofFunction::cosine(), cx, cx, {3000}, {2.0, 5.0}, o);
  for (const auto& r : tab.rows) CHECK(std::abs(r.diff) <= 2.0 * r.diff_stderr + 1e-15);
  const InducedMap& ind = t->induced();
  for (double tt : {5.0, 20.0}) {
    double prev = truncation_bound(ind, 10, tt);
    for (int N = 20; N <= 1000; N += 10) {
      double b = truncation_bound(ind, N, tt);
      CHECK(b <= prev + 1e-15);
      prev = b;
    }
  }
  std::ostringstream os;
  tab.write_csv(os);
  const std::string csv = os.str();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("truncation experiment: PM(0.5) bound with a stable constant") {
  auto cx = make_observable("coordinate");
  TruncationOptions o;
  o.n_samples = 100000;
  auto tab = truncation_error_experiment(pm_tower(), RoofFunction::cosine(), cx, cx, {10, 20, 40},
                                         {5.0, 10.0, 20.0}, o);
  CHECK(tab.bound_holds);
  MESSAGE("fitted C " << tab.fitted_c << " stability " << tab.c_stability);
  for (const auto& r : tab.rows) CHECK(r.reference > 0.0);
}

TEST_CASE("roof truncation over the doubling map") {
  auto t = doubling_tower();
  auto pw = RoofFunction::power(1.0);
  auto cx = make_observable("coordinate");
  TruncationOptions o;
  o.n_samples = 20000;
  auto tab = roof_truncation_experiment(t, pw, cx, cx, {1000000}, {1.0, 4.0}, o);
  for (const auto& r : tab.rows) {
    CHECK(std::abs(r.diff) <= 3.0 * r.diff_stderr + 1e-4);
    CHECK(r.extra == 0.0);
    CHECK(r.extra_bound == 0.0);
  }
  o.n_samples = 50000;
  auto grid = roof_truncation_experiment(t, pw, cx, cx, {4, 8, 16}, {2.0, 6.0}, o);
  CHECK(grid.bound_holds);
  MESSAGE("roof fitted C " << grid.fitted_c << " stability " << grid.c_stability);
}

TEST_CASE("ekk_measure below its bound") {
  SuspensionFlow fl(doubling_tower(), RoofFunction::power(1.0));
  for (double N : {5.0, 20.0}) {
    auto r = ekk_measure(fl, N, 5, 20000, 3);
    CHECK(r.measured <= r.bound + 3.0 * r.stderr_);
    CHECK(r.measured >= fl.roof().level_set_measure(N) * 0.0);
  }
  CHECK_THROWS_AS(ekk_measure(SuspensionFlow(pm_tower(), RoofFunction::cosine()), 5.0, 5, 10, 1),
                  ParameterError);
}

TEST_CASE("buffer_modify: u-independent observable unchanged") {
  FlowOptions o;
  o.tower_cap = 5;
  SuspensionFlow fl(pm_tower(), RoofFunction::cosine(), o);
  auto cx = make_observable("coordinate");
  BufferReport rep;
  auto vt = buffer_modify(cx, fl, &rep);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    auto p = fl.draw(rng);
    CHECK(vt(p, fl.h(p)) == cx(p, fl.h(p)));
  }
  CHECK(rep.norm_ratio == doctest::Approx(1.0));
  CHECK_THROWS_AS(buffer_modify(cx, SuspensionFlow(pm_tower(), RoofFunction::cosine())),
                  ParameterError);
}

TEST_CASE("buffer_modify: derivatives match across the new identification") {
  const int N = 4;
  FlowOptions o;
  o.tower_cap = N;
  auto t = pm_tower();
  SuspensionFlow fl(t, RoofFunction::cosine(), o);
  auto v = make_observable("sin-u-h");
  BufferReport rep;
  auto vt = buffer_modify(v, fl, &rep);
  auto eval = [&](const FlowPoint& p, double u) {
    FlowPoint z = p;
    z.u = u;
    return vt(z, fl.h(z));
  };
  for (std::size_t j : {5u, 10u, 40u}) {
    const Column& c = t->columns()[j];
    auto p = fl.make_point(c.left + 0.37 * c.width(), N - 1, 0.0);
    const double h = fl.h(p);
    auto q = fl.next_base(p);
    const double hq = fl.h(q);
    const double e = 1e-3;
    // One-sided differences just below the roof against v's derivatives at the next base.
    double d1 = (eval(p, h - e) - eval(p, h - 2.0 * e)) / e;
    double d1_target = v.derivative(1, q.px, 0.0, hq);
    CHECK(d1 == doctest::Approx(d1_target).epsilon(0.02));
    double d2 = (eval(p, h - e) - 2.0 * eval(p, h - 2.0 * e) + eval(p, h - 3.0 * e)) / (e * e);
    double d2_target = v.derivative(2, q.px, 0.0, hq);
    CHECK(std::abs(d2 - d2_target) < 0.02 * std::abs(d2_target) + 0.5);
    // Below the blend window v is untouched.
    CHECK(eval(p, 0.5 * h) == v(fl.make_point(p.y, N - 1, 0.5 * h), h));
  }
  CHECK(rep.region_measure > 0.0);
  CHECK(rep.norm_ratio >= 1.0);
  MESSAGE("buffer norm ratio " << rep.norm_ratio << " region " << rep.region_measure);
}

TEST_CASE("fit_decay: synthetic power laws and refusal") {
  CorrelationSeries s;
  for (double t = 2.0; t <= 200.0; t *= 1.3) {
    s.t.push_back(t);
    s.rho.push_back(3.0 * std::pow(t, -1.5));
    s.stderr_.push_back(1e-9);
  }
  auto f = fit_decay(s, 2.0, 200.0);
  CHECK(f.beta == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(f.residual < 1e-12);
  CorrelationSeries g = s;
  for (std::size_t i = 0; i < g.t.size(); ++i)
    g.rho[i] = std::pow(std::log(g.t[i]), 2.0) / g.t[i];
  auto fg = fit_decay(g, 2.0, 200.0, true);
  CHECK(fg.beta == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(fg.gamma == doctest::Approx(2.0).epsilon(1e-8));
  g.stderr_[3] = 1.0;
  CHECK_THROWS_AS(fit_decay(g, 2.0, 200.0), ParameterError);
  CHECK_THROWS_AS(fit_decay(s, 100.0, 110.0), ParameterError);
}
