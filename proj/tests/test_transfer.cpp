#include <cmath>
#include <random>
#include <map>
#include <sstream>

#include "doctest.h"
#include "semiflow/transfer.hpp"

using namespace semiflow;

namespace {

std::shared_ptr<const InducedMap> doubling_map() {
  static auto m = std::make_shared<const InducedMap>(induce_doubling());
  return m;
}

std::shared_ptr<const InducedMap> pm_map(double alpha = 0.5) {
  static std::map<double, std::shared_ptr<const InducedMap>> cache;
  auto& m = cache[alpha];
  if (!m) m = std::make_shared<const InducedMap>(induce_pm(alpha, 400, 20000));
  return m;
}

}  // namespace

TEST_CASE("doubling basis: dyadic cylinders and R in closed form") {
  auto B = make_basis(doubling_map(), {.depth = 4, .groups = 2});
  REQUIRE(B->size() == 16);
  CHECK(B->weight_defect() < 1e-14);
  CHECK(B->nesting_defect() < 1e-14);
  // dyadic intervals of length 1/16, weights 1/16
  for (const auto& e : B->elements()) {
    CHECK(e.right - e.left == doctest::Approx(1.0 / 16).epsilon(1e-12));
    CHECK(e.weight == doctest::Approx(1.0 / 16).epsilon(1e-12));
  }
  // (R v)(x) = (v(x/2) + v((x+1)/2)) / 2 on cylinder midpoints, for v constant on cylinders
  MatD R = MatD(B->R());
  double err = 0.0;
  const auto& E = B->elements();
  for (std::size_t a = 0; a < E.size(); ++a)
    for (std::size_t b = 0; b < E.size(); ++b) {
      // b maps onto a superset of a: b's word shifted equals a's prefix
      bool onto = true;
      for (int i = 0; i + 1 < 4; ++i) onto = onto && E[a].word[i] == E[b].word[i + 1];
      double expect = onto ? 0.5 : 0.0;
      err = std::max(err, std::abs(R(a, b) - expect));
    }
  CHECK(err < 1e-12);
  VecD one = VecD::Ones(16);
  CHECK((B->R() * one - one).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(duality_defect(*B) < 1e-14);
}

TEST_CASE("PM basis: R1 = 1, masses and duality") {
  auto B = make_basis(pm_map(), {.depth = 2, .groups = 8});
  VecD one = VecD::Ones(static_cast<Eigen::Index>(B->size()));
  CHECK((B->R() * one - one).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(B->weight_defect() < 1e-12);
  CHECK(B->nesting_defect() < 1e-8);  // F is steep on deep cells
  CHECK(B->cell_mass_defect() < 1e-3);
  CHECK(duality_defect(*B) < 1e-12);
  MESSAGE("size " << B->size() << " cell mass defect " << B->cell_mass_defect());
}

TEST_CASE("theta seminorm and separation") {
  auto B = make_basis(doubling_map(), {.depth = 3, .groups = 2});
  CHECK(B->separation(0, 0) == std::numeric_limits<int>::max());
  CHECK(B->separation(0, 1) == 2);
  CHECK(B->separation(0, 2) == 1);
  CHECK(B->separation(0, 4) == 0);
  VecC v = VecC::Zero(8);
  v(1) = 1.0;
  CHECK(B->theta_seminorm(v) == doctest::Approx(4.0));  // separated at 2, theta = 1/2
  VecC c = VecC::Constant(8, cplx(3.0, 1.0));
  CHECK(B->theta_seminorm(c) == 0.0);
  CHECK(B->b_norm(c, 10.0, 1.0) == doctest::Approx(std::abs(cplx(3.0, 1.0))));
}

TEST_CASE("pointwise transfer operator of the doubling map") {
  auto id = [](double y) { return y; };
  for (double x : {0.1, 0.37, 0.5, 0.93})
    CHECK(std::abs(transfer_pointwise(*doubling_map(), id, x) - (x / 2 + 0.25)) < 1e-12);
}

TEST_CASE("PM spectrum: eigenvalue 1 and a gap") {
  auto B = make_basis(pm_map(), {.depth = 2, .groups = 2});
  auto mod = leading_moduli(*B, 3);
  CHECK(mod[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(mod[1] < 1.0 - 1e-3);
  MESSAGE("second modulus " << mod[1]);
}

TEST_CASE("twisted operator: untwisted limit and constant twist") {
  auto B = make_basis(pm_map(), {.depth = 2, .groups = 4});
  auto tw = twist_data(*B, RoofFunction::cosine(), 50);
  SpMatC R0 = twisted_operator(*B, tw, 0.0, 0.0);
  CHECK((MatC(R0) - MatD(B->R()).cast<cplx>()).cwiseAbs().maxCoeff() < 1e-14);

  auto D = make_basis(doubling_map(), {.depth = 5, .groups = 2});
  auto twd = twist_data(*D, RoofFunction::constant(1.0), 0);
  const cplx s(0.2, 3.0), z(-0.1, 1.5);
  MatC lhs = MatC(twisted_operator(*D, twd, s, z));
  MatC rhs = std::exp(s + z) * MatD(D->R()).cast<cplx>();
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("roof seminorm sum bound for PM") {
  auto B = make_basis(pm_map(), {.depth = 2, .groups = 8});
  for (int N : {20, 100}) {
    auto c = roof_seminorm_check(*B, RoofFunction::cosine(), N);
    CHECK(c.ok());
    CHECK(c.lhs > 0.0);
    MESSAGE("N " << N << " lhs " << c.lhs << " rhs " << c.rhs);
  }
}

TEST_CASE("d_N for the doubling map and PM") {
  // doubling: r = 1, so d_N = 1
  CHECK(d_N(*doubling_map(), 10) == doctest::Approx(1.0));
  double prev = 0.0;
  for (int N : {10, 20, 40}) {
    double d = d_N(*pm_map(), N);
    CHECK(d > prev);
    prev = d;
  }
}

TEST_CASE("Lasota-Yorke: constant v and the theta contraction") {
  auto B = make_basis(pm_map(), {.depth = 2, .groups = 4});
  auto tw = twist_data(*B, RoofFunction::cosine(), 20);
  VecC one = VecC::Ones(static_cast<Eigen::Index>(B->size()));
  SpMatC R = twisted_operator(*B, tw, cplx(0.0, 10.0), 0.0);
  VecC x = one;
  double worst = 0.0;
  for (int n = 1; n <= 10; ++n) {
    x = R * x;
    worst = std::max(worst, B->theta_seminorm(x) / (10.0 * B->sup_norm(one)));
  }
  CHECK(std::isfinite(worst));
  MESSAGE("constant v ratio " << worst);
  auto rep = lasota_yorke_check(*B, RoofFunction::cosine(), {20}, {2.0}, {0.0}, 20, 4);
  // ratio at large n stays below the constant found over all n
  CHECK(rep.rows.back().ratio <= rep.C);
}

TEST_CASE("resolvent: constant roof resonates at 2 pi Z") {
  auto D = make_basis(doubling_map(), {.depth = 6, .groups = 2});
  auto tw = twist_data(*D, RoofFunction::constant(1.0), 0);
  ResolventOptions opt;
  opt.random_probes = 10;
  opt.adversarial = 1;
  auto scan = resolvent_scan(*D, tw, {1.0, 2 * M_PI, 5.0, 4 * M_PI, 20.0}, {0.0}, opt);
  CHECK_FALSE(scan.rows[0].resonance);
  CHECK(scan.rows[1].resonance);
  CHECK_FALSE(scan.rows[2].resonance);
  CHECK(scan.rows[3].resonance);
  CHECK_FALSE(scan.rows[4].resonance);
  std::ostringstream os;
  scan.write_csv(os);
  CHECK(os.str().rfind("b,omega,norm_estimate", 0) == 0);
}

TEST_CASE("resolvent: cosine roof has no flags; coboundary shift") {
  auto D = make_basis(doubling_map(), {.depth = 7, .groups = 2});
  auto h = RoofFunction::cosine();
  auto tw = twist_data(*D, h, 0);
  ResolventOptions opt;
  opt.random_probes = 20;
  opt.adversarial = 2;
  auto scan = resolvent_scan(*D, tw, {1.0, 2 * M_PI, 10.0}, {0.0}, opt);
  for (const auto& r : scan.rows) CHECK_FALSE(r.resonance);
  // h + u o F - u with u = eps sin(2 pi x)
  const double eps = 1e-3;
  TwistData tw2 = tw;
  for (std::size_t a = 0; a < D->size(); ++a) {
    const double x = D->elements()[a].mid;
    const double Fx = x < 0.5 ? 2 * x : 2 * x - 1;
    tw2.H(a) += eps * (std::sin(2 * M_PI * Fx) - std::sin(2 * M_PI * x));
  }
  for (double b : {2.0, 5.0}) {
    double n1 = resolvent_norm(*D, tw, b, 0.0, opt).norm;
    double n2 = resolvent_norm(*D, tw2, b, 0.0, opt).norm;
    CHECK(std::abs(n2 / n1 - 1.0) < 0.05);
  }
}

TEST_CASE("twist perturbation: zero at a = sigma = 0, linear in a") {
  auto B = make_basis(pm_map(), {.depth = 2, .groups = 4});
  auto h = RoofFunction::cosine();
  const int N = 50;
  auto zero = twist_perturbation_check(*B, h, cplx(0.0, 5.0), cplx(0.0, 1.0), N);
  CHECK(zero.measured == 0.0);
  auto p1 = twist_perturbation_check(*B, h, cplx(0.01 / N, 5.0), 0.0, N);
  auto p2 = twist_perturbation_check(*B, h, cplx(0.005 / N, 5.0), 0.0, N);
  CHECK(p1.measured > 0.0);
  const double scale = p1.measured / p2.measured;
  CHECK(scale > 1.0);
  CHECK(scale < 4.0);
  MESSAGE("ratio to bracket " << p1.ratio() << " halving scale " << scale);
}

namespace {

std::shared_ptr<const CylinderBasis> small_pm_basis(int J, int G) {
  static std::map<std::pair<int, int>, std::shared_ptr<const CylinderBasis>> cache;
  auto& b = cache[{J, G}];
  if (!b) b = make_basis(std::make_shared<const InducedMap>(induce_pm(0.5, J, 20000)), {.depth = 2, .groups = G});
  return b;
}

}  // namespace

TEST_CASE("renewal: doubling geometric series") {
  auto D = make_basis(doubling_map(), {.depth = 4, .groups = 2});
  TowerOperator op(D, RoofFunction::cosine(), 1);
  const cplx s(0.0, 0.7);
  auto chk = renewal_check(op, s, 8);
  CHECK(chk.converged);
  CHECK(chk.max_residual < 1e-12);
  // R_s(z) = e^z R_s with |R_s| spectral radius 1, so sigma = ln 0.9
  CHECK(chk.sigma == doctest::Approx(std::log(0.9)).epsilon(1e-8));
  auto d = renewal_build(op, s, {cplx(-0.5, 0.0)});
  CHECK(d.T0_defect == 0.0);
  CHECK(d.R_beyond_N == 0.0);
  MatC direct = MatC::Zero(16, 16);
  MatC Rs = MatC(twisted_operator(*D, op.twist(), s, 0.0));
  MatC P = MatC::Identity(16, 16);
  for (int n = 0; n < 200; ++n) {
    direct += std::exp(-0.5 * n) * P;
    P = Rs * P;
  }
  CHECK((d.T_of_z[0] - direct).norm() / direct.norm() < 1e-12);
}

TEST_CASE("renewal: PM truncated at N = 30") {
  TowerOperator op(small_pm_basis(40, 4), RoofFunction::cosine(), 30);
  auto chk = renewal_check(op, cplx(0.0, 0.1));
  CHECK(chk.converged);
  CHECK(chk.max_residual < 1e-8);
  auto d = renewal_build(op, cplx(0.0, 0.1), {cplx(chk.sigma, 0.0)}, 50);
  CHECK(d.T0_defect == 0.0);
  CHECK(d.R_beyond_N == 0.0);
  MESSAGE("sigma " << chk.sigma << " horizon " << chk.horizon << " residual " << chk.max_residual);
}

TEST_CASE("decomposition: single-level tower and PM at N = 20") {
  auto D = make_basis(doubling_map(), {.depth = 3, .groups = 2});
  TowerOperator one(D, RoofFunction::constant(1.0), 1);
  auto r1 = tower_operator_decomposition(one, cplx(0.0, 2.0), 1);
  CHECK(r1.residual < 1e-14);
  CHECK(r1.norm_E == 0.0);
  CHECK(r1.vanish_beyond_N);

  TowerOperator op(small_pm_basis(25, 3), RoofFunction::cosine(), 20);
  const cplx s(0.01 * std::log(20.0) / 20.0, 3.0);
  auto r = tower_operator_decomposition(op, s, 15);
  CHECK(r.residual < 1e-8);
  CHECK(r.vanish_beyond_N);
  const double cap = 2.0 * std::exp(std::abs(s.real()) * 3.0 * 20);
  CHECK(r.C_A <= cap);
  CHECK(r.C_B <= cap);
  CHECK(r.C_E <= cap);
  MESSAGE("C_A " << r.C_A << " C_B " << r.C_B << " C_E " << r.C_E);
}

TEST_CASE("map correlations through the tower operator") {
  auto D = make_basis(doubling_map(), {.depth = 10, .groups = 2});
  TowerOperator op(D, RoofFunction::constant(1.0));
  auto v = [](double x) { return x - 0.5; };
  auto c = map_correlation_operator(op, v, v, 8);
  const int k = 10;
  for (int n = 0; n <= 8; ++n) {
    // covariance of dyadic averages at depth k
    const double expect = std::pow(2.0, -n) * (1.0 - std::pow(4.0, n - k)) / 12.0;
    CHECK(c[n] == doctest::Approx(expect).epsilon(1e-10));
  }
  auto z = map_correlation_operator(op, [](double) { return 1.0; }, v, 5);
  for (double x : z) CHECK(std::abs(x) < 1e-15);
}

TEST_CASE("Laplace series: constant v and the doubling closed form") {
  TowerOperator pm(small_pm_basis(40, 4), RoofFunction::cosine(), 30);
  auto one = make_observable("one");
  auto r0 = laplace_series(pm, one, make_observable("bump"), cplx(0.3, 2.0));
  CHECK(r0.converged);
  CHECK(std::abs(r0.value) < 1e-8);

  auto D = make_basis(doubling_map(), {.depth = 12, .groups = 2});
  TowerOperator op(D, RoofFunction::constant(1.0), 1);
  auto x = make_observable("coordinate");
  const double s = 0.5;
  auto r = laplace_series(op, x, x, s);
  CHECK(r.converged);
  // rho(n + tau) = ((1 - tau) 2^-n + tau 2^-(n+1)) / 12
  const double I1 = (s - 1.0 + std::exp(-s)) / (s * s);
  const double I2 = (1.0 - std::exp(-s) * (1.0 + s)) / (s * s);
  const double expect = (I1 + 0.5 * I2) / (12.0 * (1.0 - 0.5 * std::exp(-s)));
  CHECK(std::abs(r.value - expect) < 1e-6);
  CHECK(std::abs(r.value.imag()) < 1e-15);
  MESSAGE("laplace " << r.value.real() << " expect " << expect << " terms " << r.terms);
}

TEST_CASE("Laplace series refuses Re s <= 0; trapezoid transform of a series") {
  TowerOperator pm(small_pm_basis(40, 4), RoofFunction::cosine(), 30);
  auto one = make_observable("one");
  CHECK_THROWS_AS(laplace_series(pm, one, one, cplx(0.0, 1.0)), ParameterError);
  CorrelationSeries cs;
  for (int i = 0; i <= 4000; ++i) {
    cs.t.push_back(i * 0.01);
    cs.rho.push_back(std::exp(-cs.t.back()));
    cs.stderr_.push_back(0.0);
  }
  auto [val, err] = laplace_of_series(cs, 1.0);
  CHECK(std::abs(val - 0.5) < 1e-4);
  CHECK(err == 0.0);
}

TEST_CASE("rate budget: the three beta cases") {
  auto b2 = rate_budget(2.0, 0.0);
  CHECK(b2.p == 3.0);
  CHECK(b2.constraints_ok);
  CHECK(b2.d_class == "bounded");
  CHECK(b2.rows.back().dominant <= 2);
  CHECK(b2.rate_matches);
  CHECK(b2.fitted_exponent == doctest::Approx(-2.0).epsilon(0.02));

  auto b1 = rate_budget(1.0, 2.0);
  CHECK(b1.rate_label == "(ln t)^2/t");
  CHECK(b1.d_class == "(ln N)^(g+1)");
  CHECK(b1.constraints_ok);
  CHECK(b1.rate_matches);

  auto bh = rate_budget(0.5, 0.0);
  CHECK(bh.p > 3.0);
  CHECK(bh.p_min == doctest::Approx(3.0));
  CHECK(bh.d_class == "(ln N)^g N^(1-b)");
  CHECK(bh.constraints_ok);
  CHECK(bh.rate_matches);
  CHECK(bh.fitted_exponent == doctest::Approx(-0.5).epsilon(0.05));
  MESSAGE("exponents " << b2.fitted_exponent << " " << b1.fitted_exponent << " " << bh.fitted_exponent);

  auto bad = rate_budget(2.0, 0.0, 2.0);  // p <= beta
  CHECK_FALSE(bad.constraints_ok);
  CHECK(bad.violations.size() >= 1);
  std::ostringstream os;
  b2.write_csv(os);
  CHECK(os.str().rfind("t,N,term1,term2,term3,term4,dominant,predicted_rate\n", 0) == 0);
}

TEST_CASE("d_N is nondecreasing for a supplied tail") {
  auto pm = pm_map();
  auto b = rate_budget(1.0, 0.0, 0.0, 0.0, 0.0, 0.01, [&](long k) { return pm->tail_at_least(k).total(); });
  for (std::size_t i = 1; i < b.dN.size(); ++i) CHECK(b.dN[i] >= b.dN[i - 1]);
}

TEST_CASE("Y(n) example: log powers of the two constructions") {
  for (double beta : {0.5, 1.0, 2.0}) {
    auto a = yn_log_example(beta, false);
    auto b = yn_log_example(beta, true);
    CHECK(a.bound_respected());
    CHECK(b.bound_respected());
    CHECK(a.log_power == doctest::Approx(beta + 1.0).epsilon(0.1));
    CHECK(std::abs(b.log_power) < 0.2);
    MESSAGE("beta " << beta << " kappa " << a.log_power << " lambda " << a.power << " | level0 kappa "
                    << b.log_power << " lambda " << b.power);
  }
}
