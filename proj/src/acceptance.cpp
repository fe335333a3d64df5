#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "semiflow/acceptance.hpp"
#include "semiflow/periodic.hpp"
#include "semiflow/transfer.hpp"

namespace semiflow {

namespace {

constexpr double kPi = std::numbers::pi;

class Suite {
 public:
  Suite(const AcceptanceOptions& opt, const std::function<void(const CriterionResult&)>& cb)
      : opt_(opt), cb_(cb) {
    if (!opt_.out_dir.empty()) std::filesystem::create_directories(opt_.out_dir);
  }

  bool wanted(const std::string& id) const {
    return opt_.only.empty() || std::find(opt_.only.begin(), opt_.only.end(), id) != opt_.only.end();
  }

  // body fills detail and returns pass; exceptions count as failures
  void run(const std::string& id, const std::string& name, const std::function<bool(std::ostringstream&)>& body) {
    if (!wanted(id)) return;
    CriterionResult r;
    r.id = id;
    r.name = name;
    std::ostringstream detail;
    detail.precision(4);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r.pass = body(detail);
    } catch (const std::exception& e) {
      detail << " exception: " << e.what();
      r.pass = false;
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.detail = detail.str();
    results_.push_back(r);
    if (cb_) cb_(r);
  }

  template <class F>
  void artifact(const std::string& file, F&& write) const {
    if (opt_.out_dir.empty()) return;
    std::ofstream os(std::filesystem::path(opt_.out_dir) / file);
    os.precision(17);
    write(os);
  }

  std::uint64_t seed() const { return opt_.seed; }
  int threads() const { return opt_.threads; }
  std::vector<CriterionResult> take() { return std::move(results_); }

 private:
  AcceptanceOptions opt_;
  std::function<void(const CriterionResult&)> cb_;
  std::vector<CriterionResult> results_;
};

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(lo * std::pow(hi / lo, double(i) / (n - 1)));
  return v;
}

std::shared_ptr<const InducedMap> shared(InducedMap m) { return std::make_shared<const InducedMap>(std::move(m)); }

std::shared_ptr<const CylinderBasis> small_pm_basis(int J, int G) {
  return make_basis(shared(induce_pm(0.5, J, 20000)), {.depth = 2, .groups = G});
}

// slope of log|c_n| on log n over [lo, hi]
double log_log_slope(const std::vector<double>& c, int lo, int hi) {
  MatD X(hi - lo + 1, 2);
  VecD y(X.rows());
  for (int n = lo; n <= hi; ++n) {
    X(n - lo, 0) = 1.0;
    X(n - lo, 1) = std::log(double(n));
    y(n - lo) = std::log(std::abs(c[n]));
  }
  return least_squares(X, y)(1);
}

bool near_2pi_z(double b) { return dist_2pi(b) < 1e-9; }

// resonance grid: integers 1..20 and the first multiples of 2 pi
std::vector<double> resonance_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 20; ++k) g.push_back(k);
  for (int k = 1; k <= 3; ++k) g.push_back(2 * kPi * k);
  std::sort(g.begin(), g.end());
  return g;
}

void full_profile(Suite& S) {
  const std::uint64_t seed = S.seed();
  const int threads = S.threads();

  S.run("1", "tail exponent of PM(0.5) induced on [1/2,1]", [&](std::ostringstream& d) {
    const auto t0 = std::chrono::steady_clock::now();
    auto ind = induce_pm(0.5, 400);
    auto fit = fit_tail_exponent(ind, 100, 10000);
    const double sec = elapsed(t0);
    S.artifact("tail.csv", [&](std::ostream& os) {
      os << "n,raw,extrapolated,total,fitted_exponent\n";
      for (double n : log_grid(100, 10000, 25)) {
        auto v = return_time_tail(ind, static_cast<long>(n));
        os << static_cast<long>(n) << ',' << v.raw << ',' << v.extrapolated << ',' << v.value() << ','
           << fit.exponent << '\n';
      }
    });
    d << "exponent " << fit.exponent << " in [1.85, 2.15], " << sec << " s (< 60)";
    return fit.exponent >= 1.85 && fit.exponent <= 2.15 && sec < 60.0;
  });

  S.run("2", "map-level correlation decay for PM(0.6)", [&](std::ostringstream& d) {
    const auto t0 = std::chrono::steady_clock::now();
    auto ind = shared(induce_pm(0.6, 400, 2000));
    auto B = make_basis(ind, {.depth = 2, .groups = 8, .tail_max_r = 2000});
    TowerOperator op(B, RoofFunction::constant(1.0));
    auto id = [](double x) { return x; };
    auto c = map_correlation_operator(op, id, id, 500);
    const double beta = -log_log_slope(c, 10, 500), sec = elapsed(t0);
    S.artifact("corr_map.csv", [&](std::ostream& os) {
      os << "n,correlation\n";
      for (std::size_t n = 0; n < c.size(); ++n) os << n << ',' << c[n] << '\n';
    });
    d << "fitted beta " << beta << " vs 2/3 +- 0.25 on n in [10, 500], basis " << B->size() << ", " << sec
      << " s (< 300)";
    return std::abs(beta - 2.0 / 3.0) <= 0.25 && sec < 300.0;
  });

  S.run("3", "measure identities and E_k bounds", [&](std::ostringstream& d) {
    auto tower = build_tower(shared(induce_pm(0.5, 400)));
    double worst = 0.0;
    bool ek_ok = true;
    double ek_ratio = 0.0;
    for (int N : {10, 20, 50, 100}) {
      auto tt = truncate(tower, N);
      worst = std::max({worst, tt.identity_i_defect(), tt.identity_ii_defect()});
      for (int k : {1, 5, 10}) {
        auto e = ek_measure(*tower, N, k);
        ek_ok = ek_ok && e.measured <= e.bound;
        ek_ratio = std::max(ek_ratio, e.ratio());
      }
    }
    SuspensionFlow fl(build_tower(shared(induce_doubling())), RoofFunction::power(1.0));
    bool ekk_ok = true;
    double ekk_ratio = 0.0;
    for (double N : {5.0, 10.0, 20.0})
      for (int k : {1, 5}) {
        auto e = ekk_measure(fl, N, k, 200000, seed);
        ekk_ok = ekk_ok && e.measured <= e.bound + 3.0 * e.stderr_;
        ekk_ratio = std::max(ekk_ratio, e.measured / e.bound);
      }
    d << "identity defect " << worst << " (<= 1e-12), max E_k/bound " << ek_ratio << ", max E_kk/bound "
      << ekk_ratio;
    return worst <= 1e-12 && ek_ok && ekk_ok;
  });

  S.run("4", "truncation error bounds with a stable constant", [&](std::ostringstream& d) {
    const auto t0 = std::chrono::steady_clock::now();
    auto cx = make_observable("coordinate");
    TruncationOptions o;
    o.n_samples = 1000000;
    o.seed = seed;
    o.threads = threads;
    auto pm = truncation_error_experiment(build_tower(shared(induce_pm(0.5, 400))), RoofFunction::cosine(), cx, cx,
                                          {10, 20, 40}, {5.0, 10.0, 20.0}, o);
    auto rf = roof_truncation_experiment(build_tower(shared(induce_doubling())), RoofFunction::power(1.0), cx, cx,
                                         {4, 8, 16}, {2.0, 6.0}, o);
    const double sec = elapsed(t0);
    S.artifact("trunc_error.csv", [&](std::ostream& os) { pm.write_csv(os); });
    S.artifact("roof_trunc.csv", [&](std::ostream& os) { rf.write_csv(os); });
    d << "PM: C " << pm.fitted_c << " stability " << pm.c_stability << "; roof: C " << rf.fitted_c << " stability "
      << rf.c_stability << "; " << sec << " s (< 600)";
    return pm.bound_holds && pm.c_stability <= 3.0 && rf.bound_holds && rf.c_stability <= 3.0 && sec < 600.0;
  });

  S.run("5", "renewal equation at N = 30", [&](std::ostringstream& d) {
    TowerOperator op(small_pm_basis(40, 4), RoofFunction::cosine(), 30);
    bool ok = true;
    for (cplx s : {cplx(0.0, 0.0), cplx(0.0, 0.1), cplx(0.3, 2.0)}) {
      auto chk = renewal_check(op, s, 16);
      ok = ok && chk.converged && chk.z.size() == 16 && chk.max_residual <= 1e-8;
      d << "s=" << s << ": " << chk.max_residual << " ";
    }
    return ok;
  });

  S.run("6", "tower operator decomposition at N = 20", [&](std::ostringstream& d) {
    TowerOperator op(small_pm_basis(25, 3), RoofFunction::cosine(), 20);
    const cplx s(0.01 * std::log(20.0) / 20.0, 3.0);
    bool ok = true;
    for (int n : {1, 5, 15, 21}) {
      auto r = tower_operator_decomposition(op, s, n);
      ok = ok && r.residual <= 1e-8 && r.vanish_beyond_N;
      d << "n=" << n << ": " << r.residual << " ";
    }
    return ok;
  });

  S.run("7", "Lasota-Yorke constant uniform in N", [&](std::ostringstream& d) {
    auto B = make_basis(shared(induce_pm(0.5, 120, 20000)), {.depth = 2, .groups = 4});
    auto rep = lasota_yorke_check(*B, RoofFunction::cosine(), {20, 50, 100}, {2.0, 10.0, 50.0}, {0.0, 1.0}, 20, 10,
                                  seed);
    d << "C " << rep.C << ", per N";
    for (double c : rep.C_per_N) d << ' ' << c;
    d << ", stability " << rep.stability << " (<= 2)";
    return rep.uniform;
  });

  S.run("8", "resonance contrast", [&](std::ostringstream& d) {
    // constant roof: flags exactly on 2 pi Z
    const auto grid = resonance_grid();
    auto D6 = make_basis(shared(induce_doubling()), {.depth = 6, .groups = 2});
    ResolventOptions ro;
    ro.random_probes = 20;
    ro.adversarial = 1;
    ro.seed = seed;
    ro.threads = threads;
    auto flat = resolvent_scan(*D6, twist_data(*D6, RoofFunction::constant(1.0), 0), grid, {0.0}, ro);
    FiniteSubsystem sub(shared(induce_doubling()), {0, 1});
    auto eig = approx_eigenfunction_search(sub, RoofFunction::constant(1.0), grid, {0.0}, 1.0, 2.0, 1.0, 4, threads,
                                           0.0);
    bool exact = true;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const bool res = near_2pi_z(grid[i]);
      exact = exact && flat.rows[i].resonance == res && (eig.rows[i].residual < 1e-9) == res;
    }
    // cosine roof: no flags, polynomial growth; depth 10 checked against depth 11
    auto dbl = shared(induce_doubling());
    auto D10 = make_basis(dbl, {.depth = 10, .groups = 2});
    auto h = RoofFunction::cosine();
    ResolventOptions co;
    co.seed = seed;
    co.threads = threads;
    const auto bgrid = log_grid(1.0, 100.0, 12);
    auto scan = resolvent_scan(*D10, twist_data(*D10, h, 0), bgrid, {0.0}, co);
    bool flags = false;
    for (const auto& r : scan.rows) flags = flags || r.resonance || !std::isfinite(r.norm);
    auto D11 = make_basis(dbl, {.depth = 11, .groups = 2});
    auto gate = resolvent_scan(*D11, twist_data(*D11, h, 0), {10.0, 100.0}, {0.0}, co);
    auto coarse = resolvent_scan(*D10, twist_data(*D10, h, 0), {10.0, 100.0}, {0.0}, co);
    double spread = 0.0;
    for (std::size_t i = 0; i < gate.rows.size(); ++i) {
      const double q = gate.rows[i].norm / coarse.rows[i].norm;
      spread = std::max(spread, std::max(q, 1.0 / q));
    }
    S.artifact("resolvent_constant.csv", [&](std::ostream& os) { flat.write_csv(os); });
    S.artifact("eigenfun_constant.csv", [&](std::ostream& os) { eig.write_csv(os); });
    S.artifact("resolvent_cosine.csv", [&](std::ostream& os) { scan.write_csv(os); });
    d << "constant roof flags exactly on 2 pi Z: " << (exact ? "yes" : "no") << "; cosine roof flags: "
      << (flags ? "yes" : "none") << ", alpha fit " << scan.alpha_fit << " (< 2), depth 10/11 spread " << spread
      << " (<= 2)";
    return exact && !flags && std::isfinite(scan.alpha_fit) && scan.alpha_fit < 2.0 && spread <= 2.0;
  });

  S.run("9", "mixing contrast of the flows", [&](std::ostringstream& d) {
    auto tower = build_tower(shared(induce_doubling()));
    auto cu = make_observable("cos-u");
    std::vector<double> ints;
    for (int k = 0; k <= 20; ++k) ints.push_back(k);
    auto flat = correlation_mc(SuspensionFlow(tower, RoofFunction::constant(1.0)), cu, cu, ints, 1000000, seed,
                               threads);
    double drift = 0.0;
    for (double r : flat.rho) drift = std::max(drift, std::abs(std::abs(r) - std::abs(flat.rho[0])));
    drift /= std::abs(flat.rho[0]);
    auto cx = make_observable("coordinate");
    auto mix = correlation_mc(SuspensionFlow(tower, RoofFunction::cosine()), cx, cx, {0.0, 5.0, 10.0, 20.0}, 1000000,
                              seed, threads);
    S.artifact("corr_flow_constant.csv", [&](std::ostream& os) { flat.write_csv(os); });
    S.artifact("corr_flow_cosine.csv", [&](std::ostream& os) { mix.write_csv(os); });
    d << "constant roof max | |rho(k)| - rho(0) | / rho(0) = " << drift << " (<= 0.1); cosine roof |rho(20)| = "
      << std::abs(mix.rho.back()) << " (< 0.01)";
    return drift <= 0.1 && std::abs(mix.rho.back()) < 0.01;
  });

  S.run("10", "rate budget, beta cases and the Y(n) example", [&](std::ostringstream& d) {
    auto b1 = rate_budget(1.0, 2.0);
    S.artifact("budget.csv", [&](std::ostream& os) { b1.write_csv(os); });
    const bool rate = b1.constraints_ok && b1.rate_label == "(ln t)^2/t" && b1.rate_matches;
    d << "beta=1 gamma=2: " << b1.rate_label << " drift " << b1.ratio_drift << "; classes";
    bool classes = true;
    const std::pair<double, const char*> expect[] = {
        {0.5, "(ln N)^g N^(1-b)"}, {1.0, "(ln N)^(g+1)"}, {2.0, "bounded"}};
    for (const auto& [beta, cls] : expect) {
      auto b = rate_budget(beta, beta == 1.0 ? 2.0 : 0.0);
      classes = classes && b.d_class == cls && b.constraints_ok;
      d << ' ' << beta << ":" << b.d_class;
    }
    bool yn = true;
    for (double beta : {0.5, 1.0, 2.0}) {
      auto ex = yn_log_example(beta);
      if (beta == 1.0) S.artifact("yn.csv", [&](std::ostream& os) { ex.write_csv(os); });
      const bool respected = ex.bound_respected();
      const bool kappa = std::abs(ex.log_power - (beta + 1.0)) <= 0.1 * (beta + 1.0);
      const bool lambda = std::abs(ex.power - (beta + 1.0)) <= 0.1 * (beta + 1.0);
      yn = yn && respected && kappa && lambda;
      d << "; Y(n) beta=" << beta << " bound " << (respected ? "ok" : "violated") << ", fitted (ln n)^" << ex.log_power
        << " n^-" << ex.power << " vs (ln n)^" << beta + 1 << " n^-" << beta + 1;
    }
    return rate && classes && yn;
  });

  S.run("11", "determinism across thread counts", [&](std::ostringstream& d) {
    auto pm_tower = build_tower(shared(induce_pm(0.5, 400)));
    auto cx = make_observable("coordinate");
    auto dbl = shared(induce_doubling());
    auto D7 = make_basis(dbl, {.depth = 7, .groups = 2});
    auto tw = twist_data(*D7, RoofFunction::cosine(), 0);
    FiniteSubsystem sub(shared(induce_pm(0.5, 60, 2000)), {0, 1, 2});
    auto triples = enumerate_periodic(sub, RoofFunction::cosine(), 4);
    auto B = make_basis(shared(induce_pm(0.5, 120, 20000)), {.depth = 2, .groups = 4});
    auto once = [&](int t) {
      const int saved = default_threads();
      set_default_threads(t);
      std::vector<double> out;
      auto add = [&](double x) { out.push_back(x); };
      auto c = correlation_mc(SuspensionFlow(pm_tower, RoofFunction::cosine()), cx, cx, {0.0, 3.0, 9.0}, 20000, seed, t);
      for (double x : c.rho) add(x);
      for (double x : c.stderr_) add(x);
      TruncationOptions o;
      o.n_samples = 20000;
      o.seed = seed;
      o.threads = t;
      auto tab = truncation_error_experiment(pm_tower, RoofFunction::cosine(), cx, cx, {10, 20}, {5.0}, o);
      for (const auto& r : tab.rows) add(r.diff), add(r.diff_stderr);
      ResolventOptions ro;
      ro.random_probes = 20;
      ro.adversarial = 2;
      ro.seed = seed;
      ro.threads = t;
      auto scan = resolvent_scan(*D7, tw, {1.0, 5.0, 20.0}, {0.0, 1.0}, ro);
      for (const auto& r : scan.rows) add(r.norm), add(r.sigma_min);
      auto ly = lasota_yorke_check(*B, RoofFunction::cosine(), {20}, {2.0}, {0.0}, 10, 4, seed);
      for (const auto& r : ly.rows) add(r.ratio);
      auto dio = diophantine_check(triples, log_grid(10.0, 1000.0, 50), {0.0}, 1.0, 2.0, 1.0, t);
      for (const auto& r : dio.rows) add(r.residual), add(r.phi_star);
      auto eig = approx_eigenfunction_search(sub, RoofFunction::cosine(), log_grid(10.0, 200.0, 30), {0.0}, 1.0, 2.0,
                                             1.0, 3, t);
      for (const auto& r : eig.rows) add(r.residual);
      set_default_threads(saved);
      return out;
    };
    const auto a = once(1), b = once(4);
    std::size_t diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) ++diff;
    d << a.size() << " values compared, " << diff << " differ between 1 and 4 workers";
    return a.size() == b.size() && diff == 0;
  });
}

void doubling_profile(Suite& S) {
  auto ind = shared(induce_doubling());
  const std::uint64_t seed = S.seed();

  S.run("D1", "doubling map induces to itself", [&](std::ostringstream& d) {
    auto chk = ind->check_conditions();
    d << ind->size() << " cells, mass defect " << chk.mass_defect << ", bijection error " << chk.bijection_error;
    return ind->size() == 2 && ind->cells()[0].r == 1 && ind->cells()[1].r == 1 && chk.mass_defect < 1e-14 &&
           chk.bijection_error < 1e-14;
  });

  S.run("D2", "single-level tower and truncation identities", [&](std::ostringstream& d) {
    auto t = build_tower(ind);
    double worst = 0.0;
    for (int N : {1, 2, 10}) {
      auto tt = truncate(t, N);
      worst = std::max({worst, tt.identity_i_defect(), tt.identity_ii_defect()});
    }
    d << "max height " << t->max_height() << ", identity defect " << worst;
    return t->max_height() == 1 && worst <= 1e-15;
  });

  S.run("D3", "transfer operator fixes constants and is dual to composition", [&](std::ostringstream& d) {
    auto B = make_basis(ind, {.depth = 6, .groups = 2});
    VecD one = VecD::Ones(static_cast<Eigen::Index>(B->size()));
    const double r1 = (B->R() * one - one).cwiseAbs().maxCoeff();
    const double dual = duality_defect(*B, 20, seed);
    d << "|R1 - 1| " << r1 << ", duality " << dual;
    return r1 < 1e-14 && dual < 1e-14;
  });

  S.run("D4", "renewal equation is the geometric series", [&](std::ostringstream& d) {
    TowerOperator op(make_basis(ind, {.depth = 4, .groups = 2}), RoofFunction::cosine(), 1);
    auto chk = renewal_check(op, cplx(0.0, 0.7), 8);
    d << "residual " << chk.max_residual << ", sigma " << chk.sigma << " vs ln 0.9";
    return chk.converged && chk.max_residual < 1e-12 && std::abs(chk.sigma - std::log(0.9)) < 1e-8;
  });

  S.run("D5", "constant roof: resolvent and eigenvalue 1 exactly on 2 pi Z", [&](std::ostringstream& d) {
    const auto grid = resonance_grid();
    auto D6 = make_basis(ind, {.depth = 6, .groups = 2});
    ResolventOptions ro;
    ro.random_probes = 20;
    ro.adversarial = 1;
    ro.seed = seed;
    auto scan = resolvent_scan(*D6, twist_data(*D6, RoofFunction::constant(1.0), 0), grid, {0.0}, ro);
    FiniteSubsystem sub(ind, {0, 1});
    auto eig = approx_eigenfunction_search(sub, RoofFunction::constant(1.0), grid, {0.0}, 1.0, 2.0, 1.0, 4, 0, 0.0);
    int hits = 0, wrong = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const bool res = near_2pi_z(grid[i]);
      hits += res;
      wrong += (scan.rows[i].resonance != res) + ((eig.rows[i].residual < 1e-9) != res);
    }
    d << hits << " multiples of 2 pi on a grid of " << grid.size() << ", " << wrong << " disagreements";
    return wrong == 0;
  });

  S.run("D6", "periodic orbits and constant-roof triples", [&](std::ostringstream& d) {
    FiniteSubsystem sub(ind, {0, 1});
    auto tr = enumerate_periodic(sub, RoofFunction::constant(1.5), 2);
    bool ok = tr.size() == 3 && std::abs(tr[0].point) < 1e-15 && std::abs(tr[1].point - 1.0) < 1e-15 &&
              std::abs(tr[2].point - 1.0 / 3.0) < 1e-15;
    for (const auto& t : tr) ok = ok && t.tau == 1.5 * t.d;
    auto dio = diophantine_check(tr, {2 * kPi / 1.5}, {0.0}, 1.0, 4.0, 1.0);
    d << tr.size() << " orbits, period-2 point " << tr.back().point << ", b = 2 pi / c passes: "
      << (dio.rows[0].pass ? "yes" : "no");
    return ok && dio.rows[0].pass;
  });

  S.run("D7", "map correlations in closed form", [&](std::ostringstream& d) {
    TowerOperator op(make_basis(ind, {.depth = 10, .groups = 2}), RoofFunction::constant(1.0));
    auto v = [](double x) { return x; };
    auto c = map_correlation_operator(op, v, v, 8);
    double err = 0.0;
    for (int n = 0; n <= 8; ++n)
      err = std::max(err, std::abs(c[n] - std::pow(2.0, -n) * (1.0 - std::pow(4.0, n - 10)) / 12.0));
    d << "max error " << err;
    return err < 1e-10;
  });

  S.run("D8", "constant-roof flow does not mix", [&](std::ostringstream& d) {
    auto cu = make_observable("cos-u");
    auto s = correlation_mc(SuspensionFlow(build_tower(ind), RoofFunction::constant(1.0)), cu, cu,
                            {0.0, 1.0, 2.0, 5.0, 20.0}, 20000, seed, S.threads());
    double drift = 0.0;
    for (double r : s.rho) drift = std::max(drift, std::abs(r - s.rho[0]) / std::abs(s.rho[0]));
    d << "max relative change of rho at integer times " << drift;
    return drift <= 1e-9;
  });
}

}  // namespace

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opt,
                                            const std::function<void(const CriterionResult&)>& on_result) {
  if (opt.profile != "full" && opt.profile != "doubling")
    throw ParameterError("acceptance: unknown profile '" + opt.profile + "'");
  Suite S(opt, on_result);
  if (opt.profile == "full")
    full_profile(S);
  else
    doubling_profile(S);
  auto res = S.take();
  S.artifact("acceptance.csv", [&](std::ostream& os) {
    os << "id,name,pass,seconds,detail\n";
    for (const auto& r : res) {
      std::string det = r.detail;
      std::replace(det.begin(), det.end(), '"', '\'');
      os << r.id << ",\"" << r.name << "\"," << (r.pass ? 1 : 0) << ',' << r.seconds << ",\"" << det << "\"\n";
    }
  });
  return res;
}

std::string format_result(const CriterionResult& r) {
  std::ostringstream os;
  os.precision(3);
  os << (r.pass ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << " (" << std::fixed << r.seconds << " s): "
     << r.detail;
  return os.str();
}

}  // namespace semiflow
