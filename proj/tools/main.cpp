#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "config.hpp"
#include "semiflow/acceptance.hpp"
#include "semiflow/periodic.hpp"
#include "semiflow/transfer.hpp"

using namespace semiflow;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kCommands = {"induce",     "tail",      "tower",    "truncate", "corr-map", "corr-flow",
                                            "trunc-error", "roof-trunc", "resolvent", "renewal", "decomp",   "laplace",
                                            "budget",     "periodic",  "eigenfun", "accept"};

struct Run {
  cli::Config cfg;
  fs::path out;
  std::optional<std::uint64_t> seed_flag;
  int threads = 0;
  bool strict = false;
  std::vector<std::string> warnings;
  std::vector<std::string> failures;

  std::uint64_t seed() const {
    if (seed_flag) return *seed_flag;
    if (auto s = cfg.seed("run.seed")) return *s;
    throw cli::ConfigError("no seed: pass --seed or set [run] seed");
  }
  void warn(const std::string& w) { warnings.push_back(w); }
  void check(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }

  std::ofstream csv(const std::string& name) const {
    std::ofstream os(out / name);
    if (!os) throw std::runtime_error("cannot write " + (out / name).string());
    os.precision(17);
    return os;
  }

  // matplotlib script reading `csv_name`; the runner never renders it
  void plot(const std::string& csv_name, const std::string& x, const std::vector<std::string>& ys, bool logx,
            bool logy, const std::string& title) const {
    const std::string stem = fs::path(csv_name).stem().string();
    std::ofstream py(out / (stem + ".py"));
    py << "import csv, os\nimport matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\n\n"
       << "here = os.path.dirname(os.path.abspath(__file__))\n"
       << "with open(os.path.join(here, '" << csv_name << "')) as f:\n"
       << "    rows = list(csv.DictReader(f))\n"
       << "x = [float(r['" << x << "']) for r in rows]\n"
       << "fig, ax = plt.subplots()\n";
    for (const auto& y : ys)
      py << "ax.plot(x, [abs(float(r['" << y << "'])) if " << (logy ? "True" : "False") << " else float(r['" << y
         << "']) for r in rows], marker='.', label='" << y << "')\n";
    if (logx) py << "ax.set_xscale('log')\n";
    if (logy) py << "ax.set_yscale('log')\n";
    py << "ax.set_xlabel('" << x << "')\nax.set_title('" << title << "')\nax.legend()\n"
       << "fig.savefig(os.path.join(here, '" << stem << ".png'), dpi=120)\n";
  }
};

// ----------------------------------------------------------------------------
// shared builders

std::shared_ptr<const InducedMap> make_induced(const Run& r) {
  const std::string kind = r.cfg.str("map.kind", "pm");
  if (kind == "doubling") return std::make_shared<const InducedMap>(induce_doubling());
  if (kind == "pm")
    return std::make_shared<const InducedMap>(induce_pm(r.cfg.num("map.alpha", 0.5),
                                                        static_cast<int>(r.cfg.integer("map.cutoff", 400)),
                                                        r.cfg.integer("map.tail_horizon", 100000)));
  throw cli::ConfigError("config: map.kind must be 'pm' or 'doubling', got '" + kind + "'");
}

RoofFunction make_roof(const Run& r) {
  return RoofFunction::from_name(r.cfg.str("roof.kind", "cosine"), r.cfg.num("roof.param", 0.0));
}

std::shared_ptr<const Tower> make_tower(const Run& r) {
  auto ind = make_induced(r);
  return r.cfg.has("tower.theta") ? build_tower(ind, r.cfg.num("tower.theta", 0.5)) : build_tower(ind);
}

std::shared_ptr<const CylinderBasis> make_basis_from(const Run& r, std::shared_ptr<const InducedMap> ind) {
  BasisOptions o;
  o.depth = static_cast<int>(r.cfg.integer("basis.depth", 2));
  o.groups = static_cast<int>(r.cfg.integer("basis.groups", 8));
  o.tail_max_r = static_cast<int>(r.cfg.integer("basis.tail_max_r", 0));
  o.theta = r.cfg.num("basis.theta", 0.5);
  return make_basis(std::move(ind), o);
}

// renewal and decomposition keep dense S x S blocks per return time
void require_small_basis(const Run& r, const CylinderBasis& B, const std::string& sec) {
  const long cap = r.cfg.integer(sec + ".max_basis", 600);
  if (static_cast<long>(B.size()) > cap)
    throw cli::ConfigError(sec + ": basis has " + std::to_string(B.size()) + " elements, above max_basis = " +
                           std::to_string(cap) + "; lower map.cutoff or basis.groups");
}

std::vector<int> as_int(const std::vector<long>& v) { return {v.begin(), v.end()}; }

// ----------------------------------------------------------------------------
// subcommands

void cmd_induce(Run& r) {
  auto ind = make_induced(r);
  auto os = r.csv("induce.csv");
  ind->write_csv(os);
  auto chk = ind->check_conditions(static_cast<int>(r.cfg.integer("induce.pairs", 100)), r.seed());
  const double c = ind->map().distortion_constant();
  std::cout << "cells " << ind->size() << ", tail mass " << ind->tail_mass() << ", rbar " << ind->rbar()
            << "\nbijection " << chk.bijection_error << ", expansion " << chk.expansion_min << ", backward "
            << chk.backward_constant << ", distortion " << chk.distortion_constant << ", mass defect "
            << chk.mass_defect << "\n";
  r.check(chk.ok(c), "induced map conditions with declared constant " + std::to_string(c));
  r.plot("induce.csv", "r", {"mu"}, true, true, "mu_Y per cell");
}

void cmd_tail(Run& r) {
  auto ind = make_induced(r);
  if (ind->exponential_tail()) throw cli::ConfigError("tail: the induced map has no return-time tail");
  const long lo = r.cfg.integer("tail.n_min", 100), hi = r.cfg.integer("tail.n_max", 10000);
  auto fit = fit_tail_exponent(*ind, lo, hi, r.cfg.flag("tail.fit_gamma", false));
  auto os = r.csv("tail.csv");
  os << "n,raw,extrapolated,total,fitted_exponent\n";
  for (double n : cli::parse_grid("log:" + std::to_string(lo) + ":" + std::to_string(hi) + ":" +
                                  std::to_string(r.cfg.integer("tail.points", 25)))) {
    auto v = return_time_tail(*ind, std::lround(n));
    os << std::lround(n) << ',' << v.raw << ',' << v.extrapolated << ',' << v.value() << ',' << fit.exponent << '\n';
  }
  std::cout << "fitted exponent " << fit.exponent << " (gamma " << fit.gamma << ", residual " << fit.residual << ")\n";
  if (r.cfg.str("map.kind", "pm") == "pm") {
    const double expect = 1.0 / r.cfg.num("map.alpha", 0.5);
    if (std::abs(fit.exponent - expect) > 0.15) r.warn("tail exponent far from 1/alpha = " + std::to_string(expect));
  }
  r.plot("tail.csv", "n", {"total", "raw"}, true, true, "mu_Y(r > n)");
}

void cmd_tower(Run& r) {
  auto t = make_tower(r);
  auto os = r.csv("tower.csv");
  t->write_csv(os, static_cast<int>(r.cfg.integer("tower.max_r", 400)),
               static_cast<int>(r.cfg.integer("tower.N", 0)));
  const double inv = t->invariance_defect(), proj = t->projection_defect(1000, r.seed());
  std::cout << "columns " << t->size() << ", theta " << t->theta() << ", represented mass " << t->represented_mass()
            << "\ninvariance defect " << inv << ", projection defect " << proj << "\n";
  if (inv > 1e-10) r.warn("tower invariance defect " + std::to_string(inv));
  r.check(proj < 1e-12, "pi o f = T o pi");
  r.plot("tower.csv", "r", {"measure"}, true, true, "tower cell measures");
}

void cmd_truncate(Run& r) {
  auto t = make_tower(r);
  auto os = r.csv("truncate.csv");
  os << "N,k,rbar_trunc,mu_r_ge_N,identity_i_defect,identity_ii_defect,ek_measured,ek_bound\n";
  const auto ks = r.cfg.ints("truncate.k", {1, 5, 10});
  for (long N : r.cfg.ints("truncate.N", {10, 20, 50, 100})) {
    auto tt = truncate(t, static_cast<int>(N));
    r.check(tt.identity_i_defect() <= 1e-12 && tt.identity_ii_defect() <= 1e-12,
            "truncation identities at N = " + std::to_string(N));
    for (long k : ks) {
      auto e = ek_measure(*t, static_cast<int>(N), static_cast<int>(k));
      r.check(e.measured <= e.bound, "E_k bound at N = " + std::to_string(N) + ", k = " + std::to_string(k));
      os << N << ',' << k << ',' << tt.rbar_trunc() << ',' << tt.mu_at_least_N() << ',' << tt.identity_i_defect()
         << ',' << tt.identity_ii_defect() << ',' << e.measured << ',' << e.bound << '\n';
    }
  }
  r.plot("truncate.csv", "N", {"ek_measured", "ek_bound"}, true, true, "E_k against its bound");
}

void cmd_corr_map(Run& r) {
  auto ind = make_induced(r);
  auto B = make_basis_from(r, ind);
  TowerOperator op(B, RoofFunction::constant(1.0));
  auto v = make_observable(r.cfg.str("corr_map.v", "coordinate"));
  auto w = make_observable(r.cfg.str("corr_map.w", "coordinate"));
  const int n_max = static_cast<int>(r.cfg.integer("corr_map.n_max", 500));
  auto c = map_correlation_operator(
      op, [&](double x) { return v.f(x, 0.0, 1.0); }, [&](double x) { return w.f(x, 0.0, 1.0); }, n_max);
  auto os = r.csv("corr_map.csv");
  os << "n,correlation\n";
  for (int n = 0; n <= n_max; ++n) os << n << ',' << c[n] << '\n';
  const int lo = static_cast<int>(r.cfg.integer("corr_map.fit_lo", 10));
  const int hi = static_cast<int>(r.cfg.integer("corr_map.fit_hi", n_max));
  if (lo >= 1 && hi > lo && hi <= n_max) {
    MatD X(hi - lo + 1, 2);
    VecD y(X.rows());
    for (int n = lo; n <= hi; ++n) {
      X(n - lo, 0) = 1.0;
      X(n - lo, 1) = std::log(double(n));
      y(n - lo) = std::log(std::abs(c[n]));
    }
    std::cout << "fitted decay exponent " << -least_squares(X, y)(1) << " on [" << lo << ", " << hi << "], basis "
              << B->size() << "\n";
  }
  r.plot("corr_map.csv", "n", {"correlation"}, true, true, "map correlations");
}

void cmd_corr_flow(Run& r) {
  FlowOptions fo;
  fo.tower_cap = static_cast<int>(r.cfg.integer("flow.tower_cap", 0));
  if (r.cfg.has("flow.roof_cap")) fo.roof_cap = r.cfg.num("flow.roof_cap", 0.0);
  SuspensionFlow fl(make_tower(r), make_roof(r), fo);
  auto v = make_observable(r.cfg.str("corr_flow.v", "coordinate"));
  auto w = make_observable(r.cfg.str("corr_flow.w", "coordinate"));
  auto s = correlation_mc(fl, v, w, r.cfg.grid("corr_flow.t", cli::parse_grid("lin:0:20:21")),
                          static_cast<std::size_t>(r.cfg.integer("corr_flow.samples", 100000)), r.seed(), r.threads);
  auto os = r.csv("corr_flow.csv");
  s.write_csv(os);
  if (r.cfg.has("corr_flow.fit_lo")) {
    try {
      auto fit = fit_decay(s, r.cfg.num("corr_flow.fit_lo", 1.0), r.cfg.num("corr_flow.fit_hi", 20.0),
                           r.cfg.flag("corr_flow.fit_gamma", false));
      std::cout << "fitted beta " << fit.beta << " +- " << fit.beta_ci << ", gamma " << fit.gamma << "\n";
    } catch (const ParameterError& e) {
      r.warn(std::string("decay fit refused: ") + e.what());
    }
  }
  std::cout << "rho(0) " << s.rho.front() << ", rho(" << s.t.back() << ") " << s.rho.back() << " +- "
            << s.stderr_.back() << "\n";
  r.plot("corr_flow.csv", "t", {"rho"}, false, false, "flow correlation");
}

void truncation_common(Run& r, bool roof) {
  const std::string sec = roof ? "roof_trunc" : "trunc_error";
  TruncationOptions o;
  o.n_samples = static_cast<std::size_t>(r.cfg.integer(sec + ".samples", 1000000));
  o.seed = r.seed();
  o.threads = r.threads;
  o.gamma = r.cfg.num(sec + ".gamma", 0.0);
  o.q = r.cfg.num(sec + ".q", 3.0);
  auto v = make_observable(r.cfg.str(sec + ".v", "coordinate"));
  auto w = make_observable(r.cfg.str(sec + ".w", "coordinate"));
  const auto N = as_int(r.cfg.ints(sec + ".N", {10, 20, 40}));
  const auto t = r.cfg.grid(sec + ".t", {5.0, 10.0, 20.0});
  auto tab = roof ? roof_truncation_experiment(make_tower(r), make_roof(r), v, w, N, t, o)
                  : truncation_error_experiment(make_tower(r), make_roof(r), v, w, N, t, o);
  auto os = r.csv(sec + ".csv");
  tab.write_csv(os);
  std::cout << "fitted C " << tab.fitted_c << ", stability " << tab.c_stability << "\n";
  r.check(tab.bound_holds, "truncation bound");
  if (tab.c_stability > 3.0) r.warn("fitted constant varies by more than a factor 3 across N");
  r.plot(sec + ".csv", "t", {"diff", "bound"}, false, true, "truncation error");
}

void cmd_resolvent(Run& r) {
  auto B = make_basis_from(r, make_induced(r));
  const auto roof = make_roof(r);
  auto tw = twist_data(*B, roof, static_cast<int>(r.cfg.integer("resolvent.N", 0)));
  ResolventOptions o;
  o.C = r.cfg.num("resolvent.C", 1.0);
  o.random_probes = static_cast<int>(r.cfg.integer("resolvent.random_probes", 200));
  o.adversarial = static_cast<int>(r.cfg.integer("resolvent.adversarial", 5));
  o.resonance_tol = r.cfg.num("resolvent.resonance_tol", 1e-8);
  o.seed = r.seed();
  o.threads = r.threads;
  auto scan = resolvent_scan(*B, tw, r.cfg.grid("resolvent.b", cli::parse_grid("log:1:100:12")),
                             r.cfg.grid("resolvent.omega", {0.0}), o);
  auto os = r.csv("resolvent.csv");
  scan.write_csv(os);
  int flags = 0;
  for (const auto& row : scan.rows) flags += row.resonance;
  std::cout << "basis " << B->size() << ", flagged " << flags << " of " << scan.rows.size() << ", alpha fit "
            << scan.alpha_fit << "\n";
  r.plot("resolvent.csv", "b", {"norm_estimate"}, true, true, "resolvent norm");
}

void cmd_renewal(Run& r) {
  auto B = make_basis_from(r, make_induced(r));
  require_small_basis(r, *B, "renewal");
  TowerOperator op(B, make_roof(r), static_cast<int>(r.cfg.integer("renewal.N", 30)));
  const cplx s(r.cfg.num("renewal.s_re", 0.0), r.cfg.num("renewal.s_im", 0.1));
  auto chk = renewal_check(op, s, static_cast<int>(r.cfg.integer("renewal.points", 16)),
                           r.cfg.num("renewal.target", 0.9));
  auto os = r.csv("renewal.csv");
  os << "k,re_z,im_z,residual\n";
  for (std::size_t k = 0; k < chk.z.size(); ++k)
    os << k << ',' << chk.z[k].real() << ',' << chk.z[k].imag() << ',' << chk.residual[k] << '\n';
  std::cout << "sigma " << chk.sigma << ", horizon " << chk.horizon << ", max residual " << chk.max_residual << "\n";
  r.check(chk.converged, "renewal horizon converged");
  r.check(chk.max_residual <= r.cfg.num("renewal.tol", 1e-8), "renewal residual");
  r.plot("renewal.csv", "k", {"residual"}, false, true, "renewal equation residual");
}

void cmd_decomp(Run& r) {
  auto B = make_basis_from(r, make_induced(r));
  require_small_basis(r, *B, "decomp");
  const int N = static_cast<int>(r.cfg.integer("decomp.N", 20));
  TowerOperator op(B, make_roof(r), N);
  const cplx s(r.cfg.num("decomp.s_re", 0.01 * std::log(double(N)) / N), r.cfg.num("decomp.s_im", 3.0));
  auto os = r.csv("decomp.csv");
  os << "n,residual,norm_A,norm_B,norm_E,C_A,C_B,C_E,vanish_beyond_N\n";
  for (long n : r.cfg.ints("decomp.n", {1, 5, 15, 21})) {
    auto d = tower_operator_decomposition(op, s, static_cast<int>(n));
    os << n << ',' << d.residual << ',' << d.norm_A << ',' << d.norm_B << ',' << d.norm_E << ',' << d.C_A << ','
       << d.C_B << ',' << d.C_E << ',' << d.vanish_beyond_N << '\n';
    r.check(d.residual <= r.cfg.num("decomp.tol", 1e-8), "decomposition residual at n = " + std::to_string(n));
    r.check(d.vanish_beyond_N, "A, B, E vanish beyond N at n = " + std::to_string(n));
  }
  r.plot("decomp.csv", "n", {"residual"}, false, true, "decomposition residual");
}

void cmd_laplace(Run& r) {
  auto B = make_basis_from(r, make_induced(r));
  TowerOperator op(B, make_roof(r), static_cast<int>(r.cfg.integer("laplace.N", 0)));
  auto v = make_observable(r.cfg.str("laplace.v", "coordinate"));
  auto w = make_observable(r.cfg.str("laplace.w", "coordinate"));
  const auto re = r.cfg.grid("laplace.s_re", {0.5, 1.0});
  const auto im = r.cfg.grid("laplace.s_im", {0.0, 2.0});
  if (re.size() != im.size()) throw cli::ConfigError("laplace: s_re and s_im must have equal length");
  auto os = r.csv("laplace.csv");
  os << "re_s,im_s,re,im,terms,converged\n";
  for (std::size_t i = 0; i < re.size(); ++i) {
    auto res = laplace_series(op, v, w, cplx(re[i], im[i]), r.cfg.num("laplace.tol", 1e-12));
    if (!res.converged) r.warn("Laplace series diverging at s = " + std::to_string(re[i]) + "+" + std::to_string(im[i]) + "i");
    os << re[i] << ',' << im[i] << ',' << res.value.real() << ',' << res.value.imag() << ',' << res.terms << ','
       << res.converged << '\n';
  }
  r.plot("laplace.csv", "im_s", {"re", "im"}, false, false, "Laplace transform of the correlation");
}

void cmd_budget(Run& r) {
  const double beta = r.cfg.num("budget.beta", 1.0), gamma = r.cfg.num("budget.gamma", 2.0);
  auto b = rate_budget(beta, gamma, r.cfg.num("budget.p", 0.0), r.cfg.num("budget.d", 0.0), r.cfg.num("budget.q", 0.0),
                       r.cfg.num("budget.epsilon", 0.01));
  {
    auto os = r.csv("budget.csv");
    b.write_csv(os);
  }
  {
    auto os = r.csv("budget_summary.csv");
    os << "beta,gamma,p,d,q,d_class,dominant_rate,fitted_exponent,rate_matches,constraints_ok\n";
    os << beta << ',' << gamma << ',' << b.p << ',' << b.d << ',' << b.q << ",\"" << b.d_class << "\",\""
       << b.rate_label << "\"," << b.fitted_exponent << ',' << b.rate_matches << ',' << b.constraints_ok << '\n';
  }
  auto ex = yn_log_example(beta, r.cfg.flag("budget.yn_level0", false));
  {
    auto os = r.csv("yn.csv");
    ex.write_csv(os);
  }
  std::cout << "dominant rate " << b.rate_label << ", d_N class " << b.d_class << ", fitted exponent "
            << b.fitted_exponent << "\nY(n): (ln n)^" << ex.log_power << " n^-" << ex.power << "\n";
  for (const auto& v : b.violations) r.failures.push_back("budget constraint " + v);
  if (!b.rate_matches) r.warn("budget total does not settle on the predicted rate");
  r.check(ex.bound_respected(), "Y(n) bound");
  r.plot("budget.csv", "t", {"term1", "term2", "term3", "term4", "predicted_rate"}, true, true, "rate budget");
  r.plot("yn.csv", "n", {"measured", "bound"}, true, true, "mu_Y(Y(n))");
}

FiniteSubsystem make_subsystem(const Run& r, const std::string& sec) {
  std::vector<std::size_t> cells;
  for (long c : r.cfg.ints(sec + ".cells", {0, 1})) {
    if (c < 0) throw cli::ConfigError(sec + ".cells: negative index");
    cells.push_back(static_cast<std::size_t>(c));
  }
  return FiniteSubsystem(make_induced(r), cells);
}

void cmd_periodic(Run& r) {
  auto sub = make_subsystem(r, "periodic");
  const auto roof = make_roof(r);
  auto tr = enumerate_periodic(sub, roof, static_cast<int>(r.cfg.integer("periodic.q_max", 3)));
  {
    auto os = r.csv("periodic_triples.csv");
    write_triples_csv(os, tr);
  }
  for (const auto& t : tr) r.check(std::abs(t.tau - recompute_tau(sub, roof, t.word)) <= 1e-9, "tau recomputation");
  const auto b = r.cfg.grid("periodic.b", cli::parse_grid("lin:10:1000:991"));
  const auto om = r.cfg.grid("periodic.omega", {0.0});
  const double beta0 = r.cfg.num("periodic.beta0", 1.0);
  std::cout << tr.size() << " primitive orbits\n";
  for (double alpha : r.cfg.grid("periodic.alpha", {1.0, 2.0, 4.0}))
    for (double C : r.cfg.grid("periodic.C", {1.0, 10.0})) {
      auto rep = diophantine_check(tr, b, om, beta0, alpha, C, r.threads);
      std::ostringstream name;
      name << "diophantine_alpha" << alpha << "_C" << C << ".csv";
      auto os = r.csv(name.str());
      rep.write_csv(os);
      std::cout << "alpha " << alpha << " C " << C << ": " << rep.passing_b.size() << " passing b, " << rep.label << "\n";
      if (rep.degenerate) r.warn("single triple: the periodic-data test is degenerate");
      r.plot(name.str(), "b", {"residual"}, true, true, "periodic-data residual");
    }
}

void cmd_eigenfun(Run& r) {
  auto sub = make_subsystem(r, "eigenfun");
  std::optional<double> phase;
  if (r.cfg.has("eigenfun.phase")) phase = r.cfg.num("eigenfun.phase", 0.0);
  auto rep = approx_eigenfunction_search(sub, make_roof(r), r.cfg.grid("eigenfun.b", cli::parse_grid("lin:10:200:191")),
                                         r.cfg.grid("eigenfun.omega", {0.0}), r.cfg.num("eigenfun.beta0", 1.0),
                                         r.cfg.num("eigenfun.alpha", 2.0), r.cfg.num("eigenfun.C", 1.0),
                                         static_cast<int>(r.cfg.integer("eigenfun.depth", 3)), r.threads, phase);
  auto os = r.csv("eigenfun.csv");
  rep.write_csv(os);
  double lo = INFINITY;
  for (double s : rep.scaled) lo = std::min(lo, s);
  std::cout << "min residual |b|^alpha " << lo << ", " << rep.label << "\n";
  if (!rep.converged) r.warn("eigenfunction minimization did not converge");
  r.plot("eigenfun.csv", "b", {"residual"}, true, true, "approximate eigenfunction residual");
}

void cmd_accept(Run& r) {
  AcceptanceOptions o;
  o.profile = r.cfg.str("accept.profile", "full");
  o.seed = r.seed();
  o.threads = r.threads;
  o.out_dir = r.out.string();
  o.only = r.cfg.words("accept.only", {});
  auto res = run_acceptance(o, [](const CriterionResult& c) { std::cout << format_result(c) << std::endl; });
  for (const auto& c : res)
    if (!c.pass) r.failures.push_back("criterion " + c.id);
}

const std::map<std::string, void (*)(Run&)>& handlers() {
  static const std::map<std::string, void (*)(Run&)> h = {
      {"induce", cmd_induce},     {"tail", cmd_tail},
      {"tower", cmd_tower},       {"truncate", cmd_truncate},
      {"corr-map", cmd_corr_map}, {"corr-flow", cmd_corr_flow},
      {"trunc-error", [](Run& r) { truncation_common(r, false); }},
      {"roof-trunc", [](Run& r) { truncation_common(r, true); }},
      {"resolvent", cmd_resolvent}, {"renewal", cmd_renewal},
      {"decomp", cmd_decomp},     {"laplace", cmd_laplace},
      {"budget", cmd_budget},     {"periodic", cmd_periodic},
      {"eigenfun", cmd_eigenfun}, {"accept", cmd_accept}};
  return h;
}

std::string usage() {
  std::ostringstream os;
  os << "usage: semiflow <subcommand> [--config PATH] [--out DIR] [--seed U64] [--threads N] [--strict]\n"
     << "subcommands:";
  for (const auto& c : kCommands) os << ' ' << c;
  os << '\n';
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  // the first non-option argument is the subcommand
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--help" || a == "-h") break;
    if (a.rfind("-", 0) == 0) {
      if (a.find('=') == std::string::npos && a != "--strict") ++i;
      continue;
    }
    if (!handlers().count(a)) {
      std::cerr << "unknown subcommand '" << a << "'\n" << usage();
      return 1;
    }
    break;
  }

  CLI::App app{"numerical lab for nonuniformly expanding semiflows"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool strict = false;
  app.add_option("--config", config_path, "INI configuration file");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--threads", threads, "worker count (0: hardware)");
  app.add_flag("--strict", strict, "promote warnings to failures");
  for (const auto& c : kCommands) app.add_subcommand(c)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help() << usage();
    return 0;
  } catch (const CLI::RequiredError&) {
    std::cerr << usage();
    return 1;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n' << usage();
    return 3;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  Run run;
  try {
    if (!config_path.empty()) run.cfg = cli::Config::load(config_path);
    run.out = out_dir;
    fs::create_directories(run.out);
    run.seed_flag = seed;
    if (!seed) {
      if (auto s = run.cfg.seed("run.seed")) run.seed_flag = s;
    }
    run.threads = threads > 0 ? threads : static_cast<int>(run.cfg.integer("run.threads", 0));
    if (run.threads < 0) throw cli::ConfigError("threads must be >= 0");
    if (run.threads > 0) set_default_threads(run.threads);
    run.strict = strict || run.cfg.flag("run.strict", false);
    handlers().at(cmd)(run);
  } catch (const cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 3;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << cmd << " failed: " << e.what() << '\n';
    return 2;
  }

  for (const auto& w : run.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& f : run.failures) std::cerr << "assertion failed: " << f << '\n';
  if (!run.failures.empty() || (run.strict && !run.warnings.empty())) return 2;
  std::cout << cmd << ": outputs in " << run.out.string() << '\n';
  return 0;
}
