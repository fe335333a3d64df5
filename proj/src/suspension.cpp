#include "semiflow/suspension.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>

#include <boost/math/quadrature/gauss.hpp>

namespace semiflow {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::size_t kSeedBatch = 1000;

// Gauss-Legendre nodes and weights on [0, 1].
struct UnitRule {
  std::vector<double> x, w;
};
const UnitRule& unit_rule() {
  static const UnitRule rule = [] {
    using G = boost::math::quadrature::gauss<double, 6>;
    UnitRule r;
    const auto& a = G::abscissa();
    const auto& wt = G::weights();
    for (std::size_t i = 0; i < a.size(); ++i) {
      r.x.push_back(0.5 + 0.5 * a[i]);
      r.w.push_back(0.5 * wt[i]);
      if (a[i] != 0.0) {
        r.x.push_back(0.5 - 0.5 * a[i]);
        r.w.push_back(0.5 * wt[i]);
      }
    }
    return r;
  }();
  return rule;
}

bool in_base(const InducedMap& ind, double x) { return x >= ind.y_lo() && x <= ind.y_hi(); }

}  // namespace

// ---------------------------------------------------------------------------
// RoofFunction

RoofFunction RoofFunction::constant(double c) {
  if (!(c > 0.0)) throw ParameterError("roof: constant must be positive");
  RoofFunction h;
  h.kind_ = RoofKind::Constant;
  h.a_ = c;
  return h;
}

RoofFunction RoofFunction::cosine(double base, double amp) {
  if (!(amp >= 0.0 && base - amp > 0.0))
    throw ParameterError("roof: need amp >= 0 and base - amp > 0");
  RoofFunction h;
  h.kind_ = RoofKind::Cosine;
  h.a_ = base;
  h.b_ = amp;
  return h;
}

RoofFunction RoofFunction::power(double beta) {
  if (!(beta > 0.0)) throw ParameterError("roof: power roof needs beta > 0");
  RoofFunction h;
  h.kind_ = RoofKind::Power;
  h.beta_ = beta;
  h.p_ = 1.0 / (beta + 1.0);
  return h;
}

RoofFunction RoofFunction::from_name(const std::string& name, double param) {
  if (name == "constant") return constant(param > 0.0 ? param : 1.0);
  if (name == "cosine") return param > 0.0 ? cosine(2.0, param) : cosine();
  if (name == "power") return power(param > 0.0 ? param : 1.0);
  throw ParameterError("roof: unknown roof '" + name + "'");
}

double RoofFunction::operator()(double x) const {
  switch (kind_) {
    case RoofKind::Constant: return a_;
    case RoofKind::Cosine: return a_ + b_ * std::cos(kTwoPi * x);
    case RoofKind::Power:
      return x > 0.0 ? 1.0 + std::pow(x, -p_) : std::numeric_limits<double>::infinity();
  }
  return a_;
}

double RoofFunction::inf() const {
  switch (kind_) {
    case RoofKind::Constant: return a_;
    case RoofKind::Cosine: return a_ - b_;
    case RoofKind::Power: return 2.0;
  }
  return a_;
}

double RoofFunction::sup() const {
  switch (kind_) {
    case RoofKind::Constant: return a_;
    case RoofKind::Cosine: return a_ + b_;
    case RoofKind::Power: return std::numeric_limits<double>::infinity();
  }
  return a_;
}

double RoofFunction::sup_on(double lo, double hi) const {
  if (kind_ == RoofKind::Power) return (*this)(lo);
  if (kind_ == RoofKind::Constant) return a_;
  double s = std::max((*this)(lo), (*this)(hi));
  if (std::floor(hi) >= std::ceil(lo)) s = a_ + b_;
  return s;
}

double RoofFunction::inf_on(double lo, double hi) const {
  if (kind_ == RoofKind::Power) return (*this)(hi);
  if (kind_ == RoofKind::Constant) return a_;
  double s = std::min((*this)(lo), (*this)(hi));
  if (std::floor(hi - 0.5) >= std::ceil(lo - 0.5)) s = a_ - b_;
  return s;
}

double RoofFunction::integral(double lo, double hi) const {
  switch (kind_) {
    case RoofKind::Constant: return a_ * (hi - lo);
    case RoofKind::Cosine:
      return a_ * (hi - lo) + b_ / kTwoPi * (std::sin(kTwoPi * hi) - std::sin(kTwoPi * lo));
    case RoofKind::Power:
      return (hi - lo) + (std::pow(hi, 1.0 - p_) - std::pow(lo, 1.0 - p_)) / (1.0 - p_);
  }
  return 0.0;
}

double RoofFunction::lipschitz_on(double lo, double hi) const {
  (void)hi;
  switch (kind_) {
    case RoofKind::Constant: return 0.0;
    case RoofKind::Cosine: return kTwoPi * b_;
    case RoofKind::Power:
      return lo > 0.0 ? p_ * std::pow(lo, -p_ - 1.0) : std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

double RoofFunction::level_set_measure(double n) const {
  switch (kind_) {
    case RoofKind::Constant: return a_ > n ? 1.0 : 0.0;
    case RoofKind::Cosine: {
      double c = (n - a_) / b_;
      if (b_ == 0.0) return a_ > n ? 1.0 : 0.0;
      if (c >= 1.0) return 0.0;
      if (c < -1.0) return 1.0;
      return std::acos(c) / std::numbers::pi;
    }
    case RoofKind::Power:
      if (n <= 2.0) return 1.0;
      return std::pow(n - 1.0, -1.0 / p_);
  }
  return 0.0;
}

double RoofFunction::level_set_integral(double n) const {
  switch (kind_) {
    case RoofKind::Constant: return a_ * level_set_measure(n);
    case RoofKind::Cosine: {
      double th = 0.5 * level_set_measure(n);
      return integral(0.0, th) + integral(1.0 - th, 1.0);
    }
    case RoofKind::Power: return integral(0.0, level_set_measure(n));
  }
  return 0.0;
}

double RoofFunction::sample_weighted(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (kind_ == RoofKind::Power) {
    // Mixture of the uniform part and the density (1-p) x^{-p}.
    const double total = 1.0 + 1.0 / (1.0 - p_);
    if (unif(rng) * total < 1.0) return unif(rng);
    double u = unif(rng);
    while (u == 0.0) u = unif(rng);
    return std::pow(u, 1.0 / (1.0 - p_));
  }
  const double s = sup();
  for (;;) {
    double x = unif(rng);
    if (unif(rng) * s < (*this)(x)) return x;
  }
}

std::string RoofFunction::name() const {
  switch (kind_) {
    case RoofKind::Constant: return "constant(" + std::to_string(a_) + ")";
    case RoofKind::Cosine: return "cosine(" + std::to_string(a_) + "," + std::to_string(b_) + ")";
    case RoofKind::Power: return "power(beta=" + std::to_string(beta_) + ")";
  }
  return "";
}

double induced_roof(const InducedMap& ind, const RoofFunction& h, double y, int r_cap,
                    double roof_cap) {
  const MapModel& T = ind.map();
  double x = y, H = 0.0;
  for (int l = 0; l < r_cap; ++l) {
    H += std::min(h(x), roof_cap);
    x = T(x);
    if (in_base(ind, x)) break;
  }
  return H;
}

RoofCheck check_roof(const Tower& tower, const RoofFunction& h, double declared_c,
                     int samples_per_cell, std::uint64_t seed) {
  RoofCheck chk;
  chk.inf_h = std::numeric_limits<double>::infinity();
  chk.min_H_over_r = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const InducedMap& ind = tower.induced();
  const MapModel& T = ind.map();
  for (const Column& c : tower.columns()) {
    if (c.r > 2000) continue;
    double a = c.left, b = c.right, m = 0.5 * (a + b);
    for (int l = 0; l < c.r; ++l) {
      double lo = std::min(a, b), hi = std::max(a, b);
      chk.inf_h = std::min(chk.inf_h, h.inf_on(lo, hi));
      chk.max_cell_lipschitz = std::max(chk.max_cell_lipschitz, h.lipschitz_on(lo, hi));
      const Branch& br = T.branches()[T.branch_index(m)];
      a = br.forward(a);
      b = br.forward(b);
      m = br.forward(m);
    }
    for (int s = 0; s < samples_per_cell; ++s) {
      double y = c.left + unif(rng) * c.width();
      double H = induced_roof(ind, h, y);
      chk.min_H_over_r = std::min(chk.min_H_over_r, H / (c.r * h.inf()));
    }
  }
  chk.ok = chk.inf_h > 0.0 && chk.min_H_over_r >= 1.0 - 1e-12 &&
           (!h.bounded() || chk.max_cell_lipschitz <= declared_c);
  return chk;
}

double delta_n_measure(const RoofFunction& h, double n, int depth) {
  std::function<double(double, double, int)> rec = [&](double lo, double hi, int d) -> double {
    if (h.sup_on(lo, hi) < n) return 0.0;
    if (d == depth || h.inf_on(lo, hi) >= n) return hi - lo;
    double mid = 0.5 * (lo + hi);
    return rec(lo, mid, d + 1) + rec(mid, hi, d + 1);
  };
  return rec(0.0, 1.0, 0);
}

double fit_delta_n_exponent(const RoofFunction& h, double n_min, double n_max, int points) {
  MatD X(points, 2);
  VecD y(points);
  for (int i = 0; i < points; ++i) {
    double ln = std::log(n_min) + (std::log(n_max) - std::log(n_min)) * i / (points - 1);
    X(i, 0) = 1.0;
    X(i, 1) = ln;
    y(i) = std::log(delta_n_measure(h, std::exp(ln)));
  }
  return least_squares(X, y)(1);
}

// ---------------------------------------------------------------------------
// SuspensionFlow

SuspensionFlow::SuspensionFlow(std::shared_ptr<const Tower> tower, RoofFunction roof,
                               FlowOptions opt)
    : tower_(std::move(tower)), roof_(roof), opt_(opt) {
  if (!tower_) throw ParameterError("flow: null tower");
  if (opt_.tower_cap < 0) throw ParameterError("flow: tower cap must be >= 0");
  if (!(opt_.roof_cap > 0.0)) throw ParameterError("flow: roof cap must be positive");
  double acc = 0.0;
  for (const Column& c : tower_->columns()) {
    col_weight_.push_back(c.mu * r_eff(c.r));
    acc += col_weight_.back();
    col_cdf_.push_back(acc);
  }
  for (double& v : col_cdf_) v /= acc;
  const InducedMap& ind = tower_->induced();
  lebesgue_single_level_ = ind.map().kind() == MapKind::Doubling && !ind.has_tail() &&
                           tower_->max_height() == 1;
}

int SuspensionFlow::return_time(double y) const {
  if (auto j = tower_->find_column(y)) return tower_->columns()[*j].r;
  return tower_->induced().return_time(y);
}

FlowPoint SuspensionFlow::make_point(double y, int level, double u) const {
  const InducedMap& ind = tower_->induced();
  if (!in_base(ind, y)) throw DomainError("flow: base point outside Y");
  FlowPoint p;
  p.y = y;
  p.r = return_time(y);
  if (level < 0 || level >= r_eff(p.r)) throw DomainError("flow: level outside column");
  p.level = level;
  p.px = y;
  for (int l = 0; l < level; ++l) p.px = ind.map()(p.px);
  if (!(u >= 0.0 && u < h(p))) throw DomainError("flow: u outside [0, h)");
  p.u = u;
  return p;
}

FlowPoint SuspensionFlow::next_base(const FlowPoint& p) const {
  const InducedMap& ind = tower_->induced();
  const MapModel& T = ind.map();
  double x = T(p.px);
  FlowPoint q;
  if (!in_base(ind, x)) {
    if (opt_.tower_cap == 0 || p.level + 1 < opt_.tower_cap) {
      q = p;
      q.level = p.level + 1;
      q.px = x;
      q.u = 0.0;
      return q;
    }
    // Truncated column: jump from level N-1 straight to F y.
    while (!in_base(ind, x)) x = T(x);
  }
  q.y = x;
  q.level = 0;
  q.r = 0;  // not tracked along orbits
  q.px = x;
  q.u = 0.0;
  return q;
}

FlowPoint SuspensionFlow::flow(FlowPoint p, double t, long* crossings) const {
  if (!(t >= 0.0)) throw DomainError("flow: t must be >= 0");
  double hp = h(p);
  if (!(p.u >= 0.0 && p.u < hp)) throw DomainError("flow: u outside [0, h)");
  long n = 0;
  double remaining = t;
  while (p.u + remaining >= hp) {
    remaining -= hp - p.u;
    p = next_base(p);
    hp = h(p);
    ++n;
  }
  p.u += remaining;
  if (crossings) *crossings = n;
  return p;
}

std::size_t SuspensionFlow::pick_column(double u01) const {
  auto it = std::upper_bound(col_cdf_.begin(), col_cdf_.end(), u01);
  return std::min<std::size_t>(static_cast<std::size_t>(it - col_cdf_.begin()),
                               col_cdf_.size() - 1);
}

FlowPoint SuspensionFlow::draw_tower(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Column& c = tower_->columns()[pick_column(unif(rng))];
  const int rr = r_eff(c.r);
  FlowPoint p;
  p.r = c.r;
  p.level = std::min(rr - 1, static_cast<int>(unif(rng) * rr));
  p.y = c.left + unif(rng) * c.width();
  p.px = p.y;
  const MapModel& T = tower_->induced().map();
  for (int l = 0; l < p.level; ++l) p.px = T(p.px);
  return p;
}

FlowPoint SuspensionFlow::draw(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (lebesgue_single_level_ && !roof_.bounded()) {
    for (;;) {
      double x = roof_.sample_weighted(rng);
      double full = roof_(x), hp = std::min(full, opt_.roof_cap);
      if (hp < full && unif(rng) * full >= hp) continue;
      FlowPoint p;
      p.y = p.px = x;
      p.level = 0;
      p.r = 1;
      p.u = unif(rng) * hp;
      return p;
    }
  }
  const double hs = std::min(roof_.sup(), opt_.roof_cap);
  if (!std::isfinite(hs))
    throw ParameterError("flow: unbounded roof sampling needs a single-level Lebesgue tower");
  for (;;) {
    FlowPoint p = draw_tower(rng);
    double hp = h(p);
    if (unif(rng) * hs >= hp) continue;
    p.u = unif(rng) * hp;
    return p;
  }
}

std::vector<FlowPoint> SuspensionFlow::sample(std::uint64_t seed, std::size_t n) const {
  if (n < 1) throw ParameterError("sample: n must be >= 1");
  std::vector<FlowPoint> out(n);
  const std::size_t batches = (n + kSeedBatch - 1) / kSeedBatch;
  parallel_for(batches, 0, [&](std::size_t b) {
    std::mt19937_64 rng(mix_seed(seed, b));
    for (std::size_t i = b * kSeedBatch; i < std::min(n, (b + 1) * kSeedBatch); ++i)
      out[i] = draw(rng);
  });
  return out;
}

std::vector<FlowPoint> SuspensionFlow::sample_tower(std::uint64_t seed, std::size_t n) const {
  if (n < 1) throw ParameterError("sample: n must be >= 1");
  std::vector<FlowPoint> out(n);
  const std::size_t batches = (n + kSeedBatch - 1) / kSeedBatch;
  parallel_for(batches, 0, [&](std::size_t b) {
    std::mt19937_64 rng(mix_seed(seed, b));
    for (std::size_t i = b * kSeedBatch; i < std::min(n, (b + 1) * kSeedBatch); ++i)
      out[i] = draw_tower(rng);
  });
  return out;
}

namespace {

// Mean of h on each level l < levels of column c, with y uniform on the base interval.
std::vector<double> level_means(const MapModel& T, const Column& c, const RoofFunction& h,
                                int levels, double roof_cap) {
  const UnitRule& rule = unit_rule();
  std::vector<double> pts(rule.x.size());
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = c.left + rule.x[i] * c.width();
  std::vector<double> out(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    double s = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      s += rule.w[i] * std::min(h(pts[i]), roof_cap);
      pts[i] = T(pts[i]);
    }
    out[static_cast<std::size_t>(l)] = s;
  }
  return out;
}

}  // namespace

double hbar_quadrature(const Tower& tower, const RoofFunction& h, int max_r, double* skipped) {
  const MapModel& T = tower.induced().map();
  double sum = 0.0, skip = tower.excluded_mass();
  for (std::size_t j = 0; j < tower.size(); ++j) {
    const Column& c = tower.columns()[j];
    if (c.r > max_r) {
      skip += c.r * tower.cell_measure(j);
      continue;
    }
    for (double m : level_means(T, c, h, c.r, std::numeric_limits<double>::infinity()))
      sum += tower.cell_measure(j) * m;
  }
  if (skipped) *skipped = skip;
  return sum / (1.0 - skip);
}

// ---------------------------------------------------------------------------
// Observables

double Observable::derivative(int k, double px, double u, double h) const {
  if (du) return du(k, px, u, h);
  if (k == 0) return f(px, u, h);
  // Central differences of order k.
  const double e = 1e-3 * h;
  double s = 0.0, binom = 1.0;
  for (int i = 0; i <= k; ++i) {
    double sign = (i % 2 == 0) ? 1.0 : -1.0;
    s += sign * binom * f(px, u + (0.5 * k - i) * e, h);
    binom = binom * (k - i) / (i + 1);
  }
  return s / std::pow(e, k);
}

Observable make_observable(const std::string& name) {
  Observable o;
  o.name = name;
  o.m = 2;
  if (name == "one") {
    o.f = [](double, double, double) { return 1.0; };
    o.du = [](int k, double, double, double) { return k == 0 ? 1.0 : 0.0; };
  } else if (name == "coordinate") {
    o.f = [](double x, double, double) { return x - 0.5; };
    o.du = [](int k, double x, double, double) { return k == 0 ? x - 0.5 : 0.0; };
  } else if (name == "cos-u") {
    o.f = [](double, double u, double) { return std::cos(kTwoPi * u); };
    o.du = [](int k, double, double u, double) {
      return std::pow(kTwoPi, k) * std::cos(kTwoPi * u + k * std::numbers::pi / 2);
    };
  } else if (name == "sin-u-h") {
    o.f = [](double, double u, double h) { return std::sin(kTwoPi * u / h); };
    o.du = [](int k, double, double u, double h) {
      return std::pow(kTwoPi / h, k) * std::sin(kTwoPi * u / h + k * std::numbers::pi / 2);
    };
  } else if (name == "bump") {
    auto bump = [](double x) {
      double z = (x - 0.75) / 0.15;
      return std::abs(z) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - z * z)) : 0.0;
    };
    o.f = [bump](double x, double, double) { return bump(x); };
    o.du = [bump](int k, double x, double, double) { return k == 0 ? bump(x) : 0.0; };
  } else if (name == "coordinate-cos-u") {
    o.f = [](double x, double u, double) { return (x - 0.5) * std::cos(kTwoPi * u); };
    o.du = [](int k, double x, double u, double) {
      return (x - 0.5) * std::pow(kTwoPi, k) * std::cos(kTwoPi * u + k * std::numbers::pi / 2);
    };
  } else {
    throw ParameterError("observable: unknown observable '" + name + "'");
  }
  return o;
}

// ---------------------------------------------------------------------------
// Correlations

namespace {

std::size_t stat_batch_size(std::size_t n) {
  return std::clamp<std::size_t>(n / 20, 5, kSeedBatch);
}

struct Moments {
  double n = 0.0, sv = 0.0;
  std::vector<double> sw, svw;
  explicit Moments(std::size_t T = 0) : sw(T, 0.0), svw(T, 0.0) {}
  void add(const Moments& o) {
    n += o.n;
    sv += o.sv;
    for (std::size_t i = 0; i < sw.size(); ++i) {
      sw[i] += o.sw[i];
      svw[i] += o.svw[i];
    }
  }
  double rho(std::size_t i) const {
    if (n == 0.0) return 0.0;
    return svw[i] / n - (sv / n) * (sw[i] / n);
  }
};

std::vector<std::size_t> time_order(const std::vector<double>& t_grid) {
  for (double t : t_grid)
    if (!(t >= 0.0)) throw ParameterError("correlation: times must be >= 0");
  std::vector<std::size_t> ord(t_grid.size());
  for (std::size_t i = 0; i < ord.size(); ++i) ord[i] = i;
  std::stable_sort(ord.begin(), ord.end(),
                   [&](std::size_t a, std::size_t b) { return t_grid[a] < t_grid[b]; });
  return ord;
}

// Records w along the orbit of p at the sorted times.
void orbit_values(const SuspensionFlow& fl, const Observable& w, FlowPoint p,
                  const std::vector<double>& t_grid, const std::vector<std::size_t>& ord,
                  std::vector<double>& out) {
  double now = 0.0;
  for (std::size_t i : ord) {
    p = fl.flow(p, t_grid[i] - now);
    now = t_grid[i];
    out[i] = w(p, fl.h(p));
  }
}

double batch_stderr(const std::vector<double>& vals) {
  const double B = static_cast<double>(vals.size());
  if (vals.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= B;
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (B - 1.0) / B);
}

}  // namespace

void CorrelationSeries::write_csv(std::ostream& os) const {
  os << "t,rho,stderr,n_samples,seed\n";
  os.precision(12);
  for (std::size_t i = 0; i < t.size(); ++i)
    os << t[i] << ',' << rho[i] << ',' << stderr_[i] << ',' << n_samples << ',' << seed << '\n';
}

CorrelationSeries correlation_mc(const SuspensionFlow& flow, const Observable& v,
                                 const Observable& w, const std::vector<double>& t_grid,
                                 std::size_t n_samples, std::uint64_t seed, int threads) {
  if (n_samples < 100)
    throw ParameterError("correlation_mc: n_samples < 100 gives no meaningful estimate");
  const std::size_t T = t_grid.size();
  const auto ord = time_order(t_grid);
  const std::size_t bs = stat_batch_size(n_samples);
  const std::size_t B = (n_samples + bs - 1) / bs;
  std::vector<Moments> acc(B, Moments(T));
  parallel_for(B, threads, [&](std::size_t b) {
    std::mt19937_64 rng(mix_seed(seed, b));
    std::vector<double> wv(T);
    Moments m(T);
    for (std::size_t i = b * bs; i < std::min(n_samples, (b + 1) * bs); ++i) {
      FlowPoint p = flow.draw(rng);
      double vv = v(p, flow.h(p));
      orbit_values(flow, w, p, t_grid, ord, wv);
      m.n += 1.0;
      m.sv += vv;
      for (std::size_t k = 0; k < T; ++k) {
        m.sw[k] += wv[k];
        m.svw[k] += vv * wv[k];
      }
    }
    acc[b] = std::move(m);
  });
  Moments total(T);
  for (const Moments& m : acc) total.add(m);
  CorrelationSeries s;
  s.t = t_grid;
  s.n_samples = n_samples;
  s.seed = seed;
  s.rho.resize(T);
  s.stderr_.resize(T);
  std::vector<double> per(B);
  for (std::size_t i = 0; i < T; ++i) {
    s.rho[i] = total.rho(i);
    for (std::size_t b = 0; b < B; ++b) per[b] = acc[b].rho(i);
    s.stderr_[i] = batch_stderr(per);
  }
  return s;
}

double stationarity_ks_pvalue(const SuspensionFlow& flow, double s, std::size_t n,
                              std::uint64_t seed) {
  auto fresh = flow.sample(seed, n);
  auto moved = flow.sample(mix_seed(seed, 0x5eed), n);
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = fresh[i].px;
    b[i] = flow.flow(moved[i], s).px;
  }
  double d = ks_statistic_two_sample(a, b);
  return ks_pvalue(d, 0.5 * static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Truncation experiments

double truncation_bound(const InducedMap& ind, int N, double t) {
  auto tower = build_tower(std::make_shared<const InducedMap>(ind), 0.5);
  TruncatedTower tt(tower, N);
  return tt.tail_sum() + (N + t) * tt.mu_at_least_N();
}

void TruncationTable::write_csv(std::ostream& os) const {
  os << "N,t,rho,rho_trunc,diff,diff_stderr,bound,reference,extra,extra_bound\n";
  os.precision(10);
  for (const auto& r : rows)
    os << r.N << ',' << r.t << ',' << r.rho << ',' << r.rho_trunc << ',' << r.diff << ','
       << r.diff_stderr << ',' << r.bound << ',' << r.reference << ',' << r.extra << ','
       << r.extra_bound << '\n';
}

namespace {

// One truncated variant: which samples belong to its invariant measure and how it flows.
struct Variant {
  SuspensionFlow flow;
  std::function<bool(const FlowPoint&)> member;
};

struct CoupledResult {
  Moments full;
  std::vector<Moments> part;
  std::vector<std::vector<double>> diff_batches;  // [variant * T + i][batch]
  std::vector<double> full_batches_unused;
};

CoupledResult run_coupled(const SuspensionFlow& base, const std::vector<Variant>& variants,
                          const Observable& v, const Observable& w,
                          const std::vector<double>& t_grid, std::size_t n,
                          std::uint64_t seed, int threads) {
  if (n < 100) throw ParameterError("truncation experiment: n_samples < 100");
  const std::size_t T = t_grid.size(), V = variants.size();
  const auto ord = time_order(t_grid);
  const std::size_t bs = stat_batch_size(n);
  const std::size_t B = (n + bs - 1) / bs;
  std::vector<Moments> full_b(B, Moments(T));
  std::vector<std::vector<Moments>> part_b(B, std::vector<Moments>(V, Moments(T)));
  parallel_for(B, threads, [&](std::size_t b) {
    std::mt19937_64 rng(mix_seed(seed, b));
    std::vector<double> wv(T), wt(T);
    for (std::size_t i = b * bs; i < std::min(n, (b + 1) * bs); ++i) {
      FlowPoint p = base.draw(rng);
      double vv = v(p, base.h(p));
      orbit_values(base, w, p, t_grid, ord, wv);
      Moments& f = full_b[b];
      f.n += 1.0;
      f.sv += vv;
      for (std::size_t k = 0; k < T; ++k) {
        f.sw[k] += wv[k];
        f.svw[k] += vv * wv[k];
      }
      for (std::size_t j = 0; j < V; ++j) {
        if (!variants[j].member(p)) continue;
        const SuspensionFlow& fl = variants[j].flow;
        double vt = v(p, fl.h(p));
        orbit_values(fl, w, p, t_grid, ord, wt);
        Moments& m = part_b[b][j];
        m.n += 1.0;
        m.sv += vt;
        for (std::size_t k = 0; k < T; ++k) {
          m.sw[k] += wt[k];
          m.svw[k] += vt * wt[k];
        }
      }
    }
  });
  CoupledResult res;
  res.full = Moments(T);
  res.part.assign(V, Moments(T));
  res.diff_batches.assign(V * T, std::vector<double>(B));
  for (std::size_t b = 0; b < B; ++b) {
    res.full.add(full_b[b]);
    for (std::size_t j = 0; j < V; ++j) {
      res.part[j].add(part_b[b][j]);
      for (std::size_t k = 0; k < T; ++k)
        res.diff_batches[j * T + k][b] = full_b[b].rho(k) - part_b[b][j].rho(k);
    }
  }
  return res;
}

void finish_table(TruncationTable& tab) {
  std::map<double, double> per_n;
  for (const auto& r : tab.rows) {
    if (r.bound <= 0.0) continue;
    double c = std::abs(r.diff) / r.bound;
    tab.fitted_c = std::max(tab.fitted_c, c);
    per_n[r.N] = std::max(per_n[r.N], c);
  }
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (auto& [N, c] : per_n) {
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  tab.c_stability = (lo > 0.0 && std::isfinite(lo)) ? hi / lo : std::numeric_limits<double>::infinity();
  tab.bound_holds = true;
  for (const auto& r : tab.rows)
    if (std::abs(r.diff) - 2.0 * r.diff_stderr > tab.fitted_c * r.bound * (1.0 + 1e-12))
      tab.bound_holds = false;
}

}  // namespace

TruncationTable truncation_error_experiment(std::shared_ptr<const Tower> tower,
                                            const RoofFunction& roof, const Observable& v,
                                            const Observable& w, const std::vector<int>& N_list,
                                            const std::vector<double>& t_grid,
                                            const TruncationOptions& opt) {
  if (!roof.bounded())
    throw ParameterError("truncation_error_experiment: unbounded roof, use roof_truncation_experiment");
  SuspensionFlow base(tower, roof);
  std::vector<Variant> variants;
  for (int N : N_list) {
    if (N < 1) throw ParameterError("truncation_error_experiment: N must be >= 1");
    FlowOptions fo;
    fo.tower_cap = N;
    variants.push_back(Variant{base.with_options(fo), [N](const FlowPoint& p) { return p.level < N; }});
  }
  auto res = run_coupled(base, variants, v, w, t_grid, opt.n_samples, opt.seed, opt.threads);
  const InducedMap& ind = tower->induced();
  const double beta = ind.map().beta();
  TruncationTable tab;
  for (std::size_t j = 0; j < N_list.size(); ++j) {
    TruncatedTower tt(tower, N_list[j]);
    const double N = N_list[j];
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
      TruncationRow row;
      row.N = N;
      row.t = t_grid[k];
      row.rho = res.full.rho(k);
      row.rho_trunc = res.part[j].rho(k);
      row.diff = row.rho - row.rho_trunc;
      row.diff_stderr = batch_stderr(res.diff_batches[j * t_grid.size() + k]);
      row.bound = tt.tail_sum() + (N + row.t) * tt.mu_at_least_N();
      double lg = std::pow(std::log(N), opt.gamma);
      row.reference = std::isfinite(beta)
                          ? lg * std::pow(N, -beta) + row.t * lg * std::pow(N, -(beta + 1.0))
                          : 0.0;
      tab.rows.push_back(row);
    }
  }
  finish_table(tab);
  return tab;
}

TruncationTable roof_truncation_experiment(std::shared_ptr<const Tower> tower,
                                           const RoofFunction& roof, const Observable& v,
                                           const Observable& w, const std::vector<int>& N_list,
                                           const std::vector<double>& t_grid,
                                           const TruncationOptions& opt) {
  if (roof.bounded())
    throw ParameterError("roof_truncation_experiment: bounded roof, use truncation_error_experiment");
  SuspensionFlow base(tower, roof);
  std::vector<Variant> variants;
  std::vector<int> rcaps;
  for (int N : N_list) {
    if (N < 2) throw ParameterError("roof_truncation_experiment: N must be >= 2");
    FlowOptions fo;
    fo.roof_cap = N;
    auto fl = base.with_options(fo);
    variants.push_back(Variant{fl, [fl](const FlowPoint& p) { return p.u < fl.h(p); }});
  }
  for (int N : N_list) {
    // Second truncation r' = min{r, [q ln N]} on top of h' = min{h, N}.
    int rc = std::max(1, static_cast<int>(std::floor(opt.q * std::log(N))));
    rcaps.push_back(rc);
    FlowOptions fo;
    fo.roof_cap = N;
    fo.tower_cap = rc;
    auto fl = base.with_options(fo);
    variants.push_back(
        Variant{fl, [fl, rc](const FlowPoint& p) { return p.u < fl.h(p) && p.level < rc; }});
  }
  auto res = run_coupled(base, variants, v, w, t_grid, opt.n_samples, opt.seed, opt.threads);
  const double beta = roof.declared_beta();
  const InducedMap& ind = tower->induced();
  // Exponential rate c of mu(r > n); infinite when r is bounded.
  double c_rate = std::numeric_limits<double>::infinity();
  if (ind.has_tail()) {
    c_rate = std::log(2.0);
  }
  const std::size_t T = t_grid.size(), V1 = N_list.size();
  TruncationTable tab;
  for (std::size_t j = 0; j < V1; ++j) {
    const double N = N_list[j];
    for (std::size_t k = 0; k < T; ++k) {
      TruncationRow row;
      row.N = N;
      row.t = t_grid[k];
      row.rho = res.full.rho(k);
      row.rho_trunc = res.part[j].rho(k);
      row.diff = row.rho - row.rho_trunc;
      row.diff_stderr = batch_stderr(res.diff_batches[j * T + k]);
      row.bound = std::pow(N, -beta) + row.t * std::pow(N, -(beta + 1.0));
      row.reference = row.bound;
      row.extra = res.part[j].rho(k) - res.part[V1 + j].rho(k);
      row.extra_bound = std::isfinite(c_rate) ? row.t * std::pow(N, -(c_rate * opt.q - 1.0)) : 0.0;
      tab.rows.push_back(row);
    }
  }
  finish_table(tab);
  return tab;
}

EkkResult ekk_measure(const SuspensionFlow& flow, double N, int k, std::size_t n,
                      std::uint64_t seed) {
  const InducedMap& ind = flow.tower().induced();
  if (!(ind.map().kind() == MapKind::Doubling && flow.tower().max_height() == 1))
    throw ParameterError("ekk_measure: needs a single-level tower with Lebesgue base measure");
  if (k < 1 || n < 1) throw ParameterError("ekk_measure: need k >= 1 and n >= 1");
  const RoofFunction& h = flow.roof();
  auto pts = flow.sample(seed, n);
  std::size_t hits = 0;
  for (FlowPoint p : pts) {
    bool hit = h(p.px) > N;
    double remaining = k;
    while (!hit) {
      double to_top = flow.h(p) - p.u;
      if (to_top > remaining) break;
      remaining -= to_top;
      p = flow.next_base(p);
      hit = h(p.px) > N;
    }
    if (hit) ++hits;
  }
  EkkResult res;
  const double nn = static_cast<double>(n);
  res.measured = hits / nn;
  res.stderr_ = std::sqrt(res.measured * (1.0 - res.measured) / nn);
  const double hbar = h.integral(0.0, 1.0);
  res.bound = h.level_set_integral(N) / hbar + k * h.level_set_measure(N) / hbar;
  return res;
}

// ---------------------------------------------------------------------------
// Buffer modification

namespace {

// Polynomial step with S(0)=0, S(1)=1 and derivatives 1..m vanishing at both ends.
double smoothstep(int m, double s) {
  s = std::clamp(s, 0.0, 1.0);
  double acc = 0.0;
  for (int k = 0; k <= m; ++k) {
    double c = std::tgamma(m + k + 1.0) / (std::tgamma(k + 1.0) * std::tgamma(m + 1.0)) *
               std::tgamma(2.0 * m + 2.0) /
               (std::tgamma(m - k + 1.0) * std::tgamma(m + k + 2.0));
    acc += c * std::pow(-s, k);
  }
  return acc * std::pow(s, m + 1);
}

}  // namespace

Observable buffer_modify(const Observable& v, const SuspensionFlow& truncated,
                         BufferReport* report, double min_window) {
  const int N = truncated.options().tower_cap;
  if (N < 1) throw ParameterError("buffer_modify: flow must be tower-truncated");
  constexpr double frac = 0.25;
  const bool widened = frac * truncated.roof().inf() < min_window;
  Observable out;
  out.name = v.name + "~";
  out.m = v.m;
  out.f = v.f;
  out.du = nullptr;
  auto fl = std::make_shared<SuspensionFlow>(truncated);
  const MapModel* T = &truncated.tower().induced().map();
  const InducedMap* ind = &truncated.tower().induced();
  out.state_f = [v, fl, N, frac, min_window, T, ind](const FlowPoint& p, double h) -> double {
    const double base = v(p, h);
    double h_top, to_top;
    FlowPoint top = p;
    if (p.level == N - 1) {
      h_top = h;
      to_top = h - p.u;
    } else if (p.level == N - 2 && N >= 2) {
      double x = (*T)(p.px);
      if (x >= ind->y_lo() && x <= ind->y_hi()) return base;  // column ends below the strip
      h_top = fl->h_at(x);
      to_top = (h - p.u) + h_top;
      top.level = N - 1;
      top.px = x;
    } else {
      return base;
    }
    const double W = std::max(frac * h_top, min_window);
    if (to_top > W) return base;
    // Add sum_k (d_k(q) - d_k(top)) (u - h)^k / k! so that the u-derivatives at the roof
    // equal those of v at the new base point. Values are left as they are.
    FlowPoint q = fl->next_base(top);
    const double hq = fl->h(q);
    double corr = 0.0, fact = 1.0, pw = 1.0;
    for (int k = 1; k <= v.m; ++k) {
      fact *= k;
      pw *= -to_top;
      double jump = v.derivative(k, q.px, 0.0, hq) - v.derivative(k, top.px, h_top, h_top);
      corr += jump * pw / fact;
    }
    return base + smoothstep(v.m, 1.0 - to_top / W) * corr;
  };

  if (report) {
    report->widened = widened;
    report->window = frac;
    const Tower& tw = truncated.tower();
    TruncatedTower tt(truncated.tower_ptr(), N);
    double hbar_t = 0.0, strip = 0.0;
    for (std::size_t j = 0; j < tw.size(); ++j) {
      const Column& c = tw.columns()[j];
      const int rr = std::min(c.r, N);
      auto means = level_means(*T, c, truncated.roof(), rr, truncated.options().roof_cap);
      for (double m : means) hbar_t += c.mu * m;
      if (c.r >= N) strip += c.mu * std::max(frac * means.back(), std::min(min_window, means.back()));
    }
    report->region_measure = strip / hbar_t;
    // Sampled flow-direction derivative norms near the top of the strip.
    double nv = 0.0, nt = 0.0;
    int probes = 0;
    for (std::size_t j = 0; j < tw.size() && probes < 12; ++j) {
      const Column& c = tw.columns()[j];
      if (c.r < N) continue;
      ++probes;
      FlowPoint p = truncated.make_point(0.5 * (c.left + c.right), N - 1, 0.0);
      const double h = truncated.h(p);
      const double e = 1e-4 * h;
      std::vector<double> sv(v.m + 1, 0.0), st(v.m + 1, 0.0);
      for (int g = 1; g < 40; ++g) {
        double u = h * (0.5 + 0.5 * g / 40.0);
        auto eval = [&](const Observable& o, double uu) {
          FlowPoint z = p;
          z.u = uu;
          return o(z, h);
        };
        for (int k = 0; k <= v.m; ++k) {
          double dv = 0.0, dt = 0.0, binom = 1.0;
          for (int i = 0; i <= k; ++i) {
            double sign = (i % 2 == 0) ? 1.0 : -1.0;
            double uu = u + (0.5 * k - i) * e;
            dv += sign * binom * eval(v, uu);
            dt += sign * binom * eval(out, std::min(uu, h * (1.0 - 1e-12)));
            binom = binom * (k - i) / (i + 1);
          }
          sv[k] = std::max(sv[k], std::abs(dv) / std::pow(e, k));
          st[k] = std::max(st[k], std::abs(dt) / std::pow(e, k));
        }
      }
      for (int k = 0; k <= v.m; ++k) {
        nv = std::max(nv, sv[k]);
        nt = std::max(nt, st[k]);
      }
    }
    report->norm_ratio = nv > 0.0 ? nt / nv : 1.0;
  }
  return out;
}

// ---------------------------------------------------------------------------

DecayFit fit_decay(const CorrelationSeries& s, double t_lo, double t_hi, bool fit_gamma) {
  std::vector<double> lt, lr;
  std::size_t noisy = 0, total = 0;
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    if (s.t[i] < t_lo || s.t[i] > t_hi || s.t[i] <= 1.0) continue;
    ++total;
    double se = i < s.stderr_.size() ? s.stderr_[i] : 0.0;
    if (!(std::abs(s.rho[i]) > 3.0 * se) || s.rho[i] == 0.0) {
      ++noisy;
      continue;
    }
    lt.push_back(std::log(s.t[i]));
    lr.push_back(std::log(std::abs(s.rho[i])));
  }
  if (noisy > 0)
    throw ParameterError("fit_decay: window dominated by noise (" + std::to_string(noisy) + " of " +
                         std::to_string(total) + " points within 3 standard errors of 0)");
  const int cols = fit_gamma ? 3 : 2;
  if (static_cast<int>(lt.size()) < cols + 1)
    throw ParameterError("fit_decay: too few points in window");
  MatD X(lt.size(), cols);
  VecD y(lt.size());
  for (std::size_t i = 0; i < lt.size(); ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = lt[i];
    if (fit_gamma) X(i, 2) = std::log(lt[i]);
    y(i) = lr[i];
  }
  DecayFit fit;
  VecD se;
  VecD c = least_squares(X, y, &fit.residual, &se);
  fit.beta = -c(1);
  fit.beta_ci = 1.96 * se(1);
  if (fit_gamma) {
    fit.gamma = c(2);
    fit.gamma_ci = 1.96 * se(2);
  }
  return fit;
}

}  // namespace semiflow
