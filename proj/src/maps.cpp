#include "semiflow/maps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

namespace semiflow {

// ---------------------------------------------------------------------------
// MapModel

double pm_left_inverse(double alpha, double y) {
  if (y <= 0.0) return 0.0;
  const double c = std::pow(2.0, alpha);
  auto f = [&](double x) { return x * (1.0 + c * std::pow(x, alpha)) - y; };
  auto df = [&](double x) { return 1.0 + (1.0 + alpha) * c * std::pow(x, alpha); };
  // T x >= x gives x <= y; x^a <= y^a gives x >= y / (1 + c y^a).
  double lo = y / (1.0 + c * std::pow(y, alpha));
  double hi = std::min(y, 0.5);
  if (lo > hi) lo = hi;
  for (int i = 0; i < 8; ++i) {
    double mid = 0.5 * (lo + hi);
    if (f(mid) > 0.0) hi = mid; else lo = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 200; ++i) {
    double fx = f(x);
    if (fx == 0.0) return x;
    if (fx > 0.0) hi = std::min(hi, x); else lo = std::max(lo, x);
    double nx = x - fx / df(x);
    bool newton = nx > lo && nx < hi;
    if (!newton) nx = 0.5 * (lo + hi);
    if (std::abs(nx - x) <= 1e-16 * nx || hi - lo <= 1e-16 * hi) return nx;
    x = nx;
  }
  return x;
}

MapModel MapModel::doubling() {
  MapModel m;
  m.kind_ = MapKind::Doubling;
  m.eta_ = 1.0;
  m.distortion_c_ = 1.0;
  m.branches_.push_back(Branch{0.0, 0.5, [](double x) { return 2.0 * x; },
                               [](double y) { return 0.5 * y; }, [](double) { return 2.0; }});
  m.branches_.push_back(Branch{0.5, 1.0, [](double x) { return 2.0 * x - 1.0; },
                               [](double y) { return 0.5 * (y + 1.0); },
                               [](double) { return 2.0; }});
  return m;
}

MapModel MapModel::pomeau_manneville(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ParameterError("Pomeau-Manneville parameter alpha must lie in (0,1)");
  MapModel m;
  m.kind_ = MapKind::PomeauManneville;
  m.alpha_ = alpha;
  m.eta_ = 1.0;
  m.distortion_c_ = 10.0;
  m.indifferent_ = true;
  const double c = std::pow(2.0, alpha);
  m.branches_.push_back(Branch{
      0.0, 0.5, [alpha, c](double x) { return x * (1.0 + c * std::pow(x, alpha)); },
      [alpha](double y) { return pm_left_inverse(alpha, y); },
      [alpha, c](double x) { return 1.0 + (1.0 + alpha) * c * std::pow(x, alpha); }});
  m.branches_.push_back(Branch{0.5, 1.0, [](double x) { return 2.0 * x - 1.0; },
                               [](double y) { return 0.5 * (y + 1.0); },
                               [](double) { return 2.0; }});
  return m;
}

std::size_t MapModel::branch_index(double x) const {
  for (std::size_t i = branches_.size(); i-- > 0;)
    if (x >= branches_[i].lo) return i;
  return 0;
}

double MapModel::operator()(double x) const { return branches_[branch_index(x)].forward(x); }

double MapModel::derivative(double x) const {
  return branches_[branch_index(x)].derivative(x);
}

double MapModel::beta() const {
  if (kind_ == MapKind::PomeauManneville) return 1.0 / alpha_ - 1.0;
  return std::numeric_limits<double>::infinity();
}

std::string MapModel::name() const {
  if (kind_ == MapKind::Doubling) return "doubling";
  std::ostringstream os;
  os << "pm(alpha=" << alpha_ << ")";
  return os.str();
}

double MapModel::inverse_consistency_error(int grid) const {
  double err = 0.0;
  for (const auto& b : branches_) {
    for (int k = 1; k < grid; ++k) {
      double x = b.lo + (b.hi - b.lo) * k / grid;
      err = std::max(err, std::abs(b.inverse(b.forward(x)) - x));
    }
  }
  return err;
}

double evaluate(const MapModel& map, double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("evaluate: x outside [0,1]");
  return map(x);
}

// ---------------------------------------------------------------------------
// InducedMap

double InducedMap::complement_inverse(double y) const {
  return map_->branches()[*outer_branch_].inverse(y);
}

double InducedMap::forward(std::size_t j, double y) const {
  const Cell& c = cells_.at(j);
  const auto& br = map_->branches();
  double x = br[c.outer_branch].forward(y);
  for (int k = 1; k < c.r; ++k) x = br[*outer_branch_].forward(x);
  return x;
}

double InducedMap::inverse(std::size_t j, double y) const {
  const Cell& c = cells_.at(j);
  double x = y;
  for (int k = 1; k < c.r; ++k) x = complement_inverse(x);
  return map_->branches()[c.outer_branch].inverse(x);
}

std::vector<std::vector<double>> InducedMap::preimages(const std::vector<double>& ys) const {
  std::vector<std::vector<double>> out(cells_.size(), std::vector<double>(ys.size()));
  const auto& br = map_->branches();
  if (!outer_branch_) {
    for (std::size_t j = 0; j < cells_.size(); ++j)
      for (std::size_t k = 0; k < ys.size(); ++k)
        out[j][k] = br[cells_[j].outer_branch].inverse(ys[k]);
    return out;
  }
  // Cells are ordered by return time n = 1..J with a single outer branch.
  std::vector<double> chain = ys;
  for (std::size_t j = 0; j < cells_.size(); ++j) {
    if (j > 0)
      for (double& x : chain) x = complement_inverse(x);
    for (std::size_t k = 0; k < ys.size(); ++k)
      out[j][k] = br[cells_[j].outer_branch].inverse(chain[k]);
  }
  return out;
}

std::vector<double> InducedMap::preimages(double y) const {
  auto all = preimages(std::vector<double>{y});
  std::vector<double> out(all.size());
  for (std::size_t j = 0; j < all.size(); ++j) out[j] = all[j][0];
  return out;
}

double InducedMap::forward_derivative(std::size_t j, double y) const {
  const Cell& c = cells_.at(j);
  const auto& br = map_->branches();
  double d = br[c.outer_branch].derivative(y);
  double x = br[c.outer_branch].forward(y);
  for (int k = 1; k < c.r; ++k) {
    d *= br[*outer_branch_].derivative(x);
    x = br[*outer_branch_].forward(x);
  }
  return d;
}

std::optional<std::size_t> InducedMap::find_cell(double y) const {
  if (!outer_branch_) {
    for (std::size_t j = 0; j < cells_.size(); ++j)
      if (y >= cells_[j].left && (y < cells_[j].right || j + 1 == cells_.size())) return j;
    return std::nullopt;
  }
  // Single outer branch: cells move monotonically with n. Orientation from the first two.
  bool decreasing = cells_.size() < 2 || cells_[1].left < cells_[0].left;
  std::size_t lo = 0, hi = cells_.size();
  while (lo < hi) {
    std::size_t mid = (lo + hi) / 2;
    const Cell& c = cells_[mid];
    bool inside = y >= c.left && (y < c.right || (mid == 0 && y <= c.right));
    if (inside) return mid;
    bool go_right = decreasing ? (y < c.left) : (y >= c.right);
    if (go_right) lo = mid + 1; else hi = mid;
  }
  return std::nullopt;
}

int InducedMap::return_time(double y, int max_iter) const {
  double x = (*map_)(y);
  int r = 1;
  while (!(x >= y_lo_ && x <= y_hi_)) {
    x = (*map_)(x);
    if (++r > max_iter) throw NumericError("return_time: no return", x);
  }
  return r;
}

double InducedMap::first_return(double y) const {
  double x = (*map_)(y);
  while (!(x >= y_lo_ && x <= y_hi_)) x = (*map_)(x);
  return x;
}

InducedMap::TailSplit InducedMap::tail_at_least(long n) const {
  TailSplit t;
  auto it = std::lower_bound(explicit_suffix_.begin(), explicit_suffix_.end(), n,
                             [](const std::pair<long, double>& e, long v) { return e.first < v; });
  if (it != explicit_suffix_.end()) t.explicit_part = it->second;
  t.extrapolated_part = extrapolated_at_least(n);
  return t;
}

double InducedMap::extrapolated_at_least(long n) const {
  if (beyond_mass_ <= 0.0) return 0.0;
  long last = tail_columns_.empty() ? cutoff_ : tail_columns_.back().r;
  if (n <= last + 1) return beyond_mass_;
  return beyond_mass_ * std::pow(static_cast<double>(n - 1) / last, -tail_exponent_);
}

InductionCheck InducedMap::check_conditions(int pairs_per_cell, std::uint64_t seed) const {
  InductionCheck chk;
  chk.expansion_min = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto& br = map_->branches();
  const double eta = map_->eta();
  double total = tail_mass() ;
  for (const Cell& c : cells_) total += c.mu;
  chk.mass_defect = std::abs(total - 1.0);
  for (std::size_t j = 0; j < cells_.size(); ++j) {
    const Cell& c = cells_[j];
    // Compared in the preimage: forward iteration amplifies rounding by |F'|.
    double a = inverse(j, y_lo_), b = inverse(j, y_hi_);
    chk.bijection_error = std::max({chk.bijection_error, std::abs(std::min(a, b) - c.left),
                                    std::abs(std::max(a, b) - c.right)});
    for (int p = 0; p < pairs_per_cell; ++p) {
      double x = c.left + unif(rng) * c.width();
      double y = c.left + unif(rng) * c.width();
      if (x == y) continue;
      double fx = x, fy = y;
      std::vector<double> dist_levels;
      dist_levels.reserve(c.r);
      for (int l = 0; l < c.r; ++l) {
        dist_levels.push_back(std::abs(fx - fy));
        std::size_t b = (l == 0) ? static_cast<std::size_t>(c.outer_branch) : *outer_branch_;
        fx = br[b].forward(fx);
        fy = br[b].forward(fy);
      }
      double dF = std::abs(fx - fy);
      chk.expansion_min = std::min(chk.expansion_min, dF / std::abs(x - y));
      for (double d : dist_levels) chk.backward_constant = std::max(chk.backward_constant, d / dF);
      // Distortion of g_j = |(F_j^{-1})'| between two points of Y.
      double u = y_lo_ + unif(rng) * (y_hi_ - y_lo_);
      double v = y_lo_ + unif(rng) * (y_hi_ - y_lo_);
      if (u == v) continue;
      double lu = -std::log(forward_derivative(j, inverse(j, u)));
      double lv = -std::log(forward_derivative(j, inverse(j, v)));
      chk.distortion_constant =
          std::max(chk.distortion_constant, std::abs(lu - lv) / std::pow(std::abs(u - v), eta));
    }
  }
  return chk;
}

void InducedMap::write_csv(std::ostream& os) const {
  os << "j,r,left,right,mu\n";
  os.precision(17);
  for (std::size_t j = 0; j < cells_.size(); ++j) {
    const Cell& c = cells_[j];
    os << j + 1 << ',' << c.r << ',' << c.left << ',' << c.right << ',' << c.mu << '\n';
  }
  if (has_tail_)
    os << "tail," << tail_.r << ',' << tail_.left << ',' << tail_.right << ',' << tail_.mu
       << '\n';
}

InducedMap induce(std::shared_ptr<const MapModel> map, double y_lo, double y_hi, int cutoff,
                  long tail_horizon, double declared_exponent, double declared_gamma) {
  if (!(y_lo < y_hi) || y_lo < 0.0 || y_hi > 1.0)
    throw ConstructionError("induce: base interval must satisfy 0 <= lo < hi <= 1");
  if (cutoff < 1) throw ParameterError("induce: branch cutoff must be >= 1");
  InducedMap ind;
  ind.map_ = map;
  ind.y_lo_ = y_lo;
  ind.y_hi_ = y_hi;
  ind.cutoff_ = cutoff;
  ind.gamma_ = declared_gamma;
  const auto& br = map->branches();
  constexpr double tol = 1e-14;

  double covered = 0.0;
  std::vector<std::size_t> outside;
  for (std::size_t b = 0; b < br.size(); ++b) {
    bool inside = br[b].lo >= y_lo - tol && br[b].hi <= y_hi + tol;
    bool disjoint = br[b].hi <= y_lo + tol || br[b].lo >= y_hi - tol;
    if (inside) {
      ind.y_branches_.push_back(b);
      covered += br[b].hi - br[b].lo;
    } else if (disjoint) {
      outside.push_back(b);
    } else {
      throw ConstructionError("induce: base is not a union of branch domains (non-Markov)");
    }
  }
  if (std::abs(covered - (y_hi - y_lo)) > 1e-12)
    throw ConstructionError("induce: branch domains do not cover the base");
  for (std::size_t b : ind.y_branches_) {
    if (std::abs(br[b].forward(br[b].lo)) > 1e-12 || std::abs(br[b].forward(br[b].hi) - 1.0) > 1e-12)
      throw ConstructionError("induce: base branch is not full (image is not [0,1])");
  }
  if (outside.size() > 1)
    throw ConstructionError("induce: more than one branch outside the base is unsupported");
  if (!outside.empty()) {
    if (ind.y_branches_.size() != 1)
      throw ConstructionError("induce: a complement branch requires a single base branch");
    const Branch& c = br[outside[0]];
    if (c.forward(c.lo) > y_lo + tol || c.forward(c.hi) < y_hi - tol)
      throw ConstructionError("induce: complement branch image does not cover the base");
    ind.outer_branch_ = outside[0];
  }

  if (!ind.outer_branch_) {
    for (std::size_t b : ind.y_branches_)
      ind.cells_.push_back(Cell{1, br[b].lo, br[b].hi, 0.0, static_cast<int>(b)});
    ind.cutoff_ = 1;
    ind.has_tail_ = false;
  } else {
    const std::size_t b = ind.y_branches_[0];
    const std::size_t cb = *ind.outer_branch_;
    const long horizon = std::max<long>(tail_horizon, cutoff);
    // A_n = c^{-(n-1)}[y_lo, y_hi); cell n = b^{-1}(A_n).
    double alo = y_lo, ahi = y_hi;
    for (long n = 1; n <= horizon; ++n) {
      if (n > 1) {
        alo = br[cb].inverse(alo);
        ahi = br[cb].inverse(ahi);
      }
      double p = br[b].inverse(alo), q = br[b].inverse(ahi);
      double left = std::min(p, q), right = std::max(p, q);
      if (n <= cutoff) {
        ind.cells_.push_back(Cell{static_cast<int>(n), left, right, 0.0, static_cast<int>(b)});
      } else {
        ind.tail_columns_.push_back(TailColumn{static_cast<int>(n), right - left, 0.0, left, right});
      }
    }
    // Fixed point of the complement branch bounds the tail region.
    double fix = (br[cb].forward(br[cb].lo) == br[cb].lo) ? br[cb].lo : br[cb].hi;
    double edge = br[b].inverse(fix);
    const Cell& last = ind.cells_.back();
    bool decreasing = ind.cells_.size() < 2 || ind.cells_[1].left < ind.cells_[0].left;
    ind.has_tail_ = true;
    ind.tail_.r = cutoff + 1;
    ind.tail_.outer_branch = static_cast<int>(b);
    ind.tail_.left = decreasing ? edge : last.right;
    ind.tail_.right = decreasing ? last.left : edge;
    ind.tail_exponent_ =
        declared_exponent > 0.0 ? declared_exponent
                                : (map->kind() == MapKind::PomeauManneville ? 1.0 / map->alpha()
                                                                            : 0.0);
    if (ind.tail_exponent_ <= 1.0)
      throw ConstructionError("induce: declared tail exponent must exceed 1 (r in L^1)");
  }

  // Ulam matrix on represented cells + tail.
  const std::size_t J = ind.cells_.size();
  const std::size_t M = J + (ind.has_tail_ ? 1 : 0);
  std::vector<double> lefts(M), rights(M);
  for (std::size_t i = 0; i < J; ++i) {
    lefts[i] = ind.cells_[i].left;
    rights[i] = ind.cells_[i].right;
  }
  if (ind.has_tail_) {
    lefts[J] = ind.tail_.left;
    rights[J] = ind.tail_.right;
  }
  std::vector<double> pts;
  pts.reserve(2 * M);
  for (std::size_t i = 0; i < M; ++i) {
    pts.push_back(lefts[i]);
    pts.push_back(rights[i]);
  }
  auto pre = ind.preimages(pts);
  ind.ulam_ = MatD::Zero(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(M));
  for (std::size_t j = 0; j < J; ++j) {
    const double w = ind.cells_[j].width();
    for (std::size_t i = 0; i < M; ++i)
      ind.ulam_(i, j) = std::abs(pre[j][2 * i + 1] - pre[j][2 * i]) / w;
  }
  if (ind.has_tail_) ind.ulam_.col(J) = ind.ulam_.col(J - 1);
  // Renormalize columns against rounding so the chain is exactly stochastic.
  for (std::size_t j = 0; j < M; ++j) ind.ulam_.col(j) /= ind.ulam_.col(j).sum();

  VecD mu(M);
  for (std::size_t i = 0; i < M; ++i) mu(i) = rights[i] - lefts[i];
  mu /= mu.sum();
  double resid = 1.0;
  for (int it = 0; it < 200000 && resid > 1e-15; ++it) {
    VecD next = ind.ulam_ * mu;
    next /= next.sum();
    resid = (next - mu).lpNorm<1>();
    mu = next;
  }
  if (resid > 1e-13) throw NumericError("induce: invariant measure fixed point not converged", resid);
  for (std::size_t i = 0; i < J; ++i) ind.cells_[i].mu = mu(i);

  double rbar = 0.0;
  for (const Cell& c : ind.cells_) rbar += c.r * c.mu;
  if (ind.has_tail_) {
    ind.tail_.mu = mu(J);
    const double density = ind.tail_.mu / ind.tail_.width();
    double used = 0.0;
    for (TailColumn& c : ind.tail_columns_) {
      c.mu = density * c.width;
      used += c.mu;
      rbar += c.r * c.mu;
    }
    ind.beyond_mass_ = std::max(0.0, ind.tail_.mu - used);
    long last = ind.tail_columns_.empty() ? cutoff : ind.tail_columns_.back().r;
    // sum_{n >= 1} mu(r >= n) restricted to the power-law region.
    rbar += ind.beyond_mass_ * ((last + 1) + last / (ind.tail_exponent_ - 1.0));
  }
  ind.rbar_ = rbar;
  std::vector<std::pair<long, double>> col;
  for (const Cell& c : ind.cells_) col.emplace_back(c.r, c.mu);
  for (const TailColumn& c : ind.tail_columns_) col.emplace_back(c.r, c.mu);
  std::sort(col.begin(), col.end());
  double acc = 0.0;
  for (std::size_t i = col.size(); i-- > 0;) {
    acc += col[i].second;
    if (i + 1 < col.size() && col[i + 1].first == col[i].first) {
      ind.explicit_suffix_.back().second = acc;
      continue;
    }
    ind.explicit_suffix_.emplace_back(col[i].first, acc);
  }
  std::reverse(ind.explicit_suffix_.begin(), ind.explicit_suffix_.end());
  return ind;
}

InducedMap induce_doubling() {
  return induce(std::make_shared<MapModel>(MapModel::doubling()), 0.0, 1.0, 1);
}

InducedMap induce_pm(double alpha, int cutoff, long tail_horizon) {
  return induce(std::make_shared<MapModel>(MapModel::pomeau_manneville(alpha)), 0.5, 1.0, cutoff,
                tail_horizon);
}

TailValue return_time_tail(const InducedMap& ind, long n) {
  if (n < 1) throw ParameterError("return_time_tail: n must be >= 1");
  auto t = ind.tail_at_least(n + 1);
  return TailValue{t.explicit_part, t.extrapolated_part};
}

TailFit fit_tail_exponent(const InducedMap& ind, long n_min, long n_max, bool fit_gamma) {
  if (n_min < 1 || n_max < 4 * n_min)
    throw ParameterError("fit_tail_exponent: need n_max >= 4 n_min >= 4");
  TailFit fit;
  const int pts = 48;
  std::vector<double> ln_n, ln_t;
  for (int k = 0; k < pts; ++k) {
    double x = std::log(static_cast<double>(n_min)) +
               (std::log(static_cast<double>(n_max)) - std::log(static_cast<double>(n_min))) * k /
                   (pts - 1);
    long n = std::lround(std::exp(x));
    double t = return_time_tail(ind, n).value();
    if (t > 0.0) {
      ln_n.push_back(std::log(static_cast<double>(n)));
      ln_t.push_back(std::log(t));
    }
  }
  if (ln_n.size() < 3) {
    fit.exponential = true;
    return fit;
  }
  const int cols = fit_gamma ? 3 : 2;
  MatD X(ln_n.size(), cols);
  VecD y(ln_n.size());
  for (std::size_t i = 0; i < ln_n.size(); ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = ln_n[i];
    if (fit_gamma) X(i, 2) = std::log(ln_n[i]);
    y(i) = ln_t[i];
  }
  VecD c = least_squares(X, y, &fit.residual);
  fit.exponent = -c(1);
  fit.gamma = fit_gamma ? c(2) : 0.0;
  return fit;
}

}  // namespace semiflow
