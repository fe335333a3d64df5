#include "semiflow/tower.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

namespace semiflow {

Tower::Tower(std::shared_ptr<const InducedMap> ind, double theta)
    : ind_(std::move(ind)), theta_(theta) {
  if (!(theta > 0.0 && theta < 1.0)) throw ParameterError("tower: theta must lie in (0,1)");
  if (!ind_) throw ParameterError("tower: null induced map");
  const std::size_t J = ind_->size();
  for (std::size_t j = 0; j < J; ++j) {
    const Cell& c = ind_->cells()[j];
    columns_.push_back(Column{c.r, c.mu, c.left, c.right, j});
  }
  for (const TailColumn& t : ind_->tail_columns())
    columns_.push_back(Column{t.r, t.mu, t.left, t.right, J});
  for (const Column& c : columns_) {
    rbar_rep_ += c.r * c.mu;
    max_r_ = std::max(max_r_, c.r);
  }
  by_position_.resize(columns_.size());
  for (std::size_t i = 0; i < columns_.size(); ++i) by_position_[i] = i;
  std::sort(by_position_.begin(), by_position_.end(),
            [&](std::size_t a, std::size_t b) { return columns_[a].left < columns_[b].left; });
}

std::optional<std::size_t> Tower::find_column(double y) const {
  auto it = std::upper_bound(by_position_.begin(), by_position_.end(), y,
                             [&](double v, std::size_t i) { return v < columns_[i].left; });
  if (it == by_position_.begin()) return std::nullopt;
  std::size_t j = *std::prev(it);
  const Column& c = columns_[j];
  if (y < c.right || (y == c.right && c.right == ind_->y_hi())) return j;
  return std::nullopt;
}

TowerPoint Tower::lift(double y, int level) const {
  auto j = find_column(y);
  if (!j) throw DomainError("tower: base point lies in the unstored tail region");
  if (level < 0 || level >= columns_[*j].r) throw DomainError("tower: level outside column");
  return TowerPoint{*j, level, y};
}

TowerPoint Tower::f(const TowerPoint& x) const {
  const Column& c = columns_.at(x.column);
  if (x.level + 1 < c.r) return TowerPoint{x.column, x.level + 1, x.y};
  double fy = x.column < ind_->size() ? ind_->forward(x.column, x.y) : ind_->first_return(x.y);
  return lift(std::clamp(fy, ind_->y_lo(), ind_->y_hi()), 0);
}

double Tower::project(const TowerPoint& x) const {
  double p = x.y;
  for (int l = 0; l < x.level; ++l) p = ind_->map()(p);
  return p;
}

std::size_t Tower::cell_id(double y) const {
  if (auto j = find_column(y)) return *j;
  return columns_.size() + static_cast<std::size_t>(ind_->return_time(y));
}

int Tower::separation_time(const TowerPoint& x, const TowerPoint& y, int cap) const {
  if (x.column != y.column || x.level != y.level) return 0;
  if (x.y == y.y) return kInfiniteSeparation;
  double a = x.y, b = y.y;
  for (int n = 1; n <= cap; ++n) {
    a = ind_->first_return(a);
    b = ind_->first_return(b);
    if (a == b) return kInfiniteSeparation;
    if (cell_id(a) != cell_id(b)) return n;
  }
  return kInfiniteSeparation;
}

double Tower::d_theta(const TowerPoint& x, const TowerPoint& y) const {
  int s = separation_time(x, y);
  return s == kInfiniteSeparation ? 0.0 : std::pow(theta_, s);
}

double Tower::invariance_defect() const {
  const MatD& P = ind_->ulam();
  const std::size_t M = static_cast<std::size_t>(P.rows());
  VecD m = VecD::Zero(static_cast<Eigen::Index>(M));
  for (std::size_t j = 0; j < ind_->size(); ++j) m(j) = ind_->cells()[j].mu;
  if (ind_->has_tail()) m(M - 1) = ind_->tail_mass();
  VecD pushed = P * m;
  return (pushed - m).cwiseAbs().maxCoeff() / rbar();
}

double Tower::projection_defect(int samples, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t J = ind_->size();
  double err = 0.0;
  for (int i = 0; i < samples; ++i) {
    std::size_t j = std::min<std::size_t>(J - 1, static_cast<std::size_t>(unif(rng) * J));
    const Column& c = columns_[j];
    int level = std::min(c.r - 1, static_cast<int>(unif(rng) * c.r));
    TowerPoint x{j, level, c.left + unif(rng) * (c.right - c.left)};
    double lhs = project(f(x));
    double rhs = ind_->map()(project(x));
    err = std::max(err, std::abs(lhs - rhs));
  }
  return err;
}

void Tower::write_csv(std::ostream& os, int max_r, int truncation) const {
  double denom = rbar();
  if (truncation > 0) {
    std::shared_ptr<const Tower> self(std::shared_ptr<const Tower>(), this);
    denom = TruncatedTower(self, truncation).rbar_trunc();
  }
  os << "j,l,measure,r,r_trunc,left,right\n";
  os.precision(17);
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    const Column& c = columns_[j];
    if (c.r > max_r) continue;
    int rt = truncation > 0 ? std::min(c.r, truncation) : c.r;
    double a = c.left, b = c.right, m = 0.5 * (c.left + c.right);
    for (int l = 0; l < rt; ++l) {
      os << j << ',' << l << ',' << c.mu / denom << ',' << c.r << ',' << rt << ','
         << std::min(a, b) << ',' << std::max(a, b) << '\n';
      // Endpoints follow the branch used by the interior.
      const Branch& br = ind_->map().branches()[ind_->map().branch_index(m)];
      a = br.forward(a);
      b = br.forward(b);
      m = br.forward(m);
    }
  }
}

double default_theta(const InducedMap& ind) {
  double lambda = ind.check_conditions(20).expansion_min;
  return std::pow(lambda, -ind.map().eta());
}

std::shared_ptr<const Tower> build_tower(std::shared_ptr<const InducedMap> ind, double theta) {
  return std::make_shared<const Tower>(std::move(ind), theta);
}

std::shared_ptr<const Tower> build_tower(std::shared_ptr<const InducedMap> ind) {
  double theta = default_theta(*ind);
  return build_tower(std::move(ind), theta);
}

// ---------------------------------------------------------------------------

TruncatedTower::TruncatedTower(std::shared_ptr<const Tower> tower, int N)
    : tower_(std::move(tower)), N_(N) {
  if (N < 1) throw ParameterError("truncate: N must be >= 1");
  const auto& cols = tower_->columns();
  const int rmax = tower_->max_height();
  std::vector<double> by_r(static_cast<std::size_t>(rmax) + 2, 0.0);
  double right_r = 0.0;
  for (const Column& c : cols) {
    rbar_trunc_rep_ += std::min(c.r, N) * c.mu;
    by_r[static_cast<std::size_t>(c.r)] += c.mu;
    if (c.r >= N) {
      at_least_rep_ += c.mu;
      right_r += c.r * c.mu;
    }
  }
  // sum_{n>N} mu(r >= n), accumulated level by level.
  double suffix = 0.0;
  for (int n = rmax; n > N; --n) {
    suffix += by_r[static_cast<std::size_t>(n)];
    tail_sum_rep_ += suffix;
  }
  const InducedMap& ind = tower_->induced();
  double beyond = 0.0;
  if (ind.beyond_mass() > 0.0) {
    for (long n = 1; n <= N; ++n) beyond += ind.extrapolated_at_least(n);
  }
  rbar_trunc_ = rbar_trunc_rep_ + beyond;
  at_least_full_ = ind.tail_at_least(N).total();
  right_mass_rep_ = right_r / tower_->rbar();
  left_mass_ = (tower_->rbar_represented() - right_r) / tower_->rbar();
}

double TruncatedTower::identity_i_defect() const {
  return std::abs((tower_->rbar_represented() - rbar_trunc_rep_) - tail_sum_rep_);
}

double TruncatedTower::identity_ii_defect() const {
  double rhs = (N_ * at_least_rep_ + tail_sum_rep_) / tower_->rbar();
  return std::abs(right_mass_rep_ - rhs);
}

bool TruncatedTower::same_as(const TruncatedTower& other) const {
  if (tower_->size() != other.tower_->size()) return false;
  for (std::size_t j = 0; j < tower_->size(); ++j)
    if (r_trunc(j) != other.r_trunc(j)) return false;
  return rbar_trunc_ == other.rbar_trunc_;
}

TruncatedTower truncate(std::shared_ptr<const Tower> tower, int N) {
  return TruncatedTower(std::move(tower), N);
}

EkResult ek_measure(const Tower& tower, int N, int k) {
  if (N < 1 || k < 1) throw ParameterError("ek_measure: need N >= 1 and k >= 1");
  TruncatedTower tt(std::shared_ptr<const Tower>(std::shared_ptr<const Tower>(), &tower), N);
  const InducedMap& ind = tower.induced();
  const MatD& P = ind.ulam();
  const auto& cols = tower.columns();
  const double rbar = tower.rbar();
  const std::size_t J = ind.size();
  const Eigen::Index M = P.rows();
  const double tail_mass = ind.tail_mass();

  EkResult res;
  res.g.assign(static_cast<std::size_t>(k) + 1, 0.0);
  res.g[0] = tt.right_mass();

  std::vector<std::size_t> left;
  for (std::size_t j = 0; j < cols.size(); ++j)
    if (cols[j].r < N) left.push_back(j);
  // mass[i][l]: mass at level l of left column left[i] that has stayed in Delta_left.
  std::vector<std::vector<double>> mass(left.size());
  for (std::size_t i = 0; i < left.size(); ++i)
    mass[i].assign(static_cast<std::size_t>(cols[left[i]].r), cols[left[i]].mu / rbar);

  VecD top(M), arrive(M);
  for (int step = 1; step <= k; ++step) {
    top.setZero();
    for (std::size_t i = 0; i < left.size(); ++i) {
      top(static_cast<Eigen::Index>(cols[left[i]].ulam_bin)) += mass[i].back();
      std::rotate(mass[i].rbegin(), mass[i].rbegin() + 1, mass[i].rend());
      mass[i][0] = 0.0;
    }
    arrive = P * top;
    double kept = 0.0;
    for (std::size_t i = 0; i < left.size(); ++i) {
      const Column& c = cols[left[i]];
      double in = left[i] < J ? arrive(static_cast<Eigen::Index>(left[i]))
                              : arrive(M - 1) * c.mu / tail_mass;
      mass[i][0] = in;
      kept += in;
    }
    res.g[static_cast<std::size_t>(step)] = std::max(0.0, arrive.sum() - kept);
  }
  for (double g : res.g) res.measured += g;
  res.bound = (tt.tail_sum() + (N + k) * tt.mu_at_least_N()) / rbar;
  return res;
}

}  // namespace semiflow
