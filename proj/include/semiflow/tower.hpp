#pragma once

#include <iosfwd>
#include <limits>
#include <memory>
#include <vector>

#include "semiflow/maps.hpp"

namespace semiflow {

/// Column of the tower: all levels 0 <= l < r share the base interval [left, right].
struct Column {
  int r = 1;
  double mu = 0.0;  // mu_Y of the base cell
  double left = 0.0;
  double right = 0.0;
  std::size_t ulam_bin = 0;  // row/column of the induced Ulam matrix
  double width() const { return right - left; }
};

/// (y, l) with y in the base of `column` and 0 <= l < r(column).
struct TowerPoint {
  std::size_t column = 0;
  int level = 0;
  double y = 0.0;
};

constexpr int kInfiniteSeparation = std::numeric_limits<int>::max();

/// Young tower over an induced map. Columns are the represented cells followed by the
/// exact-width tail columns; the power-law region beyond the last column is not stored
/// and its mass is reported by excluded_mass().
class Tower {
 public:
  Tower(std::shared_ptr<const InducedMap> ind, double theta);

  const InducedMap& induced() const { return *ind_; }
  std::shared_ptr<const InducedMap> induced_ptr() const { return ind_; }
  double theta() const { return theta_; }
  const std::vector<Column>& columns() const { return columns_; }
  std::size_t size() const { return columns_.size(); }
  int max_height() const { return max_r_; }

  double rbar() const { return ind_->rbar(); }
  /// sum over stored columns of r mu_Y.
  double rbar_represented() const { return rbar_rep_; }
  /// mu_Delta of one cell of column j.
  double cell_measure(std::size_t j) const { return columns_[j].mu / rbar(); }
  /// Sum of all stored cell measures.
  double represented_mass() const { return rbar_rep_ / rbar(); }
  /// Tower mass carried by the unstored region.
  double excluded_mass() const { return 1.0 - represented_mass(); }

  /// Tower column containing base point y, or nullopt in the unstored region.
  std::optional<std::size_t> find_column(double y) const;
  TowerPoint lift(double y, int level) const;

  /// Tower map f.
  TowerPoint f(const TowerPoint& x) const;
  /// pi(y, l) = T^l y.
  double project(const TowerPoint& x) const;

  /// Least n >= 0 with F^n x, F^n y in distinct cells (same-level pairs of one column);
  /// 0 for other pairs; kInfiniteSeparation for equal points or beyond `cap` iterates.
  int separation_time(const TowerPoint& x, const TowerPoint& y, int cap = 200) const;
  double d_theta(const TowerPoint& x, const TowerPoint& y) const;

  /// max over base cells |mu_Delta(f^{-1} cell) - mu_Delta(cell)|, via the Ulam matrix.
  double invariance_defect() const;
  /// max |pi(f x) - T(pi x)| over random points.
  double projection_defect(int samples, std::uint64_t seed = 1) const;

  /// (j, l, measure, r, r', left, right) rows; columns with r > max_r are skipped.
  void write_csv(std::ostream& os, int max_r = 400, int truncation = 0) const;

 private:
  std::shared_ptr<const InducedMap> ind_;
  double theta_;
  std::vector<Column> columns_;
  std::vector<std::size_t> by_position_;  // column indices sorted by left endpoint
  double rbar_rep_ = 0.0;
  int max_r_ = 1;
  std::size_t cell_id(double y) const;
};

/// theta = lambda^{-eta} from the sampled minimal expansion of F.
double default_theta(const InducedMap& ind);

std::shared_ptr<const Tower> build_tower(std::shared_ptr<const InducedMap> ind, double theta);
std::shared_ptr<const Tower> build_tower(std::shared_ptr<const InducedMap> ind);

/// Tower with r' = min{r, N}. The stored-column versions of the identities are exact.
class TruncatedTower {
 public:
  TruncatedTower(std::shared_ptr<const Tower> tower, int N);

  const Tower& tower() const { return *tower_; }
  std::shared_ptr<const Tower> tower_ptr() const { return tower_; }
  int N() const { return N_; }
  int r_trunc(std::size_t j) const { return std::min(tower_->columns()[j].r, N_); }
  bool is_left(std::size_t j) const { return tower_->columns()[j].r < N_; }

  /// Mean of r' including the unstored region (where r' = N).
  double rbar_trunc() const { return rbar_trunc_; }
  double rbar_trunc_represented() const { return rbar_trunc_rep_; }
  double cell_measure(std::size_t j) const { return tower_->columns()[j].mu / rbar_trunc_; }

  /// mu_Y(r >= N) on stored columns, and including the extrapolated region.
  double mu_at_least_N_represented() const { return at_least_rep_; }
  double mu_at_least_N() const { return at_least_full_; }
  /// sum_{n > N} mu_Y(r >= n) on stored columns, summed level by level.
  double tail_sum_represented() const { return tail_sum_rep_; }
  /// Same sum with the unstored region: rbar - rbar'.
  double tail_sum() const { return tower_->rbar() - rbar_trunc_; }

  /// mu_Delta(Delta_right) and mu_Delta(Delta_left) with the full rbar.
  double right_mass() const { return 1.0 - left_mass_; }
  double left_mass() const { return left_mass_; }
  double right_mass_represented() const { return right_mass_rep_; }

  /// |(rbar - rbar') - sum_{n>N} mu(r >= n)| on stored columns.
  double identity_i_defect() const;
  /// |mu_Delta(Delta_right) - (1/rbar)(N mu(r>=N) + sum_{n>N} mu(r>=n))| on stored columns.
  double identity_ii_defect() const;

  /// Truncating again at N2 gives the truncation at min(N, N2).
  TruncatedTower truncate(int N2) const { return TruncatedTower(tower_, std::min(N_, N2)); }
  bool same_as(const TruncatedTower& other) const;

  void write_csv(std::ostream& os, int max_r = 400) const { tower_->write_csv(os, max_r, N_); }

 private:
  std::shared_ptr<const Tower> tower_;
  int N_;
  double rbar_trunc_ = 0.0, rbar_trunc_rep_ = 0.0;
  double at_least_rep_ = 0.0, at_least_full_ = 0.0;
  double tail_sum_rep_ = 0.0;
  double left_mass_ = 0.0, right_mass_rep_ = 0.0;
};

TruncatedTower truncate(std::shared_ptr<const Tower> tower, int N);

struct EkResult {
  double measured = 0.0;
  double bound = 0.0;
  std::vector<double> g;  // mu_Delta(G_j), j = 0..k
  double ratio() const { return bound > 0.0 ? measured / bound : 0.0; }
};

/// mu_Delta(E_k) from the G_j decomposition: G_0 = Delta_right, and mu(G_j) for j >= 1 by
/// pushing the left-tower mass forward j steps (base arrivals distributed by the Ulam
/// matrix) and collecting what first enters Delta_right.
EkResult ek_measure(const Tower& tower, int N, int k);

}  // namespace semiflow
