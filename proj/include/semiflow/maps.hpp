#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semiflow/common.hpp"

namespace semiflow {

/// One monotone increasing branch of an interval map. The domain is [lo, hi) except
/// for the rightmost branch which also contains 1.
struct Branch {
  double lo = 0.0;
  double hi = 1.0;
  std::function<double(double)> forward;
  std::function<double(double)> inverse;     // defined on [forward(lo), forward(hi)]
  std::function<double(double)> derivative;  // positive on (lo, hi)
};

enum class MapKind { Doubling, PomeauManneville };

/// A piecewise monotone interval map T : [0,1] -> [0,1] together with the regularity
/// data used by the induced-map conditions.
class MapModel {
 public:
  static MapModel doubling();
  /// T x = x(1 + 2^a x^a) on [0, 1/2), 2x - 1 on [1/2, 1].
  static MapModel pomeau_manneville(double alpha);

  double operator()(double x) const;
  std::size_t branch_index(double x) const;
  double derivative(double x) const;

  const std::vector<Branch>& branches() const { return branches_; }
  MapKind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  /// Decay exponent beta = 1/alpha - 1 (PM); infinity for the doubling map.
  double beta() const;
  double eta() const { return eta_; }
  double distortion_constant() const { return distortion_c_; }
  void set_distortion_constant(double c) { distortion_c_ = c; }
  bool has_indifferent_fixed_point() const { return indifferent_; }
  std::string name() const;

  /// Max |inverse(forward(x)) - x| over a test grid of each branch interior.
  double inverse_consistency_error(int grid = 257) const;

 private:
  MapKind kind_ = MapKind::Doubling;
  double alpha_ = 0.0;
  double eta_ = 1.0;
  double distortion_c_ = 10.0;
  bool indifferent_ = false;
  std::vector<Branch> branches_;
};

/// evaluate(T, x) with domain checking; ties at branch endpoints go to the right branch.
double evaluate(const MapModel& map, double x);

/// Inverse of the PM left branch y = x(1 + 2^a x^a) on [0, 1/2], by bisection then
/// Newton polish to relative precision ~1e-15.
double pm_left_inverse(double alpha, double y);

/// A first-return cell Y_j with constant return time.
struct Cell {
  int r = 1;
  double left = 0.0;
  double right = 1.0;
  double mu = 0.0;      // mu_Y(Y_j)
  int outer_branch = 0;  // branch of T used on the first step
  double width() const { return right - left; }
};

/// Column of return-time data beyond the stored cutoff: exact widths, extrapolated mass.
struct TailColumn {
  int r = 0;
  double width = 0.0;
  double mu = 0.0;
  double left = 0.0;
  double right = 0.0;
};

/// Result of checking the Gibbs-Markov conditions on sampled points: full branches, expansion, backward contraction and distortion.
struct InductionCheck {
  double bijection_error = 0.0;       // max |F(endpoint) - Y endpoint|
  double expansion_min = 0.0;         // min sampled d(Fx,Fy)/d(x,y)
  double backward_constant = 0.0;     // max d(T^l x,T^l y)/d(Fx,Fy)
  double distortion_constant = 0.0;   // max |log g(x) - log g(y)| / d(x,y)^eta
  double mass_defect = 0.0;           // |sum mu + tail - 1|
  bool ok(double declared_c) const {
    return bijection_error < 1e-9 && expansion_min > 1.0 && backward_constant <= declared_c &&
           distortion_constant <= declared_c && mass_defect < 1e-10;
  }
};

/// First-return (Gibbs-Markov) data F = T^r : Y -> Y.
class InducedMap {
 public:
  InducedMap() = default;

  const MapModel& map() const { return *map_; }
  std::shared_ptr<const MapModel> map_ptr() const { return map_; }
  double y_lo() const { return y_lo_; }
  double y_hi() const { return y_hi_; }
  const std::vector<Cell>& cells() const { return cells_; }
  std::size_t size() const { return cells_.size(); }
  int cutoff() const { return cutoff_; }

  bool has_tail() const { return has_tail_; }
  /// Aggregate cell holding every unrepresented branch (r > cutoff).
  const Cell& tail_cell() const { return tail_; }
  double tail_mass() const { return has_tail_ ? tail_.mu : 0.0; }
  /// Columns cutoff < r <= n_ext with exact widths and density-extrapolated mass.
  const std::vector<TailColumn>& tail_columns() const { return tail_columns_; }
  /// Mass beyond the last tail column (power-law extrapolated region).
  double beyond_mass() const { return beyond_mass_; }
  double declared_tail_exponent() const { return tail_exponent_; }
  double declared_gamma() const { return gamma_; }
  bool exponential_tail() const { return !has_tail_; }

  /// F on cell j; F maps Y_j onto Y.
  double forward(std::size_t j, double y) const;
  /// F_j^{-1}(y) in Y_j.
  double inverse(std::size_t j, double y) const;
  /// F_j^{-1}(y) for every represented j (one pass over the outer branch chain).
  std::vector<double> preimages(double y) const;
  /// F_j^{-1}(y) for a batch of points: result[j][k] = F_j^{-1}(ys[k]).
  std::vector<std::vector<double>> preimages(const std::vector<double>& ys) const;
  /// Derivative of F at y in cell j (product of T' along the orbit).
  double forward_derivative(std::size_t j, double y) const;

  /// Index of the represented cell containing y, or nullopt for the tail region.
  std::optional<std::size_t> find_cell(double y) const;
  /// First return time of y by direct iteration.
  int return_time(double y, int max_iter = 1 << 24) const;
  /// F(y) by direct iteration (any y in Y, including the tail region).
  double first_return(double y) const;

  /// Mean return time over represented + tail columns + extrapolated region.
  double rbar() const { return rbar_; }

  /// Ulam matrix over represented cells plus the tail cell (last index):
  /// Q(i, j) = Leb(Y_j ∩ F^{-1} Y_i) / Leb(Y_j).
  const MatD& ulam() const { return ulam_; }

  InductionCheck check_conditions(int pairs_per_cell = 100, std::uint64_t seed = 1) const;

  /// mu_Y(r >= n) split into the part carried by explicit columns and the extrapolated part.
  struct TailSplit {
    double explicit_part = 0.0;
    double extrapolated_part = 0.0;
    double total() const { return explicit_part + extrapolated_part; }
  };
  TailSplit tail_at_least(long n) const;
  /// Power-law part of mu_Y(r >= n) only; O(1).
  double extrapolated_at_least(long n) const;

  void write_csv(std::ostream& os) const;

 private:
  friend InducedMap induce(std::shared_ptr<const MapModel>, double, double, int, long, double,
                           double);
  std::shared_ptr<const MapModel> map_;
  double y_lo_ = 0.0, y_hi_ = 1.0;
  int cutoff_ = 0;
  std::vector<std::size_t> y_branches_;
  std::optional<std::size_t> outer_branch_;  // complement branch, if any
  std::vector<Cell> cells_;
  bool has_tail_ = false;
  Cell tail_;
  std::vector<TailColumn> tail_columns_;
  double beyond_mass_ = 0.0;
  double tail_exponent_ = 0.0;
  double gamma_ = 0.0;
  double rbar_ = 1.0;
  // (r, mass with return time >= r) over cells and tail columns, r increasing
  std::vector<std::pair<long, double>> explicit_suffix_;
  MatD ulam_;
  std::vector<double> chain_;  // boundaries of c^{-(n-1)}(Y): chain_[n] for n >= 0
  double complement_inverse(double y) const;
};

/// First-return induction of `map` onto Y = [y_lo, y_hi]. Y must be a union of branch
/// domains and its complement at most one branch whose image covers Y.
/// `tail_horizon` bounds the exact-width tail columns; `declared_exponent` <= 0 uses
/// the map's own (1/alpha for PM).
InducedMap induce(std::shared_ptr<const MapModel> map, double y_lo, double y_hi, int cutoff,
                  long tail_horizon = 100000, double declared_exponent = 0.0,
                  double declared_gamma = 0.0);

/// Convenience overloads.
InducedMap induce_doubling();
InducedMap induce_pm(double alpha, int cutoff = 400, long tail_horizon = 100000);

/// mu_Y(r > n): exact partial sum plus extrapolated tail.
struct TailValue {
  double raw = 0.0;           // sum over explicit columns with r > n
  double extrapolated = 0.0;  // mass from the power-law region
  double value() const { return raw + extrapolated; }
};
TailValue return_time_tail(const InducedMap& ind, long n);

struct TailFit {
  bool exponential = false;
  double exponent = 0.0;  // estimate of beta + 1
  double gamma = 0.0;
  double residual = 0.0;
};
/// Least-squares fit of log mu_Y(r > n) against log n (and log log n when fit_gamma).
TailFit fit_tail_exponent(const InducedMap& ind, long n_min, long n_max, bool fit_gamma = false);

}  // namespace semiflow
