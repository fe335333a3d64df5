#pragma once

#include <iosfwd>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "semiflow/suspension.hpp"

namespace semiflow {

struct BasisOptions {
  int depth = 2;
  /// Symbols after the first are merged into this many groups of consecutive symbols.
  int groups = 8;
  /// Tail columns with r <= tail_max_r become their own symbols; the rest of the tail
  /// region is one aggregated symbol.
  int tail_max_r = 0;
  double theta = 0.5;
};

/// Depth-k cylinders of F on Y. The first symbol is exact (a cell, a tail column or
/// the aggregated rest of the tail); later symbols are groups. Tail symbols are not
/// subdivided.
class CylinderBasis {
 public:
  struct Element {
    std::vector<int> word;  // first symbol, then group indices
    double left = 0.0, right = 0.0, mid = 0.0;
    double weight = 0.0;  // mu_Y
    int r = 1;
    int symbol() const { return word.front(); }
  };

  CylinderBasis(std::shared_ptr<const InducedMap> ind, BasisOptions opt = {});

  const InducedMap& induced() const { return *ind_; }
  std::shared_ptr<const InducedMap> induced_ptr() const { return ind_; }
  const BasisOptions& options() const { return opt_; }
  double theta() const { return opt_.theta; }
  std::size_t size() const { return elems_.size(); }
  const std::vector<Element>& elements() const { return elems_; }
  std::size_t symbol_count() const { return sym_left_.size(); }
  VecD weights() const;

  /// Ulam matrix Q(a, b) = Leb(C_b ∩ F^{-1} C_a) / Leb(C_b) (column stochastic).
  const SpMatD& ulam() const { return Q_; }
  /// Galerkin transfer operator R(a, b) = Q(a, b) m_b / m_a; R1 = 1.
  const SpMatD& R() const { return R_; }
  /// Koopman dual of R: (U w)_b = sum_a Q(a, b) w_a, the projection of w o F.
  VecD koopman(const VecD& w) const;

  /// 0 for different first symbols, otherwise the first position where the words differ.
  int separation(std::size_t a, std::size_t b) const;
  double sup_norm(const VecC& v) const;
  /// max |v_a - v_b| / theta^s(a,b) over pairs with the same first symbol. Classes with
  /// more than 64 elements use 16 projection directions (a lower estimate within 2%).
  double theta_seminorm(const VecC& v) const;
  /// max{|v|_inf, |v|_theta / (2 C |b|)}.
  double b_norm(const VecC& v, double b, double C) const;

  /// Collocation values f(mid).
  VecD collocate(const std::function<double(double)>& f) const;

  /// |sum of weights - 1|.
  double weight_defect() const;
  /// max distance of a cylinder from its parent interval, and of F(C) from the shifted word.
  double nesting_defect() const;
  /// max_j |sum of weights with first symbol j - mu_Y(Y_j)| over represented cells.
  double cell_mass_defect() const;

 private:
  std::shared_ptr<const InducedMap> ind_;
  BasisOptions opt_;
  std::vector<Element> elems_;
  std::vector<double> sym_left_, sym_right_;
  std::vector<int> sym_r_;
  std::vector<int> sym_group_;
  std::vector<double> grp_left_, grp_right_;
  std::size_t n_cells_ = 0;  // symbols < n_cells_ have exact inverse branches
  SpMatD Q_, R_;
  struct Class {
    int level;
    std::size_t begin, end;
  };
  std::vector<Class> classes_;
  friend class TowerOperator;
};

std::shared_ptr<const CylinderBasis> make_basis(std::shared_ptr<const InducedMap> ind,
                                                BasisOptions opt = {});

/// (R v)(x) = sum_{F y = x} g(y) v(y) evaluated pointwise, with g built from the cell
/// densities mu_Y(Y_j) / Leb(Y_j).
double transfer_pointwise(const InducedMap& ind, const std::function<double(double)>& v, double x);

/// max over `pairs` random (v, w) of |int (R v) w dmu - int v (U w) dmu|.
double duality_defect(const CylinderBasis& basis, int pairs = 20, std::uint64_t seed = 1);

/// Twist data on the base: H'(a) = sum_{l < r'(a)} h'(T^l mid_a), r'(a) = min(r(a), N).
struct TwistData {
  VecD H;
  std::vector<int> r;
};
TwistData twist_data(const CylinderBasis& basis, const RoofFunction& roof, int N,
                     double roof_cap = std::numeric_limits<double>::infinity());

/// R_{s,z} = R diag(e^{s H' + z r'}).
SpMatC twisted_operator(const CylinderBasis& basis, const TwistData& tw, cplx s, cplx z);

/// Spectrum of R by dense eigensolve (moduli sorted decreasing).
std::vector<double> leading_moduli(const CylinderBasis& basis, int count = 4);

/// sum_j |1_{Y_j} H'|_theta mu_Y(Y_j) and |h|_theta rbar on the discretization.
struct RoofSeminormCheck {
  double lhs = 0.0, rhs = 0.0;
  bool ok() const { return lhs <= rhs * (1.0 + 1e-12); }
};
RoofSeminormCheck roof_seminorm_check(const CylinderBasis& basis, const RoofFunction& roof, int N);

/// d_N = sum_{k <= N} k mu_Y(r >= k).
double d_N(const InducedMap& ind, int N);

// ---------------------------------------------------------------------------
// Lasota-Yorke, resolvent and twist perturbation

struct LasotaYorkeRow {
  int N = 0;
  double b = 0.0, omega = 0.0;
  int n = 0;
  double ratio = 0.0;  // |R^n v|_theta / (|b| |v|_inf + theta^n |v|_theta), max over probes
};
struct LasotaYorkeReport {
  std::vector<LasotaYorkeRow> rows;
  std::vector<int> N_list;
  std::vector<double> C_per_N;
  double C = 0.0;
  double stability = 0.0;  // max C_N / min C_N
  bool uniform = false;    // stability <= 2
};
LasotaYorkeReport lasota_yorke_check(const CylinderBasis& basis, const RoofFunction& roof,
                                     const std::vector<int>& N_list,
                                     const std::vector<double>& b_list,
                                     const std::vector<double>& omega_list, int n_max,
                                     int probes = 10, std::uint64_t seed = 1);

struct ResolventRow {
  double b = 0.0, omega = 0.0;
  double norm = 0.0;          // lower estimate of ||(I - R_{ib,iw})^{-1}||_b
  double sigma_min = 0.0;     // smallest singular value of I - R_{ib,iw}
  bool resonance = false;
};
struct ResolventScan {
  std::vector<ResolventRow> rows;
  double alpha_fit = 0.0;  // slope of log norm on log b over unflagged b >= 1
  double alpha_residual = 0.0;
  void write_csv(std::ostream& os) const;
};
struct ResolventOptions {
  double C = 1.0;  // roof seminorm constant used in the b-norm
  int random_probes = 200;
  int adversarial = 5;
  double resonance_tol = 1e-8;
  std::uint64_t seed = 1;
  int threads = 0;
};
ResolventRow resolvent_norm(const CylinderBasis& basis, const TwistData& tw, double b,
                            double omega, const ResolventOptions& opt = {});
ResolventScan resolvent_scan(const CylinderBasis& basis, const TwistData& tw,
                             const std::vector<double>& b_grid,
                             const std::vector<double>& omega_grid,
                             const ResolventOptions& opt = {});

struct TwistPerturbation {
  double measured = 0.0;  // probe estimate of ||R_{s,z} - R_{ib,iw}||_b
  double bracket = 0.0;   // d_N (|a| + |sigma|) e^{(|a| |h|_inf + |sigma|) N}
  double ratio() const { return bracket > 0.0 ? measured / bracket : 0.0; }
};
TwistPerturbation twist_perturbation_check(const CylinderBasis& basis, const RoofFunction& roof,
                                           cplx s, cplx z, int N, double C = 1.0,
                                           int probes = 50, std::uint64_t seed = 1);

// ---------------------------------------------------------------------------
// Tower discretization

/// Transfer operator of the (truncated) tower over a cylinder basis. Element (a, l)
/// sits over cylinder a at level l < r'(a), with point T^l(mid_a) and roof h' there.
class TowerOperator {
 public:
  /// N = 0 keeps the full heights.
  TowerOperator(std::shared_ptr<const CylinderBasis> basis, RoofFunction roof, int N = 0,
                double roof_cap = std::numeric_limits<double>::infinity());

  const CylinderBasis& basis() const { return *basis_; }
  const RoofFunction& roof() const { return roof_; }
  int N() const { return N_; }
  std::size_t size() const { return points_.size(); }
  std::size_t base_size() const { return basis_->size(); }
  std::size_t offset(std::size_t a) const { return offset_[a]; }
  int height(std::size_t a) const { return r_[a]; }
  double point(std::size_t e) const { return points_[e]; }
  double h(std::size_t e) const { return h_[e]; }
  /// mu_Delta' of element e.
  double measure(std::size_t e) const { return mu_[e]; }
  double rbar() const { return rbar_; }
  double hbar() const;
  TwistData twist() const;
  bool is_base(std::size_t e) const { return level_[e] == 0; }
  int level(std::size_t e) const { return level_[e]; }

  /// e^{s h} per element.
  VecC twist_factors(cplx s) const;
  /// out = L_s in, with tw = twist_factors(s).
  void apply(const VecC& tw, const VecC& in, VecC& out) const;
  void apply(const VecC& tw, const MatC& in, MatC& out) const;
  void apply(const VecD& in, VecD& out) const;  // s = 0

 private:
  std::shared_ptr<const CylinderBasis> basis_;
  RoofFunction roof_;
  int N_;
  std::vector<std::size_t> offset_;
  std::vector<int> r_, level_;
  std::vector<double> points_, h_, mu_;
  double rbar_ = 0.0;
  SpMatC Rc_;
};

// ---------------------------------------------------------------------------
// Renewal sequences and the decomposition

struct RenewalData {
  cplx s;
  int N = 0;
  int horizon = 0;
  bool converged = false;
  std::vector<MatC> R;  // R_{s,n}, n = 0..N (R[0] = 0)
  double T0_defect = 0.0;           // ||T_{s,0} - I||
  double R_beyond_N = 0.0;          // max ||R_{s,n}|| over N < n <= N + 5
  std::vector<cplx> z;
  std::vector<MatC> T_of_z;  // sum_n T_{s,n} e^{zn}
  MatC R_of_z(cplx z) const;
};
struct RenewalCheck {
  double sigma = 0.0;  // Re z on the grid
  std::vector<cplx> z;
  std::vector<double> residual;  // ||T_s(z) - (I - R_s(z))^{-1}|| / ||(I - R_s(z))^{-1}||
  double max_residual = 0.0;
  int horizon = 0;
  bool converged = false;
};
/// Builds R_{s,n} and the Fourier sums of T_{s,n} by iterating L_s on the tower. The horizon
/// grows until the terms fall below 1e-13 relative or max_horizon is reached.
RenewalData renewal_build(const TowerOperator& op, cplx s, const std::vector<cplx>& z,
                          int max_horizon = 20000);
/// Picks Re z = sigma with spectral radius of R_{Re s}(sigma) equal to `target`, then checks
/// the renewal equation at `points` z = sigma + 2 pi i k / points.
RenewalCheck renewal_check(const TowerOperator& op, cplx s, int points = 16, double target = 0.9);

struct DecompositionReport {
  int n = 0;
  double residual = 0.0;  // ||L^n - sum A T B - E||_F / ||L^n||_F
  double norm_A = 0.0, norm_B = 0.0, norm_E = 0.0;
  double C_A = 0.0, C_B = 0.0, C_E = 0.0;  // fitted constants against the A/B/E decay profiles
  bool vanish_beyond_N = false;            // A_m, B_m, E_m = 0 for N < m <= n
};
DecompositionReport tower_operator_decomposition(const TowerOperator& op, cplx s, int n);

// ---------------------------------------------------------------------------
// Laplace transform and map correlations

struct LaplaceResult {
  cplx value;
  int terms = 0;
  bool converged = false;
  double growth = 0.0;  // log of the term ratio when not converged
};
/// rho_hat(s) = (1/hbar)[int_0 + sum_{n>=1} int L_{-s}^n v_s w_{-s} dmu] - int v int w / s.
LaplaceResult laplace_series(const TowerOperator& op, const Observable& v, const Observable& w,
                             cplx s, double tol = 1e-12, int max_terms = 100000);

/// Laplace transform of a sampled correlation series by the trapezoid rule, with the
/// standard error propagated from the per-point errors.
std::pair<cplx, double> laplace_of_series(const CorrelationSeries& series, cplx s);

/// int v w o T^n dnu - int v int w for n = 0..n_max via L on the untruncated tower.
std::vector<double> map_correlation_operator(const TowerOperator& op,
                                             const std::function<double(double)>& v,
                                             const std::function<double(double)>& w, int n_max);

// ---------------------------------------------------------------------------
// Rate budget

struct BudgetRow {
  double t = 0.0;
  int N = 0;
  double term1 = 0.0, term2 = 0.0, term3 = 0.0, term4 = 0.0;
  int dominant = 0;  // 1..4
  double predicted = 0.0;  // (ln t)^gamma t^-beta
};
struct RateBudget {
  double beta = 1.0, gamma = 0.0;
  double p = 0.0, d = 0.0, q = 0.0, epsilon = 0.01;
  double p_min = 0.0;  // strict lower bound for p
  double d_max = 0.0;  // strict upper bound for d given p
  double q_min = 0.0;
  std::string d_class;     // "bounded", "(ln N)^(g+1)", "(ln N)^g N^(1-b)"
  std::string rate_label;  // e.g. "(ln t)^2/t"
  std::vector<double> N_grid, dN;
  std::vector<BudgetRow> rows;
  bool constraints_ok = false;
  std::vector<std::string> violations;
  bool rate_matches = false;  // total / predicted settles to a constant on the upper grid
  double ratio_drift = 0.0;   // |log ratio(t_end) - log ratio(t_mid)|
  double fitted_exponent = 0.0;  // slope of log total on log t over the upper half of the grid
  void write_csv(std::ostream& os) const;
};
/// Tail model mu_Y(r >= k) = min{1, (1 + ln k)^gamma k^-(beta+1)} unless `tail` is given.
/// p, d, q <= 0 select admissible values.
RateBudget rate_budget(double beta, double gamma, double p = 0.0, double d = 0.0, double q = 0.0,
                       double epsilon = 0.01,
                       const std::function<double(long)>& tail = nullptr);
std::string classify_dN(const std::vector<double>& N_grid, const std::vector<double>& dN,
                        double beta, double gamma);

struct YnExample {
  double beta = 1.0;
  bool level0_only = false;
  std::vector<double> n, measured, bound;
  double log_power = 0.0;  // kappa in measured ~ (ln n)^kappa n^-lambda, joint fit
  double power = 0.0;      // lambda from the same fit
  double bound_ratio_max = 0.0;  // max measured / bound over the upper half of the n grid
  double bound_ratio_low = 0.0;  // same over the lower half
  bool bound_respected() const { return bound_ratio_max <= bound_ratio_low; }
  void write_csv(std::ostream& os) const;
};
/// The constructed tower with mu_Y(r = k) ~ e^{-k}: h = (k^{-1} e^k)^{1/(beta+2)} on every
/// level of columns r = k, or h = e^{k/(beta+2)} on level 0 only.
YnExample yn_log_example(double beta, bool level0_only = false, int k_max = 600);

}  // namespace semiflow
