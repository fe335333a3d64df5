#pragma once

#include <iosfwd>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "semiflow/tower.hpp"

namespace semiflow {

enum class RoofKind { Constant, Cosine, Power };

/// Roof h : X -> R^+ evaluated through the projection pi. Power roofs
/// h = 1 + x^{-1/(beta+1)} are unbounded near 0.
class RoofFunction {
 public:
  static RoofFunction constant(double c = 1.0);
  /// base + amp cos(2 pi x); default 2 + cos(2 pi x).
  static RoofFunction cosine(double base = 2.0, double amp = 1.0);
  /// 1 + x^{-1/(beta+1)}.
  static RoofFunction power(double beta = 1.0);
  /// Registry lookup: "constant", "cosine", "power".
  static RoofFunction from_name(const std::string& name, double param = 0.0);

  double operator()(double x) const;
  RoofKind kind() const { return kind_; }
  bool bounded() const { return kind_ != RoofKind::Power; }
  double inf() const;
  double sup() const;
  /// sup and inf of h on [lo, hi].
  double sup_on(double lo, double hi) const;
  double inf_on(double lo, double hi) const;
  /// Exact integral of h over [lo, hi].
  double integral(double lo, double hi) const;
  /// Lipschitz constant on [lo, hi] (eta = 1).
  double lipschitz_on(double lo, double hi) const;
  double declared_beta() const { return beta_; }
  /// Lebesgue measure of {x in [0,1] : h(x) > n} and the integral of h over that set.
  double level_set_measure(double n) const;
  double level_set_integral(double n) const;
  /// Exact draw from the density h / int_0^1 h on [0,1].
  double sample_weighted(std::mt19937_64& rng) const;
  std::string name() const;

 private:
  RoofKind kind_ = RoofKind::Constant;
  double a_ = 1.0, b_ = 0.0;  // constant value / cosine base, amplitude
  double p_ = 0.5;           // power exponent 1/(beta+1)
  double beta_ = std::numeric_limits<double>::infinity();
};

/// H(y) = sum_{l < min(r(y), r_cap)} h(T^l y), with h capped at roof_cap.
double induced_roof(const InducedMap& ind, const RoofFunction& h, double y,
                    int r_cap = std::numeric_limits<int>::max(),
                    double roof_cap = std::numeric_limits<double>::infinity());

struct RoofCheck {
  double inf_h = 0.0;
  double max_cell_lipschitz = 0.0;
  double min_H_over_r = 0.0;  // min sampled H(y) / (r(y) inf h); >= 1 expected
  bool ok = false;
};
RoofCheck check_roof(const Tower& tower, const RoofFunction& h, double declared_c,
                     int samples_per_cell = 8, std::uint64_t seed = 1);

/// mu(Delta(n)) over X = [0,1] with Lebesgue measure, where Delta(n) is the union of
/// depth-`depth` dyadic cells with sup h >= n.
double delta_n_measure(const RoofFunction& h, double n, int depth = 40);
/// Fit of log mu(Delta(n)) on log n for n in [n_min, n_max]; returns the slope.
double fit_delta_n_exponent(const RoofFunction& h, double n_min, double n_max, int points = 24);

/// Point of the suspension over the tower: base point y with return time r, level l,
/// projection px = T^l y and height u in [0, h).
struct FlowPoint {
  double y = 0.0;
  int level = 0;
  int r = 1;
  double px = 0.0;
  double u = 0.0;
};

struct FlowOptions {
  int tower_cap = 0;  // N for r' = min{r, N}; 0 = none
  double roof_cap = std::numeric_limits<double>::infinity();  // N for h' = min{h, N}
};

class SuspensionFlow {
 public:
  SuspensionFlow(std::shared_ptr<const Tower> tower, RoofFunction roof, FlowOptions opt = {});

  const Tower& tower() const { return *tower_; }
  std::shared_ptr<const Tower> tower_ptr() const { return tower_; }
  const RoofFunction& roof() const { return roof_; }
  const FlowOptions& options() const { return opt_; }
  SuspensionFlow with_options(FlowOptions opt) const { return SuspensionFlow(tower_, roof_, opt); }

  double h_at(double px) const { return std::min(roof_(px), opt_.roof_cap); }
  double h(const FlowPoint& p) const { return h_at(p.px); }
  int r_eff(int r) const { return opt_.tower_cap > 0 ? std::min(r, opt_.tower_cap) : r; }

  /// Point over (y, level) at height u; domain error unless 0 <= u < h.
  FlowPoint make_point(double y, int level, double u) const;
  /// Base point following the top of p's column.
  FlowPoint next_base(const FlowPoint& p) const;
  /// phi_t(p); `crossings` receives the number of roof identifications.
  FlowPoint flow(FlowPoint p, double t, long* crossings = nullptr) const;

  /// n points from the invariant measure of this flow; deterministic in seed.
  std::vector<FlowPoint> sample(std::uint64_t seed, std::size_t n) const;
  /// n base points (l, y) from mu_Delta (u = 0).
  std::vector<FlowPoint> sample_tower(std::uint64_t seed, std::size_t n) const;
  /// Single draws from the flow-invariant measure and from mu_Delta.
  FlowPoint draw(std::mt19937_64& rng) const;
  FlowPoint draw_tower(std::mt19937_64& rng) const;

 private:
  std::shared_ptr<const Tower> tower_;
  RoofFunction roof_;
  FlowOptions opt_;
  std::vector<double> col_weight_;  // mu_c r'_c, for column choice
  std::vector<double> col_cdf_;
  bool lebesgue_single_level_ = false;
  int return_time(double y) const;
  std::size_t pick_column(double u01) const;
};

/// hbar = int h dmu_Delta by Gauss-Legendre quadrature on the stored columns of height
/// <= max_r; `skipped` receives the tower mass of columns left out.
double hbar_quadrature(const Tower& tower, const RoofFunction& h, int max_r = 5000,
                       double* skipped = nullptr);

/// Observable on the suspension, evaluated at (px, u, h) or, for modified observables,
/// at the full flow point.
struct Observable {
  std::string name;
  int m = 1;  // flow-direction smoothness order
  std::function<double(double px, double u, double h)> f;
  /// k-th u-derivative; empty means finite differences.
  std::function<double(int k, double px, double u, double h)> du;
  std::function<double(const FlowPoint&, double h)> state_f;

  double operator()(const FlowPoint& p, double h) const {
    return state_f ? state_f(p, h) : f(p.px, p.u, h);
  }
  double derivative(int k, double px, double u, double h) const;
};

/// Registry: "one", "coordinate" (x - 1/2), "cos-u" (cos 2 pi u), "sin-u-h"
/// (sin(2 pi u / h)), "bump" (smooth bump in x), "coordinate-cos-u".
Observable make_observable(const std::string& name);

struct CorrelationSeries {
  std::vector<double> t, rho, stderr_;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  void write_csv(std::ostream& os) const;
};

/// Ensemble estimate of rho(t) = int v w o phi_t - int v int w over stationary samples.
/// Batch-means standard errors; result independent of the worker count.
CorrelationSeries correlation_mc(const SuspensionFlow& flow, const Observable& v,
                                 const Observable& w, const std::vector<double>& t_grid,
                                 std::size_t n_samples, std::uint64_t seed, int threads = 0);

/// Two-sample KS p-value between projected positions of phi_s-advanced samples and fresh ones.
double stationarity_ks_pvalue(const SuspensionFlow& flow, double s, std::size_t n,
                              std::uint64_t seed);

struct TruncationRow {
  double N = 0.0, t = 0.0;
  double rho = 0.0, rho_trunc = 0.0, diff = 0.0, diff_stderr = 0.0;
  double bound = 0.0;      // bracketed quantity of the bound, without C
  double reference = 0.0;  // closed-form comparison rate
  double extra = 0.0;      // second-truncation error (roof experiment)
  double extra_bound = 0.0;
};

struct TruncationTable {
  std::vector<TruncationRow> rows;
  double fitted_c = 0.0;    // max diff / bound over the grid
  double c_stability = 0.0; // max_N C_N / min_N C_N with C_N = max_t diff / bound
  bool bound_holds = false;
  void write_csv(std::ostream& os) const;
};

struct TruncationOptions {
  std::size_t n_samples = 1000000;
  std::uint64_t seed = 1;
  int threads = 0;
  double gamma = 0.0;  // log exponent for the closed-form reference
  double q = 3.0;      // second truncation r' = min{r, [q ln N]}
};

/// Coupled Monte-Carlo comparison of rho and rho' for r' = min{r, N}. Samples of the
/// untruncated flow with level < N are stationary for the truncated flow.
TruncationTable truncation_error_experiment(std::shared_ptr<const Tower> tower,
                                            const RoofFunction& roof, const Observable& v,
                                            const Observable& w, const std::vector<int>& N_list,
                                            const std::vector<double>& t_grid,
                                            const TruncationOptions& opt = {});

/// Same for h' = min{h, N}; samples with u < h' are stationary for the truncated flow.
TruncationTable roof_truncation_experiment(std::shared_ptr<const Tower> tower,
                                           const RoofFunction& roof, const Observable& v,
                                           const Observable& w, const std::vector<int>& N_list,
                                           const std::vector<double>& t_grid,
                                           const TruncationOptions& opt = {});

/// Bracket of the truncation bound: sum_{n>N} mu(r >= n) + (N + t) mu(r >= N).
double truncation_bound(const InducedMap& ind, int N, double t);

struct EkkResult {
  double measured = 0.0, stderr_ = 0.0;
  double bound = 0.0;  // mu(right) + k mu_Delta(h > N) / hbar
};
/// mu(E_k) for the flow with h > N as the right part; single-level Lebesgue towers only.
EkkResult ekk_measure(const SuspensionFlow& flow, double N, int k, std::size_t n,
                      std::uint64_t seed);

struct BufferReport {
  bool widened = false;
  double window = 0.0;          // blend length as a fraction of the top-level roof
  double region_measure = 0.0;  // mu of the modified region in the truncated suspension
  double norm_ratio = 0.0;      // sampled ||v~||_m / ||v||_m
};

/// v~ equal to v except near the top of the strip over {r' = N}, where it blends into
/// the Taylor extension of v at the next base point. Blend window is the last 25% of
/// the top roof, widened into level N-2 when shorter than `min_window`.
Observable buffer_modify(const Observable& v, const SuspensionFlow& truncated,
                         BufferReport* report = nullptr, double min_window = 0.0);

struct DecayFit {
  double beta = 0.0, gamma = 0.0, residual = 0.0;
  double beta_ci = 0.0, gamma_ci = 0.0;  // 95% half-widths
};
/// Regression of log|rho| on log t (and log log t when fit_gamma) over [t_lo, t_hi].
/// Refuses when some |rho| in the window is within 3 standard errors of 0.
DecayFit fit_decay(const CorrelationSeries& s, double t_lo, double t_hi, bool fit_gamma = false);

}  // namespace semiflow
