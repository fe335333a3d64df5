#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "semiflow/transfer.hpp"

namespace semiflow {

namespace {

constexpr double kExactSum = 1e4;  // d_N summed term by term up to here, integrated beyond

// d_N = sum_{k <= N} k tail(k) on an increasing grid of N.
std::vector<double> d_N_grid(const std::vector<double>& N_grid, const std::function<double(double)>& tail) {
  std::vector<double> out;
  double acc = 0.0, k_done = 0.0;  // sum over k <= k_done
  for (double N : N_grid) {
    const double Nf = std::floor(N);
    if (Nf <= kExactSum) {
      for (double k = k_done + 1; k <= Nf; ++k) acc += k * tail(k);
      k_done = std::max(k_done, Nf);
    } else {
      if (k_done < kExactSum) {
        for (double k = k_done + 1; k <= kExactSum; ++k) acc += k * tail(k);
        k_done = kExactSum;
      }
      // int_{k_done}^{N} k tail(k) dk in u = ln k, unit panels
      const double u0 = std::log(k_done + 0.5), u1 = std::log(Nf + 0.5);
      auto f = [&](double u) { return std::exp(2.0 * u) * tail(std::exp(u)); };
      for (double a = u0; a < u1; a += 1.0)
        acc += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, std::min(a + 1.0, u1));
      k_done = Nf;
    }
    out.push_back(acc);
  }
  return out;
}

double log_range(const std::vector<double>& r) {
  auto [lo, hi] = std::minmax_element(r.begin(), r.end());
  return std::log(*hi / *lo);
}

}  // namespace

std::string classify_dN(const std::vector<double>& N_grid, const std::vector<double>& dN, double beta,
                        double gamma) {
  // compare against each candidate on the upper half of the grid; the flattest ratio wins
  const std::size_t from = N_grid.size() / 2;
  std::vector<double> r0, r1, r2;
  for (std::size_t i = from; i < N_grid.size(); ++i) {
    const double L = std::log(N_grid[i]);
    r0.push_back(dN[i]);
    r1.push_back(dN[i] / std::pow(L, gamma + 1.0));
    r2.push_back(dN[i] / (std::pow(L, gamma) * std::pow(N_grid[i], 1.0 - beta)));
  }
  const double s0 = log_range(r0), s1 = log_range(r1), s2 = log_range(r2);
  if (s0 <= s1 && s0 <= s2) return "bounded";
  if (s1 <= s2) return "(ln N)^(g+1)";
  return "(ln N)^g N^(1-b)";
}

RateBudget rate_budget(double beta, double gamma, double p, double d, double q, double epsilon,
                       const std::function<double(long)>& tail) {
  if (!(beta > 0.0)) throw ParameterError("rate_budget: beta must be positive");
  if (gamma < 0.0) throw ParameterError("rate_budget: gamma must be >= 0");
  if (!(epsilon > 0.0)) throw ParameterError("rate_budget: epsilon must be positive");
  RateBudget B;
  B.beta = beta;
  B.gamma = gamma;
  B.epsilon = epsilon;
  B.p_min = beta >= 1.0 ? beta : (2.0 - beta) / beta;
  B.p = p > 0.0 ? p : std::floor(B.p_min) + 1.0;
  auto d_max_for = [&](double pp) {
    return beta < 1.0 ? (pp - beta) / (pp + 2.0) - (1.0 - beta) : pp - beta;
  };
  B.d_max = d_max_for(B.p);
  B.d = d > 0.0 ? d : std::min(0.1, 0.5 * B.d_max);
  B.q_min = (1.0 + B.d + beta + std::max(0.0, 1.0 - beta)) / epsilon;
  B.q = q > 0.0 ? q : 1.25 * B.q_min;

  auto fmt = [](const char* what, double a, const char* op, double b) {
    std::ostringstream os;
    os << what << ' ' << a << ' ' << op << ' ' << b;
    return os.str();
  };
  if (!(B.p > B.p_min)) B.violations.push_back(fmt("p", B.p, "<=", B.p_min));
  if (!(B.d > 0.0)) B.violations.push_back(fmt("d", B.d, "<=", 0.0));
  if (!(B.d < B.d_max)) B.violations.push_back(fmt("d", B.d, ">=", B.d_max));
  if (!(B.q > B.q_min)) B.violations.push_back(fmt("q", B.q, "<=", B.q_min));
  B.constraints_ok = B.violations.empty();

  std::function<double(double)> tl;
  if (tail) {
    tl = [tail](double k) { return tail(static_cast<long>(std::min(k, 9e18))); };
  } else {
    tl = [beta, gamma](double k) {
      return std::min(1.0, std::pow(1.0 + std::log(k), gamma) * std::pow(k, -(beta + 1.0)));
    };
  }

  // t grid 1e12 .. 1e60, N = [t/q]
  std::vector<double> t_grid;
  for (double e = 12.0; e <= 60.0 + 1e-9; e += 2.0) t_grid.push_back(std::pow(10.0, e));
  for (double t : t_grid) B.N_grid.push_back(std::max(2.0, std::floor(t / B.q)));
  B.dN = d_N_grid(B.N_grid, tl);
  B.d_class = classify_dN(B.N_grid, B.dN, beta, gamma);

  std::vector<double> total;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    const double t = t_grid[i], N = B.N_grid[i], L = std::log(N), dn = B.dN[i];
    BudgetRow row;
    row.t = t;
    row.N = N < 2e9 ? static_cast<int>(N) : -1;  // -1: beyond int range, see N_grid
    row.term1 = std::pow(L, gamma) * std::pow(N, -beta);
    row.term2 = t * std::pow(L, gamma) * std::pow(N, -(beta + 1.0));
    // d_N N^{1+d} e^{-eps N^{-1} ln N t}, in logs to avoid overflow
    row.term3 = std::exp(std::log(dn) + (1.0 + B.d) * L - epsilon * L * t / N);
    row.term4 = std::exp((B.p + 2.0) * (std::log(dn) + B.d * L) - B.p * std::log(t));
    const double terms[4] = {row.term1, row.term2, row.term3, row.term4};
    row.dominant = static_cast<int>(std::max_element(terms, terms + 4) - terms) + 1;
    row.predicted = std::pow(std::log(t), gamma) * std::pow(t, -beta);
    total.push_back(terms[0] + terms[1] + terms[2] + terms[3]);
    B.rows.push_back(row);
  }
  const std::size_t mid = t_grid.size() / 2, end = t_grid.size() - 1;
  B.ratio_drift = std::abs(std::log(total[end] / B.rows[end].predicted) -
                           std::log(total[mid] / B.rows[mid].predicted));
  B.rate_matches = B.ratio_drift <= std::log(2.0);
  MatD X(static_cast<Eigen::Index>(end - mid + 1), 2);
  VecD y(X.rows());
  for (std::size_t i = mid; i <= end; ++i) {
    X(i - mid, 0) = 1.0;
    X(i - mid, 1) = std::log(t_grid[i]);
    y(i - mid) = std::log(total[i]);
  }
  B.fitted_exponent = least_squares(X, y)(1);

  if (beta == 1.0 && gamma > 0.0) {
    std::ostringstream os;
    os << "(ln t)^" << gamma << "/t";
    B.rate_label = os.str();
  } else {
    std::ostringstream os;
    if (gamma > 0.0) os << "(ln t)^" << gamma << " ";
    os << "t^-" << beta;
    B.rate_label = os.str();
  }
  return B;
}

void RateBudget::write_csv(std::ostream& os) const {
  os << "t,N,term1,term2,term3,term4,dominant,predicted_rate\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << r.t << ',' << N_grid[i] << ',' << r.term1 << ',' << r.term2 << ',' << r.term3 << ',' << r.term4 << ','
       << r.dominant << ',' << r.predicted << '\n';
  }
}

YnExample yn_log_example(double beta, bool level0_only, int k_max) {
  if (!(beta > 0.0)) throw ParameterError("yn_log_example: beta must be positive");
  if (k_max < 40 || k_max > 700) throw ParameterError("yn_log_example: k_max must lie in [40, 700]");
  YnExample ex;
  ex.beta = beta;
  ex.level0_only = level0_only;
  // mu_Y(r = k) = (e - 1) e^{-k}, k >= 1
  const double c = std::exp(1.0) - 1.0;
  std::vector<double> H(static_cast<std::size_t>(k_max) + 1), tail(static_cast<std::size_t>(k_max) + 2, 0.0);
  for (int k = 1; k <= k_max; ++k) {
    if (level0_only)
      H[k] = std::exp(k / (beta + 2.0)) + (k - 1);  // h = 1 above level 0
    else
      H[k] = k * std::pow(std::exp(double(k)) / k, 1.0 / (beta + 2.0));
  }
  for (int k = k_max; k >= 1; --k) tail[k] = tail[k + 1] + c * std::exp(-double(k));
  // Y(n) = {r = k : H_k >= n}; H_k increases in k, so Y(H_k) is the tail from k
  for (int k = 2; k <= k_max; ++k) {
    if (H[k] <= H[k - 1]) throw NumericError("yn_log_example: H not increasing", H[k - 1] - H[k]);
    const double n = H[k];
    ex.n.push_back(n);
    ex.measured.push_back(tail[k]);
    ex.bound.push_back(std::pow(std::log(n), beta + 2.0) * std::pow(n, -(beta + 1.0)));
  }
  const std::size_t from = ex.n.size() / 10, half = ex.n.size() / 2;
  MatD X(static_cast<Eigen::Index>(ex.n.size() - from), 3);
  VecD y(X.rows());
  for (std::size_t i = from; i < ex.n.size(); ++i) {
    const double L = std::log(ex.n[i]);
    X(i - from, 0) = 1.0;
    X(i - from, 1) = std::log(L);
    X(i - from, 2) = -L;
    y(i - from) = std::log(ex.measured[i]);
  }
  VecD coef = least_squares(X, y);
  ex.log_power = coef(1);
  ex.power = coef(2);
  for (std::size_t i = 0; i < ex.n.size(); ++i) {
    const double r = ex.measured[i] / ex.bound[i];
    if (i < half)
      ex.bound_ratio_low = std::max(ex.bound_ratio_low, r);
    else
      ex.bound_ratio_max = std::max(ex.bound_ratio_max, r);
  }
  return ex;
}

void YnExample::write_csv(std::ostream& os) const {
  os << "n,measured,bound\n";
  for (std::size_t i = 0; i < n.size(); ++i) os << n[i] << ',' << measured[i] << ',' << bound[i] << '\n';
}

}  // namespace semiflow
