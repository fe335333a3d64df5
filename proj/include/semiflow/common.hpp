#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace semiflow {

using cplx = std::complex<double>;
using VecD = Eigen::VectorXd;
using VecC = Eigen::VectorXcd;
using MatD = Eigen::MatrixXd;
using MatC = Eigen::MatrixXcd;
using SpMatC = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
using SpMatD = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Point outside the domain of a map or flow.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Structural failure while building a derived object (non-Markov base, mismatch).
class ConstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative numerics that did not converge. Carries the last residual.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Parameter outside its admissible range.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Runs body(i) for i in [0, n) on `threads` workers. Work is handed out by index,
/// so callers that store per-index results and reduce in index order get results
/// independent of the worker count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

/// Default worker count used when callers pass threads <= 0.
int default_threads();
void set_default_threads(int threads);

/// splitmix64 finalizer; used to derive independent per-batch seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Ordinary least squares y ~ X c. Returns coefficients; `residual` gets the RMS residual
/// and `stderrs` (if non-null) the coefficient standard errors.
VecD least_squares(const MatD& X, const VecD& y, double* residual = nullptr,
                   VecD* stderrs = nullptr);

/// Kolmogorov-Smirnov one-sample statistic against a CDF.
double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf);
/// Two-sample KS statistic.
double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b);
/// Asymptotic p-value for the KS statistic with effective sample size n_eff.
double ks_pvalue(double d, double n_eff);

/// dist(x, 2πZ).
double dist_2pi(double x);

}  // namespace semiflow
