#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/LU>
#include <boost/math/quadrature/gauss.hpp>

#include "semiflow/transfer.hpp"

namespace semiflow {

namespace {

// Columns of R e^{sH'} with r' = n.
MatC renewal_block(const CylinderBasis& basis, const TwistData& tw, cplx s, int n) {
  const Eigen::Index A = static_cast<Eigen::Index>(basis.size());
  MatC out = MatC::Zero(A, A);
  const SpMatD& R = basis.R();
  for (int row = 0; row < R.outerSize(); ++row)
    for (SpMatD::InnerIterator it(R, row); it; ++it)
      if (tw.r[it.col()] == n) out(it.row(), it.col()) = it.value() * std::exp(s * tw.H(it.col()));
  return out;
}

MatC embed(const TowerOperator& op) {
  MatC X = MatC::Zero(static_cast<Eigen::Index>(op.size()), static_cast<Eigen::Index>(op.base_size()));
  for (std::size_t a = 0; a < op.base_size(); ++a) X(static_cast<Eigen::Index>(op.offset(a)), a) = 1.0;
  return X;
}

MatC restrict_rows(const TowerOperator& op, const MatC& X) {
  MatC out(static_cast<Eigen::Index>(op.base_size()), X.cols());
  for (std::size_t a = 0; a < op.base_size(); ++a) out.row(a) = X.row(static_cast<Eigen::Index>(op.offset(a)));
  return out;
}

double spectral_radius_nonneg(const MatD& M) {
  VecD x = VecD::Ones(M.rows());
  double lam = 0.0;
  for (int it = 0; it < 5000; ++it) {
    VecD y = M * x;
    const double nl = y.maxCoeff();
    if (nl <= 0.0) return 0.0;
    x = y / nl;
    if (std::abs(nl - lam) < 1e-13 * nl) return nl;
    lam = nl;
  }
  return lam;
}

}  // namespace

MatC RenewalData::R_of_z(cplx zz) const {
  MatC out = MatC::Zero(R[0].rows(), R[0].cols());
  for (std::size_t n = 1; n < R.size(); ++n) out += std::exp(zz * double(n)) * R[n];
  return out;
}

RenewalData renewal_build(const TowerOperator& op, cplx s, const std::vector<cplx>& z, int max_horizon) {
  if (op.N() <= 0) throw ParameterError("renewal_build: truncated tower required");
  RenewalData d;
  d.s = s;
  d.N = op.N();
  d.z = z;
  const TwistData tw = op.twist();
  const CylinderBasis& B = op.basis();
  const Eigen::Index A = static_cast<Eigen::Index>(op.base_size());
  d.R.push_back(MatC::Zero(A, A));
  for (int n = 1; n <= d.N; ++n) d.R.push_back(renewal_block(B, tw, s, n));
  for (int n = d.N + 1; n <= d.N + 5; ++n) d.R_beyond_N = std::max(d.R_beyond_N, renewal_block(B, tw, s, n).norm());

  MatC X = embed(op);
  MatC T0 = restrict_rows(op, X);
  d.T0_defect = (T0 - MatC::Identity(A, A)).norm();
  d.T_of_z.assign(z.size(), T0);
  const VecC twf = op.twist_factors(s);
  MatC Y;
  int quiet = 0;
  for (int n = 1; n <= max_horizon; ++n) {
    op.apply(twf, X, Y);
    std::swap(X, Y);
    MatC Tn = restrict_rows(op, X);
    const double tn = Tn.norm();
    double rel = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      const cplx f = std::exp(z[k] * double(n));
      d.T_of_z[k] += f * Tn;
      rel = std::max(rel, std::abs(f) * tn / std::max(d.T_of_z[k].norm(), 1e-300));
    }
    d.horizon = n;
    quiet = rel < 1e-13 ? quiet + 1 : 0;
    // several quiet terms in a row, past one full column height
    if (quiet >= 5 && n > d.N) {
      d.converged = true;
      break;
    }
  }
  return d;
}

RenewalCheck renewal_check(const TowerOperator& op, cplx s, int points, double target) {
  const TwistData tw = op.twist();
  const CylinderBasis& B = op.basis();
  MatD Rd = MatD(B.R());
  auto radius = [&](double sigma) {
    MatD M = Rd;
    for (Eigen::Index b = 0; b < M.cols(); ++b) M.col(b) *= std::exp(s.real() * tw.H(b) + sigma * tw.r[b]);
    return spectral_radius_nonneg(M);
  };
  double lo = -1.0, hi = 1.0;
  while (radius(lo) > target) lo *= 2.0;
  while (radius(hi) < target) hi *= 2.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (radius(mid) > target ? hi : lo) = mid;
  }
  RenewalCheck out;
  out.sigma = 0.5 * (lo + hi);
  for (int k = 0; k < points; ++k) out.z.push_back(cplx(out.sigma, 2.0 * std::numbers::pi * k / points));
  RenewalData d = renewal_build(op, s, out.z);
  out.horizon = d.horizon;
  out.converged = d.converged;
  const Eigen::Index A = static_cast<Eigen::Index>(op.base_size());
  for (std::size_t k = 0; k < out.z.size(); ++k) {
    MatC inv = (MatC::Identity(A, A) - d.R_of_z(out.z[k])).partialPivLu().inverse();
    const double r = (d.T_of_z[k] - inv).norm() / inv.norm();
    out.residual.push_back(r);
    out.max_residual = std::max(out.max_residual, r);
  }
  return out;
}

DecompositionReport tower_operator_decomposition(const TowerOperator& op, cplx s, int n) {
  if (n < 1) throw ParameterError("decomposition: n >= 1 required");
  if (op.N() <= 0) throw ParameterError("decomposition: truncated tower required");
  const Eigen::Index S = static_cast<Eigen::Index>(op.size());
  const std::size_t A = op.base_size();
  const int N = op.N();
  const int m_max = std::max(n, N + 1);
  const VecC twf = op.twist_factors(s);

  VecD off = VecD::Ones(S);  // indicator of the complement of Y
  for (std::size_t a = 0; a < A; ++a) off(static_cast<Eigen::Index>(op.offset(a))) = 0.0;
  MatC tmp;
  auto L = [&](const MatC& X) {
    op.apply(twf, X, tmp);
    return tmp;
  };
  auto PcL = [&](const MatC& X) {
    op.apply(twf, X, tmp);
    return MatC(off.cast<cplx>().asDiagonal() * tmp);
  };
  const MatC E0 = embed(op);

  // A_i = (P_c L)^i E0, T_j = restrict(L^j E0), W_k = (P_c L)^{k-1} P_c, B_k = restrict(L W_k).
  std::vector<MatC> Ai{E0}, Tj{restrict_rows(op, E0)}, Bk{restrict_rows(op, MatC(MatC::Identity(S, S)))};
  std::vector<MatC> Em;  // E_m = (P_c L)^m P_c
  MatC W = off.cast<cplx>().asDiagonal();
  Em.push_back(W);
  MatC LjE = E0;
  for (int m = 1; m <= m_max; ++m) {
    Ai.push_back(PcL(Ai.back()));
    LjE = L(LjE);
    Tj.push_back(restrict_rows(op, LjE));
    Bk.push_back(restrict_rows(op, L(W)));
    W = PcL(W);
    Em.push_back(W);
  }

  MatC Ln = MatC::Identity(S, S);
  for (int m = 0; m < n; ++m) Ln = L(Ln);
  MatC sum = Em[n];
  for (int i = 0; i <= n; ++i) {
    MatC TB = MatC::Zero(static_cast<Eigen::Index>(A), S);
    for (int j = 0; i + j <= n; ++j) TB += Tj[j] * Bk[n - i - j];
    sum += Ai[i] * TB;
  }
  DecompositionReport rep;
  rep.n = n;
  rep.residual = (Ln - sum).norm() / Ln.norm();

  // Norms: A and E from L^inf to L^1(mu), B in sup norm.
  VecD mu(S);
  for (Eigen::Index e = 0; e < S; ++e) mu(e) = op.measure(static_cast<std::size_t>(e));
  auto l1_norm = [&](const MatC& M) { return (mu.transpose() * M.cwiseAbs()).sum(); };
  auto sup_norm = [](const MatC& M) { return M.cwiseAbs().rowwise().sum().maxCoeff(); };
  const auto& E = op.basis().elements();
  auto tail = [&](int k) {
    double t = 0.0;
    for (std::size_t a = 0; a < A; ++a)
      if (op.height(a) >= k) t += E[a].weight;
    return t;
  };
  const double rbar = op.rbar();
  rep.norm_A = l1_norm(Ai[n]);
  rep.norm_B = sup_norm(Bk[n]);
  rep.norm_E = l1_norm(Em[n]);
  for (int m = 1; m <= n; ++m) {
    const double pa = tail(m) / rbar, pb = m * tail(m);
    double pe = 0.0;
    for (int k = m; k <= N; ++k) pe += tail(k) / rbar;
    if (pa > 0.0) rep.C_A = std::max(rep.C_A, l1_norm(Ai[m]) / pa);
    if (pb > 0.0) rep.C_B = std::max(rep.C_B, sup_norm(Bk[m]) / pb);
    if (pe > 0.0) rep.C_E = std::max(rep.C_E, l1_norm(Em[m]) / pe);
  }
  bool vanish = true;
  for (int m = N + 1; m <= m_max; ++m)
    vanish = vanish && Ai[m].cwiseAbs().maxCoeff() == 0.0 && Bk[m].cwiseAbs().maxCoeff() == 0.0 &&
             Em[m].cwiseAbs().maxCoeff() == 0.0;
  rep.vanish_beyond_N = vanish;
  return rep;
}

// ---------------------------------------------------------------------------

namespace {

using GL = boost::math::quadrature::gauss<double, 16>;

// int_0^h e^{c u} f(u) du with 16-node Gauss-Legendre panels.
cplx gl_integral(const std::function<double(double)>& f, double lo, double hi, cplx c) {
  if (hi <= lo) return 0.0;
  const int panels = std::max(1, static_cast<int>(std::ceil(std::abs(c) * (hi - lo) / 4.0)));
  const double w = (hi - lo) / panels;
  cplx acc = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * w;
    acc += GL::integrate([&](double u) { return std::exp(c * u) * f(u); }, a, a + w);
  }
  return acc;
}

int panels_for(double len, cplx c) {
  return std::max(1, static_cast<int>(std::ceil(std::abs(c) * len / 4.0)));
}

}  // namespace

LaplaceResult laplace_series(const TowerOperator& op, const Observable& v, const Observable& w,
                             cplx s, double tol, int max_terms) {
  if (s.real() <= 0.0) throw ParameterError("laplace_series: Re s > 0 required");
  const std::size_t S = op.size();
  const double hbar = op.hbar();
  VecC vs(static_cast<Eigen::Index>(S)), wms(static_cast<Eigen::Index>(S));
  cplx n0 = 0.0;
  double int_v = 0.0, int_w = 0.0;
  const auto& xs = GL::abscissa();
  const auto& ws = GL::weights();
  for (std::size_t e = 0; e < S; ++e) {
    const double x = op.point(e), h = op.h(e), mu = op.measure(e);
    FlowPoint p;
    p.px = x;
    p.level = op.level(e);
    auto at = [&](const Observable& o) {
      return [&o, p, h](double u) mutable {
        p.u = u;
        return o(p, h);
      };
    };
    auto fv = at(v);
    auto fw = at(w);
    vs(e) = gl_integral(fv, 0.0, h, s);
    wms(e) = gl_integral(fw, 0.0, h, -s);
    int_v += mu * gl_integral(fv, 0.0, h, 0.0).real();
    int_w += mu * gl_integral(fw, 0.0, h, 0.0).real();
    // int_0^h v(u) int_u^h e^{-s(u'-u)} w(u') du' du, by nested panels
    const int P = panels_for(h, s);
    const double pw = h / P;
    cplx inner_total = 0.0;
    for (int q = 0; q < P; ++q) {
      const double a = q * pw, b = a + pw;
      for (std::size_t i = 0; i < 2 * xs.size(); ++i) {
        // symmetric nodes: +x and -x
        const std::size_t k = i / 2;
        if (i % 2 == 1 && xs[k] == 0.0) continue;
        const double t = (i % 2 == 0 ? xs[k] : -xs[k]);
        const double u = 0.5 * (a + b) + 0.5 * (b - a) * t;
        const double wt = 0.5 * (b - a) * ws[k];
        auto g = [&](double u2) { return fw(u2); };
        inner_total += wt * fv(u) * gl_integral(g, u, h, -s) * std::exp(s * u);
      }
    }
    n0 += mu * inner_total;
  }
  int_v /= hbar;
  int_w /= hbar;

  LaplaceResult res;
  cplx sum = n0;
  const VecC twf = op.twist_factors(-s);
  VecC x = vs, y;
  int quiet = 0;
  double prev = 0.0, growth = 0.0;
  VecD muv(static_cast<Eigen::Index>(S));
  for (std::size_t e = 0; e < S; ++e) muv(e) = op.measure(e);
  for (int n = 1; n <= max_terms; ++n) {
    op.apply(twf, x, y);
    std::swap(x, y);
    const cplx term = (muv.cast<cplx>().array() * x.array() * wms.array()).sum();
    sum += term;
    res.terms = n;
    const double t = std::abs(term);
    if (n > 20 && prev > 0.0) growth = 0.9 * growth + 0.1 * std::log(std::max(t, 1e-300) / prev);
    prev = t;
    quiet = t <= tol * std::max(std::abs(sum), 1e-300) ? quiet + 1 : 0;
    if (quiet >= 5) {
      res.converged = true;
      break;
    }
    if (n > 200 && growth > 0.0) break;
  }
  res.growth = res.converged ? 0.0 : growth;
  res.value = sum / hbar - int_v * int_w / s;
  return res;
}

std::pair<cplx, double> laplace_of_series(const CorrelationSeries& series, cplx s) {
  const auto& t = series.t;
  if (t.size() < 2) throw ParameterError("laplace_of_series: need at least two points");
  cplx acc = 0.0;
  double var = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double w = 0.0;
    if (i > 0) w += 0.5 * (t[i] - t[i - 1]);
    if (i + 1 < t.size()) w += 0.5 * (t[i + 1] - t[i]);
    const cplx k = std::exp(-s * t[i]);
    acc += w * k * series.rho[i];
    const double se = i < series.stderr_.size() ? series.stderr_[i] : 0.0;
    var += std::pow(w * std::abs(k) * se, 2);
  }
  return {acc, std::sqrt(var)};
}

std::vector<double> map_correlation_operator(const TowerOperator& op,
                                             const std::function<double(double)>& v,
                                             const std::function<double(double)>& w, int n_max) {
  const std::size_t S = op.size();
  VecD x(static_cast<Eigen::Index>(S)), wv(static_cast<Eigen::Index>(S)), mu(static_cast<Eigen::Index>(S));
  for (std::size_t e = 0; e < S; ++e) {
    x(e) = v(op.point(e));
    wv(e) = w(op.point(e));
    mu(e) = op.measure(e);
  }
  const double mv = mu.dot(x) / mu.sum();
  x.array() -= mv;
  std::vector<double> out;
  VecD y;
  for (int n = 0; n <= n_max; ++n) {
    if (n > 0) {
      op.apply(x, y);
      std::swap(x, y);
    }
    out.push_back((mu.array() * x.array() * wv.array()).sum());
  }
  return out;
}

}  // namespace semiflow
