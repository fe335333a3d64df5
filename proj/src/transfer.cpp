#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "semiflow/transfer.hpp"

namespace semiflow {

TwistData twist_data(const CylinderBasis& basis, const RoofFunction& roof, int N,
                     double roof_cap) {
  const auto& E = basis.elements();
  const MapModel& T = basis.induced().map();
  TwistData tw;
  tw.H.resize(static_cast<Eigen::Index>(E.size()));
  tw.r.resize(E.size());
  for (std::size_t a = 0; a < E.size(); ++a) {
    const int r = N > 0 ? std::min(E[a].r, N) : E[a].r;
    double x = E[a].mid, H = 0.0;
    for (int l = 0; l < r; ++l) {
      H += std::min(roof(x), roof_cap);
      if (l + 1 < r) x = T(x);
    }
    tw.H(a) = H;
    tw.r[a] = r;
  }
  return tw;
}

SpMatC twisted_operator(const CylinderBasis& basis, const TwistData& tw, cplx s, cplx z) {
  const SpMatD& R = basis.R();
  SpMatC out = R.cast<cplx>();
  VecC f(tw.H.size());
  for (Eigen::Index a = 0; a < f.size(); ++a)
    f(a) = (s == 0.0 && z == 0.0) ? cplx(1.0) : std::exp(s * tw.H(a) + z * double(tw.r[a]));
  for (int row = 0; row < out.outerSize(); ++row)
    for (SpMatC::InnerIterator it(out, row); it; ++it) it.valueRef() *= f(it.col());
  return out;
}

std::vector<double> leading_moduli(const CylinderBasis& basis, int count) {
  MatD R = MatD(basis.R());
  Eigen::EigenSolver<MatD> es(R, false);
  std::vector<double> mod;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) mod.push_back(std::abs(es.eigenvalues()(i)));
  std::sort(mod.rbegin(), mod.rend());
  if (static_cast<int>(mod.size()) > count) mod.resize(static_cast<std::size_t>(count));
  return mod;
}

RoofSeminormCheck roof_seminorm_check(const CylinderBasis& basis, const RoofFunction& roof, int N) {
  const auto& E = basis.elements();
  const MapModel& T = basis.induced().map();
  const double theta = basis.theta();
  // Orbit values h(T^l mid) for l < r'.
  std::vector<std::vector<double>> hv(E.size());
  for (std::size_t a = 0; a < E.size(); ++a) {
    const int r = N > 0 ? std::min(E[a].r, N) : E[a].r;
    double x = E[a].mid;
    hv[a].resize(static_cast<std::size_t>(r));
    for (int l = 0; l < r; ++l) {
      hv[a][l] = roof(x);
      if (l + 1 < r) x = T(x);
    }
  }
  // Elements sharing a first symbol are contiguous.
  double h_theta = 0.0, lhs = 0.0, rbar = 0.0, mass = 0.0;
  std::size_t b = 0;
  while (b < E.size()) {
    std::size_t e = b + 1;
    while (e < E.size() && E[e].symbol() == E[b].symbol()) ++e;
    double H_semi = 0.0, m = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      m += E[i].weight;
      for (std::size_t j = i + 1; j < e; ++j) {
        const double w = std::pow(theta, basis.separation(i, j));
        double dH = 0.0;
        for (std::size_t l = 0; l < hv[i].size(); ++l) {
          const double d = std::abs(hv[i][l] - hv[j][l]);
          dH += d;
          // h o T^l on the column separates one symbol later than on the base
          h_theta = std::max(h_theta, d / w);
        }
        H_semi = std::max(H_semi, dH / w);
      }
    }
    lhs += H_semi * m;
    rbar += m * static_cast<double>(hv[b].size());
    mass += m;
    b = e;
  }
  return RoofSeminormCheck{lhs, h_theta * rbar / mass};
}

double d_N(const InducedMap& ind, int N) {
  double s = 0.0;
  for (int k = 1; k <= N; ++k) s += k * ind.tail_at_least(k).total();
  return s;
}

namespace {

enum class Probe { Noise, Smooth, Steps };

// Noise is drawn per element; smooth and step probes are functions of x, the same at every depth.
VecC random_probe(std::mt19937_64& rng, const CylinderBasis& basis, Probe kind) {
  const auto& E = basis.elements();
  VecC v(static_cast<Eigen::Index>(E.size()));
  std::normal_distribution<double> g;
  if (kind == Probe::Noise) {
    for (Eigen::Index a = 0; a < v.size(); ++a) v(a) = cplx(g(rng), g(rng));
    return v;
  }
  const double lo = basis.induced().y_lo(), hi = basis.induced().y_hi();
  if (kind == Probe::Steps) {
    cplx c[64];
    for (auto& x : c) x = cplx(g(rng), g(rng));
    for (std::size_t a = 0; a < E.size(); ++a) {
      int i = static_cast<int>(64.0 * (E[a].mid - lo) / (hi - lo));
      v(static_cast<Eigen::Index>(a)) = c[std::clamp(i, 0, 63)];
    }
    return v;
  }
  cplx c[8];
  for (int k = 0; k < 8; ++k) c[k] = cplx(g(rng), g(rng)) / double(k + 1);
  for (std::size_t a = 0; a < E.size(); ++a) {
    const double x = (E[a].mid - lo) / (hi - lo);
    cplx s = 0.0;
    for (int k = 0; k < 8; ++k) s += c[k] * std::exp(cplx(0.0, 2.0 * std::numbers::pi * k * x));
    v(static_cast<Eigen::Index>(a)) = s;
  }
  return v;
}

}  // namespace

LasotaYorkeReport lasota_yorke_check(const CylinderBasis& basis, const RoofFunction& roof,
                                     const std::vector<int>& N_list,
                                     const std::vector<double>& b_list,
                                     const std::vector<double>& omega_list, int n_max, int probes,
                                     std::uint64_t seed) {
  LasotaYorkeReport rep;
  rep.N_list = N_list;
  const double theta = basis.theta();
  for (int N : N_list) {
    TwistData tw = twist_data(basis, roof, N);
    double CN = 0.0;
    for (double b : b_list) {
      if (std::abs(b) <= 1.0) throw ParameterError("lasota_yorke_check: |b| must exceed 1");
      for (double om : omega_list) {
        SpMatC Rt = twisted_operator(basis, tw, cplx(0.0, b), cplx(0.0, om));
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(N)));
        std::vector<double> worst(static_cast<std::size_t>(n_max) + 1, 0.0);
        for (int p = 0; p < probes; ++p) {
          VecC v = random_probe(rng, basis, p % 2 == 1 ? Probe::Smooth : Probe::Noise);
          const double vinf = basis.sup_norm(v), vth = basis.theta_seminorm(v);
          VecC x = v;
          for (int n = 1; n <= n_max; ++n) {
            VecC y = Rt * x;
            x = std::move(y);
            const double ratio =
                basis.theta_seminorm(x) / (std::abs(b) * vinf + std::pow(theta, n) * vth);
            worst[n] = std::max(worst[n], ratio);
          }
        }
        for (int n = 1; n <= n_max; ++n) {
          rep.rows.push_back({N, b, om, n, worst[n]});
          CN = std::max(CN, worst[n]);
        }
      }
    }
    rep.C_per_N.push_back(CN);
  }
  if (!rep.C_per_N.empty()) {
    auto [lo, hi] = std::minmax_element(rep.C_per_N.begin(), rep.C_per_N.end());
    rep.C = *hi;
    rep.stability = *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
    rep.uniform = rep.stability <= 2.0;
  }
  return rep;
}

ResolventRow resolvent_norm(const CylinderBasis& basis, const TwistData& tw, double b,
                            double omega, const ResolventOptions& opt) {
  const Eigen::Index M = static_cast<Eigen::Index>(basis.size());
  MatC A = -MatC(twisted_operator(basis, tw, cplx(0.0, b), cplx(0.0, omega)));
  A.diagonal().array() += 1.0;
  ResolventRow row{b, omega, 0.0, 0.0, false};
  Eigen::PartialPivLU<MatC> lu(A);
  MatC inv = lu.inverse();
  if (!inv.allFinite()) {
    row.resonance = true;
    row.norm = std::numeric_limits<double>::infinity();
    return row;
  }
  std::mt19937_64 rng(mix_seed(opt.seed, static_cast<std::uint64_t>(std::abs(b) * 1e6 + omega * 1e3)));
  std::normal_distribution<double> g;
  auto rand_vec = [&] {
    VecC v(M);
    for (Eigen::Index i = 0; i < M; ++i) v(i) = cplx(g(rng), g(rng));
    return v;
  };
  // Largest singular value of the inverse by power iteration on inv^H inv.
  VecC x = rand_vec();
  x.normalize();
  double smax = 0.0;
  for (int it = 0; it < 300; ++it) {
    VecC y = inv.adjoint() * (inv * x);
    double lam = y.norm();
    x = y / lam;
    if (std::abs(std::sqrt(lam) - smax) < 1e-10 * smax) {
      smax = std::sqrt(lam);
      break;
    }
    smax = std::sqrt(lam);
  }
  row.sigma_min = smax > 0.0 ? 1.0 / smax : 0.0;
  if (row.sigma_min < opt.resonance_tol) {
    row.resonance = true;
    row.norm = smax;
    return row;
  }
  // probe draws do not depend on the basis size
  std::mt19937_64 prng(mix_seed(opt.seed, static_cast<std::uint64_t>(std::abs(b) * 1e6 + omega * 1e3) + 1));
  auto ratio = [&](const VecC& p) { return basis.b_norm(inv * p, b, opt.C) / basis.b_norm(p, b, opt.C); };
  double best = 0.0;
  for (Eigen::Index a = 0; a < M; ++a) {
    VecC e = VecC::Zero(M);
    e(a) = 1.0;
    best = std::max(best, basis.b_norm(inv.col(a), b, opt.C) / basis.b_norm(e, b, opt.C));
  }
  for (int p = 0; p < opt.random_probes; ++p) best = std::max(best, ratio(random_probe(prng, basis, p % 2 == 1 ? Probe::Steps : Probe::Smooth)));
  for (int p = 0; p < opt.adversarial; ++p) {
    VecC v = random_probe(prng, basis, Probe::Smooth);
    for (int it = 0; it < 20; ++it) {
      VecC y = inv.adjoint() * (inv * v);
      v = y / y.norm();
      best = std::max(best, ratio(v));
    }
  }
  row.norm = best;
  return row;
}

ResolventScan resolvent_scan(const CylinderBasis& basis, const TwistData& tw,
                             const std::vector<double>& b_grid,
                             const std::vector<double>& omega_grid, const ResolventOptions& opt) {
  ResolventScan scan;
  const std::size_t nb = b_grid.size(), nw = omega_grid.size();
  scan.rows.resize(nb * nw);
  parallel_for(nb * nw, opt.threads, [&](std::size_t i) {
    scan.rows[i] = resolvent_norm(basis, tw, b_grid[i / nw], omega_grid[i % nw], opt);
  });
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < nb; ++i) {
    if (b_grid[i] < 1.0) continue;
    double worst = 0.0;
    bool flagged = false;
    for (std::size_t j = 0; j < nw; ++j) {
      flagged = flagged || scan.rows[i * nw + j].resonance;
      worst = std::max(worst, scan.rows[i * nw + j].norm);
    }
    if (flagged) continue;
    xs.push_back(std::log(b_grid[i]));
    ys.push_back(std::log(worst));
  }
  if (xs.size() >= 2) {
    MatD X(static_cast<Eigen::Index>(xs.size()), 2);
    VecD y(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      X(i, 0) = 1.0;
      X(i, 1) = xs[i];
      y(i) = ys[i];
    }
    VecD c = least_squares(X, y, &scan.alpha_residual);
    scan.alpha_fit = c(1);
  }
  return scan;
}

void ResolventScan::write_csv(std::ostream& os) const {
  os << "b,omega,norm_estimate,sigma_min,resonance_flag,alpha_fit\n";
  for (const auto& r : rows)
    os << r.b << ',' << r.omega << ',' << r.norm << ',' << r.sigma_min << ',' << (r.resonance ? 1 : 0)
       << ',' << alpha_fit << '\n';
}

TwistPerturbation twist_perturbation_check(const CylinderBasis& basis, const RoofFunction& roof,
                                           cplx s, cplx z, int N, double C, int probes,
                                           std::uint64_t seed) {
  if (!roof.bounded()) throw ParameterError("twist_perturbation_check: bounded roof required");
  TwistData tw = twist_data(basis, roof, N);
  const double b = s.imag(), a = s.real(), sigma = z.real();
  SpMatC D = twisted_operator(basis, tw, s, z) - twisted_operator(basis, tw, cplx(0.0, b), cplx(0.0, z.imag()));
  TwistPerturbation out;
  std::mt19937_64 rng(seed);
  for (int p = 0; p < probes; ++p) {
    VecC v = random_probe(rng, basis, p % 2 == 1 ? Probe::Smooth : Probe::Noise);
    out.measured = std::max(out.measured, basis.b_norm(D * v, b, C) / basis.b_norm(v, b, C));
  }
  out.bracket = d_N(basis.induced(), N) * (std::abs(a) + std::abs(sigma)) *
                std::exp((std::abs(a) * roof.sup() + std::abs(sigma)) * N);
  return out;
}

// ---------------------------------------------------------------------------

TowerOperator::TowerOperator(std::shared_ptr<const CylinderBasis> basis, RoofFunction roof, int N,
                             double roof_cap)
    : basis_(std::move(basis)), roof_(std::move(roof)), N_(N) {
  if (!basis_) throw ParameterError("TowerOperator: null basis");
  const auto& E = basis_->elements();
  const MapModel& T = basis_->induced().map();
  double norm = 0.0;
  for (std::size_t a = 0; a < E.size(); ++a) {
    const int r = N_ > 0 ? std::min(E[a].r, N_) : E[a].r;
    offset_.push_back(points_.size());
    r_.push_back(r);
    norm += E[a].weight * r;
    double x = E[a].mid;
    for (int l = 0; l < r; ++l) {
      points_.push_back(x);
      level_.push_back(l);
      h_.push_back(std::min(roof_(x), roof_cap));
      if (l + 1 < r) x = T(x);
    }
  }
  rbar_ = norm;
  mu_.resize(points_.size());
  for (std::size_t a = 0; a < E.size(); ++a)
    for (int l = 0; l < r_[a]; ++l) mu_[offset_[a] + l] = E[a].weight / norm;
  Rc_ = basis_->R().cast<cplx>();
}

double TowerOperator::hbar() const {
  double s = 0.0;
  for (std::size_t e = 0; e < h_.size(); ++e) s += mu_[e] * h_[e];
  return s;
}

TwistData TowerOperator::twist() const {
  TwistData tw;
  tw.H = VecD::Zero(static_cast<Eigen::Index>(r_.size()));
  tw.r = r_;
  for (std::size_t a = 0; a < r_.size(); ++a)
    for (int l = 0; l < r_[a]; ++l) tw.H(a) += h_[offset_[a] + l];
  return tw;
}

VecC TowerOperator::twist_factors(cplx s) const {
  VecC t(static_cast<Eigen::Index>(h_.size()));
  for (std::size_t e = 0; e < h_.size(); ++e) t(e) = s == 0.0 ? cplx(1.0) : std::exp(s * h_[e]);
  return t;
}

void TowerOperator::apply(const VecC& tw, const VecC& in, VecC& out) const {
  const std::size_t A = r_.size();
  out.resize(in.size());
  VecC top(static_cast<Eigen::Index>(A));
  for (std::size_t a = 0; a < A; ++a) {
    const std::size_t o = offset_[a];
    const int r = r_[a];
    const std::size_t t = o + static_cast<std::size_t>(r) - 1;
    top(a) = tw(t) * in(t);
    for (int l = r - 1; l >= 1; --l) out(o + l) = tw(o + l - 1) * in(o + l - 1);
  }
  VecC base = Rc_ * top;
  for (std::size_t a = 0; a < A; ++a) out(offset_[a]) = base(a);
}

void TowerOperator::apply(const VecC& tw, const MatC& in, MatC& out) const {
  const std::size_t A = r_.size();
  out.resize(in.rows(), in.cols());
  MatC top(static_cast<Eigen::Index>(A), in.cols());
  for (std::size_t a = 0; a < A; ++a) {
    const std::size_t o = offset_[a];
    const int r = r_[a];
    const std::size_t t = o + static_cast<std::size_t>(r) - 1;
    top.row(a) = tw(t) * in.row(t);
    for (int l = r - 1; l >= 1; --l) out.row(o + l) = tw(o + l - 1) * in.row(o + l - 1);
  }
  MatC base = Rc_ * top;
  for (std::size_t a = 0; a < A; ++a) out.row(offset_[a]) = base.row(a);
}

void TowerOperator::apply(const VecD& in, VecD& out) const {
  const std::size_t A = r_.size();
  out.resize(in.size());
  VecD top(static_cast<Eigen::Index>(A));
  for (std::size_t a = 0; a < A; ++a) {
    const std::size_t o = offset_[a];
    const int r = r_[a];
    top(a) = in(o + r - 1);
    for (int l = r - 1; l >= 1; --l) out(o + l) = in(o + l - 1);
  }
  VecD base = basis_->R() * top;
  for (std::size_t a = 0; a < A; ++a) out(offset_[a]) = base(a);
}

}  // namespace semiflow
