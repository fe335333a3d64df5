#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>

#include "semiflow/transfer.hpp"

namespace semiflow {

namespace {

double pow_theta(double theta, int s) { return std::pow(theta, s); }

// Diameter of a set of complex numbers; projections for large sets.
double diameter(const VecC& v, std::size_t begin, std::size_t end) {
  const std::size_t n = end - begin;
  if (n < 2) return 0.0;
  double best = 0.0;
  if (n <= 64) {
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t j = i + 1; j < end; ++j) best = std::max(best, std::abs(v(i) - v(j)));
    return best;
  }
  for (int k = 0; k < 16; ++k) {
    const cplx dir = std::polar(1.0, std::numbers::pi * k / 16.0);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      double p = (v(i) * std::conj(dir)).real();
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
    best = std::max(best, hi - lo);
  }
  return best;
}

}  // namespace

CylinderBasis::CylinderBasis(std::shared_ptr<const InducedMap> ind, BasisOptions opt)
    : ind_(std::move(ind)), opt_(opt) {
  if (!ind_) throw ParameterError("basis: null induced map");
  if (opt_.depth < 1) throw ParameterError("basis: depth must be >= 1");
  if (opt_.groups < 1) throw ParameterError("basis: groups must be >= 1");
  if (!(opt_.theta > 0.0 && opt_.theta < 1.0)) throw ParameterError("basis: theta must lie in (0,1)");
  const InducedMap& I = *ind_;

  // Symbols: cells, then tail columns up to tail_max_r, then the rest of the tail region.
  n_cells_ = I.size();
  for (const Cell& c : I.cells()) {
    sym_left_.push_back(c.left);
    sym_right_.push_back(c.right);
    sym_r_.push_back(c.r);
  }
  if (I.has_tail()) {
    double edge = I.y_hi();
    for (const Cell& c : I.cells()) edge = std::min(edge, c.left);
    int last_r = I.cutoff();
    for (const TailColumn& t : I.tail_columns()) {
      if (t.r > opt_.tail_max_r) break;
      sym_left_.push_back(t.left);
      sym_right_.push_back(t.right);
      sym_r_.push_back(t.r);
      edge = std::min(edge, t.left);
      last_r = t.r;
    }
    if (edge > I.y_lo()) {
      sym_left_.push_back(I.y_lo());
      sym_right_.push_back(edge);
      sym_r_.push_back(last_r + 1);
    }
  }
  const std::size_t S = sym_left_.size();
  const std::size_t G = std::min<std::size_t>(static_cast<std::size_t>(opt_.groups), S);
  sym_group_.resize(S);
  grp_left_.assign(G, std::numeric_limits<double>::infinity());
  grp_right_.assign(G, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < S; ++i) {
    std::size_t g = i * G / S;
    sym_group_[i] = static_cast<int>(g);
    grp_left_[g] = std::min(grp_left_[g], sym_left_[i]);
    grp_right_[g] = std::max(grp_right_[g], sym_right_[i]);
  }
  const int k = opt_.depth;
  if (k >= 3 && (G != S || n_cells_ != S))
    throw ParameterError("basis: depth >= 3 needs exact symbols (groups >= symbol count, no tail)");

  // Words in lexicographic order so prefix classes are contiguous.
  std::vector<std::vector<int>> tails{{}};
  for (int d = 1; d < k; ++d) {
    std::vector<std::vector<int>> next;
    for (const auto& w : tails)
      for (std::size_t g = 0; g < G; ++g) {
        auto x = w;
        x.push_back(static_cast<int>(g));
        next.push_back(std::move(x));
      }
    tails = std::move(next);
  }
  // Intervals of the suffixes, as pairs of endpoints, then pulled back by the first symbol.
  std::vector<std::pair<double, double>> suffix_iv(tails.size());
  for (std::size_t t = 0; t < tails.size(); ++t) {
    if (k == 1) {
      suffix_iv[t] = {I.y_lo(), I.y_hi()};
      continue;
    }
    const auto& w = tails[t];
    double lo = grp_left_[w.back()], hi = grp_right_[w.back()];
    for (int i = static_cast<int>(w.size()) - 2; i >= 0; --i) {
      double a = I.inverse(static_cast<std::size_t>(w[i]), lo);
      double b = I.inverse(static_cast<std::size_t>(w[i]), hi);
      lo = std::min(a, b);
      hi = std::max(a, b);
    }
    suffix_iv[t] = {lo, hi};
  }
  std::vector<double> ends;
  for (auto& [lo, hi] : suffix_iv) {
    ends.push_back(lo);
    ends.push_back(hi);
  }
  auto pre = I.preimages(ends);  // pre[j][2t], pre[j][2t+1]
  for (std::size_t sym = 0; sym < S; ++sym) {
    if (sym < n_cells_ && k >= 2) {
      for (std::size_t t = 0; t < tails.size(); ++t) {
        Element e;
        e.word.push_back(static_cast<int>(sym));
        e.word.insert(e.word.end(), tails[t].begin(), tails[t].end());
        double a = pre[sym][2 * t], b = pre[sym][2 * t + 1];
        e.left = std::min(a, b);
        e.right = std::max(a, b);
        e.r = sym_r_[sym];
        elems_.push_back(std::move(e));
      }
    } else {
      Element e;
      e.word = {static_cast<int>(sym)};
      e.left = sym_left_[sym];
      e.right = sym_right_[sym];
      e.r = sym_r_[sym];
      elems_.push_back(std::move(e));
    }
  }
  for (auto& e : elems_) e.mid = 0.5 * (e.left + e.right);
  const std::size_t M = elems_.size();

  // Prefix classes for the theta seminorm.
  for (int lvl = 1; lvl < k; ++lvl) {
    std::size_t b = 0;
    while (b < M) {
      std::size_t e = b + 1;
      auto same = [&](std::size_t x) {
        if (elems_[x].word.size() <= static_cast<std::size_t>(lvl) ||
            elems_[b].word.size() <= static_cast<std::size_t>(lvl))
          return false;
        return std::equal(elems_[x].word.begin(), elems_[x].word.begin() + lvl,
                          elems_[b].word.begin());
      };
      while (e < M && same(e)) ++e;
      if (e - b > 1) classes_.push_back(Class{lvl, b, e});
      b = e;
    }
  }
  // Singleton first-symbol classes at level 0 are skipped: only same-cell pairs count.
  if (k == 1) classes_.clear();

  // Ulam matrix. Image of a source with cell symbol j (k >= 2) is the suffix set; targets
  // are the elements inside it.
  std::vector<double> all_ends;
  for (const auto& e : elems_) {
    all_ends.push_back(e.left);
    all_ends.push_back(e.right);
  }
  auto tpre = I.preimages(all_ends);
  const std::size_t last_cell = n_cells_ - 1;
  std::vector<Eigen::Triplet<double>> trip;
  auto image_mass = [&](std::size_t j, std::size_t a) {
    return std::abs(tpre[j][2 * a + 1] - tpre[j][2 * a]);
  };
  auto contained = [&](const Element& src, const Element& tgt) {
    if (k == 1 || src.word.size() == 1) return true;  // image is all of Y
    if (k == 2) return sym_group_[tgt.symbol()] == src.word[1];
    for (int i = 0; i + 1 < k; ++i)
      if (tgt.word[i] != src.word[i + 1]) return false;
    return true;
  };
  for (std::size_t b = 0; b < M; ++b) {
    const Element& src = elems_[b];
    const bool exact = src.symbol() < static_cast<int>(n_cells_);
    const std::size_t j = exact ? static_cast<std::size_t>(src.symbol()) : last_cell;
    const double width = exact ? src.right - src.left : sym_right_[last_cell] - sym_left_[last_cell];
    std::vector<std::pair<std::size_t, double>> col;
    double sum = 0.0;
    for (std::size_t a = 0; a < M; ++a) {
      if (exact && !contained(src, elems_[a])) continue;
      double q = image_mass(j, a) / width;
      if (q <= 0.0) continue;
      col.emplace_back(a, q);
      sum += q;
    }
    for (auto& [a, q] : col) trip.emplace_back(static_cast<int>(a), static_cast<int>(b), q / sum);
  }
  Q_.resize(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(M));
  Q_.setFromTriplets(trip.begin(), trip.end());

  // Stationary vector by power iteration from the cell masses spread by width.
  VecD m(static_cast<Eigen::Index>(M));
  for (std::size_t a = 0; a < M; ++a) {
    const Element& e = elems_[a];
    const int sym = e.symbol();
    double cell_mu = sym < static_cast<int>(n_cells_) ? I.cells()[sym].mu
                                                      : std::max(1e-300, sym_right_[sym] - sym_left_[sym]);
    m(a) = cell_mu * (e.right - e.left) / (sym_right_[sym] - sym_left_[sym]);
  }
  m /= m.sum();
  for (int it = 0; it < 200000; ++it) {
    VecD next = Q_ * m;
    next /= next.sum();
    double diff = (next - m).lpNorm<1>();
    m = next;
    if (diff < 1e-15) break;
  }
  for (std::size_t a = 0; a < M; ++a) elems_[a].weight = m(a);

  std::vector<Eigen::Triplet<double>> rt;
  for (int b = 0; b < Q_.outerSize(); ++b)
    for (SpMatD::InnerIterator it(Q_, b); it; ++it)
      rt.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                      it.value() * m(it.col()) / m(it.row()));
  R_.resize(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(M));
  R_.setFromTriplets(rt.begin(), rt.end());
}

VecD CylinderBasis::weights() const {
  VecD w(static_cast<Eigen::Index>(elems_.size()));
  for (std::size_t a = 0; a < elems_.size(); ++a) w(a) = elems_[a].weight;
  return w;
}

VecD CylinderBasis::koopman(const VecD& w) const { return Q_.transpose() * w; }

int CylinderBasis::separation(std::size_t a, std::size_t b) const {
  const auto& x = elems_.at(a).word;
  const auto& y = elems_.at(b).word;
  if (x[0] != y[0]) return 0;
  std::size_t n = std::min(x.size(), y.size());
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] != y[i]) return static_cast<int>(i);
  return a == b ? std::numeric_limits<int>::max() : static_cast<int>(n);
}

double CylinderBasis::sup_norm(const VecC& v) const { return v.cwiseAbs().maxCoeff(); }

double CylinderBasis::theta_seminorm(const VecC& v) const {
  double best = 0.0;
  for (const Class& c : classes_)
    best = std::max(best, diameter(v, c.begin, c.end) / pow_theta(opt_.theta, c.level));
  return best;
}

double CylinderBasis::b_norm(const VecC& v, double b, double C) const {
  const double bb = std::max(1.0, std::abs(b));
  return std::max(sup_norm(v), theta_seminorm(v) / (2.0 * C * bb));
}

VecD CylinderBasis::collocate(const std::function<double(double)>& f) const {
  VecD out(static_cast<Eigen::Index>(elems_.size()));
  for (std::size_t a = 0; a < elems_.size(); ++a) out(a) = f(elems_[a].mid);
  return out;
}

double CylinderBasis::weight_defect() const { return std::abs(weights().sum() - 1.0); }

double CylinderBasis::nesting_defect() const {
  double err = 0.0;
  const InducedMap& I = *ind_;
  const int k = opt_.depth;
  for (const Element& e : elems_) {
    const int sym = e.symbol();
    err = std::max(err, std::max(0.0, sym_left_[sym] - e.left));
    err = std::max(err, std::max(0.0, e.right - sym_right_[sym]));
    if (k < 2 || e.word.size() < 2) continue;
    double a = I.forward(static_cast<std::size_t>(sym), e.left + 1e-15 * (e.right - e.left));
    double b = I.forward(static_cast<std::size_t>(sym), e.right - 1e-15 * (e.right - e.left));
    double lo = std::min(a, b), hi = std::max(a, b);
    double tlo, thi;
    if (k == 2) {
      tlo = grp_left_[e.word[1]];
      thi = grp_right_[e.word[1]];
    } else {
      tlo = std::numeric_limits<double>::infinity();
      thi = -tlo;
      for (const Element& f : elems_)
        if (std::equal(e.word.begin() + 1, e.word.end(), f.word.begin())) {
          tlo = std::min(tlo, f.left);
          thi = std::max(thi, f.right);
        }
    }
    err = std::max({err, std::abs(lo - tlo), std::abs(hi - thi)});
  }
  return err;
}

double CylinderBasis::cell_mass_defect() const {
  std::vector<double> mass(n_cells_, 0.0);
  for (const Element& e : elems_)
    if (e.symbol() < static_cast<int>(n_cells_)) mass[e.symbol()] += e.weight;
  double err = 0.0;
  for (std::size_t j = 0; j < n_cells_; ++j) err = std::max(err, std::abs(mass[j] - ind_->cells()[j].mu));
  return err;
}

std::shared_ptr<const CylinderBasis> make_basis(std::shared_ptr<const InducedMap> ind,
                                                BasisOptions opt) {
  return std::make_shared<const CylinderBasis>(std::move(ind), opt);
}

double transfer_pointwise(const InducedMap& ind, const std::function<double(double)>& v, double x) {
  auto cell = ind.find_cell(x);
  if (!cell) throw DomainError("transfer_pointwise: x outside the represented cells");
  const auto& cells = ind.cells();
  const double rho_x = cells[*cell].mu / cells[*cell].width();
  double acc = 0.0;
  auto pre = ind.preimages(x);
  for (std::size_t j = 0; j < cells.size(); ++j) {
    const double y = pre[j];
    const double rho_y = cells[j].mu / cells[j].width();
    acc += rho_y / (rho_x * ind.forward_derivative(j, y)) * v(y);
  }
  return acc;
}

double duality_defect(const CylinderBasis& basis, int pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const VecD m = basis.weights();
  const Eigen::Index M = m.size();
  double err = 0.0;
  for (int p = 0; p < pairs; ++p) {
    VecD v(M), w(M);
    for (Eigen::Index i = 0; i < M; ++i) {
      v(i) = U(rng);
      w(i) = U(rng);
    }
    VecD Rv = basis.R() * v;
    VecD Uw = basis.koopman(w);
    double lhs = (m.array() * Rv.array() * w.array()).sum();
    double rhs = (m.array() * v.array() * Uw.array()).sum();
    err = std::max(err, std::abs(lhs - rhs));
  }
  return err;
}

}  // namespace semiflow
