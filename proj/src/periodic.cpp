#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "semiflow/periodic.hpp"

namespace semiflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double dist_2pi_z(double x) {
  double r = std::fmod(x, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return std::min(r, kTwoPi - r);
}

int steps_for(double b, double beta0) {
  return std::max(1, static_cast<int>(std::floor(beta0 * std::log(std::abs(b)))));
}

std::string evidence_label(const std::vector<double>& b_grid, const std::vector<double>& flagged) {
  auto [lo, hi] = std::minmax_element(b_grid.begin(), b_grid.end());
  const double top = *lo + 0.75 * (*hi - *lo);
  const bool high = std::any_of(flagged.begin(), flagged.end(), [&](double b) { return b >= top; });
  std::ostringstream os;
  os << (high ? "EVIDENCE-FOR" : "EVIDENCE-AGAINST") << " on b in [" << *lo << ", " << *hi << "] ("
     << flagged.size() << " flagged)";
  return os.str();
}

}  // namespace

FiniteSubsystem::FiniteSubsystem(std::shared_ptr<const InducedMap> ind, std::vector<std::size_t> cells)
    : ind_(std::move(ind)), cells_(std::move(cells)) {
  if (!ind_) throw ParameterError("subsystem: null induced map");
  if (cells_.empty()) throw ParameterError("subsystem: no symbols");
  std::vector<std::size_t> sorted = cells_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ParameterError("subsystem: repeated symbol");
  for (std::size_t c : cells_) {
    if (c >= ind_->size()) throw ParameterError("subsystem: cell index out of range");
    max_r_ = std::max(max_r_, ind_->cells()[c].r);
  }
}

double FiniteSubsystem::periodic_point(const std::vector<int>& word) const {
  if (word.empty()) throw ParameterError("periodic_point: empty word");
  double x = 0.5 * (ind_->y_lo() + ind_->y_hi());
  double step = 0.0;
  for (int it = 0; it < 200; ++it) {
    double y = x;
    for (auto w = word.rbegin(); w != word.rend(); ++w) y = ind_->inverse(cells_.at(static_cast<std::size_t>(*w)), y);
    step = std::abs(y - x);
    x = y;
    if (step <= 1e-15 * std::max(1.0, std::abs(x))) return x;
  }
  std::ostringstream os;
  os << "periodic_point: inverse-branch contraction did not converge in 200 iterations (word length "
     << word.size() << ", last step " << step << ")";
  throw NumericError(os.str(), step);
}

double FiniteSubsystem::full_branch_defect() const {
  double err = 0.0;
  for (std::size_t c : cells_) {
    const double a = ind_->inverse(c, ind_->y_lo()), b = ind_->inverse(c, ind_->y_hi());
    const Cell& cell = ind_->cells()[c];
    err = std::max({err, std::abs(std::min(a, b) - cell.left), std::abs(std::max(a, b) - cell.right)});
  }
  return err;
}

long primitive_necklaces(int k, int n) {
  auto mobius = [](int m) {
    int res = 1;
    for (int p = 2; p * p <= m; ++p)
      if (m % p == 0) {
        m /= p;
        if (m % p == 0) return 0;
        res = -res;
      }
    return m > 1 ? -res : res;
  };
  long total = 0;
  for (int d = 1; d <= n; ++d)
    if (n % d == 0) {
      long pw = 1;
      for (int i = 0; i < n / d; ++i) pw *= k;
      total += mobius(d) * pw;
    }
  return total / n;
}

namespace {

// sum_{l < r} h(T^l x) for x in a cell with return time r.
double column_roof(const MapModel& T, const RoofFunction& roof, double x, int r) {
  double s = 0.0;
  for (int l = 0; l < r; ++l) {
    s += roof(x);
    if (l + 1 < r) x = T(x);
  }
  return s;
}

std::vector<int> rotate(const std::vector<int>& w, std::size_t by) {
  std::vector<int> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[(i + by) % w.size()];
  return out;
}

}  // namespace

double recompute_tau(const FiniteSubsystem& sub, const RoofFunction& roof, const std::vector<int>& word) {
  double tau = 0.0;
  for (std::size_t i = 0; i < word.size(); ++i) {
    const double p = sub.periodic_point(rotate(word, i));
    tau += column_roof(sub.induced().map(), roof, p, sub.r(word[i]));
  }
  return tau;
}

std::vector<PeriodicTriple> enumerate_periodic(const FiniteSubsystem& sub, const RoofFunction& roof, int q_max) {
  if (q_max < 1) throw ParameterError("enumerate_periodic: q_max >= 1 required");
  const int k = static_cast<int>(sub.symbol_count());
  if (std::pow(double(k), q_max) > 1e6) throw ParameterError("enumerate_periodic: more than 1e6 words");
  std::vector<PeriodicTriple> out;
  // Duval's algorithm: Lyndon words in lexicographic order
  std::vector<int> w{-1};
  while (!w.empty()) {
    ++w.back();
    const int n = static_cast<int>(w.size());
    PeriodicTriple t;
    t.word = w;
    t.q = n;
    out.push_back(std::move(t));
    const std::size_t m = w.size();
    while (static_cast<int>(w.size()) < q_max) w.push_back(w[w.size() - m]);
    while (!w.empty() && w.back() == k - 1) w.pop_back();
  }
  std::stable_sort(out.begin(), out.end(), [](const PeriodicTriple& a, const PeriodicTriple& b) { return a.q < b.q; });
  const MapModel& T = sub.induced().map();
  for (auto& t : out) {
    t.point = sub.periodic_point(t.word);
    // each return segment starts from the periodic point of the rotated word
    for (std::size_t i = 0; i < t.word.size(); ++i) {
      const int r = sub.r(t.word[i]);
      const double p = i == 0 ? t.point : sub.periodic_point(rotate(t.word, i));
      t.d += r;
      t.tau += column_roof(T, roof, p, r);
    }
  }
  return out;
}

void write_triples_csv(std::ostream& os, const std::vector<PeriodicTriple>& triples) {
  os << "word,q,d,tau\n";
  os.precision(17);
  for (const auto& t : triples) {
    for (std::size_t i = 0; i < t.word.size(); ++i) os << (i ? "-" : "") << t.word[i];
    os << ',' << t.q << ',' << t.d << ',' << t.tau << '\n';
  }
}

std::pair<double, double> minimize_phase(const std::function<double(double)>& f) {
  constexpr int grid = 1024;
  const double h = kTwoPi / grid;
  double best_x = 0.0, best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid; ++i) {
    const double x = i * h, v = f(x);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  // golden section on [best_x - h, best_x + h]; kinks (max of distances) defeat parabolic steps
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = best_x - h, b = best_x + h;
  double c = b - g * (b - a), d = a + g * (b - a), fc = f(c), fd = f(d);
  for (int it = 0; it < 100 && b - a > 1e-15; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  const double xm = fc < fd ? c : d, fm = std::min(fc, fd);
  if (fm < best) {
    best = fm;
    best_x = xm;
  }
  best_x = std::fmod(best_x, kTwoPi);
  if (best_x < 0.0) best_x += kTwoPi;
  return {best_x, best};
}

DiophantineReport diophantine_check(const std::vector<PeriodicTriple>& triples, const std::vector<double>& b_grid,
                                    const std::vector<double>& omega_grid, double beta0, double alpha, double C,
                                    int threads) {
  if (triples.empty()) throw ParameterError("diophantine_check: no triples");
  if (!(alpha > 0.0)) throw ParameterError("diophantine_check: alpha must be positive");
  if (b_grid.empty() || omega_grid.empty()) throw ParameterError("diophantine_check: empty grid");
  DiophantineReport rep;
  rep.alpha = alpha;
  rep.C = C;
  rep.beta0 = beta0;
  rep.degenerate = triples.size() < 2;
  const std::size_t nw = omega_grid.size();
  rep.rows.resize(b_grid.size() * nw);
  parallel_for(rep.rows.size(), threads, [&](std::size_t i) {
    const double b = b_grid[i / nw], om = omega_grid[i % nw];
    const int n = steps_for(b, beta0);
    const double tol = C * std::pow(std::abs(b), -alpha);
    auto f = [&](double phi) {
      double worst = 0.0;
      for (const auto& t : triples) {
        const double arg = b * n * t.tau + om * n * static_cast<double>(t.d) + t.q * phi;
        worst = std::max(worst, dist_2pi_z(arg) / (t.q * tol));
      }
      return worst;
    };
    auto [phi, val] = minimize_phase(f);
    rep.rows[i] = ScanRow{b, om, phi, val, val <= 1.0};
  });
  for (std::size_t i = 0; i < b_grid.size(); ++i)
    for (std::size_t j = 0; j < nw; ++j)
      if (rep.rows[i * nw + j].pass) {
        rep.passing_b.push_back(b_grid[i]);
        break;
      }
  rep.label = evidence_label(b_grid, rep.passing_b);
  if (rep.degenerate) rep.label += "; degenerate: single triple, phi absorbs the equation";
  return rep;
}

void DiophantineReport::write_csv(std::ostream& os) const {
  os << "b,omega,phi_star,residual,pass_flag\n";
  for (const auto& r : rows) os << r.b << ',' << r.omega << ',' << r.phi_star << ',' << r.residual << ',' << (r.pass ? 1 : 0) << '\n';
}

EigenReport approx_eigenfunction_search(const FiniteSubsystem& sub, const RoofFunction& roof,
                                        const std::vector<double>& b_grid, const std::vector<double>& omega_grid,
                                        double beta0, double alpha, double C, int depth, int threads,
                                        std::optional<double> fixed_phase) {
  if (depth < 1) throw ParameterError("eigenfunction search: depth >= 1 required");
  const int k = static_cast<int>(sub.symbol_count());
  if (std::pow(double(k), depth) > 1e5) throw ParameterError("eigenfunction search: too many cylinders");
  if (b_grid.empty() || omega_grid.empty()) throw ParameterError("eigenfunction search: empty grid");
  EigenReport rep;
  rep.alpha = alpha;
  rep.C = C;
  rep.beta0 = beta0;
  rep.depth = depth;

  // Words of length `depth` in base-k order; F shifts the word by one.
  const std::size_t W = static_cast<std::size_t>(std::pow(double(k), depth) + 0.5);
  std::vector<std::vector<int>> words(W, std::vector<int>(static_cast<std::size_t>(depth)));
  for (std::size_t c = 0; c < W; ++c) {
    std::size_t x = c;
    for (int i = depth - 1; i >= 0; --i) {
      words[c][i] = static_cast<int>(x % k);
      x /= k;
    }
  }
  auto index_of = [&](const std::vector<int>& w) {
    std::size_t c = 0;
    for (int s : w) c = c * k + s;
    return c;
  };
  std::vector<double> H(W), r(W);
  std::vector<std::size_t> shift(W);
  const MapModel& T = sub.induced().map();
  for (std::size_t c = 0; c < W; ++c) {
    const double p = sub.periodic_point(words[c]);
    r[c] = sub.r(words[c][0]);
    H[c] = column_roof(T, roof, p, static_cast<int>(r[c]));
    shift[c] = index_of(rotate(words[c], 1));
  }

  const std::size_t nw = omega_grid.size();
  rep.rows.resize(b_grid.size() * nw);
  rep.scaled.resize(rep.rows.size());
  parallel_for(rep.rows.size(), threads, [&](std::size_t i) {
    const double b = b_grid[i / nw], om = omega_grid[i % nw];
    const int n = steps_for(b, beta0);
    // M^n u (c) = e^{i theta_c} u(sigma^n c); cycles of sigma^n with their total phase
    std::vector<std::size_t> to(W);
    std::vector<double> theta(W);
    for (std::size_t c = 0; c < W; ++c) {
      std::size_t x = c;
      double ph = 0.0;
      for (int j = 0; j < n; ++j) {
        ph -= b * H[x] + om * r[x];
        x = shift[x];
      }
      to[c] = x;
      theta[c] = ph;
    }
    std::vector<char> seen(W, 0);
    std::vector<std::pair<int, double>> cycles;  // length, total phase
    for (std::size_t c = 0; c < W; ++c) {
      if (seen[c]) continue;
      int L = 0;
      double tot = 0.0;
      for (std::size_t x = c; !seen[x]; x = to[x]) {
        seen[x] = 1;
        tot += theta[x];
        ++L;
      }
      cycles.emplace_back(L, std::fmod(tot, kTwoPi));
    }
    // Around a cycle the mismatch L phi - Theta is spread evenly: residual 2 sin(delta / 2L).
    auto f = [&](double phi) {
      double worst = 0.0;
      for (const auto& [L, tot] : cycles) {
        const double delta = dist_2pi_z(L * phi - tot) / L;
        worst = std::max(worst, 2.0 * std::sin(0.5 * delta));
      }
      return worst;
    };
    auto [phi, val] = fixed_phase ? std::pair{*fixed_phase, f(*fixed_phase)} : minimize_phase(f);
    rep.rows[i] = ScanRow{b, om, phi, val, val <= C * std::pow(std::abs(b), -alpha)};
    rep.scaled[i] = val * std::pow(std::abs(b), alpha);
  });
  for (std::size_t i = 0; i < b_grid.size(); ++i)
    for (std::size_t j = 0; j < nw; ++j)
      if (rep.rows[i * nw + j].pass) {
        rep.flagged_b.push_back(b_grid[i]);
        break;
      }
  rep.label = evidence_label(b_grid, rep.flagged_b);
  return rep;
}

void EigenReport::write_csv(std::ostream& os) const {
  os << "b,omega,phi_star,residual,pass_flag\n";
  for (const auto& r : rows) os << r.b << ',' << r.omega << ',' << r.phi_star << ',' << r.residual << ',' << (r.pass ? 1 : 0) << '\n';
}

}  // namespace semiflow
