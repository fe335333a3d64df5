#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semiflow/suspension.hpp"

namespace semiflow {

/// Finite set Z of cells of the induced map. F maps each cell onto Y, so Z0 = cap F^{-n} Z
/// carries the full one-sided shift on these symbols.
class FiniteSubsystem {
 public:
  FiniteSubsystem(std::shared_ptr<const InducedMap> ind, std::vector<std::size_t> cells);

  const InducedMap& induced() const { return *ind_; }
  const std::vector<std::size_t>& cells() const { return cells_; }
  std::size_t symbol_count() const { return cells_.size(); }
  int max_return() const { return max_r_; }
  int r(int symbol) const { return ind_->cells()[cells_[symbol]].r; }

  /// Point of Z0 with F^i p in cell word[i mod q]: fixed point of the inverse-branch
  /// composition, by contraction from the middle of Y.
  double periodic_point(const std::vector<int>& word) const;
  /// max over symbols of |F(cell) - Y| at the endpoints.
  double full_branch_defect() const;

 private:
  std::shared_ptr<const InducedMap> ind_;
  std::vector<std::size_t> cells_;
  int max_r_ = 0;
};

struct PeriodicTriple {
  std::vector<int> word;  // symbols of the subsystem
  double point = 0.0;
  double tau = 0.0;  // sum_{i<d} h(T^i p)
  long d = 0;        // sum_{i<q} r(F^i p)
  int q = 0;
};

/// Lyndon words of length <= q_max (one per primitive necklace), with their triples.
std::vector<PeriodicTriple> enumerate_periodic(const FiniteSubsystem& sub, const RoofFunction& roof,
                                               int q_max);
/// tau recomputed from the periodic points of every rotation of the word.
double recompute_tau(const FiniteSubsystem& sub, const RoofFunction& roof, const std::vector<int>& word);
void write_triples_csv(std::ostream& os, const std::vector<PeriodicTriple>& triples);
/// Number of primitive necklaces of length n over k symbols (Moebius formula).
long primitive_necklaces(int k, int n);

struct ScanRow {
  double b = 0.0, omega = 0.0;
  double phi_star = 0.0;
  double residual = 0.0;  // max over triples of dist(.) / (C q |b|^-alpha), or the eigen residual
  bool pass = false;
};

struct DiophantineReport {
  double alpha = 0.0, C = 0.0, beta0 = 0.0;
  std::vector<ScanRow> rows;
  std::vector<double> passing_b;
  bool degenerate = false;  // fewer than two triples: phi absorbs the single equation
  std::string label;        // EVIDENCE-FOR / EVIDENCE-AGAINST with the scanned range
  void write_csv(std::ostream& os) const;
};

/// Periodic-data test: for each (b, omega), minimizes over phi the max over triples of
/// dist(b n tau + omega n d + q phi, 2 pi Z) / (C q |b|^-alpha), n = [beta0 ln |b|].
DiophantineReport diophantine_check(const std::vector<PeriodicTriple>& triples,
                                    const std::vector<double>& b_grid,
                                    const std::vector<double>& omega_grid, double beta0,
                                    double alpha, double C, int threads = 0);

struct EigenReport {
  double alpha = 0.0, C = 0.0, beta0 = 0.0;
  int depth = 0;
  std::vector<ScanRow> rows;  // residual = min over (u, phi) of sup |M^n u - e^{i phi} u|
  std::vector<double> scaled;  // residual |b|^alpha
  std::vector<double> flagged_b;
  bool converged = true;
  std::string label;
  void write_csv(std::ostream& os) const;
};

/// Approximate eigenfunctions of M_{b,w} v = e^{-ibH} e^{-iwr} v o F with u unimodular and
/// constant on depth-k cylinders, collocated at the periodic points of the words of length k.
/// There M^n permutes the words, so the minimum over (u, phi) is exact cycle by cycle.
/// `fixed_phase` pins phi (0 asks for eigenvalue 1).
EigenReport approx_eigenfunction_search(const FiniteSubsystem& sub, const RoofFunction& roof,
                                        const std::vector<double>& b_grid,
                                        const std::vector<double>& omega_grid, double beta0,
                                        double alpha, double C = 1.0, int depth = 3,
                                        int threads = 0,
                                        std::optional<double> fixed_phase = std::nullopt);

/// phi in [0, 2 pi) minimizing f: 1024-point grid, then golden section around the best point.
std::pair<double, double> minimize_phase(const std::function<double(double)>& f);

}  // namespace semiflow
