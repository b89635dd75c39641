#pragma once

// Homogenized solutions of -div a(x/eps) grad u = div f on a large torus of
// period R standing in for R^d. Everything is a Fourier multiplier except
// the heterogeneous solve in prop33_error.
//
// Gradient spectra G = F grad u are stored per frequency as d complex values.
// The hierarchy is
//   G^1 = -xi (xi . f) / (xi . abar^1 xi),
//   G^n = -xi (xi . R^n) / (xi . abar^1 xi),  R^n = sum_{k=2}^n A_k(xi) G^{n+1-k},
// where A_k(xi) = abar^k_{i_1..i_{k-1}} (i xi_{i_1}) ... (i xi_{i_{k-1}}), and the
// averaged solution is G = -eps^2 xi (xi . f) / B(eps xi).

#include <array>
#include <filesystem>
#include <map>
#include <mutex>
#include <vector>

#include "homlab/corrector_hierarchy.hpp"
#include "homlab/symbol.hpp"

namespace homlab {

using ComplexMatrix = Eigen::MatrixXcd;

struct FullSpaceGrid {
  int dim = 2;
  double period = 16.0;
  double cutoff = 9.0;

  // Frequencies 2 pi k / period with |xi_j| <= cutoff, lexicographic in k.
  std::vector<ModeIndex> indices() const;
  Wavevector frequency(const ModeIndex& k) const;
  // Quadrature weight turning sum |g(xi)|^2 into ||g||^2_{L2}.
  double weight() const;
  // Throws std::invalid_argument unless eps * cutoff < 2 pi.
  void check_admissible(double eps) const;
};

struct Forcing {
  // f(xi) = direction * exp(-|xi|^2 width^2 / 2)
  Wavevector direction{};
  double width = 1.0;

  static Forcing gaussian(int dim);
  std::array<Complex, 3> value(const Wavevector& xi) const;
};

// Gradient spectrum on the grid frequencies, d values per frequency.
struct GradientSpectrum {
  int dim = 0;
  std::vector<Complex> values;

  Complex at(std::size_t f, int j) const { return values[f * dim + j]; }
};

// ||<grad>^s g||_{L2} by Parseval on the grid.
double weighted_norm(const GradientSpectrum& g, const FullSpaceGrid& grid, double s);
double forcing_norm(const Forcing& f, const FullSpaceGrid& grid, double s);
// max over frequencies of |G - xi (xi.G)/|xi|^2| / max |G|.
double curl_defect(const GradientSpectrum& g, const FullSpaceGrid& grid);

// abar[n] for 1 <= n <= ell (index 0 unused), as produced by CorrectorSet.
using CoefficientHierarchy = std::vector<std::vector<Matrix>>;

// A_k(xi) = abar^k contracted with (i xi)^{k-1}.
ComplexMatrix contracted_coefficient(const CoefficientHierarchy& abar, int k,
                                     const Wavevector& xi);
// sum_{k=1}^ell eps^{k-1} A_k(xi).
ComplexMatrix truncated_symbol(const CoefficientHierarchy& abar, int ell, double eps,
                               const Wavevector& xi);

struct HomogenizedHierarchy {
  int ell = 0;
  FullSpaceGrid grid;
  std::vector<ModeIndex> indices;
  CoefficientHierarchy abar;
  // potential[n] and gradient[n] for 1 <= n <= ell: u^n and G^n = i xi u^n.
  std::vector<std::vector<Complex>> potential;
  std::vector<GradientSpectrum> gradient;

  // sum_n eps^{n-1} G^n
  GradientSpectrum combined(double eps) const;
  std::vector<Complex> combined_potential(double eps) const;
};

HomogenizedHierarchy solve_hierarchy(const CoefficientHierarchy& abar, int ell,
                                     const Forcing& f, const FullSpaceGrid& grid);

// Symbol values B(eps xi) keyed by eps * k rounded to multiples of 2^-30, so
// that eps sweeps reuse overlapping points. Each value is computed at the
// exact eps xi of its first request; halving eps reproduces those products
// exactly in floating point.
class SymbolCache {
 public:
  SymbolCache(const CoefficientField& a, const FullSpaceGrid& grid, SymbolOptions opts = {});

  // Values for all keys eps * k; missing ones are computed in parallel.
  std::vector<Complex> values(double eps, const std::vector<ModeIndex>& ks);
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  // Every value computed so far, for band checks.
  std::vector<SymbolSample> samples() const;

 private:
  using Key = std::array<long long, 3>;
  Key key(double eps, const ModeIndex& k) const;

  const CoefficientField& a_;
  FullSpaceGrid grid_;
  SymbolOptions opts_;
  std::map<Key, SymbolSample> values_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

// Frequencies where |f| is below this fraction of its maximum are set to zero
// without a symbol evaluation.
inline constexpr double kNegligibleForcing = 1e-18;

GradientSpectrum averaged_solution_exact(SymbolCache& cache, double eps, const Forcing& f,
                                         const FullSpaceGrid& grid);

struct RateRow {
  double eps = 0.0;
  double error = 0.0;
  double weighted_norm = 0.0;
  double ratio = 0.0;  // error / (eps^ell * weighted_norm)
};

struct RateTable {
  int ell = 0;
  std::vector<RateRow> rows;
  double slope = 0.0;  // least squares of log error against log eps
  double ratio_spread = 0.0;  // max ratio / min ratio - 1
};

RateTable error_and_rate(const CorrectorSet& set, int ell, const Forcing& f,
                         const FullSpaceGrid& grid, const std::vector<double>& eps_list,
                         SymbolCache& cache);

double fitted_slope(const std::vector<double>& x, const std::vector<double>& y);

void write_rate_csv(const RateTable& table, const std::filesystem::path& path);

// Residual of the two-scale identity
//   div a grad F^n[w] = div (sum_{k=1}^n abar^k grad^{k-1}) grad w
//                       + div ((a phi^n - sigma^n) grad grad^n w)
// with F^n[w] = sum_{k=0}^n phi^k grad^k w, evaluated on a torus of `period`
// unit cells. w is given on the unit torus in rescaled coordinates X = x /
// period. Returns ||residual||_{L2} / ||<grad>^{n+1} w||_{L2}.
double two_scale_residual(const CorrectorSet& set, int n, const SpectralField& w, int period);

struct Prop33Options {
  int proxy_period = 4;
  EllipticSolveOptions solve{1e-11, 4000};
};

struct Prop33Result {
  double eps = 0.0;
  double error = 0.0;  // root mean square over translations
  double weighted_norm = 0.0;
  double ratio = 0.0;  // error / (eps^ell * weighted_norm)
  std::vector<double> per_translation;
};

// Solves -div a(x/eps + z) grad u = div f on the proxy torus for each of the
// Z^d translations z and compares grad u with the gradient of
// sum_{k=0}^ell eps^k phi^k(x/eps + z) grad^k u^ell. eps = 1 / m.
Prop33Result prop33_error(const CorrectorSet& set, int ell, const Forcing& f, int m,
                          int translations, const Prop33Options& opts = {});

struct NaiveSymbolReport {
  std::size_t frequencies = 0;
  std::size_t near_vanishing = 0;  // |symbol| < lambda / 4 |xi|^2
  double worst_ratio = 0.0;  // min |symbol| / |xi|^2
  Wavevector worst_xi{};
};

// Evaluates xi . (sum_k eps^{k-1} A_k(xi)) xi on the grid and reports where it
// nearly vanishes.
NaiveSymbolReport naive_symbol_guard(const CoefficientHierarchy& abar, int ell, double eps,
                                     double lambda, const FullSpaceGrid& grid);

// Largest eps for which sum_{k>=2} eps^{k-1} |abar^k| <= lambda / 4 on |xi| <= 1.
double band_eps_bound(const CoefficientHierarchy& abar, int ell, double lambda);

struct BandReport {
  double min_value = 0.0;
  double max_value = 0.0;
  bool within = false;  // lambda / 2 <= |e . B e| <= 2 / lambda everywhere
};

// Scans |e . truncated_symbol(xi) e| over |xi| <= 1 and unit e.
BandReport truncated_symbol_band(const CoefficientHierarchy& abar, int ell, double eps,
                                 double lambda);

}  // namespace homlab
