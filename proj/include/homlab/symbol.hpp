#pragma once

// The averaged symbol B(xi) of a periodic medium, extracted from the Bloch
// problem as B(xi) = (i xi . e) / mean(v), together with polynomial models of
// B near the origin and their comparison with the corrector hierarchy.

#include <filesystem>
#include <vector>

#include "homlab/cell_problems.hpp"
#include "homlab/corrector_hierarchy.hpp"

namespace homlab {

struct SymbolSample {
  Wavevector xi{};
  Complex value;
  Wavevector probe{};
  double residual = 0.0;
  int iterations = 0;
};

class SymbolBoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SymbolOptions {
  EllipticSolveOptions solve{1e-12, 2000};
  // Relative slack when checking lambda |xi|^2 <= Re B <= xi . mean(a) xi.
  double bound_slack = 1e-9;
};

// Unit vector xi / |xi|.
Wavevector default_probe(const Wavevector& xi, int dim);

// Throws std::invalid_argument for inadmissible xi or |xi . e| < 1e-12,
// SolverError if the Bloch solve fails and SymbolBoundError if the value
// leaves the ellipticity band.
SymbolSample bhat_at(const CoefficientField& a, const Wavevector& xi, const Wavevector& probe,
                     const SymbolOptions& opts = {});
inline SymbolSample bhat_at(const CoefficientField& a, const Wavevector& xi,
                            const SymbolOptions& opts = {}) {
  return bhat_at(a, xi, default_probe(xi, a.dim()), opts);
}

// Evaluates bhat_at (default probe) at every point; the output order matches
// the input order regardless of scheduling.
std::vector<SymbolSample> sample_symbol(const CoefficientField& a,
                                        const std::vector<Wavevector>& points,
                                        const SymbolOptions& opts = {});

struct ProbeConsistency {
  std::vector<SymbolSample> samples;
  // max_{i,j} |B_i - B_j| / |xi|^2 over the admissible probes.
  double max_deviation = 0.0;
};

ProbeConsistency probe_consistency(const CoefficientField& a, const Wavevector& xi,
                                   const std::vector<Wavevector>& probes,
                                   const SymbolOptions& opts = {});

// Homogeneous monomial xi^alpha.
struct Monomial {
  std::array<int, 3> exponent{};
  double coefficient = 0.0;
};

// All exponent vectors of total degree p in dim variables, in a fixed order
// (lexicographically descending in the first exponent).
std::vector<std::array<int, 3>> monomial_exponents(int dim, int degree);

struct TaylorModel {
  int dim = 0;
  int max_degree = 0;
  bool includes_odd = false;
  // terms[p] holds the degree-p monomials (empty for excluded degrees).
  std::vector<std::vector<Monomial>> terms;
  double rms_residual = 0.0;
  double max_relative_residual = 0.0;
  double condition_number = 0.0;
  std::vector<double> radii;
  int rays = 0;

  double degree_form(int p, const Wavevector& xi) const;
  double evaluate(const Wavevector& xi) const;
};

class RankDeficientFit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Least squares of Re(value) over homogeneous monomials of degrees 2..D
// (even degrees only unless include_odd). Columns are scaled to unit norm.
TaylorModel taylor_fit(const std::vector<SymbolSample>& samples, int dim, int max_degree,
                       bool include_odd = false);

struct RayDesign {
  int max_degree = 10;
  std::vector<double> radii{0.4, 0.3, 0.2, 0.1, 0.05};
  unsigned seed = 12345;
  double max_condition = 1e6;
  int max_random_rays = 64;
  // Sample both xi and -xi on every ray.
  bool symmetric_pairs = true;
};

// Coordinate rays, (e_i +- e_j)/sqrt 2 diagonals, then seeded random unit rays
// until the even-monomial design at max_degree has condition number below
// max_condition.
std::vector<Wavevector> design_rays(int dim, const RayDesign& design);
std::vector<Wavevector> ray_points(const std::vector<Wavevector>& rays, const RayDesign& design);

// Samples the symbol on the design and fits an even model.
TaylorModel fit_symbol(const CoefficientField& a, const RayDesign& design,
                       const SymbolOptions& opts = {},
                       std::vector<SymbolSample>* samples_out = nullptr);

struct RouteComparison {
  int n = 0;
  // Degree-(n+1) part of the model at the probe direction maximising the
  // discrepancy, and i^{n-1} xi . sym(abar^n xi...xi) xi there.
  double model_form = 0.0;
  double corrector_form = 0.0;
  double discrepancy = 0.0;  // |model - corrector| / max(1, |corrector|), max over probes
};

// Probe directions: coordinate axes, diagonals and eight fixed random unit
// vectors.
std::vector<Wavevector> comparison_directions(int dim);

std::vector<RouteComparison> compare_with_correctors(const TaylorModel& model,
                                                     const CorrectorSet& set, int ell);

// Estimates mean(v) by solving the Bloch problem for each translated medium
// a(. + z), z in {0, 1/Z, ..., (Z-1)/Z}^d, averaging the physical fields
// exp(i xi.x) v_z(x) over z and projecting the average onto exp(i xi.x).
// Requires Z to divide the grid size.
Complex translation_average_oracle(const CoefficientField& a, const Wavevector& xi,
                                   const Wavevector& probe, int translations,
                                   const SymbolOptions& opts = {});

// CSV with columns xi_1..xi_d, re, im, residual.
void write_symbol_csv(const std::vector<SymbolSample>& samples, int dim,
                      const std::filesystem::path& path);
void write_taylor_json(const TaylorModel& model, const std::filesystem::path& path);

}  // namespace homlab
