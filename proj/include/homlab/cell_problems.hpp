#pragma once

// Elliptic solves on the unit cell: the corrector problem
//   -div(a grad phi) = div g,  mean(phi) = 0,
// and the shifted (Bloch) problem
//   -(grad + i xi) . a (grad + i xi) v = i xi . e,  v periodic,
// whose mean gives the averaged symbol. Both are solved by Krylov iteration on
// the Galerkin system, preconditioned with the exact (shifted) Laplacian.

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "homlab/krylov.hpp"
#include "homlab/torus_fourier.hpp"

namespace homlab {

using Matrix = Eigen::MatrixXd;

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class EllipticityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EllipticSolveOptions {
  enum class Method { automatic, conjugate_gradient, bicgstab };

  double tolerance = 1e-10;
  int max_iterations = 1000;
  Method method = Method::automatic;

  // Throws std::invalid_argument unless tolerance is in (0, 1e-4].
  void validate() const;
};

// Medium descriptors accepted by make_coefficient_field.
namespace medium {

struct Identity {};

// Explicit Fourier modes: a(x) = sum mode.coefficient * exp(i 2 pi k.x).
// The list must be closed under k -> -k with conjugate coefficients.
struct FourierModes {
  struct Mode {
    ModeIndex k;
    Eigen::MatrixXcd coefficient;
  };
  std::vector<Mode> modes;
};

// Closed-form a(x), sampled on the grid and projected onto the lattice.
struct Expression {
  std::function<Matrix(const Wavevector& x)> evaluate;
  std::string label;
};

// Piecewise constant on the L^d sub-cells of size 1/L, projected exactly
// onto the lattice modes. values are row-major over sub-cells (first axis
// slowest).
struct LatticeSamples {
  int side = 0;
  std::vector<Matrix> values;
};

using Descriptor = std::variant<Identity, FourierModes, Expression, LatticeSamples>;

// a(x) = 1 / (2 + cos 2 pi x) in d = 1.
Descriptor cosine_1d();
// a(x) = (1 + amplitude cos 2 pi x_1) Id in d = 2.
Descriptor laminate_2d(double amplitude = 0.5);
// A smooth 2d medium without reflection symmetry and with an off-diagonal part.
Descriptor oblique_2d();

}  // namespace medium

class CoefficientField {
 public:
  const SpectralField& field() const { return a_; }
  const FrequencyLattice& lattice() const { return a_.lattice(); }
  const LatticePtr& lattice_ptr() const { return a_.lattice_ptr(); }
  int dim() const { return a_.dim(); }

  // Certified min over the grid of the smallest eigenvalue of sym(a).
  double lambda() const { return lambda_; }
  // Max over the grid of the spectral norm |a(x)|.
  double upper_bound() const { return upper_; }
  bool symmetric() const { return symmetric_; }
  // Grid values a_ij(x_p) at index (p * d + i) * d + j.
  const std::vector<double>& grid_values() const { return grid_; }
  // Cell average of a.
  Matrix mean() const;
  std::string label() const { return label_; }

  // Grid point and eigenvalue where lambda was attained.
  std::size_t worst_point() const { return worst_point_; }

  // Builds and certifies a field from a matrix SpectralField.
  static CoefficientField from_field(SpectralField a, std::string label = {});

  // x -> a(factor x + shift) on a finer lattice.
  CoefficientField embedded(const LatticePtr& target, int factor,
                            const Wavevector& shift = {}) const;

 private:
  SpectralField a_;
  double lambda_ = 0.0;
  double upper_ = 0.0;
  bool symmetric_ = true;
  std::size_t worst_point_ = 0;
  std::vector<double> grid_;
  std::string label_;
};

CoefficientField make_coefficient_field(const LatticePtr& lattice,
                                        const medium::Descriptor& descriptor);

struct CellSolution {
  SpectralField phi;
  KrylovReport report;
};

// -div(a grad phi) = div g with mean(phi) = 0.
CellSolution solve_cell(const CoefficientField& a, const SpectralField& g,
                        const EllipticSolveOptions& opts = {});

struct BlochSolution {
  SpectralField v;
  Complex mean;
  KrylovReport report;
  bool ill_conditioned = false;
};

// Admissible: xi != 0 and |xi_j| < 2 pi for every component.
bool is_admissible_bloch_vector(const Wavevector& xi, int dim);

BlochSolution solve_bloch(const CoefficientField& a, const Wavevector& xi,
                          const Wavevector& probe,
                          const EllipticSolveOptions& opts = {});

// Applies -(grad + i shift) . a (grad + i shift) to a field on a's lattice.
// Exposed for residual checks.
SpectralField apply_shifted_operator(const CoefficientField& a, const SpectralField& v,
                                     const Wavevector& shift = {});

}  // namespace homlab
