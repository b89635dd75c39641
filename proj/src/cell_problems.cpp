#include "homlab/cell_problems.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

namespace homlab {

void EllipticSolveOptions::validate() const {
  if (!(tolerance > 0.0 && tolerance <= 1e-4)) {
    std::ostringstream os;
    os << "solver tolerance " << tolerance << " outside (0, 1e-4]";
    throw std::invalid_argument(os.str());
  }
  if (max_iterations < 1) throw std::invalid_argument("max_iterations must be positive");
}

namespace medium {

Descriptor cosine_1d() {
  return Expression{[](const Wavevector& x) {
                      Matrix a(1, 1);
                      a(0, 0) = 1.0 / (2.0 + std::cos(kTwoPi * x[0]));
                      return a;
                    },
                    "cosine_1d"};
}

Descriptor laminate_2d(double amplitude) {
  FourierModes m;
  Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(2, 2);
  m.modes.push_back({{0, 0, 0}, id});
  m.modes.push_back({{1, 0, 0}, 0.5 * amplitude * id});
  m.modes.push_back({{-1, 0, 0}, 0.5 * amplitude * id});
  return m;
}

Descriptor oblique_2d() {
  return Expression{[](const Wavevector& x) {
                      const double t1 = kTwoPi * x[0];
                      const double t2 = kTwoPi * x[1];
                      const double s = 1.0 + 0.25 * std::sin(t1) + 0.2 * std::cos(t1 + t2) +
                                       0.15 * std::sin(t2);
                      const double off = 0.1 * std::cos(t1 - t2);
                      Matrix a(2, 2);
                      a << s, off, off, 0.8 * s + 0.1 * std::sin(t2);
                      return a;
                    },
                    "oblique_2d"};
}

}  // namespace medium

namespace {

// Integral of exp(-i 2 pi k x) over [s/L, (s+1)/L).
Complex cell_integral(int k, int s, int side) {
  const double h = 1.0 / side;
  if (k == 0) return h;
  const double w = kTwoPi * k;
  const Complex a = std::polar(1.0, -w * s * h);
  const Complex b = std::polar(1.0, -w * (s + 1) * h);
  return (a - b) / Complex(0.0, w);
}

SpectralField matrix_field_from_modes(const LatticePtr& lattice,
                                      const medium::FourierModes& modes) {
  const int d = lattice->dim();
  SpectralField a(lattice, Rank::matrix, true);
  for (const auto& m : modes.modes) {
    const auto idx = lattice->find(m.k);
    if (!idx) throw std::invalid_argument("medium mode " + format_mode(m.k, d) +
                                          " lies outside the lattice");
    if (m.coefficient.rows() != d || m.coefficient.cols() != d)
      throw std::invalid_argument("medium mode coefficient has wrong shape");
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a.coeff(i * d + j, *idx) += m.coefficient(i, j);
  }
  return a;
}

}  // namespace

Matrix CoefficientField::mean() const {
  const int d = dim();
  Matrix m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = a_.mean(i * d + j).real();
  return m;
}

CoefficientField CoefficientField::from_field(SpectralField a, std::string label) {
  if (a.rank() != Rank::matrix) throw std::invalid_argument("coefficient field must be matrix-valued");
  const int d = a.dim();
  CoefficientField out;
  const auto samples = a.to_grid();
  const std::size_t np = a.lattice().num_grid_points();
  double scale = 0.0;
  double imag = 0.0;
  for (const auto& s : samples) {
    scale = std::max(scale, std::abs(s));
    imag = std::max(imag, std::abs(s.imag()));
  }
  if (imag > 1e-10 * std::max(scale, 1.0))
    throw std::invalid_argument("coefficient field is not real-valued on the grid");

  out.grid_.resize(np * d * d);
  out.lambda_ = std::numeric_limits<double>::infinity();
  out.upper_ = 0.0;
  out.symmetric_ = true;
  Matrix m(d, d);
  for (std::size_t p = 0; p < np; ++p) {
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        const double v = samples[(i * d + j) * np + p].real();
        m(i, j) = v;
        out.grid_[(p * d + i) * d + j] = v;
      }
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0))
      out.symmetric_ = false;
    const Matrix sym = 0.5 * (m + m.transpose());
    const double low = Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly)
                           .eigenvalues()
                           .minCoeff();
    const double high = Eigen::JacobiSVD<Matrix>(m).singularValues().maxCoeff();
    if (low < out.lambda_) {
      out.lambda_ = low;
      out.worst_point_ = p;
    }
    out.upper_ = std::max(out.upper_, high);
  }
  if (!(out.lambda_ > 0.0)) {
    const Wavevector x = a.lattice().grid_point(out.worst_point_);
    std::ostringstream os;
    os << "ellipticity violated: smallest eigenvalue " << out.lambda_ << " at grid point (";
    for (int j = 0; j < d; ++j) os << (j ? "," : "") << x[j];
    os << ")";
    throw EllipticityError(os.str());
  }
  a.make_real();
  out.a_ = std::move(a);
  out.label_ = std::move(label);
  return out;
}

CoefficientField CoefficientField::embedded(const LatticePtr& target, int factor,
                                            const Wavevector& shift) const {
  return from_field(embed(a_, target, factor, shift), label_);
}

CoefficientField make_coefficient_field(const LatticePtr& lattice,
                                        const medium::Descriptor& descriptor) {
  const int d = lattice->dim();
  return std::visit(
      [&](const auto& desc) -> CoefficientField {
        using T = std::decay_t<decltype(desc)>;
        if constexpr (std::is_same_v<T, medium::Identity>) {
          medium::FourierModes m;
          m.modes.push_back({{0, 0, 0}, Eigen::MatrixXcd::Identity(d, d)});
          return CoefficientField::from_field(matrix_field_from_modes(lattice, m), "identity");
        } else if constexpr (std::is_same_v<T, medium::FourierModes>) {
          return CoefficientField::from_field(matrix_field_from_modes(lattice, desc), "modes");
        } else if constexpr (std::is_same_v<T, medium::Expression>) {
          const std::size_t np = lattice->num_grid_points();
          std::vector<Complex> samples(np * d * d);
          for (std::size_t p = 0; p < np; ++p) {
            const Matrix v = desc.evaluate(lattice->grid_point(p));
            if (v.rows() != d || v.cols() != d)
              throw std::invalid_argument("medium expression returns wrong shape");
            for (int i = 0; i < d; ++i)
              for (int j = 0; j < d; ++j) samples[(i * d + j) * np + p] = v(i, j);
          }
          auto a = SpectralField::from_grid(lattice, Rank::matrix, samples, true);
          return CoefficientField::from_field(std::move(a), desc.label);
        } else {
          const int side = desc.side;
          std::size_t cells = 1;
          for (int j = 0; j < d; ++j) cells *= static_cast<std::size_t>(side);
          if (side < 1 || desc.values.size() != cells)
            throw std::invalid_argument("lattice samples do not match side^d");
          SpectralField a(lattice, Rank::matrix, true);
          for (std::size_t i = 0; i < lattice->num_modes(); ++i) {
            const ModeIndex k = lattice->mode(i);
            for (std::size_t s = 0; s < cells; ++s) {
              std::size_t rest = s;
              Complex w = 1.0;
              for (int j = d - 1; j >= 0; --j) {
                w *= cell_integral(k[j], static_cast<int>(rest % side), side);
                rest /= side;
              }
              const Matrix& v = desc.values[s];
              for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) a.coeff(r * d + c, i) += w * v(r, c);
            }
          }
          return CoefficientField::from_field(std::move(a), "lattice_samples");
        }
      },
      descriptor);
}

namespace {

// -(grad + i shift) . a (grad + i shift) on the Galerkin space of a's lattice.
class ShiftedOperator {
 public:
  ShiftedOperator(const CoefficientField& a, const Wavevector& shift)
      : a_(a), lat_(a.lattice()), d_(a.dim()) {
    const std::size_t n = lat_.num_modes();
    kappa_.resize(n * d_);
    inv_norm2_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Wavevector k = lat_.wavevector(i);
      double k2 = 0.0;
      for (int j = 0; j < d_; ++j) {
        const double kj = k[j] + shift[j];
        kappa_[i * d_ + j] = kj;
        k2 += kj * kj;
      }
      inv_norm2_[i] = k2 > 0.0 ? 1.0 / k2 : 0.0;
    }
    grad_.assign(d_, std::vector<Complex>(lat_.num_grid_points()));
    flux_.assign(d_, std::vector<Complex>(lat_.num_grid_points()));
  }

  void apply(std::span<const Complex> v, std::span<Complex> out) {
    const std::size_t n = lat_.num_modes();
    const std::size_t np = lat_.num_grid_points();
    for (int j = 0; j < d_; ++j) {
      auto& g = grad_[j];
      std::fill(g.begin(), g.end(), Complex{});
      for (std::size_t i = 0; i < n; ++i)
        g[lat_.grid_slot(i)] = Complex(0.0, kappa_[i * d_ + j]) * v[i];
      lat_.fft().inverse(g);
    }
    const auto& av = a_.grid_values();
    for (std::size_t p = 0; p < np; ++p) {
      for (int r = 0; r < d_; ++r) {
        Complex s{};
        const double* row = &av[(p * d_ + r) * d_];
        for (int j = 0; j < d_; ++j) s += row[j] * grad_[j][p];
        flux_[r][p] = s;
      }
    }
    for (int r = 0; r < d_; ++r) lat_.fft().forward(flux_[r]);
    const double scale = 1.0 / static_cast<double>(np);
    for (std::size_t i = 0; i < n; ++i) {
      Complex s{};
      const std::size_t slot = lat_.grid_slot(i);
      for (int r = 0; r < d_; ++r) s += Complex(0.0, kappa_[i * d_ + r]) * flux_[r][slot];
      out[i] = -s * scale;
    }
  }

  void precondition(std::span<const Complex> r, std::span<Complex> z) const {
    for (std::size_t i = 0; i < r.size(); ++i) z[i] = r[i] * inv_norm2_[i];
  }

  std::span<const double> kappa() const { return kappa_; }

 private:
  const CoefficientField& a_;
  const FrequencyLattice& lat_;
  int d_;
  std::vector<double> kappa_;
  std::vector<double> inv_norm2_;
  std::vector<std::vector<Complex>> grad_;
  std::vector<std::vector<Complex>> flux_;
};

KrylovReport run_krylov(ShiftedOperator& op, bool symmetric, std::span<const Complex> b,
                        std::span<Complex> x, const EllipticSolveOptions& opts) {
  auto apply = [&](std::span<const Complex> in, std::span<Complex> out) { op.apply(in, out); };
  auto prec = [&](std::span<const Complex> in, std::span<Complex> out) { op.precondition(in, out); };
  using M = EllipticSolveOptions::Method;
  const bool use_cg = opts.method == M::conjugate_gradient ||
                      (opts.method == M::automatic && symmetric);
  if (use_cg) return conjugate_gradient(apply, prec, b, x, opts.tolerance, opts.max_iterations);
  return bicgstab(apply, prec, b, x, opts.tolerance, opts.max_iterations);
}

}  // namespace

SpectralField apply_shifted_operator(const CoefficientField& a, const SpectralField& v,
                                     const Wavevector& shift) {
  if (v.rank() != Rank::scalar || !v.lattice().same_as(a.lattice()))
    throw std::invalid_argument("operator argument must be a scalar field on a's lattice");
  ShiftedOperator op(a, shift);
  SpectralField out(a.lattice_ptr(), Rank::scalar, false);
  op.apply(v.component(0), out.component(0));
  return out;
}

CellSolution solve_cell(const CoefficientField& a, const SpectralField& g,
                        const EllipticSolveOptions& opts) {
  opts.validate();
  if (g.rank() != Rank::vector || !g.lattice().same_as(a.lattice()))
    throw std::invalid_argument("cell forcing must be a vector field on a's lattice");
  const auto& lat = a.lattice();
  const int d = a.dim();

  CellSolution sol{SpectralField(a.lattice_ptr(), Rank::scalar, g.is_real()), {}};
  std::vector<Complex> b(lat.num_modes());
  double b_norm = 0.0;
  for (std::size_t i = 0; i < lat.num_modes(); ++i) {
    const Wavevector k = lat.wavevector(i);
    Complex s{};
    for (int j = 0; j < d; ++j) s += Complex(0.0, k[j]) * g.coeff(j, i);
    b[i] = s;
    b_norm = std::max(b_norm, std::abs(s));
  }
  if (b_norm == 0.0) {
    sol.report.converged = true;
    return sol;
  }

  ShiftedOperator op(a, {});
  sol.report = run_krylov(op, a.symmetric(), b, sol.phi.component(0), opts);
  if (!sol.report.converged) {
    std::ostringstream os;
    os << "cell solve did not converge: relative residual " << sol.report.relative_residual
       << " after " << sol.report.iterations << " iterations";
    throw SolverError(os.str(), sol.report.relative_residual);
  }
  sol.phi.coeff(0, lat.zero_index()) = 0.0;
  if (sol.phi.is_real()) sol.phi.make_real();
  return sol;
}

bool is_admissible_bloch_vector(const Wavevector& xi, int dim) {
  bool nonzero = false;
  for (int j = 0; j < dim; ++j) {
    if (!(std::abs(xi[j]) < kTwoPi)) return false;
    nonzero = nonzero || xi[j] != 0.0;
  }
  for (int j = dim; j < 3; ++j)
    if (xi[j] != 0.0) return false;
  return nonzero;
}

BlochSolution solve_bloch(const CoefficientField& a, const Wavevector& xi,
                          const Wavevector& probe, const EllipticSolveOptions& opts) {
  opts.validate();
  const int d = a.dim();
  if (!is_admissible_bloch_vector(xi, d)) {
    std::ostringstream os;
    os << "Bloch vector (";
    for (int j = 0; j < d; ++j) os << (j ? "," : "") << xi[j];
    os << ") is zero or outside the open dual cell |xi_j| < 2 pi";
    throw std::invalid_argument(os.str());
  }
  const auto& lat = a.lattice();
  double xi_norm2 = 0.0;
  Complex forcing{};
  for (int j = 0; j < d; ++j) {
    xi_norm2 += xi[j] * xi[j];
    forcing += Complex(0.0, xi[j] * probe[j]);
  }

  BlochSolution sol{SpectralField(a.lattice_ptr(), Rank::scalar, false), {}, {}, false};
  if (std::sqrt(xi_norm2) < 1e-3) {
    sol.ill_conditioned = true;
    std::clog << "warning: Bloch solve at |xi| = " << std::sqrt(xi_norm2)
              << " < 1e-3 is poorly conditioned\n";
  }
  std::vector<Complex> b(lat.num_modes(), Complex{});
  b[lat.zero_index()] = forcing;
  if (forcing == Complex{}) {
    sol.report.converged = true;
    return sol;
  }
  ShiftedOperator op(a, xi);
  sol.report = run_krylov(op, a.symmetric(), b, sol.v.component(0), opts);
  if (!sol.report.converged) {
    std::ostringstream os;
    os << "Bloch solve did not converge: relative residual " << sol.report.relative_residual
       << " after " << sol.report.iterations << " iterations";
    throw SolverError(os.str(), sol.report.relative_residual);
  }
  sol.mean = sol.v.mean();
  return sol;
}

}  // namespace homlab
