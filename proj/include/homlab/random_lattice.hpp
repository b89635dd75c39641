#pragma once

// Discrete elliptic equations on the torus (Z/LZ)^d with iid coefficients
// a(x) = Id - delta b(x):
//   grad_j u(x) = u(x + e_j) - u(x),   grad^T the adjoint of grad,
//   grad^T a grad u = -grad^T f,
// so that delta = 0 has symbol |m(xi)|^2 with m_j(xi) = exp(i xi_j) - 1.
// The averaged symbol is estimated from plane-wave forcing
// f = exp(i xi.x) e, e = m / |m|, as B(xi) = -|m(xi)| / E[u(xi)], where u(xi)
// is the xi Fourier amplitude (1/L^d) sum_x u(x) exp(-i xi.x).
//
// Random draws are a pure function of (seed, sample, site, component). Sites
// are keyed by their Z^d coordinate x - floor(L/2), so tori of different
// sides sharing a seed see the same coefficients on the common window.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "homlab/cell_problems.hpp"
#include "homlab/torus_fourier.hpp"

namespace homlab {

enum class Distribution { rademacher, uniform, diagonal };

// Accepts "rademacher", "uniform" and "diagonal"; throws std::invalid_argument.
Distribution parse_distribution(const std::string& tag);
std::string distribution_name(Distribution dist);

struct RngSpec {
  std::uint64_t seed = 20240601;
};

// SplitMix64 finaliser.
std::uint64_t mix64(std::uint64_t z);
// Uniform draw in [0, 1) for (seed, sample, Z^d site, component).
double site_uniform(const RngSpec& rng, std::uint64_t sample, const std::array<long long, 3>& site,
                    int component);

// Per-site d x d matrices on (Z/LZ)^d, sites row-major with the first axis
// slowest.
class LatticeField {
 public:
  LatticeField() = default;
  LatticeField(int dim, int side);

  int dim() const { return dim_; }
  int side() const { return side_; }
  std::size_t sites() const { return sites_; }

  Eigen::Map<Matrix> at(std::size_t site) {
    return Eigen::Map<Matrix>(values_.data() + site * dim_ * dim_, dim_, dim_);
  }
  Eigen::Map<const Matrix> at(std::size_t site) const {
    return Eigen::Map<const Matrix>(values_.data() + site * dim_ * dim_, dim_, dim_);
  }
  const std::vector<double>& values() const { return values_; }

  std::array<int, 3> coordinates(std::size_t site) const;
  std::size_t index(const std::array<int, 3>& x) const;  // periodic wrap
  std::size_t neighbor(std::size_t site, int axis, int step) const;

  // Max over sites of the spectral norm |b(x)|.
  double norm_bound() const;
  // Min over sites of the smallest eigenvalue of sym(b(x)).
  double min_symmetric_eigenvalue() const;

 private:
  int dim_ = 0;
  int side_ = 0;
  std::size_t sites_ = 0;
  std::vector<double> values_;
};

// Throws std::invalid_argument unless side >= 2 and 1 <= dim <= 3.
LatticeField sample_field(Distribution dist, int dim, int side, std::uint64_t sample,
                          const RngSpec& rng);

// Id - delta b. Throws std::invalid_argument unless |delta| < 1.
LatticeField perturbed_identity(const LatticeField& b, double delta);

struct DiscreteSolveOptions {
  double tolerance = 1e-12;
  int max_iterations = 500;
};

struct DiscreteSolution {
  std::vector<Complex> u;   // mean zero
  KrylovReport report;
  double residual = 0.0;    // ||grad^T a grad u + grad^T f|| / ||grad^T f||
};

// Matrix-free grad^T a grad with the FFT inverse of grad^T grad as
// preconditioner.
class DiscreteOperator {
 public:
  // Throws EllipticityError unless sym(a(x)) > 0 at every site.
  explicit DiscreteOperator(LatticeField a);

  const LatticeField& medium() const { return a_; }
  void apply(std::span<const Complex> u, std::span<Complex> out) const;
  void precondition(std::span<const Complex> r, std::span<Complex> out) const;

  // Forward differences, d values per site.
  std::vector<Complex> gradient(std::span<const Complex> u) const;
  // grad^T of an edge field, one value per site.
  std::vector<Complex> adjoint_divergence(std::span<const Complex> f) const;

  // grad^T a grad u = -grad^T f with mean(u) = 0. Throws SolverError.
  DiscreteSolution solve(std::span<const Complex> f, const DiscreteSolveOptions& opts = {}) const;

 private:
  LatticeField a_;
  std::shared_ptr<GridFft> fft_;
  std::vector<double> inverse_symbol_;
};

// Medium Id - delta b with edge forcing f (d values per site).
DiscreteSolution solve_discrete(const LatticeField& b, double delta, std::span<const Complex> f,
                                const DiscreteSolveOptions& opts = {});

// Dual-lattice frequency 2 pi k / L and the multiplier m(xi).
Wavevector dual_frequency(const ModeIndex& k, int dim, int side);
std::array<Complex, 3> difference_symbol(const Wavevector& xi, int dim);
double difference_symbol_norm2(const Wavevector& xi, int dim);

// exp(i xi.x) m / |m| at every site, d values per site.
std::vector<Complex> plane_wave_forcing(int dim, int side, const ModeIndex& k);
// (1 / L^d) sum_x u(x) exp(-i xi.x)
Complex plane_wave_amplitude(std::span<const Complex> u, int dim, int side, const ModeIndex& k);

struct MCEstimate {
  Complex value;
  double standard_error = 0.0;
  int samples = 0;
  ModeIndex k{};
  Wavevector xi{};
  double delta = 0.0;
  // max over k' != k of |E[u(k')]| / |E[u(k)]|
  double contamination = 0.0;
};

struct MonteCarloOptions {
  DiscreteSolveOptions solve;
  RngSpec rng;
  std::uint64_t first_sample = 0;
};

// Throws std::invalid_argument for k = 0 modulo L, samples < 2 or |delta| >= 1.
MCEstimate mc_bhat(Distribution dist, int dim, int side, double delta, const ModeIndex& k,
                   int samples, const MonteCarloOptions& opts = {});

// Site law taking the value `plus` with probability p_plus and `minus`
// otherwise.
struct TwoPointLaw {
  Matrix plus;
  Matrix minus;
  double p_plus = 0.5;

  static TwoPointLaw rademacher(int dim);
  static TwoPointLaw deterministic(const Matrix& value);
};

inline constexpr int kMaxEnumerationSites = 20;

struct ExactSymbol {
  Complex value;
  std::size_t configurations = 0;
};

// Exact expectation over all 2^(L^d) configurations. Throws
// std::invalid_argument if L^d > kMaxEnumerationSites.
ExactSymbol enumerate_exact(int dim, int side, const TwoPointLaw& law, double delta,
                            const ModeIndex& k, const DiscreteSolveOptions& opts = {});

// True unless Re B leaves [(1 - |delta|) |m|^2, |m|^2] by more than the
// relative slack.
bool within_discrete_band(Complex value, const Wavevector& xi, int dim, double delta,
                          double slack = 1e-9);

struct DiscreteCorrectorSet {
  int dim = 0;
  int order = 0;
  LatticeField a;
  // phi[n], sigma[n] for 0 <= n <= order with dim^n entries; phi values per
  // site, sigma d x d values per site.
  std::vector<std::vector<std::vector<Complex>>> phi;
  std::vector<std::vector<std::vector<Complex>>> sigma;
  // abar[n] for 1 <= n <= order with dim^(n-1) matrices.
  std::vector<std::vector<Matrix>> abar;
  double max_flux_divergence = 0.0;
};

// Lattice transcription of the corrector recursion:
//   grad^T a grad phi^n = -grad^T((a phi^{n-1} - sigma^{n-1}) e_{i_n}),
//   abar^n e_j = mean(a grad phi^n_{.j} + a phi^{n-1} e_j),
//   q^n = a grad phi^n + (a phi^{n-1} - sigma^{n-1}) e_j - abar^n e_j,
//   sigma^n_{ik} = (grad^T grad)^{-1} (grad_i q_k - grad_k q_i).
// Throws std::invalid_argument unless 1 <= order <= 3.
DiscreteCorrectorSet discrete_correctors(const LatticeField& a, int order,
                                         const DiscreteSolveOptions& opts = {});

struct PeriodizationRow {
  int side = 0;
  int order = 0;
  int samples = 0;
  // Entry-wise Monte Carlo mean and standard error of abar_L^order,
  // dim^(order-1) matrices.
  std::vector<Matrix> mean;
  std::vector<Matrix> standard_error;
};

struct PeriodizationTable {
  Distribution dist = Distribution::rademacher;
  int dim = 0;
  double delta = 0.0;
  std::vector<PeriodizationRow> rows;
  // Frobenius norms of E[abar_{L_i}] - E[abar_{L_{i+1}}] for successive rows.
  std::vector<double> successive_differences;
};

// Throws std::invalid_argument unless 1 <= order <= 2, the side list is
// strictly increasing and samples >= 2. d = 3 runs are capped at L <= 16 and
// 4096 samples.
PeriodizationTable periodization_experiment(Distribution dist, int dim, double delta,
                                            const std::vector<int>& sides, int order, int samples,
                                            const MonteCarloOptions& opts = {});

// CSV with columns d, L, delta, xi_1..xi_d, re, im, stderr, n.
void write_mc_csv(const std::vector<MCEstimate>& rows, int dim, int side,
                  const std::filesystem::path& path);
// CSV with columns L, n, order, tuple, i, j, mean, stderr.
void write_periodization_csv(const PeriodizationTable& table, const std::filesystem::path& path);

}  // namespace homlab
