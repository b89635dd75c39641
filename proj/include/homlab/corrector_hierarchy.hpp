#pragma once

// Higher-order periodic correctors. For n >= 1 and a multi-index
// (i_1 ... i_n):
//   -div a grad phi^n     = div((a phi^{n-1} - sigma^{n-1}) e_{i_n}),
//   abar^n_{i_1..i_{n-1}} e_j = int a (grad phi^n_{i_1..i_{n-1} j} + phi^{n-1}_{i_1..i_{n-1}} e_j),
//   q^n                   = a grad phi^n + (a phi^{n-1} - sigma^{n-1}) e_{i_n} - abar^n e_{i_n},
//   -Delta sigma^n        = curl q^n,
// with phi^0 = 1 and sigma^0 = 0. Multi-indices are flattened with i_1 the
// most significant digit, so the children of tuple t are t * d + j.

#include <filesystem>
#include <string>
#include <vector>

#include "homlab/cell_problems.hpp"

namespace homlab {

struct CorrectorOptions {
  EllipticSolveOptions solve{1e-12, 2000};
  // Thresholds for the post-solve identity checks (L2 norms).
  double mean_tolerance = 1e-10;
  double identity_tolerance = 1e-9;
};

// Largest supported order per dimension.
int max_corrector_order(int dim);

struct OrderDiagnostics {
  double max_flux_mean = 0.0;        // max |int q^n|
  double max_flux_divergence = 0.0;  // max ||div q^n||
  double max_sigma_defect = 0.0;     // max ||div sigma^n - q^n||
  int max_iterations = 0;
  double max_residual = 0.0;
};

struct CorrectorSet {
  int dim = 0;
  int order = 0;
  CoefficientField a;
  // phi[n], sigma[n] for 0 <= n <= order, each with dim^n entries.
  std::vector<std::vector<SpectralField>> phi;
  std::vector<std::vector<SpectralField>> sigma;
  // q[n] and abar[n] for 1 <= n <= order; q[n] has dim^n entries and
  // abar[n] has dim^(n-1) entries. Index 0 is unused.
  std::vector<std::vector<SpectralField>> q;
  std::vector<std::vector<Matrix>> abar;
  std::vector<OrderDiagnostics> diagnostics;

  std::size_t tuples(int n) const;
};

// Formats a flattened multi-index of length n as "(i_1,...,i_n)", 1-based.
std::string format_tuple(std::size_t flat, int n, int dim);

CorrectorSet compute_correctors(const CoefficientField& a, int order,
                                const CorrectorOptions& opts = {});

// abar^n as dim^(n-1) matrices; throws std::out_of_range unless 1 <= n <= order.
const std::vector<Matrix>& homogenized_tensor(const CorrectorSet& set, int n);

struct SymmetrizedForm {
  Matrix matrix;  // sum_t xi_{t_1} ... xi_{t_{n-1}} sym(abar^n_t)
  double form = 0.0;  // xi . matrix xi
};

SymmetrizedForm symmetrized_form(const std::vector<Matrix>& abar, int n, const Wavevector& xi);

struct GrowthRow {
  int n = 0;
  double corrector_norm = 0.0;  // ||(phi^n, sigma^n)||_{L2}, summed over tuples
  double coefficient_norm = 0.0;  // Frobenius norm of abar^n
  double flux_norm = 0.0;  // ||q^n||_{L2}
};

struct GrowthReport {
  std::vector<GrowthRow> rows;
  // exp of the least-squares slope of log(corrector_norm) against n, over
  // orders with a positive norm; 0 if there are fewer than two such orders.
  double fitted_base = 0.0;
  // Smallest C with corrector_norm <= C^n for every order.
  double envelope_base = 0.0;
};

GrowthReport growth_report(const CorrectorSet& set);

// Container format: the 8-byte magic "HOMLABC1", a little-endian uint64 with
// the byte length of a JSON manifest, the manifest, then raw little-endian
// float64 pairs (re, im). The manifest lists every block by name, order,
// flattened tuple, component count and byte offset relative to the end of
// the manifest, together with dim, max_mode, grid_size, order and lambda.
void write_correctors(const CorrectorSet& set, const std::filesystem::path& path);
CorrectorSet read_correctors(const std::filesystem::path& path);

}  // namespace homlab
