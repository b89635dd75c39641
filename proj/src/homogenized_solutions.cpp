#include "homlab/homogenized_solutions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "homlab/parallel.hpp"

namespace homlab {

namespace {

constexpr Complex kI{0.0, 1.0};

double norm2(const Wavevector& xi, int d) {
  double s = 0.0;
  for (int j = 0; j < d; ++j) s += xi[j] * xi[j];
  return s;
}

std::size_t power(int d, int n) {
  std::size_t t = 1;
  for (int k = 0; k < n; ++k) t *= static_cast<std::size_t>(d);
  return t;
}

// Digits of a flattened tuple, first index most significant.
std::vector<int> tuple_digits(std::size_t flat, int n, int d) {
  std::vector<int> digits(n);
  for (int k = n - 1; k >= 0; --k) {
    digits[k] = static_cast<int>(flat % d);
    flat /= d;
  }
  return digits;
}

}  // namespace

std::vector<ModeIndex> FullSpaceGrid::indices() const {
  const int kmax = static_cast<int>(std::floor(cutoff * period / kTwoPi + 1e-12));
  std::vector<ModeIndex> out;
  const int side = 2 * kmax + 1;
  std::size_t total = power(side, dim);
  for (std::size_t i = 0; i < total; ++i) {
    ModeIndex k{};
    std::size_t rest = i;
    for (int j = dim - 1; j >= 0; --j) {
      k[j] = static_cast<int>(rest % side) - kmax;
      rest /= side;
    }
    out.push_back(k);
  }
  return out;
}

Wavevector FullSpaceGrid::frequency(const ModeIndex& k) const {
  Wavevector xi{};
  for (int j = 0; j < dim; ++j) xi[j] = kTwoPi * k[j] / period;
  return xi;
}

double FullSpaceGrid::weight() const { return 1.0 / std::pow(period, dim); }

void FullSpaceGrid::check_admissible(double eps) const {
  if (!(eps > 0.0) || !(eps * cutoff < kTwoPi)) {
    std::ostringstream os;
    os << "eps = " << eps << " with frequency cutoff " << cutoff
       << " leaves the admissible symbol range (eps * cutoff must be below 2 pi)";
    throw std::invalid_argument(os.str());
  }
}

Forcing Forcing::gaussian(int dim) {
  Forcing f;
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  for (int j = 0; j < dim; ++j) f.direction[j] = s;
  return f;
}

std::array<Complex, 3> Forcing::value(const Wavevector& xi) const {
  const double g = std::exp(-0.5 * width * width * (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]));
  return {direction[0] * g, direction[1] * g, direction[2] * g};
}

double weighted_norm(const GradientSpectrum& g, const FullSpaceGrid& grid, double s) {
  const auto ks = grid.indices();
  std::vector<double> terms(ks.size());
  for (std::size_t f = 0; f < ks.size(); ++f) {
    const double w = std::pow(1.0 + norm2(grid.frequency(ks[f]), grid.dim), s);
    double v = 0.0;
    for (int j = 0; j < grid.dim; ++j) v += std::norm(g.at(f, j));
    terms[f] = w * v;
  }
  return std::sqrt(grid.weight() * pairwise_sum<double>(terms));
}

double forcing_norm(const Forcing& f, const FullSpaceGrid& grid, double s) {
  const auto ks = grid.indices();
  GradientSpectrum g{grid.dim, std::vector<Complex>(ks.size() * grid.dim)};
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const auto v = f.value(grid.frequency(ks[i]));
    for (int j = 0; j < grid.dim; ++j) g.values[i * grid.dim + j] = v[j];
  }
  return weighted_norm(g, grid, s);
}

double curl_defect(const GradientSpectrum& g, const FullSpaceGrid& grid) {
  const auto ks = grid.indices();
  const int d = grid.dim;
  double worst = 0.0, scale = 0.0;
  for (std::size_t f = 0; f < ks.size(); ++f) {
    const Wavevector xi = grid.frequency(ks[f]);
    const double n2 = norm2(xi, d);
    Complex proj{};
    for (int j = 0; j < d; ++j) proj += xi[j] * g.at(f, j);
    for (int j = 0; j < d; ++j) {
      const Complex par = n2 > 0.0 ? xi[j] * proj / n2 : Complex{};
      worst = std::max(worst, std::abs(g.at(f, j) - par));
      scale = std::max(scale, std::abs(g.at(f, j)));
    }
  }
  return scale > 0.0 ? worst / scale : 0.0;
}

ComplexMatrix contracted_coefficient(const CoefficientHierarchy& abar, int k,
                                     const Wavevector& xi) {
  const auto& level = abar.at(k);
  const int d = static_cast<int>(level.front().rows());
  ComplexMatrix out = ComplexMatrix::Zero(d, d);
  for (std::size_t t = 0; t < level.size(); ++t) {
    Complex w = 1.0;
    for (int digit : tuple_digits(t, k - 1, d)) w *= kI * xi[digit];
    out += w * level[t].cast<Complex>();
  }
  return out;
}

ComplexMatrix truncated_symbol(const CoefficientHierarchy& abar, int ell, double eps,
                               const Wavevector& xi) {
  ComplexMatrix out = contracted_coefficient(abar, 1, xi);
  double scale = 1.0;
  for (int k = 2; k <= ell; ++k) {
    scale *= eps;
    out += scale * contracted_coefficient(abar, k, xi);
  }
  return out;
}

GradientSpectrum HomogenizedHierarchy::combined(double eps) const {
  GradientSpectrum out{grid.dim, std::vector<Complex>(gradient[1].values.size())};
  double scale = 1.0;
  for (int n = 1; n <= ell; ++n) {
    for (std::size_t i = 0; i < out.values.size(); ++i)
      out.values[i] += scale * gradient[n].values[i];
    scale *= eps;
  }
  return out;
}

std::vector<Complex> HomogenizedHierarchy::combined_potential(double eps) const {
  std::vector<Complex> out(potential[1].size());
  double scale = 1.0;
  for (int n = 1; n <= ell; ++n) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * potential[n][i];
    scale *= eps;
  }
  return out;
}

HomogenizedHierarchy solve_hierarchy(const CoefficientHierarchy& abar, int ell,
                                     const Forcing& f, const FullSpaceGrid& grid) {
  if (ell < 1 || static_cast<int>(abar.size()) <= ell)
    throw std::invalid_argument("hierarchy order exceeds the available coefficients");
  const int d = grid.dim;
  const Matrix a1 = abar[1].at(0);
  if (a1.rows() != d) throw std::invalid_argument("coefficient dimension does not match grid");
  const Matrix sym = 0.5 * (a1 + a1.transpose());
  if (Eigen::SelfAdjointEigenSolver<Matrix>(sym).eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("first-order coefficient is not elliptic");

  HomogenizedHierarchy h;
  h.ell = ell;
  h.grid = grid;
  h.indices = grid.indices();
  h.abar = abar;
  const std::size_t nf = h.indices.size();
  h.potential.assign(ell + 1, std::vector<Complex>(nf));
  h.gradient.assign(ell + 1, GradientSpectrum{d, std::vector<Complex>(nf * d)});

  parallel_for(nf, [&](std::size_t i) {
    const Wavevector xi = grid.frequency(h.indices[i]);
    double q = 0.0;
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) q += xi[r] * a1(r, c) * xi[c];
    if (norm2(xi, d) == 0.0) return;
    std::vector<ComplexMatrix> A(ell + 1);
    for (int k = 2; k <= ell; ++k) A[k] = contracted_coefficient(abar, k, xi);
    const auto fv = f.value(xi);
    for (int n = 1; n <= ell; ++n) {
      Eigen::VectorXcd r = Eigen::VectorXcd::Zero(d);
      if (n == 1) {
        for (int j = 0; j < d; ++j) r(j) = fv[j];
      } else {
        for (int k = 2; k <= n; ++k) {
          Eigen::VectorXcd g(d);
          for (int j = 0; j < d; ++j) g(j) = h.gradient[n + 1 - k].values[i * d + j];
          r += A[k] * g;
        }
      }
      Complex xr{};
      for (int j = 0; j < d; ++j) xr += xi[j] * r(j);
      const Complex u = kI * xr / q;
      h.potential[n][i] = u;
      for (int j = 0; j < d; ++j) h.gradient[n].values[i * d + j] = kI * xi[j] * u;
    }
  });
  return h;
}

SymbolCache::SymbolCache(const CoefficientField& a, const FullSpaceGrid& grid, SymbolOptions opts)
    : a_(a), grid_(grid), opts_(opts) {
  if (a.dim() != grid.dim) throw std::invalid_argument("medium and grid dimensions differ");
}

SymbolCache::Key SymbolCache::key(double eps, const ModeIndex& k) const {
  constexpr double kDen = 1073741824.0;  // 2^30
  Key out{};
  for (int j = 0; j < 3; ++j) out[j] = std::llround(eps * k[j] * kDen);
  return out;
}

std::vector<Complex> SymbolCache::values(double eps, const std::vector<ModeIndex>& ks) {
  std::vector<Key> keys(ks.size());
  std::vector<Key> missing;
  std::vector<ModeIndex> missing_modes;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    keys[i] = key(eps, ks[i]);
    if (values_.count(keys[i])) {
      ++hits_;
    } else if (std::find(missing.begin(), missing.end(), keys[i]) == missing.end()) {
      missing.push_back(keys[i]);
      missing_modes.push_back(ks[i]);
    }
  }
  std::vector<SymbolSample> computed(missing.size());
  parallel_for(missing.size(), [&](std::size_t m) {
    Wavevector xi = grid_.frequency(missing_modes[m]);
    for (int j = 0; j < grid_.dim; ++j) xi[j] *= eps;
    try {
      computed[m] = bhat_at(a_, xi, opts_);
    } catch (const SolverError& e) {
      std::ostringstream os;
      os << "symbol solve failed at frequency (";
      for (int j = 0; j < grid_.dim; ++j) os << (j ? "," : "") << xi[j];
      os << "): " << e.what();
      throw SolverError(os.str(), e.residual());
    }
  });
  for (std::size_t m = 0; m < missing.size(); ++m) values_.emplace(missing[m], computed[m]);
  misses_ += missing.size();

  std::vector<Complex> out(ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) out[i] = values_.at(keys[i]).value;
  return out;
}

std::vector<SymbolSample> SymbolCache::samples() const {
  std::vector<SymbolSample> out;
  for (const auto& [k, v] : values_) out.push_back(v);
  return out;
}

GradientSpectrum averaged_solution_exact(SymbolCache& cache, double eps, const Forcing& f,
                                         const FullSpaceGrid& grid) {
  grid.check_admissible(eps);
  const int d = grid.dim;
  const auto ks = grid.indices();
  double fmax = 0.0;
  for (const auto& k : ks) {
    const auto v = f.value(grid.frequency(k));
    for (int j = 0; j < d; ++j) fmax = std::max(fmax, std::abs(v[j]));
  }
  std::vector<ModeIndex> needed;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const Wavevector xi = grid.frequency(ks[i]);
    if (norm2(xi, d) == 0.0) continue;
    const auto v = f.value(xi);
    double m = 0.0;
    for (int j = 0; j < d; ++j) m = std::max(m, std::abs(v[j]));
    if (m <= kNegligibleForcing * fmax) continue;
    needed.push_back(ks[i]);
    where.push_back(i);
  }
  const auto b = cache.values(eps, needed);
  GradientSpectrum out{d, std::vector<Complex>(ks.size() * d)};
  for (std::size_t m = 0; m < needed.size(); ++m) {
    const std::size_t i = where[m];
    const Wavevector xi = grid.frequency(ks[i]);
    const auto v = f.value(xi);
    Complex xf{};
    for (int j = 0; j < d; ++j) xf += xi[j] * v[j];
    for (int j = 0; j < d; ++j) out.values[i * d + j] = -eps * eps * xi[j] * xf / b[m];
  }
  return out;
}

double fitted_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

RateTable error_and_rate(const CorrectorSet& set, int ell, const Forcing& f,
                         const FullSpaceGrid& grid, const std::vector<double>& eps_list,
                         SymbolCache& cache) {
  if (eps_list.size() < 2) throw std::invalid_argument("rate fit needs at least two eps values");
  if (ell > set.order) throw std::invalid_argument("corrector order is below the requested ell");
  const auto h = solve_hierarchy(set.abar, ell, f, grid);
  RateTable t;
  t.ell = ell;
  const double wn = forcing_norm(f, grid, 2.0 * ell - 1.0);
  std::vector<double> lx, ly;
  double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
  for (double eps : eps_list) {
    const auto exact = averaged_solution_exact(cache, eps, f, grid);
    auto diff = h.combined(eps);
    for (std::size_t i = 0; i < diff.values.size(); ++i) diff.values[i] = exact.values[i] - diff.values[i];
    RateRow row;
    row.eps = eps;
    row.error = weighted_norm(diff, grid, 0.0);
    row.weighted_norm = wn;
    row.ratio = row.error / (std::pow(eps, ell) * wn);
    rmin = std::min(rmin, row.ratio);
    rmax = std::max(rmax, row.ratio);
    t.rows.push_back(row);
    lx.push_back(std::log(eps));
    ly.push_back(std::log(row.error));
  }
  t.slope = fitted_slope(lx, ly);
  t.ratio_spread = rmin > 0.0 ? rmax / rmin - 1.0 : std::numeric_limits<double>::infinity();
  return t;
}

void write_rate_csv(const RateTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "eps,error,weighted_norm,ratio\n" << std::setprecision(17);
  for (const auto& r : table.rows)
    out << r.eps << "," << r.error << "," << r.weighted_norm << "," << r.ratio << "\n";
}

namespace {

SpectralField scaled_gradient(const SpectralField& f, double scale) {
  return scale * gradient(f);
}

SpectralField scaled_divergence(const SpectralField& f, double scale) {
  return scale * divergence(f);
}

// Derivative d_{t_1} ... d_{t_k} f in x = period * X coordinates.
SpectralField tuple_derivative(const SpectralField& f, std::size_t t, int k, int d,
                               double scale) {
  const auto digits = tuple_digits(t, k, d);
  return apply_multiplier(f, [&](const Wavevector& w) -> std::optional<Complex> {
    Complex m = 1.0;
    for (int j : digits) m *= kI * w[j] * scale;
    return m;
  });
}

// Constant matrix times vector field.
SpectralField apply_constant(const Matrix& m, const SpectralField& v) {
  SpectralField out(v.lattice_ptr(), Rank::vector, v.is_real());
  const int d = v.dim();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      if (m(i, j) == 0.0) continue;
      auto src = v.component(j);
      auto dst = out.component(i);
      for (std::size_t q = 0; q < src.size(); ++q) dst[q] += m(i, j) * src[q];
    }
  return out;
}

}  // namespace

double two_scale_residual(const CorrectorSet& set, int n, const SpectralField& w, int period) {
  if (n < 0 || n > set.order) throw std::invalid_argument("two-scale order exceeds corrector order");
  if (period < 1) throw std::invalid_argument("period must be positive");
  if (w.rank() != Rank::scalar || w.dim() != set.dim)
    throw std::invalid_argument("test function must be a scalar field of matching dimension");
  const int d = set.dim;
  const int mc = set.a.lattice().max_mode();
  const int mw = w.lattice().max_mode();
  auto big = FrequencyLattice::make(d, 2 * period * mc + mw);
  const double s = 1.0 / period;

  const SpectralField a = embed(set.a.field(), big, period);
  const SpectralField wb = embed(w, big);

  // F^n[w] = sum_k phi^k_t d^k_t w
  SpectralField F = wb;
  for (int k = 1; k <= n; ++k)
    for (std::size_t t = 0; t < power(d, k); ++t)
      F += pointwise_product(embed(set.phi[k][t], big, period), tuple_derivative(wb, t, k, d, s));
  SpectralField lhs = scaled_divergence(pointwise_product(a, scaled_gradient(F, s)), s);

  SpectralField flux(big, Rank::vector, true);
  for (int k = 1; k <= n; ++k)
    for (std::size_t t = 0; t < power(d, k - 1); ++t)
      flux += apply_constant(set.abar[k][t],
                             scaled_gradient(tuple_derivative(wb, t, k - 1, d, s), s));
  for (std::size_t t = 0; t < power(d, n); ++t) {
    SpectralField m = pointwise_product(a, embed(set.phi[n][t], big, period)) -
                      embed(set.sigma[n][t], big, period);
    flux += pointwise_product(m, scaled_gradient(tuple_derivative(wb, t, n, d, s), s));
  }
  SpectralField residual = lhs - scaled_divergence(flux, s);

  double wn = 0.0;
  for (std::size_t i = 0; i < w.lattice().num_modes(); ++i) {
    const Wavevector k = w.lattice().wavevector(i);
    wn += std::pow(1.0 + s * s * norm2(k, d), n + 1) * std::norm(w.coeff(0, i));
  }
  return l2_norm(residual) / std::sqrt(wn);
}

Prop33Result prop33_error(const CorrectorSet& set, int ell, const Forcing& f, int m,
                          int translations, const Prop33Options& opts) {
  const int d = set.dim;
  if (d > 2) throw std::invalid_argument("two-scale error is limited to d <= 2");
  if (m < 1) throw std::invalid_argument("eps must be 1/m with a positive integer m");
  if (translations < 1 || translations > 16)
    throw std::invalid_argument("translation count must be in [1, 16]");
  if (ell < 1 || ell > set.order) throw std::invalid_argument("ell exceeds corrector order");
  const int R = opts.proxy_period;
  const double eps = 1.0 / m;
  const int factor = m * R;

  // Forcing modes: 2 pi k / R with non-negligible Gaussian weight.
  const double reach = std::sqrt(2.0 * std::log(1.0 / kNegligibleForcing)) / f.width;
  const int kf = static_cast<int>(std::ceil(reach * R / kTwoPi));
  FullSpaceGrid grid{d, static_cast<double>(R), kTwoPi * (kf + 0.5) / R};
  const auto h = solve_hierarchy(set.abar, ell, f, grid);
  const auto ks = grid.indices();
  const double vol = std::pow(static_cast<double>(R), d);

  const int mc = set.a.lattice().max_mode();
  auto big = FrequencyLattice::make(d, factor * mc + kf);
  auto small = FrequencyLattice::make(d, kf);

  // Fourier series coefficients of f and of ubar^ell on the proxy torus.
  SpectralField fx(small, Rank::vector, true), ubar(small, Rank::scalar, true);
  const auto up = h.combined_potential(eps);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const auto idx = small->find(ks[i]);
    const auto v = f.value(grid.frequency(ks[i]));
    for (int j = 0; j < d; ++j) fx.coeff(j, *idx) = v[j] / vol;
    ubar.coeff(0, *idx) = up[i] / vol;
  }
  fx.make_real();
  ubar.make_real();
  const SpectralField g = static_cast<double>(R) * embed(fx, big);
  const SpectralField ub = embed(ubar, big);
  const double s = 1.0 / R;

  std::vector<std::vector<SpectralField>> derivs(ell + 1);
  for (int k = 0; k <= ell; ++k)
    for (std::size_t t = 0; t < power(d, k); ++t)
      derivs[k].push_back(tuple_derivative(ub, t, k, d, s));

  std::size_t count = power(translations, d);
  std::vector<double> err2(count);
  for (std::size_t zt = 0; zt < count; ++zt) {
    Wavevector z{};
    std::size_t rest = zt;
    for (int j = d - 1; j >= 0; --j) {
      z[j] = static_cast<double>(rest % translations) / translations;
      rest /= translations;
    }
    const CoefficientField az = set.a.embedded(big, factor, z);
    CellSolution sol;
    try {
      sol = solve_cell(az, g, opts.solve);
    } catch (const SolverError& e) {
      std::ostringstream os;
      os << "heterogeneous solve at translation (";
      for (int j = 0; j < d; ++j) os << (j ? "," : "") << z[j];
      os << "): " << e.what();
      throw SolverError(os.str(), e.residual());
    }
    std::vector<SpectralField> terms;
    double scale = 1.0;
    for (int k = 0; k <= ell; ++k) {
      for (std::size_t t = 0; t < power(d, k); ++t) {
        SpectralField term = k == 0 ? derivs[0][0]
                                    : pointwise_product(embed(set.phi[k][t], big, factor, z),
                                                        derivs[k][t]);
        terms.push_back(scale * term);
      }
      scale *= eps;
    }
    SpectralField expansion = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) expansion += terms[i];
    const SpectralField diff = scaled_gradient(sol.phi - expansion, s);
    err2[zt] = vol * std::pow(l2_norm(diff), 2);
  }

  Prop33Result r;
  r.eps = eps;
  for (double e : err2) r.per_translation.push_back(std::sqrt(e));
  r.error = std::sqrt(pairwise_sum<double>(err2) / static_cast<double>(count));
  double wn = 0.0;
  for (const auto& k : ks) {
    const Wavevector xi = grid.frequency(k);
    const auto v = f.value(xi);
    double fv = 0.0;
    for (int j = 0; j < d; ++j) fv += std::norm(v[j] / vol);
    wn += std::pow(1.0 + norm2(xi, d), 2.0 * ell - 1.0) * fv;
  }
  r.weighted_norm = std::sqrt(vol * wn);
  r.ratio = r.error / (std::pow(eps, ell) * r.weighted_norm);
  return r;
}

NaiveSymbolReport naive_symbol_guard(const CoefficientHierarchy& abar, int ell, double eps,
                                     double lambda, const FullSpaceGrid& grid) {
  NaiveSymbolReport r;
  r.worst_ratio = std::numeric_limits<double>::infinity();
  const int d = grid.dim;
  for (const auto& k : grid.indices()) {
    const Wavevector xi = grid.frequency(k);
    const double n2 = norm2(xi, d);
    if (n2 == 0.0) continue;
    const ComplexMatrix B = truncated_symbol(abar, ell, eps, xi);
    Complex form{};
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) form += xi[i] * B(i, j) * xi[j];
    const double ratio = std::abs(form) / n2;
    ++r.frequencies;
    if (ratio < 0.25 * lambda) ++r.near_vanishing;
    if (ratio < r.worst_ratio) {
      r.worst_ratio = ratio;
      r.worst_xi = xi;
    }
  }
  return r;
}

double band_eps_bound(const CoefficientHierarchy& abar, int ell, double lambda) {
  double bound = std::numeric_limits<double>::infinity();
  for (int k = 2; k <= ell; ++k) {
    double norm = 0.0;
    for (const auto& m : abar.at(k)) norm += Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
    if (norm == 0.0) continue;
    bound = std::min(bound, std::pow(lambda / (4.0 * (ell - 1) * norm), 1.0 / (k - 1)));
  }
  return bound;
}

BandReport truncated_symbol_band(const CoefficientHierarchy& abar, int ell, double eps,
                                 double lambda) {
  const int d = static_cast<int>(abar.at(1).front().rows());
  BandReport r;
  r.min_value = std::numeric_limits<double>::infinity();
  const auto dirs = comparison_directions(d);
  for (double rad : {0.0, 0.25, 0.5, 0.75, 1.0})
    for (const auto& dir : dirs) {
      Wavevector xi{};
      for (int j = 0; j < d; ++j) xi[j] = rad * dir[j];
      const ComplexMatrix B = truncated_symbol(abar, ell, eps, xi);
      for (const auto& e : dirs) {
        Complex v{};
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) v += e[i] * B(i, j) * e[j];
        r.min_value = std::min(r.min_value, std::abs(v));
        r.max_value = std::max(r.max_value, std::abs(v));
      }
    }
  r.within = r.min_value >= 0.5 * lambda && r.max_value <= 2.0 / lambda;
  return r;
}

}  // namespace homlab
