#include "homlab/random_lattice.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "homlab/krylov.hpp"
#include "homlab/parallel.hpp"

namespace homlab {

namespace {

std::size_t power(int base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= static_cast<std::size_t>(base);
  return r;
}

void check_delta(double delta) {
  if (!(std::abs(delta) < 1.0)) {
    std::ostringstream os;
    os << "delta = " << delta << " must satisfy |delta| < 1 to keep Id - delta b elliptic";
    throw std::invalid_argument(os.str());
  }
}

void check_geometry(int dim, int side) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("lattice dimension must be 1, 2 or 3");
  if (side < 2) throw std::invalid_argument("lattice side must be at least 2");
}

Complex mean_of(std::span<const Complex> v) {
  return pairwise_sum<Complex>(v) / static_cast<double>(v.size());
}

}  // namespace

Distribution parse_distribution(const std::string& tag) {
  if (tag == "rademacher") return Distribution::rademacher;
  if (tag == "uniform") return Distribution::uniform;
  if (tag == "diagonal") return Distribution::diagonal;
  throw std::invalid_argument("unknown distribution tag '" + tag +
                              "' (expected rademacher, uniform or diagonal)");
}

std::string distribution_name(Distribution dist) {
  switch (dist) {
    case Distribution::rademacher: return "rademacher";
    case Distribution::uniform: return "uniform";
    case Distribution::diagonal: return "diagonal";
  }
  return "unknown";
}

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double site_uniform(const RngSpec& rng, std::uint64_t sample, const std::array<long long, 3>& site,
                    int component) {
  std::uint64_t h = mix64(rng.seed);
  h = mix64(h ^ sample);
  for (long long c : site) h = mix64(h ^ static_cast<std::uint64_t>(c));
  h = mix64(h ^ static_cast<std::uint64_t>(component));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

LatticeField::LatticeField(int dim, int side)
    : dim_(dim), side_(side), sites_(power(side, dim)), values_(sites_ * dim * dim, 0.0) {
  check_geometry(dim, side);
}

std::array<int, 3> LatticeField::coordinates(std::size_t site) const {
  std::array<int, 3> x{};
  for (int j = dim_ - 1; j >= 0; --j) {
    x[j] = static_cast<int>(site % side_);
    site /= side_;
  }
  return x;
}

std::size_t LatticeField::index(const std::array<int, 3>& x) const {
  std::size_t s = 0;
  for (int j = 0; j < dim_; ++j) s = s * side_ + static_cast<std::size_t>(((x[j] % side_) + side_) % side_);
  return s;
}

std::size_t LatticeField::neighbor(std::size_t site, int axis, int step) const {
  auto x = coordinates(site);
  x[axis] += step;
  return index(x);
}

double LatticeField::norm_bound() const {
  double m = 0.0;
  for (std::size_t s = 0; s < sites_; ++s)
    m = std::max(m, Eigen::JacobiSVD<Matrix>(at(s)).singularValues()(0));
  return m;
}

double LatticeField::min_symmetric_eigenvalue() const {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < sites_; ++s) {
    const Matrix sym = 0.5 * (at(s) + at(s).transpose());
    m = std::min(m, Eigen::SelfAdjointEigenSolver<Matrix>(sym).eigenvalues().minCoeff());
  }
  return m;
}

LatticeField sample_field(Distribution dist, int dim, int side, std::uint64_t sample,
                          const RngSpec& rng) {
  check_geometry(dim, side);
  LatticeField b(dim, side);
  for (std::size_t s = 0; s < b.sites(); ++s) {
    const auto x = b.coordinates(s);
    std::array<long long, 3> global{};
    for (int j = 0; j < dim; ++j) global[j] = x[j] - side / 2;
    auto m = b.at(s);
    switch (dist) {
      case Distribution::rademacher: {
        const double v = site_uniform(rng, sample, global, 0) < 0.5 ? -1.0 : 1.0;
        m = v * Matrix::Identity(dim, dim);
        break;
      }
      case Distribution::uniform: {
        const double v = 2.0 * site_uniform(rng, sample, global, 0) - 1.0;
        m = v * Matrix::Identity(dim, dim);
        break;
      }
      case Distribution::diagonal:
        for (int j = 0; j < dim; ++j) m(j, j) = 2.0 * site_uniform(rng, sample, global, j) - 1.0;
        break;
    }
  }
  return b;
}

LatticeField perturbed_identity(const LatticeField& b, double delta) {
  check_delta(delta);
  LatticeField a(b.dim(), b.side());
  for (std::size_t s = 0; s < b.sites(); ++s)
    a.at(s) = Matrix::Identity(b.dim(), b.dim()) - delta * b.at(s);
  return a;
}

DiscreteOperator::DiscreteOperator(LatticeField a)
    : a_(std::move(a)), fft_(std::make_shared<GridFft>(a_.dim(), a_.side())) {
  const double lam = a_.min_symmetric_eigenvalue();
  if (!(lam > 0.0)) {
    std::ostringstream os;
    os << "lattice medium is not elliptic: min eigenvalue of sym(a) is " << lam;
    throw EllipticityError(os.str());
  }
  const int d = a_.dim(), L = a_.side();
  inverse_symbol_.resize(a_.sites());
  for (std::size_t s = 0; s < a_.sites(); ++s) {
    const auto k = a_.coordinates(s);
    double sym = 0.0;
    for (int j = 0; j < d; ++j) sym += 4.0 * std::pow(std::sin(M_PI * k[j] / L), 2);
    inverse_symbol_[s] = s == 0 ? 0.0 : 1.0 / sym;
  }
}

std::vector<Complex> DiscreteOperator::gradient(std::span<const Complex> u) const {
  const int d = a_.dim();
  std::vector<Complex> g(a_.sites() * d);
  for (std::size_t s = 0; s < a_.sites(); ++s)
    for (int j = 0; j < d; ++j) g[s * d + j] = u[a_.neighbor(s, j, 1)] - u[s];
  return g;
}

std::vector<Complex> DiscreteOperator::adjoint_divergence(std::span<const Complex> f) const {
  const int d = a_.dim();
  std::vector<Complex> out(a_.sites());
  for (std::size_t s = 0; s < a_.sites(); ++s)
    for (int j = 0; j < d; ++j) out[s] += f[a_.neighbor(s, j, -1) * d + j] - f[s * d + j];
  return out;
}

void DiscreteOperator::apply(std::span<const Complex> u, std::span<Complex> out) const {
  const int d = a_.dim();
  auto g = gradient(u);
  std::vector<Complex> flux(g.size());
  for (std::size_t s = 0; s < a_.sites(); ++s) {
    const auto m = a_.at(s);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) flux[s * d + i] += m(i, j) * g[s * d + j];
  }
  const auto div = adjoint_divergence(flux);
  std::copy(div.begin(), div.end(), out.begin());
}

void DiscreteOperator::precondition(std::span<const Complex> r, std::span<Complex> out) const {
  std::vector<Complex> buf(r.begin(), r.end());
  fft_->forward(buf);
  for (std::size_t s = 0; s < buf.size(); ++s) buf[s] *= inverse_symbol_[s];
  fft_->inverse(buf);
  const double n = static_cast<double>(buf.size());
  for (std::size_t s = 0; s < buf.size(); ++s) out[s] = buf[s] / n;
}

DiscreteSolution DiscreteOperator::solve(std::span<const Complex> f,
                                         const DiscreteSolveOptions& opts) const {
  if (f.size() != a_.sites() * a_.dim())
    throw std::invalid_argument("edge forcing must carry d values per site");
  auto rhs = adjoint_divergence(f);
  for (auto& v : rhs) v = -v;
  DiscreteSolution sol;
  sol.u.assign(a_.sites(), Complex{});
  auto op = [this](std::span<const Complex> x, std::span<Complex> y) { apply(x, y); };
  auto pc = [this](std::span<const Complex> x, std::span<Complex> y) { precondition(x, y); };
  bool symmetric = true;
  for (std::size_t s = 0; s < a_.sites() && symmetric; ++s)
    symmetric = (a_.at(s) - a_.at(s).transpose()).norm() == 0.0;
  sol.report = symmetric ? conjugate_gradient(op, pc, rhs, sol.u, opts.tolerance, opts.max_iterations)
                         : bicgstab(op, pc, rhs, sol.u, opts.tolerance, opts.max_iterations);
  const Complex mu = mean_of(sol.u);
  for (auto& v : sol.u) v -= mu;

  std::vector<Complex> lu(a_.sites());
  apply(sol.u, lu);
  double rn = 0.0, bn = 0.0;
  for (std::size_t s = 0; s < lu.size(); ++s) {
    rn += std::norm(lu[s] - rhs[s]);
    bn += std::norm(rhs[s]);
  }
  sol.residual = bn > 0.0 ? std::sqrt(rn / bn) : std::sqrt(rn);
  if (!sol.report.converged || sol.residual > 100.0 * opts.tolerance) {
    std::ostringstream os;
    os << "discrete solve did not converge: residual " << sol.residual << " after "
       << sol.report.iterations << " iterations";
    throw SolverError(os.str(), sol.residual);
  }
  return sol;
}

DiscreteSolution solve_discrete(const LatticeField& b, double delta, std::span<const Complex> f,
                                const DiscreteSolveOptions& opts) {
  return DiscreteOperator(perturbed_identity(b, delta)).solve(f, opts);
}

Wavevector dual_frequency(const ModeIndex& k, int dim, int side) {
  Wavevector xi{};
  for (int j = 0; j < dim; ++j) xi[j] = kTwoPi * k[j] / side;
  return xi;
}

std::array<Complex, 3> difference_symbol(const Wavevector& xi, int dim) {
  std::array<Complex, 3> m{};
  for (int j = 0; j < dim; ++j) m[j] = std::polar(1.0, xi[j]) - 1.0;
  return m;
}

double difference_symbol_norm2(const Wavevector& xi, int dim) {
  double s = 0.0;
  for (int j = 0; j < dim; ++j) s += 4.0 * std::pow(std::sin(0.5 * xi[j]), 2);
  return s;
}

std::vector<Complex> plane_wave_forcing(int dim, int side, const ModeIndex& k) {
  LatticeField geom(dim, side);
  const Wavevector xi = dual_frequency(k, dim, side);
  const auto m = difference_symbol(xi, dim);
  const double mn = std::sqrt(difference_symbol_norm2(xi, dim));
  if (mn < 1e-12) throw std::invalid_argument("plane-wave forcing needs a nonzero frequency");
  std::vector<Complex> f(geom.sites() * dim);
  for (std::size_t s = 0; s < geom.sites(); ++s) {
    const auto x = geom.coordinates(s);
    double phase = 0.0;
    for (int j = 0; j < dim; ++j) phase += kTwoPi * static_cast<double>(k[j] * x[j] % side) / side;
    const Complex w = std::polar(1.0, phase);
    for (int j = 0; j < dim; ++j) f[s * dim + j] = w * m[j] / mn;
  }
  return f;
}

Complex plane_wave_amplitude(std::span<const Complex> u, int dim, int side, const ModeIndex& k) {
  LatticeField geom(dim, side);
  std::vector<Complex> terms(geom.sites());
  for (std::size_t s = 0; s < geom.sites(); ++s) {
    const auto x = geom.coordinates(s);
    double phase = 0.0;
    for (int j = 0; j < dim; ++j) phase += kTwoPi * static_cast<double>(k[j] * x[j] % side) / side;
    terms[s] = u[s] * std::polar(1.0, -phase);
  }
  return mean_of(terms);
}

namespace {

bool is_zero_mode(const ModeIndex& k, int dim, int side) {
  for (int j = 0; j < dim; ++j)
    if (((k[j] % side) + side) % side != 0) return false;
  return true;
}

}  // namespace

MCEstimate mc_bhat(Distribution dist, int dim, int side, double delta, const ModeIndex& k,
                   int samples, const MonteCarloOptions& opts) {
  check_geometry(dim, side);
  check_delta(delta);
  if (samples < 2) throw std::invalid_argument("Monte Carlo needs at least two samples");
  if (is_zero_mode(k, dim, side)) throw std::invalid_argument("frequency must be nonzero on the dual lattice");
  if (dim == 3 && (side > 16 || samples > 4096))
    throw std::invalid_argument("d = 3 runs are capped at L <= 16 and 4096 samples");

  const auto f = plane_wave_forcing(dim, side, k);
  const std::size_t n = power(side, dim);
  GridFft fft(dim, side);
  std::vector<Complex> amplitude(samples);
  std::vector<Complex> spectrum_sum(n);
  constexpr int kBlock = 64;
  for (int start = 0; start < samples; start += kBlock) {
    const int count = std::min(kBlock, samples - start);
    std::vector<std::vector<Complex>> spectra(count);
    parallel_for(count, [&](std::size_t i) {
      const std::uint64_t s = opts.first_sample + start + i;
      const auto b = sample_field(dist, dim, side, s, opts.rng);
      auto sol = solve_discrete(b, delta, f, opts.solve);
      amplitude[start + i] = plane_wave_amplitude(sol.u, dim, side, k);
      fft.forward(sol.u);
      spectra[i] = std::move(sol.u);
    });
    for (const auto& sp : spectra)
      for (std::size_t q = 0; q < n; ++q) spectrum_sum[q] += sp[q] / static_cast<double>(n);
  }

  MCEstimate est;
  est.samples = samples;
  est.k = k;
  est.xi = dual_frequency(k, dim, side);
  est.delta = delta;
  const Complex mean = mean_of(amplitude);
  std::vector<double> dev(samples);
  for (int s = 0; s < samples; ++s) dev[s] = std::norm(amplitude[s] - mean);
  const double se_u = std::sqrt(pairwise_sum<double>(dev) / (samples - 1) / samples);
  const double c = std::sqrt(difference_symbol_norm2(est.xi, dim));
  est.value = -c / mean;
  est.standard_error = c / std::norm(mean) * se_u;

  LatticeField geom(dim, side);
  ModeIndex kw{};
  for (int j = 0; j < dim; ++j) kw[j] = ((k[j] % side) + side) % side;
  const std::size_t own = geom.index(kw);
  double worst = 0.0;
  for (std::size_t q = 0; q < n; ++q)
    if (q != own) worst = std::max(worst, std::abs(spectrum_sum[q]) / samples);
  est.contamination = worst / std::abs(mean);
  return est;
}

TwoPointLaw TwoPointLaw::rademacher(int dim) {
  return {Matrix::Identity(dim, dim), -Matrix::Identity(dim, dim), 0.5};
}

TwoPointLaw TwoPointLaw::deterministic(const Matrix& value) { return {value, value, 1.0}; }

ExactSymbol enumerate_exact(int dim, int side, const TwoPointLaw& law, double delta,
                            const ModeIndex& k, const DiscreteSolveOptions& opts) {
  check_geometry(dim, side);
  check_delta(delta);
  const std::size_t sites = power(side, dim);
  if (sites > static_cast<std::size_t>(kMaxEnumerationSites)) {
    std::ostringstream os;
    os << "enumeration over 2^" << sites << " configurations exceeds the guard 2^"
       << kMaxEnumerationSites;
    throw std::invalid_argument(os.str());
  }
  if (is_zero_mode(k, dim, side)) throw std::invalid_argument("frequency must be nonzero on the dual lattice");
  if (!(law.p_plus >= 0.0 && law.p_plus <= 1.0)) throw std::invalid_argument("probability outside [0, 1]");

  const auto f = plane_wave_forcing(dim, side, k);
  const std::size_t configs = std::size_t{1} << sites;
  std::vector<Complex> weighted(configs);
  std::vector<char> used(configs, 0);
  parallel_for(configs, [&](std::size_t c) {
    double p = 1.0;
    LatticeField b(dim, side);
    for (std::size_t s = 0; s < sites; ++s) {
      const bool plus = (c >> s) & 1U;
      p *= plus ? law.p_plus : 1.0 - law.p_plus;
      b.at(s) = plus ? law.plus : law.minus;
    }
    if (p == 0.0) return;
    const auto sol = solve_discrete(b, delta, f, opts);
    weighted[c] = p * plane_wave_amplitude(sol.u, dim, side, k);
    used[c] = 1;
  });
  ExactSymbol r;
  for (char u : used) r.configurations += u;
  const Complex mean = pairwise_sum<Complex>(weighted);
  r.value = -std::sqrt(difference_symbol_norm2(dual_frequency(k, dim, side), dim)) / mean;
  return r;
}

bool within_discrete_band(Complex value, const Wavevector& xi, int dim, double delta, double slack) {
  const double m2 = difference_symbol_norm2(xi, dim);
  const double re = value.real();
  return re >= (1.0 - std::abs(delta)) * m2 * (1.0 - slack) && re <= m2 * (1.0 + slack);
}

DiscreteCorrectorSet discrete_correctors(const LatticeField& a, int order,
                                         const DiscreteSolveOptions& opts) {
  if (order < 1 || order > 3) throw std::invalid_argument("discrete corrector order must be 1, 2 or 3");
  const int d = a.dim();
  const std::size_t n = a.sites();
  DiscreteOperator op(a);

  DiscreteCorrectorSet set;
  set.dim = d;
  set.order = order;
  set.a = a;
  set.phi.resize(order + 1);
  set.sigma.resize(order + 1);
  set.abar.resize(order + 1);
  set.phi[0] = {std::vector<Complex>(n, Complex{1.0, 0.0})};
  set.sigma[0] = {std::vector<Complex>(n * d * d)};

  for (int ord = 1; ord <= order; ++ord) {
    const std::size_t count = power(d, ord);
    set.phi[ord].resize(count);
    set.sigma[ord].resize(count);
    set.abar[ord].assign(power(d, ord - 1), Matrix::Zero(d, d));
    std::vector<double> divergence(count);
    parallel_for(count, [&](std::size_t t) {
      const std::size_t parent = t / d;
      const int j = static_cast<int>(t % d);
      const auto& phi_prev = set.phi[ord - 1][parent];
      const auto& sigma_prev = set.sigma[ord - 1][parent];
      // Column j of a phi^{n-1} - sigma^{n-1}.
      std::vector<Complex> g(n * d);
      for (std::size_t s = 0; s < n; ++s)
        for (int i = 0; i < d; ++i)
          g[s * d + i] = a.at(s)(i, j) * phi_prev[s] - sigma_prev[(s * d + i) * d + j];
      auto sol = op.solve(g, opts);
      const auto grad = op.gradient(sol.u);
      std::vector<Complex> q(n * d);
      for (std::size_t s = 0; s < n; ++s)
        for (int i = 0; i < d; ++i) {
          Complex v = g[s * d + i];
          for (int l = 0; l < d; ++l) v += a.at(s)(i, l) * grad[s * d + l];
          q[s * d + i] = v;
        }
      std::vector<Complex> column(d);
      for (int i = 0; i < d; ++i) {
        std::vector<Complex> comp(n);
        for (std::size_t s = 0; s < n; ++s) comp[s] = q[s * d + i];
        column[i] = mean_of(comp);
      }
      for (std::size_t s = 0; s < n; ++s)
        for (int i = 0; i < d; ++i) q[s * d + i] -= column[i];
      for (int i = 0; i < d; ++i) set.abar[ord][parent](i, j) = column[i].real();

      double worst = 0.0;
      for (auto v : op.adjoint_divergence(q)) worst = std::max(worst, std::abs(v));
      divergence[t] = worst;

      std::vector<Complex> sigma(n * d * d);
      for (int i = 0; i < d; ++i)
        for (int l = i + 1; l < d; ++l) {
          std::vector<Complex> src(n), out(n);
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t si = a.neighbor(s, i, 1), sl = a.neighbor(s, l, 1);
            src[s] = (q[si * d + l] - q[s * d + l]) - (q[sl * d + i] - q[s * d + i]);
          }
          op.precondition(src, out);
          for (std::size_t s = 0; s < n; ++s) {
            sigma[(s * d + i) * d + l] = out[s];
            sigma[(s * d + l) * d + i] = -out[s];
          }
        }
      set.phi[ord][t] = std::move(sol.u);
      set.sigma[ord][t] = std::move(sigma);
    });
    for (double v : divergence) set.max_flux_divergence = std::max(set.max_flux_divergence, v);
  }
  return set;
}

PeriodizationTable periodization_experiment(Distribution dist, int dim, double delta,
                                            const std::vector<int>& sides, int order, int samples,
                                            const MonteCarloOptions& opts) {
  if (order < 1 || order > 2) throw std::invalid_argument("periodization order must be 1 or 2");
  if (samples < 2) throw std::invalid_argument("Monte Carlo needs at least two samples");
  if (sides.empty()) throw std::invalid_argument("side list is empty");
  for (std::size_t i = 1; i < sides.size(); ++i)
    if (sides[i] <= sides[i - 1]) throw std::invalid_argument("side list must be strictly increasing");
  check_delta(delta);
  if (dim == 3 && (sides.back() > 16 || samples > 4096))
    throw std::invalid_argument("d = 3 runs are capped at L <= 16 and 4096 samples");

  PeriodizationTable table;
  table.dist = dist;
  table.dim = dim;
  table.delta = delta;
  const std::size_t tuples = power(dim, order - 1);
  for (int side : sides) {
    check_geometry(dim, side);
    std::vector<std::vector<Matrix>> per_sample(samples);
    parallel_for(samples, [&](std::size_t s) {
      const auto b = sample_field(dist, dim, side, opts.first_sample + s, opts.rng);
      per_sample[s] = discrete_correctors(perturbed_identity(b, delta), order, opts.solve).abar[order];
    });
    PeriodizationRow row;
    row.side = side;
    row.order = order;
    row.samples = samples;
    for (std::size_t t = 0; t < tuples; ++t) {
      Matrix mean(dim, dim), se(dim, dim);
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
          std::vector<double> v(samples), dev(samples);
          for (int s = 0; s < samples; ++s) v[s] = per_sample[s][t](i, j);
          const double m = pairwise_sum<double>(v) / samples;
          for (int s = 0; s < samples; ++s) dev[s] = (v[s] - m) * (v[s] - m);
          mean(i, j) = m;
          se(i, j) = std::sqrt(pairwise_sum<double>(dev) / (samples - 1) / samples);
        }
      row.mean.push_back(mean);
      row.standard_error.push_back(se);
    }
    table.rows.push_back(std::move(row));
  }
  for (std::size_t r = 1; r < table.rows.size(); ++r) {
    double s = 0.0;
    for (std::size_t t = 0; t < tuples; ++t)
      s += (table.rows[r].mean[t] - table.rows[r - 1].mean[t]).squaredNorm();
    table.successive_differences.push_back(std::sqrt(s));
  }
  return table;
}

void write_mc_csv(const std::vector<MCEstimate>& rows, int dim, int side,
                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "d,L,delta";
  for (int j = 1; j <= dim; ++j) out << ",xi_" << j;
  out << ",re,im,stderr,n\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << dim << "," << side << "," << r.delta;
    for (int j = 0; j < dim; ++j) out << "," << r.xi[j];
    out << "," << r.value.real() << "," << r.value.imag() << "," << r.standard_error << ","
        << r.samples << "\n";
  }
}

void write_periodization_csv(const PeriodizationTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "L,n,order,tuple,i,j,mean,stderr\n" << std::setprecision(17);
  for (const auto& r : table.rows)
    for (std::size_t t = 0; t < r.mean.size(); ++t)
      for (int i = 0; i < table.dim; ++i)
        for (int j = 0; j < table.dim; ++j)
          out << r.side << "," << r.samples << "," << r.order << "," << t << "," << i + 1 << ","
              << j + 1 << "," << r.mean[t](i, j) << "," << r.standard_error[t](i, j) << "\n";
}

}  // namespace homlab
