#include "homlab/corrector_hierarchy.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "homlab/parallel.hpp"

namespace homlab {

int max_corrector_order(int dim) {
  switch (dim) {
    case 1: return 8;
    case 2: return 6;
    case 3: return 4;
    default: throw std::invalid_argument("dimension must be 1, 2 or 3");
  }
}

std::size_t CorrectorSet::tuples(int n) const {
  std::size_t t = 1;
  for (int k = 0; k < n; ++k) t *= static_cast<std::size_t>(dim);
  return t;
}

std::string format_tuple(std::size_t flat, int n, int dim) {
  std::vector<int> digits(n);
  for (int k = n - 1; k >= 0; --k) {
    digits[k] = static_cast<int>(flat % dim) + 1;
    flat /= dim;
  }
  std::string s = "(";
  for (int k = 0; k < n; ++k) s += (k ? "," : "") + std::to_string(digits[k]);
  return s + ")";
}

namespace {

double max_mean(const SpectralField& f) {
  double m = 0.0;
  for (int c = 0; c < f.num_components(); ++c) m = std::max(m, std::abs(f.mean(c)));
  return m;
}

SpectralField constant_column(const LatticePtr& lat, const Matrix& col) {
  SpectralField f(lat, Rank::vector, true);
  for (int j = 0; j < lat->dim(); ++j) f.coeff(j, lat->zero_index()) = col(j, 0);
  return f;
}

[[noreturn]] void fail_at(int n, std::size_t t, int d, const std::string& what, double value) {
  std::ostringstream os;
  os << "corrector order " << n << ", index " << format_tuple(t, n, d) << ": " << what;
  throw SolverError(os.str(), value);
}

}  // namespace

CorrectorSet compute_correctors(const CoefficientField& a, int order,
                                const CorrectorOptions& opts) {
  const int d = a.dim();
  if (order < 1) throw std::invalid_argument("corrector order must be at least 1");
  if (order > max_corrector_order(d)) {
    std::ostringstream os;
    os << "corrector order " << order << " exceeds the supported maximum "
       << max_corrector_order(d) << " for d = " << d;
    throw std::invalid_argument(os.str());
  }
  opts.solve.validate();
  const LatticePtr& lat = a.lattice_ptr();

  CorrectorSet set;
  set.dim = d;
  set.order = order;
  set.a = a;
  set.phi.resize(order + 1);
  set.sigma.resize(order + 1);
  set.q.resize(order + 1);
  set.abar.resize(order + 1);
  set.diagnostics.resize(order + 1);
  set.phi[0] = {SpectralField::constant(lat, 1.0)};
  set.sigma[0] = {SpectralField(lat, Rank::matrix, true)};

  for (int n = 1; n <= order; ++n) {
    const std::size_t parents = set.tuples(n - 1);
    const std::size_t children = parents * d;

    // a phi^{n-1} and a phi^{n-1} - sigma^{n-1} for every parent tuple.
    std::vector<SpectralField> aphi(parents), forcing(parents);
    parallel_for(parents, [&](std::size_t t) {
      aphi[t] = pointwise_product(a.field(), set.phi[n - 1][t]);
      forcing[t] = aphi[t] - set.sigma[n - 1][t];
    });

    std::vector<SpectralField> phi(children), flux(children);
    std::vector<KrylovReport> reports(children);
    parallel_for(children, [&](std::size_t t) {
      const std::size_t parent = t / d;
      const int j = static_cast<int>(t % d);
      try {
        auto sol = solve_cell(a, forcing[parent].column(j), opts.solve);
        phi[t] = std::move(sol.phi);
        reports[t] = sol.report;
      } catch (const SolverError& e) {
        fail_at(n, t, d, e.what(), e.residual());
      }
      flux[t] = pointwise_product(a.field(), gradient(phi[t]));
    });

    std::vector<Matrix> abar(parents, Matrix::Zero(d, d));
    for (std::size_t t = 0; t < parents; ++t)
      for (int j = 0; j < d; ++j) {
        const SpectralField& af = flux[t * d + j];
        for (int i = 0; i < d; ++i) {
          const Complex v = af.mean(i) + aphi[t].mean(i * d + j);
          abar[t](i, j) = v.real();
        }
      }

    std::vector<SpectralField> q(children), sigma(children);
    std::vector<OrderDiagnostics> diag(children);
    parallel_for(children, [&](std::size_t t) {
      const std::size_t parent = t / d;
      const int j = static_cast<int>(t % d);
      q[t] = flux[t] + forcing[parent].column(j) -
             constant_column(lat, abar[parent].col(j));
      q[t].make_real();
      sigma[t] = inverse_negative_laplacian(curl(q[t]));
      sigma[t].make_real();

      OrderDiagnostics& g = diag[t];
      g.max_flux_mean = max_mean(q[t]);
      g.max_flux_divergence = l2_norm(divergence(q[t]));
      g.max_sigma_defect = l2_norm(divergence(sigma[t]) - q[t]);
      g.max_iterations = reports[t].iterations;
      g.max_residual = reports[t].relative_residual;
      if (g.max_flux_mean > opts.mean_tolerance)
        fail_at(n, t, d, "flux mean does not vanish", g.max_flux_mean);
      if (g.max_flux_divergence > opts.identity_tolerance)
        fail_at(n, t, d, "flux is not divergence free", g.max_flux_divergence);
      if (g.max_sigma_defect > opts.identity_tolerance)
        fail_at(n, t, d, "div sigma differs from q", g.max_sigma_defect);
    });

    OrderDiagnostics& summary = set.diagnostics[n];
    for (const auto& g : diag) {
      summary.max_flux_mean = std::max(summary.max_flux_mean, g.max_flux_mean);
      summary.max_flux_divergence = std::max(summary.max_flux_divergence, g.max_flux_divergence);
      summary.max_sigma_defect = std::max(summary.max_sigma_defect, g.max_sigma_defect);
      summary.max_iterations = std::max(summary.max_iterations, g.max_iterations);
      summary.max_residual = std::max(summary.max_residual, g.max_residual);
    }
    set.phi[n] = std::move(phi);
    set.sigma[n] = std::move(sigma);
    set.q[n] = std::move(q);
    set.abar[n] = std::move(abar);
  }
  return set;
}

const std::vector<Matrix>& homogenized_tensor(const CorrectorSet& set, int n) {
  if (n < 1 || n > set.order) {
    std::ostringstream os;
    os << "homogenized coefficient order " << n << " outside [1, " << set.order << "]";
    throw std::out_of_range(os.str());
  }
  return set.abar[n];
}

SymmetrizedForm symmetrized_form(const std::vector<Matrix>& abar, int n, const Wavevector& xi) {
  if (n < 1 || abar.empty()) throw std::invalid_argument("empty coefficient tensor");
  const int d = static_cast<int>(abar.front().rows());
  std::size_t expected = 1;
  for (int k = 1; k < n; ++k) expected *= static_cast<std::size_t>(d);
  if (abar.size() != expected) throw std::invalid_argument("tensor size does not match order");

  SymmetrizedForm out{Matrix::Zero(d, d), 0.0};
  for (std::size_t t = 0; t < abar.size(); ++t) {
    double w = 1.0;
    std::size_t rest = t;
    for (int k = 0; k < n - 1; ++k) {
      w *= xi[rest % d];
      rest /= d;
    }
    out.matrix += w * 0.5 * (abar[t] + abar[t].transpose());
  }
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out.form += xi[i] * out.matrix(i, j) * xi[j];
  return out;
}

GrowthReport growth_report(const CorrectorSet& set) {
  GrowthReport r;
  for (int n = 1; n <= set.order; ++n) {
    GrowthRow row;
    row.n = n;
    double c2 = 0.0, q2 = 0.0, a2 = 0.0;
    for (const auto& f : set.phi[n]) c2 += std::pow(l2_norm(f), 2);
    for (const auto& f : set.sigma[n]) c2 += std::pow(l2_norm(f), 2);
    for (const auto& f : set.q[n]) q2 += std::pow(l2_norm(f), 2);
    for (const auto& m : set.abar[n]) a2 += m.squaredNorm();
    row.corrector_norm = std::sqrt(c2);
    row.flux_norm = std::sqrt(q2);
    row.coefficient_norm = std::sqrt(a2);
    r.rows.push_back(row);
  }

  // Orders whose norm is at roundoff level carry no growth information.
  std::vector<double> xs, ys;
  for (const auto& row : r.rows) {
    if (row.corrector_norm > 1e-13) {
      xs.push_back(row.n);
      ys.push_back(std::log(row.corrector_norm));
    }
    r.envelope_base = std::max(r.envelope_base, std::pow(row.corrector_norm, 1.0 / row.n));
  }
  if (xs.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= xs.size();
    my /= xs.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    r.fitted_base = std::exp(sxy / sxx);
  }
  return r;
}

namespace {

constexpr char kMagic[8] = {'H', 'O', 'M', 'L', 'A', 'B', 'C', '1'};

struct BlockWriter {
  nlohmann::json blocks = nlohmann::json::array();
  std::vector<double> payload;

  void add(const std::string& name, int order, std::size_t tuple, const SpectralField& f) {
    blocks.push_back({{"name", name},
                      {"order", order},
                      {"tuple", tuple},
                      {"components", f.num_components()},
                      {"offset", payload.size() * sizeof(double)},
                      {"count", f.data().size()}});
    for (const auto& c : f.data()) {
      payload.push_back(c.real());
      payload.push_back(c.imag());
    }
  }
};

SpectralField read_block(const nlohmann::json& b, const std::vector<char>& payload,
                         const LatticePtr& lat, Rank rank) {
  SpectralField f(lat, rank, true);
  const std::size_t count = b.at("count").get<std::size_t>();
  const std::size_t offset = b.at("offset").get<std::size_t>();
  if (count != f.data().size() || offset + count * 2 * sizeof(double) > payload.size())
    throw std::runtime_error("corrector file block '" + b.at("name").get<std::string>() +
                             "' has an inconsistent size");
  for (std::size_t i = 0; i < count; ++i) {
    double re, im;
    std::memcpy(&re, payload.data() + offset + (2 * i) * sizeof(double), sizeof(double));
    std::memcpy(&im, payload.data() + offset + (2 * i + 1) * sizeof(double), sizeof(double));
    f.data()[i] = Complex(re, im);
  }
  return f;
}

}  // namespace

void write_correctors(const CorrectorSet& set, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "container format is little-endian");
  const auto& lat = set.a.lattice();
  BlockWriter w;
  w.add("a", 0, 0, set.a.field());
  for (int n = 1; n <= set.order; ++n)
    for (std::size_t t = 0; t < set.tuples(n); ++t) {
      w.add("phi", n, t, set.phi[n][t]);
      w.add("sigma", n, t, set.sigma[n][t]);
      w.add("q", n, t, set.q[n][t]);
    }
  nlohmann::json abar = nlohmann::json::object();
  for (int n = 1; n <= set.order; ++n) {
    nlohmann::json level = nlohmann::json::array();
    for (const auto& m : set.abar[n]) {
      nlohmann::json rows = nlohmann::json::array();
      for (int i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
      }
      level.push_back(rows);
    }
    abar[std::to_string(n)] = level;
  }
  nlohmann::json manifest = {{"format", "homlab-correctors"},
                             {"version", 1},
                             {"dim", set.dim},
                             {"max_mode", lat.max_mode()},
                             {"grid_size", lat.grid_size()},
                             {"order", set.order},
                             {"lambda", set.a.lambda()},
                             {"label", set.a.label()},
                             {"mode_order", "lexicographic, first axis slowest"},
                             {"tuple_order", "first index most significant"},
                             {"abar", abar},
                             {"blocks", w.blocks}};
  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(w.payload.data()),
            static_cast<std::streamsize>(w.payload.size() * sizeof(double)));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

CorrectorSet read_correctors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(path.string() + " is not a corrector container");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto manifest = nlohmann::json::parse(text);

  const int d = manifest.at("dim");
  auto lat = FrequencyLattice::make(d, manifest.at("max_mode"), manifest.at("grid_size"));
  CorrectorSet set;
  set.dim = d;
  set.order = manifest.at("order");
  set.phi.resize(set.order + 1);
  set.sigma.resize(set.order + 1);
  set.q.resize(set.order + 1);
  set.abar.resize(set.order + 1);
  set.diagnostics.resize(set.order + 1);
  set.phi[0] = {SpectralField::constant(lat, 1.0)};
  set.sigma[0] = {SpectralField(lat, Rank::matrix, true)};
  for (int n = 1; n <= set.order; ++n) {
    set.phi[n].resize(set.tuples(n));
    set.sigma[n].resize(set.tuples(n));
    set.q[n].resize(set.tuples(n));
  }
  for (const auto& b : manifest.at("blocks")) {
    const std::string name = b.at("name");
    const int n = b.at("order");
    const std::size_t t = b.at("tuple");
    if (name == "a") {
      set.a = CoefficientField::from_field(read_block(b, payload, lat, Rank::matrix),
                                           manifest.at("label"));
      continue;
    }
    if (n < 1 || n > set.order || t >= set.tuples(n))
      throw std::runtime_error("corrector file block out of range");
    if (name == "phi") set.phi[n][t] = read_block(b, payload, lat, Rank::scalar);
    else if (name == "sigma") set.sigma[n][t] = read_block(b, payload, lat, Rank::matrix);
    else if (name == "q") set.q[n][t] = read_block(b, payload, lat, Rank::vector);
    else throw std::runtime_error("unknown corrector file block '" + name + "'");
  }
  for (int n = 1; n <= set.order; ++n)
    for (const auto& m : manifest.at("abar").at(std::to_string(n))) {
      Matrix a(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = m.at(i).at(j);
      set.abar[n].push_back(a);
    }
  return set;
}

}  // namespace homlab
