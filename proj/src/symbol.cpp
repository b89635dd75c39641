#include "homlab/symbol.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <Eigen/SVD>

#include "json.hpp"

#include "homlab/parallel.hpp"

namespace homlab {

namespace {

double dot(const Wavevector& a, const Wavevector& b, int d) {
  double s = 0.0;
  for (int j = 0; j < d; ++j) s += a[j] * b[j];
  return s;
}

double monomial(const std::array<int, 3>& alpha, const Wavevector& xi) {
  double v = 1.0;
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < alpha[j]; ++k) v *= xi[j];
  return v;
}

struct Column {
  int degree;
  std::array<int, 3> exponent;
};

std::vector<Column> design_columns(int dim, int max_degree, bool include_odd) {
  std::vector<Column> cols;
  for (int p = 2; p <= max_degree; ++p) {
    if (!include_odd && p % 2 != 0) continue;
    for (const auto& e : monomial_exponents(dim, p)) cols.push_back({p, e});
  }
  return cols;
}

Eigen::MatrixXd design_matrix(const std::vector<Wavevector>& points,
                              const std::vector<Column>& cols) {
  Eigen::MatrixXd A(points.size(), cols.size());
  for (std::size_t r = 0; r < points.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) A(r, c) = monomial(cols[c].exponent, points[r]);
  return A;
}

// Scales columns to unit norm in place and returns the scale factors.
Eigen::VectorXd normalize_columns(Eigen::MatrixXd& A) {
  Eigen::VectorXd s(A.cols());
  for (int c = 0; c < A.cols(); ++c) {
    const double n = A.col(c).norm();
    s(c) = n > 0.0 ? n : 1.0;
    A.col(c) /= s(c);
  }
  return s;
}

double condition_number(const Eigen::MatrixXd& A) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(sv.size() - 1) == 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / sv(sv.size() - 1);
}

}  // namespace

Wavevector default_probe(const Wavevector& xi, int dim) {
  const double n = std::sqrt(dot(xi, xi, dim));
  if (n == 0.0) throw std::invalid_argument("default probe needs a nonzero xi");
  Wavevector e{};
  for (int j = 0; j < dim; ++j) e[j] = xi[j] / n;
  return e;
}

SymbolSample bhat_at(const CoefficientField& a, const Wavevector& xi, const Wavevector& probe,
                     const SymbolOptions& opts) {
  const int d = a.dim();
  const double xe = dot(xi, probe, d);
  if (std::abs(xe) < 1e-12)
    throw std::invalid_argument("probe direction is orthogonal to xi; the forcing vanishes");
  auto sol = solve_bloch(a, xi, probe, opts.solve);
  SymbolSample s;
  s.xi = xi;
  s.probe = probe;
  s.value = Complex(0.0, xe) / sol.mean;
  s.residual = sol.report.relative_residual;
  s.iterations = sol.report.iterations;

  const double n2 = dot(xi, xi, d);
  const Matrix am = a.mean();
  double voigt = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) voigt += xi[i] * am(i, j) * xi[j];
  const double re = s.value.real();
  if (re < a.lambda() * n2 * (1.0 - opts.bound_slack) || re > voigt * (1.0 + opts.bound_slack)) {
    std::ostringstream os;
    os << std::setprecision(12) << "symbol value " << re << " at |xi|^2 = " << n2
       << " leaves the band [" << a.lambda() * n2 << ", " << voigt << "]";
    throw SymbolBoundError(os.str());
  }
  return s;
}

std::vector<SymbolSample> sample_symbol(const CoefficientField& a,
                                        const std::vector<Wavevector>& points,
                                        const SymbolOptions& opts) {
  std::vector<SymbolSample> out(points.size());
  parallel_for(points.size(), [&](std::size_t i) { out[i] = bhat_at(a, points[i], opts); });
  return out;
}

ProbeConsistency probe_consistency(const CoefficientField& a, const Wavevector& xi,
                                   const std::vector<Wavevector>& probes,
                                   const SymbolOptions& opts) {
  const int d = a.dim();
  ProbeConsistency pc;
  for (const auto& e : probes)
    if (std::abs(dot(xi, e, d)) >= 1e-12) pc.samples.push_back(bhat_at(a, xi, e, opts));
  const double n2 = dot(xi, xi, d);
  for (std::size_t i = 0; i < pc.samples.size(); ++i)
    for (std::size_t j = i + 1; j < pc.samples.size(); ++j)
      pc.max_deviation =
          std::max(pc.max_deviation, std::abs(pc.samples[i].value - pc.samples[j].value) / n2);
  return pc;
}

std::vector<std::array<int, 3>> monomial_exponents(int dim, int degree) {
  std::vector<std::array<int, 3>> out;
  if (dim == 1) {
    out.push_back({degree, 0, 0});
  } else if (dim == 2) {
    for (int a = degree; a >= 0; --a) out.push_back({a, degree - a, 0});
  } else {
    for (int a = degree; a >= 0; --a)
      for (int b = degree - a; b >= 0; --b) out.push_back({a, b, degree - a - b});
  }
  return out;
}

double TaylorModel::degree_form(int p, const Wavevector& xi) const {
  if (p < 0 || p >= static_cast<int>(terms.size())) return 0.0;
  double s = 0.0;
  for (const auto& m : terms[p]) s += m.coefficient * monomial(m.exponent, xi);
  return s;
}

double TaylorModel::evaluate(const Wavevector& xi) const {
  double s = 0.0;
  for (int p = 0; p < static_cast<int>(terms.size()); ++p) s += degree_form(p, xi);
  return s;
}

TaylorModel taylor_fit(const std::vector<SymbolSample>& samples, int dim, int max_degree,
                       bool include_odd) {
  if (max_degree < 2) throw std::invalid_argument("model degree must be at least 2");
  const auto cols = design_columns(dim, max_degree, include_odd);
  if (samples.size() < cols.size()) {
    std::ostringstream os;
    os << "symbol fit needs at least " << cols.size() << " samples, got " << samples.size()
       << "; add more rays";
    throw RankDeficientFit(os.str());
  }
  std::vector<Wavevector> pts;
  Eigen::VectorXd b(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    pts.push_back(samples[i].xi);
    b(i) = samples[i].value.real();
  }
  Eigen::MatrixXd A = design_matrix(pts, cols);
  const Eigen::VectorXd scale = normalize_columns(A);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                              : std::numeric_limits<double>::infinity();
  if (!(cond < 1e12)) {
    std::ostringstream os;
    os << "symbol fit design is rank deficient (condition number " << cond
       << "); add more rays or radii";
    throw RankDeficientFit(os.str());
  }
  const Eigen::VectorXd x = svd.solve(b);

  TaylorModel m;
  m.dim = dim;
  m.max_degree = max_degree;
  m.includes_odd = include_odd;
  m.condition_number = cond;
  m.terms.resize(max_degree + 1);
  for (std::size_t c = 0; c < cols.size(); ++c)
    m.terms[cols[c].degree].push_back({cols[c].exponent, x(c) / scale(c)});

  const Eigen::VectorXd r = A * x - b;
  m.rms_residual = std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
  for (int i = 0; i < r.size(); ++i)
    m.max_relative_residual =
        std::max(m.max_relative_residual, std::abs(r(i)) / std::max(std::abs(b(i)), 1e-300));
  return m;
}

std::vector<Wavevector> ray_points(const std::vector<Wavevector>& rays, const RayDesign& design) {
  std::vector<Wavevector> pts;
  for (const auto& ray : rays)
    for (double r : design.radii) {
      Wavevector p{};
      for (int j = 0; j < 3; ++j) p[j] = r * ray[j];
      pts.push_back(p);
      if (design.symmetric_pairs) {
        for (int j = 0; j < 3; ++j) p[j] = -p[j];
        pts.push_back(p);
      }
    }
  return pts;
}

std::vector<Wavevector> design_rays(int dim, const RayDesign& design) {
  std::vector<Wavevector> rays;
  for (int i = 0; i < dim; ++i) {
    Wavevector e{};
    e[i] = 1.0;
    rays.push_back(e);
  }
  const double h = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j)
      for (double s : {1.0, -1.0}) {
        Wavevector e{};
        e[i] = h;
        e[j] = s * h;
        rays.push_back(e);
      }

  const auto cols = design_columns(dim, design.max_degree, false);
  auto cond_of = [&] {
    RayDesign single = design;
    single.symmetric_pairs = false;
    Eigen::MatrixXd A = design_matrix(ray_points(rays, single), cols);
    normalize_columns(A);
    return condition_number(A);
  };
  std::mt19937_64 rng(design.seed);
  std::normal_distribution<double> nd;
  int added = 0;
  while (dim > 1 && added < design.max_random_rays && !(cond_of() < design.max_condition)) {
    Wavevector e{};
    double n = 0.0;
    for (int j = 0; j < dim; ++j) {
      e[j] = nd(rng);
      n += e[j] * e[j];
    }
    n = std::sqrt(n);
    for (int j = 0; j < dim; ++j) e[j] /= n;
    rays.push_back(e);
    ++added;
  }
  return rays;
}

TaylorModel fit_symbol(const CoefficientField& a, const RayDesign& design,
                       const SymbolOptions& opts, std::vector<SymbolSample>* samples_out) {
  const auto rays = design_rays(a.dim(), design);
  auto samples = sample_symbol(a, ray_points(rays, design), opts);
  TaylorModel m = taylor_fit(samples, a.dim(), design.max_degree);
  m.radii = design.radii;
  m.rays = static_cast<int>(rays.size());
  if (samples_out) *samples_out = std::move(samples);
  return m;
}

std::vector<Wavevector> comparison_directions(int dim) {
  RayDesign none;
  none.max_random_rays = 0;
  auto dirs = design_rays(dim, none);
  if (dim == 1) return dirs;
  std::mt19937_64 rng(777);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 8; ++k) {
    Wavevector e{};
    double n = 0.0;
    for (int j = 0; j < dim; ++j) {
      e[j] = nd(rng);
      n += e[j] * e[j];
    }
    for (int j = 0; j < dim; ++j) e[j] /= std::sqrt(n);
    dirs.push_back(e);
  }
  return dirs;
}

std::vector<RouteComparison> compare_with_correctors(const TaylorModel& model,
                                                     const CorrectorSet& set, int ell) {
  if (ell < 1 || ell > set.order)
    throw std::invalid_argument("comparison order exceeds the corrector order");
  if (model.max_degree < ell + 1)
    throw std::invalid_argument("model degree is too low for the requested order");
  std::vector<RouteComparison> out;
  const auto dirs = comparison_directions(set.dim);
  for (int n = 1; n <= ell; ++n) {
    RouteComparison row;
    row.n = n;
    row.discrepancy = -1.0;
    for (const auto& e : dirs) {
      const double corr = symmetrized_form(set.abar[n], n, e).form;
      // The degree-(n+1) part of B equals i^{n-1} times the corrector form;
      // it is real for odd n and imaginary (vanishing by parity) for even n.
      double mod = 0.0;
      if (n % 2 == 1) mod = ((n - 1) / 2 % 2 == 0 ? 1.0 : -1.0) * model.degree_form(n + 1, e);
      const double disc = std::abs(mod - corr) / std::max(1.0, std::abs(corr));
      if (disc > row.discrepancy) {
        row.discrepancy = disc;
        row.model_form = mod;
        row.corrector_form = corr;
      }
    }
    out.push_back(row);
  }
  return out;
}

Complex translation_average_oracle(const CoefficientField& a, const Wavevector& xi,
                                   const Wavevector& probe, int translations,
                                   const SymbolOptions& opts) {
  const int d = a.dim();
  const auto& lat = a.lattice();
  const int n = lat.grid_size();
  if (translations < 1 || n % translations != 0) {
    std::ostringstream os;
    os << "translation count " << translations << " must divide the grid size " << n;
    throw std::invalid_argument(os.str());
  }
  std::size_t count = 1;
  for (int j = 0; j < d; ++j) count *= static_cast<std::size_t>(translations);
  const std::size_t np = lat.num_grid_points();

  // Physical field exp(i xi.x) v_z(x) per translation.
  std::vector<std::vector<Complex>> fields(count);
  parallel_for(count, [&](std::size_t t) {
    Wavevector z{};
    std::size_t rest = t;
    for (int j = d - 1; j >= 0; --j) {
      z[j] = static_cast<double>(rest % translations) / translations;
      rest /= translations;
    }
    auto shifted = a.embedded(a.lattice_ptr(), 1, z);
    auto sol = solve_bloch(shifted, xi, probe, opts.solve);
    auto v = sol.v.to_grid();
    for (std::size_t p = 0; p < np; ++p) {
      const Wavevector x = lat.grid_point(p);
      v[p] *= std::exp(Complex(0.0, dot(xi, x, d)));
    }
    fields[t] = std::move(v);
  });

  std::vector<Complex> average(np);
  for (std::size_t p = 0; p < np; ++p) {
    std::vector<Complex> vals(count);
    for (std::size_t t = 0; t < count; ++t) vals[t] = fields[t][p];
    average[p] = pairwise_sum<Complex>(vals) / static_cast<double>(count);
  }
  std::vector<Complex> projected(np);
  for (std::size_t p = 0; p < np; ++p)
    projected[p] = std::exp(Complex(0.0, -dot(xi, lat.grid_point(p), d))) * average[p];
  return pairwise_sum<Complex>(projected) / static_cast<double>(np);
}

void write_symbol_csv(const std::vector<SymbolSample>& samples, int dim,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  for (int j = 0; j < dim; ++j) out << "xi_" << j + 1 << ",";
  out << "re,im,residual\n";
  out << std::setprecision(17);
  for (const auto& s : samples) {
    for (int j = 0; j < dim; ++j) out << s.xi[j] << ",";
    out << s.value.real() << "," << s.value.imag() << "," << s.residual << "\n";
  }
}

void write_taylor_json(const TaylorModel& model, const std::filesystem::path& path) {
  nlohmann::json j;
  j["dim"] = model.dim;
  j["max_degree"] = model.max_degree;
  j["includes_odd"] = model.includes_odd;
  j["rms_residual"] = model.rms_residual;
  j["max_relative_residual"] = model.max_relative_residual;
  j["condition_number"] = model.condition_number;
  j["radii"] = model.radii;
  j["rays"] = model.rays;
  nlohmann::json degrees = nlohmann::json::object();
  for (int p = 0; p < static_cast<int>(model.terms.size()); ++p) {
    if (model.terms[p].empty()) continue;
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& m : model.terms[p]) {
      std::vector<int> e(m.exponent.begin(), m.exponent.begin() + model.dim);
      terms.push_back({{"exponent", e}, {"coefficient", m.coefficient}});
    }
    degrees[std::to_string(p)] = terms;
  }
  j["degrees"] = degrees;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace homlab
