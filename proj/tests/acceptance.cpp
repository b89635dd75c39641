// Acceptance run: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "homlab/corrector_hierarchy.hpp"
#include "homlab/homogenized_solutions.hpp"
#include "homlab/parallel.hpp"
#include "homlab/random_lattice.hpp"
#include "homlab/symbol.hpp"

using namespace homlab;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

// Band checks collected from every symbol evaluated by the other criteria.
struct BandTally {
  std::size_t checked = 0;
  std::size_t violations = 0;

  void continuum(const CoefficientField& a, const std::vector<SymbolSample>& samples) {
    for (const auto& s : samples) {
      double n2 = 0.0;
      for (int j = 0; j < a.dim(); ++j) n2 += s.xi[j] * s.xi[j];
      if (n2 == 0.0) continue;
      ++checked;
      const double re = s.value.real();
      if (re < a.lambda() * n2 * (1.0 - 1e-9) || re > n2 * (1.0 + 1e-9)) ++violations;
    }
  }
  void lattice(Complex value, const Wavevector& xi, int dim, double delta) {
    ++checked;
    if (!within_discrete_band(value, xi, dim, delta)) ++violations;
  }
};

BandTally g_band;

double norm2(const Wavevector& xi, int d) {
  double s = 0.0;
  for (int j = 0; j < d; ++j) s += xi[j] * xi[j];
  return s;
}

double field_norm(const SpectralField& f) {
  double s = 0.0;
  for (auto c : f.data()) s += std::norm(c);
  return std::sqrt(s);
}

CoefficientField laminate(int m) {
  return make_coefficient_field(FrequencyLattice::make(2, m), medium::laminate_2d());
}

CoefficientField cosine(int m) {
  return make_coefficient_field(FrequencyLattice::make(1, m), medium::cosine_1d());
}

// Dense reference for the lattice problem grad^T a grad u = -grad^T f.
Eigen::VectorXcd dense_solve(const LatticeField& a, const std::vector<Complex>& f) {
  const int d = a.dim();
  const auto n = static_cast<Eigen::Index>(a.sites());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n * d, n);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n * d, n * d);
  for (Eigen::Index s = 0; s < n; ++s) {
    m.block(s * d, s * d, d, d) = a.at(s);
    for (int j = 0; j < d; ++j) {
      g(s * d + j, static_cast<Eigen::Index>(a.neighbor(s, j, 1))) += 1.0;
      g(s * d + j, s) -= 1.0;
    }
  }
  Eigen::MatrixXd k = g.transpose() * m * g + Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  const Eigen::VectorXcd fv =
      Eigen::Map<const Eigen::VectorXcd>(f.data(), static_cast<Eigen::Index>(f.size()));
  const Eigen::VectorXcd rhs = -(g.transpose().cast<Complex>() * fv);
  return k.cast<Complex>().fullPivLu().solve(rhs);
}

double dense_gap(const std::vector<Complex>& u, const Eigen::VectorXcd& ref) {
  double m = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) m = std::max(m, std::abs(u[i] - ref(static_cast<Eigen::Index>(i))));
  return m;
}

void criterion_1(Outcome& out) {
  auto id = make_coefficient_field(FrequencyLattice::make(2, 3), medium::Identity{});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.1, 3.1);
  std::vector<Wavevector> pts;
  while (pts.size() < 50) {
    const Wavevector xi{u(rng), u(rng), 0};
    if (norm2(xi, 2) > 1e-6) pts.push_back(xi);
  }
  const auto samples = sample_symbol(id, pts);
  g_band.continuum(id, samples);
  double worst = 0.0;
  for (const auto& s : samples) {
    const double n2 = norm2(s.xi, 2);
    worst = std::max(worst, std::abs(s.value - n2) / n2);
  }
  out.detail << "symbol_rel_err=" << worst;
  out.require(worst <= 1e-10, "symbol");

  const auto set = compute_correctors(id, 3);
  double corr = 0.0, coeff = (set.abar[1][0] - Matrix::Identity(2, 2)).norm();
  for (int n = 1; n <= 3; ++n) {
    for (const auto& f : set.phi[n]) corr = std::max(corr, field_norm(f));
    for (const auto& f : set.sigma[n]) corr = std::max(corr, field_norm(f));
    if (n >= 2)
      for (const auto& m : set.abar[n]) coeff = std::max(coeff, m.norm());
  }
  out.detail << " corrector_norm=" << corr << " abar_defect=" << coeff;
  out.require(corr <= 1e-12 && coeff <= 1e-12, "correctors");

  FullSpaceGrid grid{2, 16.0, 9.0};
  SymbolCache cache(id, grid);
  double err = 0.0;
  for (int ell = 1; ell <= 3; ++ell) {
    const auto t = error_and_rate(set, ell, Forcing::gaussian(2), grid, {0.4, 0.2, 0.1, 0.05}, cache);
    for (const auto& r : t.rows) err = std::max(err, r.error);
  }
  g_band.continuum(id, cache.samples());
  out.detail << " max_error=" << err;
  out.require(err <= 1e-14, "error_and_rate");
}

void criterion_2(Outcome& out) {
  auto a = cosine(24);
  std::vector<Wavevector> pts;
  for (double x = -6.2; x < 6.25; x += 0.1)
    if (std::abs(x) > 1e-9) pts.push_back({x, 0, 0});
  const auto samples = sample_symbol(a, pts);
  g_band.continuum(a, samples);
  double worst = 0.0;
  for (const auto& s : samples) worst = std::max(worst, std::abs(s.value / (s.xi[0] * s.xi[0]) - 0.5));
  out.detail << "ratio_err=" << worst;
  out.require(worst <= 1e-9, "symbol ratio");

  std::vector<SymbolSample> fit_samples;
  const auto model = fit_symbol(a, RayDesign{}, {}, &fit_samples);
  g_band.continuum(a, fit_samples);
  double higher = 0.0;
  for (int p = 3; p <= model.max_degree; ++p)
    for (const auto& t : model.terms[p]) higher = std::max(higher, std::abs(t.coefficient));
  out.detail << " taylor_higher=" << higher;
  out.require(higher <= 1e-9, "taylor");

  const auto set = compute_correctors(a, 3);
  const double d1 = std::abs(set.abar[1][0](0, 0) - 0.5);
  const double d23 = std::max(set.abar[2][0].norm(), set.abar[3][0].norm());
  out.detail << " abar1_err=" << d1 << " abar23=" << d23;
  out.require(d1 <= 1e-8 && d23 <= 1e-8, "correctors");
}

void criterion_3(Outcome& out) {
  auto lam = laminate(16);
  std::vector<SymbolSample> samples;
  const auto model = fit_symbol(lam, RayDesign{}, {}, &samples);
  g_band.continuum(lam, samples);
  const auto set = compute_correctors(lam, 3);
  for (const auto& r : compare_with_correctors(model, set, 3)) {
    out.detail << "n" << r.n << "=" << r.discrepancy << " ";
    out.require(r.discrepancy <= 1e-5, "order " + std::to_string(r.n));
  }
  const double a11 = std::abs(set.abar[1][0](0, 0) - std::sqrt(3.0) / 2);
  const double a22 = std::abs(set.abar[1][0](1, 1) - 1.0);
  const double off = std::abs(set.abar[1][0](0, 1)) + std::abs(set.abar[1][0](1, 0));
  double sym2 = 0.0;
  for (const auto& e : comparison_directions(2))
    sym2 = std::max(sym2, std::abs(symmetrized_form(set.abar[2], 2, e).form));
  out.detail << "order1_ref_err=" << std::max({a11, a22, off}) << " order2_form=" << sym2;
  out.require(std::max({a11, a22, off}) <= 1e-5, "order-1 reference");
  out.require(sym2 <= 1e-5, "order-2 parity");
}

void criterion_4(Outcome& out) {
  auto lam = laminate(16);
  const auto set = compute_correctors(lam, 3);
  FullSpaceGrid grid{2, 16.0, 9.0};
  SymbolCache cache(lam, grid);
  for (int ell = 1; ell <= 3; ++ell) {
    const auto t = error_and_rate(set, ell, Forcing::gaussian(2), grid, {0.4, 0.2, 0.1, 0.05}, cache);
    out.detail << "ell" << ell << ": slope=" << t.slope << " spread=" << t.ratio_spread;
    out.require(t.slope >= ell - 0.2, "slope ell=" + std::to_string(ell));
    out.require(t.ratio_spread < 0.25, "prefactor spread ell=" + std::to_string(ell));
    out.detail << "; ";
  }
  g_band.continuum(lam, cache.samples());
  out.detail << "symbol_evaluations=" << cache.misses();
}

void criterion_5(Outcome& out) {
  auto c = compute_correctors(cosine(24), 2);
  auto lat1 = FrequencyLattice::make(1, 1);
  SpectralField w1(lat1, Rank::scalar);
  w1.coeff(0, *lat1->find({1, 0, 0})) = Complex(0, -0.5);
  w1.coeff(0, *lat1->find({-1, 0, 0})) = Complex(0, 0.5);
  const double r1 = two_scale_residual(c, 2, w1, 8);

  auto lat2 = FrequencyLattice::make(2, 1);
  std::vector<Complex> s(lat2->num_grid_points());
  for (std::size_t p = 0; p < s.size(); ++p) {
    const auto x = lat2->grid_point(p);
    s[p] = std::cos(kTwoPi * x[0]) * std::sin(kTwoPi * x[1]) + 0.5 * std::sin(kTwoPi * x[0]);
  }
  const auto w2 = SpectralField::from_grid(lat2, Rank::scalar, s);
  const double r2 = two_scale_residual(compute_correctors(laminate(24), 2), 2, w2, 4);
  out.detail << "cosine_n2=" << r1 << " laminate_n2=" << r2;
  out.require(r1 <= 1e-8, "cosine");
  out.require(r2 <= 1e-8, "laminate");
}

void criterion_7(Outcome& out) {
  const ModeIndex k{1, 0, 0};
  const auto mc = mc_bhat(Distribution::rademacher, 1, 2, 0.1, k, 1024);
  const auto ex = enumerate_exact(1, 2, TwoPointLaw::rademacher(1), 0.1, k);
  g_band.lattice(mc.value, mc.xi, 1, 0.1);
  const double z = std::abs(mc.value.real() - ex.value.real()) / mc.standard_error;
  out.detail << "mc=" << mc.value.real() << " exact=" << ex.value.real() << " se=" << mc.standard_error
             << " z=" << z;
  out.require(z <= 3.0, "mc vs enumeration");

  double gap = 0.0;
  {
    LatticeField b(1, 4);
    const double vals[] = {1.0, -0.5, 0.25, -1.0};
    for (int s = 0; s < 4; ++s) b.at(s)(0, 0) = vals[s];
    std::vector<Complex> f{{1.0, 0.0}, {-0.3, 0.2}, {0.5, 0.0}, {0.0, -1.0}};
    gap = std::max(gap, dense_gap(solve_discrete(b, 0.5, f).u, dense_solve(perturbed_identity(b, 0.5), f)));
  }
  for (auto dist : {Distribution::rademacher, Distribution::uniform, Distribution::diagonal}) {
    for (int d : {1, 2, 3}) {
      const int side = d == 3 ? 3 : 4;
      const auto b = sample_field(dist, d, side, 0, RngSpec{});
      const auto f = plane_wave_forcing(d, side, {1, 0, 0});
      gap = std::max(gap, dense_gap(solve_discrete(b, 0.4, f).u, dense_solve(perturbed_identity(b, 0.4), f)));
    }
  }
  {
    LatticeField a(2, 3);
    for (std::size_t s = 0; s < a.sites(); ++s) a.at(s) << 1.0 + 0.1 * s, 0.3, -0.2, 1.2;
    std::vector<Complex> f(a.sites() * 2);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = Complex(std::sin(1.0 + i), std::cos(2.0 * i));
    gap = std::max(gap, dense_gap(DiscreteOperator(a).solve(f).u, dense_solve(a, f)));
  }
  out.detail << " dense_gap=" << gap;
  out.require(gap <= 1e-10, "dense solves");
}

void criterion_6(Outcome& out) {
  // Lattice enumerations over every nonzero frequency of small tori.
  const std::pair<int, int> tori[] = {{1, 2}, {1, 4}, {1, 8}, {1, 12}, {2, 2}, {2, 3}};
  for (auto [dim, side] : tori)
    for (int k1 = 0; k1 < side; ++k1)
      for (int k2 = 0; k2 < (dim == 2 ? side : 1); ++k2) {
        if (k1 == 0 && k2 == 0) continue;
        const ModeIndex k{k1, k2, 0};
        for (double delta : {0.1, 0.5, 0.9}) {
          const auto e = enumerate_exact(dim, side, TwoPointLaw::rademacher(dim), delta, k);
          g_band.lattice(e.value, dual_frequency(k, dim, side), dim, delta);
        }
      }
  // Continuum symbols of the oblique medium on a ring.
  auto obl = make_coefficient_field(FrequencyLattice::make(2, 12), medium::oblique_2d());
  std::vector<Wavevector> pts;
  for (int i = 0; i < 24; ++i)
    for (double r : {0.5, 2.0, 5.0})
      pts.push_back({r * std::cos(kTwoPi * i / 24), r * std::sin(kTwoPi * i / 24), 0});
  g_band.continuum(obl, sample_symbol(obl, pts));
  out.detail << "checked=" << g_band.checked << " violations=" << g_band.violations;
  out.require(g_band.violations == 0, "band");
}

void criterion_8(Outcome& out) {
  const auto t = periodization_experiment(Distribution::rademacher, 2, 0.2, {4, 8, 16}, 1, 4096);
  out.detail << "seed=" << RngSpec{}.seed << " samples=4096 differences=";
  for (std::size_t i = 0; i < t.successive_differences.size(); ++i)
    out.detail << (i ? "," : "") << t.successive_differences[i];
  bool monotone = t.successive_differences.size() == 2;
  for (std::size_t i = 1; i < t.successive_differences.size(); ++i)
    monotone = monotone && t.successive_differences[i] < t.successive_differences[i - 1];
  out.require(monotone, "monotone decrease");
}

void criterion_9(Outcome& out, bool items_6_to_8) {
  out.detail << "Holder exponent 2d - C_d delta and constants C_ell, C_d are not quantitatively "
                "reproducible; substituted suite:";
  out.require(items_6_to_8, "criteria 6-8");

  double parity = 0.0, imag = 0.0;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (auto desc : {medium::laminate_2d(), medium::oblique_2d()}) {
    auto a = make_coefficient_field(FrequencyLattice::make(2, 12), desc);
    for (int i = 0; i < 10; ++i) {
      const Wavevector xi{u(rng), u(rng), 0};
      const double n2 = norm2(xi, 2);
      const auto p = bhat_at(a, xi);
      const auto m = bhat_at(a, {-xi[0], -xi[1], 0});
      parity = std::max(parity, std::abs(p.value - m.value) / n2);
      imag = std::max(imag, std::abs(p.value.imag()) / n2);
    }
  }
  out.detail << " parity=" << parity << " imag=" << imag;
  out.require(parity <= 1e-9 && imag <= 1e-8, "evenness and reality");

  auto lam = laminate(16);
  std::vector<SymbolSample> samples;
  fit_symbol(lam, RayDesign{}, {}, &samples);
  const auto diag = taylor_fit(samples, 2, 7, true);
  double odd = 0.0;
  for (int p : {1, 3, 5, 7})
    for (const auto& t : diag.terms[p]) odd = std::max(odd, std::abs(t.coefficient));
  out.detail << " odd_taylor=" << odd;
  out.require(odd <= 1e-7, "odd Taylor coefficients");

  const int saved = thread_count();
  set_thread_count(1);
  const auto a = mc_bhat(Distribution::uniform, 2, 8, 0.3, {1, 2, 0}, 128);
  set_thread_count(4);
  const auto b = mc_bhat(Distribution::uniform, 2, 8, 0.3, {1, 2, 0}, 128);
  set_thread_count(saved);
  const auto c = mc_bhat(Distribution::uniform, 2, 8, 0.3, {1, 2, 0}, 128);
  const bool same = a.value == b.value && a.value == c.value && a.standard_error == b.standard_error &&
                    a.standard_error == c.standard_error;
  out.detail << " mc_bit_identical=" << (same ? "yes" : "no");
  out.require(same, "MC determinism");
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    double budget_seconds;
    std::function<void(Outcome&)> run;
  };
  bool pass_6_to_8 = true;
  std::vector<Criterion> list = {
      {1, "constant medium", 10.0, criterion_1},
      {2, "1d exact symbol", 30.0, criterion_2},
      {3, "cross-route identity", 600.0, criterion_3},
      {4, "rate verification", 600.0, criterion_4},
      {5, "two-scale identity", 60.0, criterion_5},
      {7, "lattice oracles", 60.0, criterion_7},
      {6, "symbol bounds", 0.0, criterion_6},
      {8, "periodization trend", 900.0, criterion_8},
      {9, "non-reproducibility and substitutes", 0.0,
       [&](Outcome& o) { criterion_9(o, pass_6_to_8); }},
  };
  std::vector<std::string> lines(10);
  int failures = 0;
  for (auto& c : list) {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(out);
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.detail << " seconds=" << secs;
    if (c.budget_seconds > 0.0) out.require(secs < c.budget_seconds, "runtime budget");
    if (c.id >= 6 && c.id <= 8) pass_6_to_8 = pass_6_to_8 && out.pass;
    if (!out.pass) ++failures;
    lines[c.id] = std::string(out.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(c.id) + " (" +
                  c.title + "): " + out.detail.str();
  }
  for (int i = 1; i <= 9; ++i) std::printf("%s\n", lines[i].c_str());
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
