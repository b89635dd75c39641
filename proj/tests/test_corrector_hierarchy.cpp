#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "homlab/corrector_hierarchy.hpp"

using namespace homlab;

namespace {

double max_abs_diff(std::span<const Complex> a, std::span<const Complex> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Antiderivative with zero mean of a 1d field whose mean is zero.
SpectralField antiderivative(const SpectralField& f) {
  return apply_multiplier(f, [](const Wavevector& k) -> std::optional<Complex> {
    if (k[0] == 0.0) return std::nullopt;
    return 1.0 / Complex(0.0, k[0]);
  });
}

}  // namespace

TEST_CASE("identity medium: vanishing cascade") {
  auto lat = FrequencyLattice::make(2, 3);
  auto id = make_coefficient_field(lat, medium::Identity{});
  auto set = compute_correctors(id, 4);
  CHECK((homogenized_tensor(set, 1)[0] - Matrix::Identity(2, 2)).norm() < 1e-14);
  for (int n = 2; n <= 4; ++n)
    for (const auto& m : homogenized_tensor(set, n)) CHECK(m.norm() < 1e-14);
  for (int n = 1; n <= 4; ++n) {
    CHECK(set.phi[n].size() == std::size_t(1) << n);
    for (const auto& f : set.phi[n]) CHECK(l2_norm(f) == 0.0);
    for (const auto& f : set.sigma[n]) CHECK(l2_norm(f) == 0.0);
  }
  auto g = growth_report(set);
  CHECK(g.rows[0].coefficient_norm == doctest::Approx(std::sqrt(2.0)));
  for (const auto& row : g.rows) CHECK(row.corrector_norm == 0.0);
  CHECK(std::isfinite(g.fitted_base));
}

TEST_CASE("1d cosine medium against the first-integral recursion") {
  auto lat = FrequencyLattice::make(1, 24);
  auto a = make_coefficient_field(lat, medium::cosine_1d());
  const int order = 8;
  auto set = compute_correctors(a, order);

  CHECK(homogenized_tensor(set, 1)[0](0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  for (int n = 2; n <= order; ++n) CHECK(std::abs(homogenized_tensor(set, n)[0](0, 0)) < 1e-9);

  // 1d oracle: a (phi^n' + phi^{n-1}) = abar^n, so phi^1' = 1/(2a) - 1 and
  // phi^n' = -phi^{n-1} for n >= 2.
  auto inv_a = SpectralField::from_grid(lat, Rank::scalar, [&] {
    std::vector<Complex> s(lat->num_grid_points());
    for (std::size_t p = 0; p < s.size(); ++p)
      s[p] = 2.0 + std::cos(kTwoPi * lat->grid_point(p)[0]);
    return s;
  }());
  SpectralField dphi = 0.5 * inv_a;
  dphi.coeff(0, lat->zero_index()) -= 1.0;
  SpectralField oracle = antiderivative(dphi);
  for (int n = 1; n <= order; ++n) {
    if (n > 1) oracle = -1.0 * antiderivative(oracle);
    CHECK(max_abs_diff(set.phi[n][0].data(), oracle.data()) < 1e-11);
    CHECK(l2_norm(set.q[n][0]) < 1e-10);
    CHECK(l2_norm(set.sigma[n][0]) == 0.0);
  }

  auto phi1 = set.phi[1][0].to_grid();
  for (std::size_t p = 0; p < phi1.size(); ++p)
    CHECK(std::abs(phi1[p] - std::sin(kTwoPi * lat->grid_point(p)[0]) / (4 * kPi)) < 1e-11);
  auto g = growth_report(set);
  CHECK(g.rows[0].corrector_norm == doctest::Approx(1.0 / (4 * kPi * std::sqrt(2.0))).epsilon(1e-10));
  CHECK(std::isfinite(g.fitted_base));
  CHECK(g.fitted_base > 0.0);
}

TEST_CASE("laminate: first-order coefficient is the harmonic/arithmetic mean pair") {
  auto lat = FrequencyLattice::make(2, 16);
  auto a = make_coefficient_field(lat, medium::laminate_2d());
  auto set = compute_correctors(a, 2);
  Matrix expect(2, 2);
  expect << std::sqrt(3.0) / 2.0, 0.0, 0.0, 1.0;
  CHECK((homogenized_tensor(set, 1)[0] - expect).norm() < 1e-10);
}

TEST_CASE("structural invariants on an oblique medium") {
  auto lat = FrequencyLattice::make(2, 10);
  auto a = make_coefficient_field(lat, medium::oblique_2d());
  auto set = compute_correctors(a, 4);
  for (int n = 1; n <= 4; ++n) {
    for (std::size_t t = 0; t < set.tuples(n); ++t) {
      CHECK(std::abs(set.phi[n][t].mean()) < 1e-14);
      for (int c = 0; c < 4; ++c) CHECK(std::abs(set.sigma[n][t].mean(c)) < 1e-14);
      for (int c = 0; c < 2; ++c) CHECK(std::abs(set.q[n][t].mean(c)) <= 1e-10);
      const auto& s = set.sigma[n][t];
      // Skew symmetry and zero diagonal, coefficient by coefficient.
      CHECK(max_abs_diff(s.component(1), (-1.0 * s.extract(2)).component(0)) < 1e-14);
      CHECK(l2_norm(s.extract(0)) == 0.0);
      CHECK(l2_norm(s.extract(3)) == 0.0);
      CHECK(l2_norm(divergence(s) - set.q[n][t]) <= 1e-9);
      CHECK(l2_norm(divergence(set.q[n][t])) <= 1e-9);
    }
    CHECK(set.diagnostics[n].max_sigma_defect <= 1e-9);
  }

  const Matrix a1 = homogenized_tensor(set, 1)[0];
  const Matrix sym = 0.5 * (a1 + a1.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  CHECK(es.eigenvalues().minCoeff() >= a.lambda());
  CHECK(es.eigenvalues().maxCoeff() <= 1.0 / a.lambda());

  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 10; ++k) {
    const Wavevector xi{nd(rng), nd(rng), 0.0};
    CHECK(std::abs(symmetrized_form(homogenized_tensor(set, 2), 2, xi).form) < 1e-7);
  }
}

TEST_CASE("non-symmetric medium: recursion still closes") {
  medium::FourierModes m;
  Eigen::MatrixXcd a0(2, 2), a1(2, 2);
  a0 << 1.0, 0.3, -0.3, 1.0;
  a1 << 0.2, 0.1, 0.0, 0.15;
  m.modes = {{{0, 0, 0}, a0}, {{1, 1, 0}, a1}, {{-1, -1, 0}, a1.conjugate()}};
  auto lat = FrequencyLattice::make(2, 8);
  auto a = make_coefficient_field(lat, m);
  auto set = compute_correctors(a, 3);
  for (int n = 1; n <= 3; ++n) CHECK(set.diagnostics[n].max_sigma_defect <= 1e-9);
}

TEST_CASE("symmetrized form contractions") {
  std::vector<Matrix> id{Matrix::Identity(2, 2)};
  auto f1 = symmetrized_form(id, 1, {0.3, -0.4, 0});
  CHECK((f1.matrix - Matrix::Identity(2, 2)).norm() == 0.0);
  CHECK(f1.form == doctest::Approx(0.25));

  std::vector<Matrix> zero(2, Matrix::Zero(2, 2));
  CHECK(symmetrized_form(zero, 2, {1, 2, 0}).form == 0.0);

  std::vector<Matrix> c{Matrix::Constant(1, 1, 0.7)};
  CHECK(symmetrized_form(c, 3, {1.5, 0, 0}).form == doctest::Approx(0.7 * std::pow(1.5, 4)));
  CHECK_THROWS(symmetrized_form(zero, 3, {1, 2, 0}));
}

TEST_CASE("order guards and error annotation") {
  auto lat = FrequencyLattice::make(2, 3);
  auto a = make_coefficient_field(lat, medium::oblique_2d());
  CHECK_THROWS_AS(compute_correctors(a, 7), std::invalid_argument);
  CHECK_THROWS_AS(compute_correctors(a, 0), std::invalid_argument);
  auto set = compute_correctors(a, 1);
  CHECK_THROWS_AS(homogenized_tensor(set, 2), std::out_of_range);

  CorrectorOptions tight;
  tight.solve.max_iterations = 1;
  try {
    compute_correctors(a, 1, tight);
    FAIL("expected non-convergence");
  } catch (const SolverError& e) {
    CHECK(std::string(e.what()).find("order 1, index (") != std::string::npos);
  }
}

TEST_CASE("container roundtrip") {
  auto lat = FrequencyLattice::make(2, 4);
  auto a = make_coefficient_field(lat, medium::oblique_2d());
  auto set = compute_correctors(a, 3);
  const auto path = std::filesystem::temp_directory_path() / "homlab_correctors_test.bin";
  write_correctors(set, path);
  auto back = read_correctors(path);
  std::filesystem::remove(path);
  CHECK(back.order == 3);
  CHECK(back.a.lambda() == set.a.lambda());
  for (int n = 1; n <= 3; ++n)
    for (std::size_t t = 0; t < set.tuples(n); ++t) {
      CHECK(max_abs_diff(back.phi[n][t].data(), set.phi[n][t].data()) == 0.0);
      CHECK(max_abs_diff(back.sigma[n][t].data(), set.sigma[n][t].data()) == 0.0);
      CHECK(max_abs_diff(back.q[n][t].data(), set.q[n][t].data()) == 0.0);
    }
  for (int n = 1; n <= 3; ++n)
    for (std::size_t t = 0; t < set.abar[n].size(); ++t)
      CHECK((back.abar[n][t] - set.abar[n][t]).norm() == 0.0);
}
