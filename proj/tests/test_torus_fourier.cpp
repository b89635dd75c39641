#include <cmath>
#include <random>

#include "doctest.h"
#include "homlab/torus_fourier.hpp"

using namespace homlab;

namespace {

SpectralField sample_scalar(const LatticePtr& lat, auto&& fn) {
  std::vector<Complex> s(lat->num_grid_points());
  for (std::size_t p = 0; p < s.size(); ++p) s[p] = fn(lat->grid_point(p));
  return SpectralField::from_grid(lat, Rank::scalar, s, true);
}

// Random band-limited real field with coefficients decaying like 1/(1+|k|).
SpectralField random_real_field(const LatticePtr& lat, Rank rank, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  SpectralField f(lat, rank, true);
  for (int c = 0; c < f.num_components(); ++c)
    for (std::size_t i = 0; i < lat->num_modes(); ++i) {
      const ModeIndex k = lat->mode(i);
      const double w = 1.0 / (1.0 + std::abs(k[0]) + std::abs(k[1]) + std::abs(k[2]));
      f.coeff(c, i) = w * Complex(n(rng), n(rng));
    }
  f.make_real();
  return f;
}

double max_abs_diff(std::span<const Complex> a, std::span<const Complex> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("lattice enumerates modes lexicographically and enforces dealiasing headroom") {
  auto lat = FrequencyLattice::make(2, 2);
  CHECK(lat->num_modes() == 25);
  CHECK(lat->grid_size() >= 7);
  CHECK(lat->mode(0) == ModeIndex{-2, -2, 0});
  CHECK(lat->mode(1) == ModeIndex{-2, -1, 0});
  CHECK(lat->mode(5) == ModeIndex{-1, -2, 0});
  CHECK(lat->mode(lat->zero_index()) == ModeIndex{0, 0, 0});
  for (std::size_t i = 0; i < lat->num_modes(); ++i) CHECK(*lat->find(lat->mode(i)) == i);
  CHECK_THROWS_AS(FrequencyLattice(1, 4, 12), FourierError);
  CHECK_NOTHROW(FrequencyLattice(1, 4, 13));
}

TEST_CASE("transform of constant and cosine fields") {
  auto lat = FrequencyLattice::make(2, 3);
  auto one = sample_scalar(lat, [](const Wavevector&) { return 1.0; });
  auto cosine = sample_scalar(lat, [](const Wavevector& x) { return std::cos(kTwoPi * x[0]); });
  for (std::size_t i = 0; i < lat->num_modes(); ++i) {
    const ModeIndex k = lat->mode(i);
    const double expect_one = (k == ModeIndex{0, 0, 0}) ? 1.0 : 0.0;
    const double expect_cos = (std::abs(k[0]) == 1 && k[1] == 0) ? 0.5 : 0.0;
    CHECK(std::abs(one.coeff(0, i) - expect_one) < 1e-14);
    CHECK(std::abs(cosine.coeff(0, i) - expect_cos) < 1e-14);
  }
}

TEST_CASE("full-grid roundtrip of arbitrary real samples") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int d = 1; d <= 3; ++d) {
    auto lat = FrequencyLattice::make(d, 3);
    std::vector<Complex> s(lat->num_grid_points());
    double mean = 0.0;
    for (auto& v : s) {
      v = u(rng);
      mean += v.real();
    }
    mean /= static_cast<double>(s.size());
    auto spec = grid_forward(*lat, s);
    CHECK(std::abs(spec[0] - mean) < 1e-14);
    auto back = grid_inverse(*lat, spec);
    double scale = 0.0;
    for (auto& v : s) scale = std::max(scale, std::abs(v));
    CHECK(max_abs_diff(back, s) <= 1e-12 * scale);
  }
}

TEST_CASE("band-limited roundtrip through SpectralField and mismatch rejection") {
  std::mt19937_64 rng(11);
  auto lat = FrequencyLattice::make(2, 4);
  auto f = random_real_field(lat, Rank::vector, rng);
  auto g = SpectralField::from_grid(lat, Rank::vector, f.to_grid(), true);
  CHECK(max_abs_diff(f.data(), g.data()) < 1e-13);
  std::vector<Complex> wrong(lat->num_grid_points() + 1);
  CHECK_THROWS_AS(SpectralField::from_grid(lat, Rank::scalar, wrong), FourierError);
}

TEST_CASE("multipliers: gradient, inverse Laplacian pair, shifted gradient") {
  auto lat = FrequencyLattice::make(2, 4);
  auto cosine = sample_scalar(lat, [](const Wavevector& x) { return std::cos(kTwoPi * x[0]); });
  auto grad = gradient(cosine);
  CHECK(grad.is_real());
  auto gg = grad.to_grid();
  const std::size_t np = lat->num_grid_points();
  for (std::size_t p = 0; p < np; ++p) {
    const auto x = lat->grid_point(p);
    CHECK(std::abs(gg[p] - (-kTwoPi * std::sin(kTwoPi * x[0]))) < 1e-12);
    CHECK(std::abs(gg[np + p]) < 1e-12);
  }

  std::mt19937_64 rng(3);
  auto f = random_real_field(lat, Rank::scalar, rng);
  f.coeff(0, lat->zero_index()) = 0.0;
  auto back = apply_multiplier(inverse_negative_laplacian(f), [](const Wavevector& k) {
    return std::optional<Complex>(k[0] * k[0] + k[1] * k[1]);
  });
  CHECK(max_abs_diff(back.data(), f.data()) < 1e-12);

  const Wavevector xi{0.3, -0.2, 0.0};
  auto shifted = gradient(SpectralField::constant(lat, 1.0), xi);
  CHECK_FALSE(shifted.is_real());
  CHECK(std::abs(shifted.mean(0) - Complex(0.0, 0.3)) < 1e-15);
  CHECK(std::abs(shifted.mean(1) - Complex(0.0, -0.2)) < 1e-15);
}

TEST_CASE("singular multiplier names the offending mode") {
  auto lat = FrequencyLattice::make(2, 2);
  auto one = SpectralField::constant(lat, 1.0);
  try {
    inverse_negative_laplacian(one);
    FAIL("expected an error");
  } catch (const FourierError& e) {
    CHECK(std::string(e.what()).find("(0,0)") != std::string::npos);
  }
}

TEST_CASE("pointwise products") {
  auto lat = FrequencyLattice::make(1, 3);
  auto c1 = sample_scalar(lat, [](const Wavevector& x) { return std::cos(kTwoPi * x[0]); });
  auto sq = pointwise_product(c1, c1);
  for (std::size_t i = 0; i < lat->num_modes(); ++i) {
    const int k = lat->mode(i)[0];
    const double expect = k == 0 ? 0.5 : (std::abs(k) == 2 ? 0.25 : 0.0);
    CHECK(std::abs(sq.coeff(0, i) - expect) < 1e-14);
  }

  // With M = 1 the cos(4 pi x) part is truncated away.
  auto lat1 = FrequencyLattice::make(1, 1);
  auto c11 = sample_scalar(lat1, [](const Wavevector& x) { return std::cos(kTwoPi * x[0]); });
  auto sq1 = pointwise_product(c11, c11);
  CHECK(std::abs(sq1.mean() - 0.5) < 1e-14);
  CHECK(std::abs(sq1.coeff(0, 0)) < 1e-14);

  std::mt19937_64 rng(5);
  auto lat2 = FrequencyLattice::make(2, 3);
  auto v = random_real_field(lat2, Rank::vector, rng);
  auto prod = pointwise_product(SpectralField::constant(lat2, 1.0), v);
  CHECK(max_abs_diff(prod.data(), v.data()) < 1e-13);

  auto m1 = random_real_field(lat2, Rank::matrix, rng);
  CHECK_THROWS_AS(pointwise_product(m1, m1), FourierError);
  CHECK_THROWS_AS(pointwise_product(v, m1), FourierError);
}

TEST_CASE("dealiased product agrees with a double-resolution reference") {
  std::mt19937_64 rng(13);
  for (int d = 1; d <= 2; ++d) {
    const int m = 4;
    auto lat = FrequencyLattice::make(d, m);
    auto fine = FrequencyLattice::make(d, 2 * m);
    // Top-mode heavy fields: all weight on |k_j| = M.
    SpectralField f(lat, Rank::scalar, true), g(lat, Rank::scalar, true);
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t i = 0; i < lat->num_modes(); ++i) {
      f.coeff(0, i) = Complex(n(rng), n(rng));
      g.coeff(0, i) = Complex(n(rng), n(rng));
    }
    f.make_real();
    g.make_real();
    auto coarse = pointwise_product(f, g);
    // Oracle: direct convolution on the fine lattice, then truncation.
    SpectralField ref(lat, Rank::scalar, true);
    for (std::size_t i = 0; i < lat->num_modes(); ++i)
      for (std::size_t j = 0; j < lat->num_modes(); ++j) {
        ModeIndex k = lat->mode(i), l = lat->mode(j), s{};
        for (int a = 0; a < 3; ++a) s[a] = k[a] + l[a];
        if (auto t = lat->find(s)) ref.coeff(0, *t) += f.coeff(0, i) * g.coeff(0, j);
      }
    auto fine_prod = pointwise_product(embed(f, fine), embed(g, fine));
    auto fine_trunc = embed(fine_prod, lat);
    CHECK(max_abs_diff(coarse.data(), ref.data()) < 1e-12);
    CHECK(max_abs_diff(coarse.data(), fine_trunc.data()) < 1e-12);
  }
}

TEST_CASE("sobolev norms") {
  auto lat = FrequencyLattice::make(2, 3);
  auto one = SpectralField::constant(lat, 1.0);
  auto c1 = sample_scalar(lat, [](const Wavevector& x) { return std::cos(kTwoPi * x[0]); });
  CHECK(sobolev_norm(one, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sobolev_norm(c1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
  CHECK(sobolev_norm(c1, 1) ==
        doctest::Approx(std::sqrt((1.0 + 4.0 * kPi * kPi) / 2.0)).epsilon(1e-14));
}

TEST_CASE("property: Parseval, reality closure, multiplier composition") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + trial % 3;
    auto lat = FrequencyLattice::make(d, 2 + trial % 3);
    auto f = random_real_field(lat, Rank::scalar, rng);
    auto g = random_real_field(lat, Rank::vector, rng);

    auto samples = f.to_grid();
    double grid_l2 = 0.0;
    for (const auto& s : samples) grid_l2 += std::norm(s);
    grid_l2 = std::sqrt(grid_l2 / static_cast<double>(samples.size()));
    CHECK(std::abs(grid_l2 - l2_norm(f)) <= 1e-12 * l2_norm(f));

    auto prod = pointwise_product(f, g);
    CHECK(prod.is_real());
    CHECK(prod.reality_defect() < 1e-12);
    const double a = u(rng), b = u(rng);
    Multiplier m1 = [a](const Wavevector& k) { return std::optional<Complex>(1.0 + a * k[0] * k[0]); };
    Multiplier m2 = [b](const Wavevector& k) { return std::optional<Complex>(Complex(0.0, b * k[0])); };
    Multiplier m12 = [&](const Wavevector& k) { return std::optional<Complex>(*m1(k) * *m2(k)); };
    auto lhs = apply_multiplier(apply_multiplier(f, m2), m1);
    auto rhs = apply_multiplier(f, m12);
    CHECK(lhs.is_real());
    CHECK(max_abs_diff(lhs.data(), rhs.data()) <= 1e-13 * l2_norm(rhs));
  }
}

TEST_CASE("embedding realises x -> f(m x + z)") {
  auto lat = FrequencyLattice::make(1, 2);
  auto big = FrequencyLattice::make(1, 8);
  auto c1 = sample_scalar(lat, [](const Wavevector& x) { return std::cos(kTwoPi * x[0]); });
  auto e = embed(c1, big, 3, {0.1, 0, 0});
  auto g = e.to_grid();
  for (std::size_t p = 0; p < big->num_grid_points(); ++p) {
    const double x = big->grid_point(p)[0];
    CHECK(std::abs(g[p] - std::cos(kTwoPi * (3 * x + 0.1))) < 1e-13);
  }
}
