#include "homlab/torus_fourier.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

namespace homlab {

namespace {

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t ipow(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace

std::string format_mode(const ModeIndex& k, int dim) {
  std::ostringstream os;
  os << '(';
  for (int j = 0; j < dim; ++j) os << (j ? "," : "") << k[j];
  os << ')';
  return os.str();
}

GridFft::GridFft(int dim, int n) : dim_(dim), n_(n), points_(ipow(n, dim)) {
  if (dim < 1 || dim > 3) throw FourierError("grid dimension must be 1, 2 or 3");
  if (n < 1) throw FourierError("grid size must be positive");
  std::vector<int> dims(dim, n);
  std::vector<Complex> scratch(points_);
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  std::lock_guard lock(planner_mutex());
  forward_plan_ = fftw_plan_dft(dim, dims.data(), buf, buf, FFTW_FORWARD,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
  inverse_plan_ = fftw_plan_dft(dim, dims.data(), buf, buf, FFTW_BACKWARD,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!forward_plan_ || !inverse_plan_) throw FourierError("FFTW planning failed");
}

GridFft::~GridFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

void GridFft::forward(std::span<Complex> data) const {
  if (data.size() != points_) throw FourierError("FFT buffer size mismatch");
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(static_cast<fftw_plan>(forward_plan_), buf, buf);
}

void GridFft::inverse(std::span<Complex> data) const {
  if (data.size() != points_) throw FourierError("FFT buffer size mismatch");
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(static_cast<fftw_plan>(inverse_plan_), buf, buf);
}

int fft_friendly_size(int n) {
  for (int m = std::max(n, 1);; ++m) {
    int r = m;
    for (int p : {2, 3, 5})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

FrequencyLattice::FrequencyLattice(int dim, int max_mode, int grid_size)
    : dim_(dim), max_mode_(max_mode) {
  if (dim < 1 || dim > 3) throw FourierError("lattice dimension must be 1, 2 or 3");
  if (max_mode < 1) throw FourierError("mode bound M must be >= 1");
  const int min_grid = 3 * max_mode + 1;
  if (grid_size == 0) grid_size = fft_friendly_size(min_grid);
  if (grid_size < min_grid) {
    std::ostringstream os;
    os << "grid size " << grid_size << " violates N >= 3M+1 = " << min_grid;
    throw FourierError(os.str());
  }
  num_modes_ = ipow(static_cast<std::size_t>(side()), dim);
  fft_ = std::make_shared<GridFft>(dim, grid_size);

  slots_.resize(num_modes_);
  for (std::size_t i = 0; i < num_modes_; ++i) {
    const ModeIndex k = mode(i);
    std::size_t slot = 0;
    for (int j = 0; j < dim; ++j) {
      const int wrapped = k[j] < 0 ? k[j] + grid_size : k[j];
      slot = slot * static_cast<std::size_t>(grid_size) + static_cast<std::size_t>(wrapped);
    }
    slots_[i] = slot;
  }
  zero_index_ = *find(ModeIndex{0, 0, 0});
}

ModeIndex FrequencyLattice::mode(std::size_t index) const {
  ModeIndex k{0, 0, 0};
  const auto s = static_cast<std::size_t>(side());
  for (int j = dim_ - 1; j >= 0; --j) {
    k[j] = static_cast<int>(index % s) - max_mode_;
    index /= s;
  }
  return k;
}

std::optional<std::size_t> FrequencyLattice::find(const ModeIndex& k) const {
  std::size_t index = 0;
  for (int j = 0; j < dim_; ++j) {
    if (std::abs(k[j]) > max_mode_) return std::nullopt;
    index = index * static_cast<std::size_t>(side()) +
            static_cast<std::size_t>(k[j] + max_mode_);
  }
  for (int j = dim_; j < 3; ++j)
    if (k[j] != 0) return std::nullopt;
  return index;
}

Wavevector FrequencyLattice::wavevector(std::size_t index) const {
  const ModeIndex k = mode(index);
  return {kTwoPi * k[0], kTwoPi * k[1], kTwoPi * k[2]};
}

Wavevector FrequencyLattice::grid_point(std::size_t p) const {
  Wavevector x{0, 0, 0};
  const auto n = static_cast<std::size_t>(grid_size());
  for (int j = dim_ - 1; j >= 0; --j) {
    x[j] = static_cast<double>(p % n) / static_cast<double>(n);
    p /= n;
  }
  return x;
}

std::vector<Complex> grid_forward(const FrequencyLattice& lattice,
                                  std::span<const Complex> samples) {
  if (samples.size() != lattice.num_grid_points())
    throw FourierError("sample count does not match the lattice grid");
  std::vector<Complex> out(samples.begin(), samples.end());
  lattice.fft().forward(out);
  const double scale = 1.0 / static_cast<double>(out.size());
  for (auto& c : out) c *= scale;
  return out;
}

std::vector<Complex> grid_inverse(const FrequencyLattice& lattice,
                                  std::span<const Complex> spectrum) {
  if (spectrum.size() != lattice.num_grid_points())
    throw FourierError("spectrum size does not match the lattice grid");
  std::vector<Complex> out(spectrum.begin(), spectrum.end());
  lattice.fft().inverse(out);
  return out;
}

int component_count(Rank rank, int dim) {
  switch (rank) {
    case Rank::scalar: return 1;
    case Rank::vector: return dim;
    case Rank::matrix: return dim * dim;
  }
  return 0;
}

SpectralField::SpectralField(LatticePtr lattice, Rank rank, bool real)
    : lattice_(std::move(lattice)), rank_(rank), real_(real) {
  if (!lattice_) throw FourierError("spectral field requires a lattice");
  components_ = component_count(rank_, lattice_->dim());
  coefficients_.assign(static_cast<std::size_t>(components_) * lattice_->num_modes(),
                       Complex{});
}

SpectralField SpectralField::from_grid(LatticePtr lattice, Rank rank,
                                       std::span<const Complex> samples, bool real) {
  SpectralField f(std::move(lattice), rank, real);
  const auto& lat = f.lattice();
  const std::size_t np = lat.num_grid_points();
  if (samples.size() != np * static_cast<std::size_t>(f.components_)) {
    std::ostringstream os;
    os << "grid size mismatch: expected " << np * f.components_ << " samples, got "
       << samples.size();
    throw FourierError(os.str());
  }
  std::vector<Complex> buf(np);
  const double scale = 1.0 / static_cast<double>(np);
  for (int c = 0; c < f.components_; ++c) {
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(c * np), np, buf.begin());
    lat.fft().forward(buf);
    auto out = f.component(c);
    for (std::size_t i = 0; i < lat.num_modes(); ++i) out[i] = buf[lat.grid_slot(i)] * scale;
  }
  return f;
}

SpectralField SpectralField::constant(LatticePtr lattice, Complex value) {
  SpectralField f(std::move(lattice), Rank::scalar, value.imag() == 0.0);
  f.coeff(0, f.lattice().zero_index()) = value;
  return f;
}

std::vector<Complex> SpectralField::component_to_grid(int c) const {
  const auto& lat = lattice();
  std::vector<Complex> buf(lat.num_grid_points(), Complex{});
  auto in = component(c);
  for (std::size_t i = 0; i < lat.num_modes(); ++i) buf[lat.grid_slot(i)] = in[i];
  lat.fft().inverse(buf);
  return buf;
}

std::vector<Complex> SpectralField::to_grid() const {
  const std::size_t np = lattice().num_grid_points();
  std::vector<Complex> out(np * static_cast<std::size_t>(components_));
  for (int c = 0; c < components_; ++c) {
    auto g = component_to_grid(c);
    std::copy(g.begin(), g.end(), out.begin() + static_cast<std::ptrdiff_t>(c * np));
  }
  return out;
}

std::span<Complex> SpectralField::component(int c) {
  const std::size_t n = lattice_->num_modes();
  return std::span<Complex>(coefficients_).subspan(static_cast<std::size_t>(c) * n, n);
}

std::span<const Complex> SpectralField::component(int c) const {
  const std::size_t n = lattice_->num_modes();
  return std::span<const Complex>(coefficients_).subspan(static_cast<std::size_t>(c) * n, n);
}

double SpectralField::reality_defect() const {
  const auto& lat = lattice();
  double scale = 0.0;
  for (const auto& c : coefficients_) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return 0.0;
  double defect = 0.0;
  for (int c = 0; c < components_; ++c) {
    auto comp = component(c);
    for (std::size_t i = 0; i < lat.num_modes(); ++i) {
      // The lattice is symmetric, so index reversal maps k to -k.
      const std::size_t mirror = lat.num_modes() - 1 - i;
      defect = std::max(defect, std::abs(comp[mirror] - std::conj(comp[i])));
    }
  }
  return defect / scale;
}

void SpectralField::check_real(double tolerance) const {
  if (!real_) return;
  const double defect = reality_defect();
  if (defect > tolerance) {
    std::ostringstream os;
    os << "field flagged real violates c_{-k} = conj(c_k): defect " << defect;
    throw FourierError(os.str());
  }
}

void SpectralField::make_real() {
  const std::size_t n = lattice().num_modes();
  for (int c = 0; c < components_; ++c) {
    auto comp = component(c);
    for (std::size_t i = 0; i <= (n - 1) / 2; ++i) {
      const std::size_t mirror = n - 1 - i;
      const Complex avg = 0.5 * (comp[i] + std::conj(comp[mirror]));
      comp[i] = avg;
      comp[mirror] = std::conj(avg);
    }
  }
  real_ = true;
}

void SpectralField::check_compatible(const SpectralField& other) const {
  if (!lattice_ || !other.lattice_ || !lattice_->same_as(*other.lattice_))
    throw FourierError("fields live on different lattices");
  if (rank_ != other.rank_) throw FourierError("fields have different ranks");
}

SpectralField& SpectralField::operator+=(const SpectralField& other) {
  check_compatible(other);
  for (std::size_t i = 0; i < coefficients_.size(); ++i) coefficients_[i] += other.coefficients_[i];
  real_ = real_ && other.real_;
  return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& other) {
  check_compatible(other);
  for (std::size_t i = 0; i < coefficients_.size(); ++i) coefficients_[i] -= other.coefficients_[i];
  real_ = real_ && other.real_;
  return *this;
}

SpectralField& SpectralField::operator*=(Complex scale) {
  for (auto& c : coefficients_) c *= scale;
  real_ = real_ && scale.imag() == 0.0;
  return *this;
}

SpectralField SpectralField::extract(int c) const {
  SpectralField out(lattice_, Rank::scalar, real_);
  auto src = component(c);
  std::copy(src.begin(), src.end(), out.component(0).begin());
  return out;
}

SpectralField SpectralField::column(int j) const {
  if (rank_ != Rank::matrix) throw FourierError("column() requires a matrix field");
  const int d = dim();
  SpectralField out(lattice_, Rank::vector, real_);
  for (int i = 0; i < d; ++i) {
    auto src = component(i * d + j);
    std::copy(src.begin(), src.end(), out.component(i).begin());
  }
  return out;
}

SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
SpectralField operator*(Complex s, SpectralField a) { return a *= s; }

SpectralField assemble(Rank rank, std::span<const SpectralField> parts) {
  if (parts.empty()) throw FourierError("assemble needs at least one part");
  const auto& lat = parts.front().lattice_ptr();
  SpectralField out(lat, rank, true);
  if (static_cast<int>(parts.size()) != out.num_components())
    throw FourierError("wrong number of parts for the requested rank");
  bool real = true;
  for (int c = 0; c < out.num_components(); ++c) {
    const auto& p = parts[static_cast<std::size_t>(c)];
    if (p.rank() != Rank::scalar || !p.lattice().same_as(*lat))
      throw FourierError("assemble parts must be scalar fields on one lattice");
    auto src = p.component(0);
    std::copy(src.begin(), src.end(), out.component(c).begin());
    real = real && p.is_real();
  }
  out.set_real(real);
  return out;
}

SpectralField apply_multiplier(const SpectralField& f, const Multiplier& m) {
  const auto& lat = f.lattice();
  const std::size_t n = lat.num_modes();
  std::vector<std::optional<Complex>> symbol(n);
  for (std::size_t i = 0; i < n; ++i) symbol[i] = m(lat.wavevector(i));

  double scale = 0.0;
  for (const auto& c : f.data()) scale = std::max(scale, std::abs(c));

  bool hermitian = true;
  for (std::size_t i = 0; i < n && hermitian; ++i) {
    const auto& a = symbol[i];
    const auto& b = symbol[n - 1 - i];
    if (a.has_value() != b.has_value()) {
      hermitian = false;
    } else if (a && std::abs(*b - std::conj(*a)) > 1e-14 * (1.0 + std::abs(*a))) {
      hermitian = false;
    }
  }

  SpectralField out(f.lattice_ptr(), f.rank(), f.is_real() && hermitian);
  for (int c = 0; c < f.num_components(); ++c) {
    auto src = f.component(c);
    auto dst = out.component(c);
    for (std::size_t i = 0; i < n; ++i) {
      if (symbol[i]) {
        dst[i] = *symbol[i] * src[i];
      } else if (std::abs(src[i]) > 1e-12 * std::max(scale, 1e-300) && src[i] != Complex{}) {
        throw FourierError("singular multiplier applied to nonzero mode " +
                           format_mode(lat.mode(i), lat.dim()));
      }
    }
  }
  return out;
}

SpectralField gradient(const SpectralField& f, const Wavevector& shift) {
  if (f.rank() != Rank::scalar) throw FourierError("gradient requires a scalar field");
  const auto& lat = f.lattice();
  const int d = lat.dim();
  const bool shifted = shift[0] != 0.0 || shift[1] != 0.0 || shift[2] != 0.0;
  SpectralField out(f.lattice_ptr(), Rank::vector, f.is_real() && !shifted);
  auto src = f.component(0);
  for (int j = 0; j < d; ++j) {
    auto dst = out.component(j);
    for (std::size_t i = 0; i < lat.num_modes(); ++i)
      dst[i] = Complex(0.0, lat.wavevector(i)[j] + shift[j]) * src[i];
  }
  return out;
}

SpectralField divergence(const SpectralField& f, const Wavevector& shift) {
  const auto& lat = f.lattice();
  const int d = lat.dim();
  const bool shifted = shift[0] != 0.0 || shift[1] != 0.0 || shift[2] != 0.0;
  const bool real = f.is_real() && !shifted;
  if (f.rank() == Rank::vector) {
    SpectralField out(f.lattice_ptr(), Rank::scalar, real);
    auto dst = out.component(0);
    for (int j = 0; j < d; ++j) {
      auto src = f.component(j);
      for (std::size_t i = 0; i < lat.num_modes(); ++i)
        dst[i] += Complex(0.0, lat.wavevector(i)[j] + shift[j]) * src[i];
    }
    return out;
  }
  if (f.rank() == Rank::matrix) {
    SpectralField out(f.lattice_ptr(), Rank::vector, real);
    for (int r = 0; r < d; ++r) {
      auto dst = out.component(r);
      for (int j = 0; j < d; ++j) {
        auto src = f.component(r * d + j);
        for (std::size_t i = 0; i < lat.num_modes(); ++i)
          dst[i] += Complex(0.0, lat.wavevector(i)[j] + shift[j]) * src[i];
      }
    }
    return out;
  }
  throw FourierError("divergence requires a vector or matrix field");
}

SpectralField curl(const SpectralField& f) {
  if (f.rank() != Rank::vector) throw FourierError("curl requires a vector field");
  const auto& lat = f.lattice();
  const int d = lat.dim();
  SpectralField out(f.lattice_ptr(), Rank::matrix, f.is_real());
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      if (r == c) continue;
      auto dst = out.component(r * d + c);
      auto xc = f.component(c);
      auto xr = f.component(r);
      for (std::size_t i = 0; i < lat.num_modes(); ++i) {
        const Wavevector k = lat.wavevector(i);
        dst[i] = Complex(0.0, k[r]) * xc[i] - Complex(0.0, k[c]) * xr[i];
      }
    }
  }
  return out;
}

SpectralField laplacian(const SpectralField& f) {
  return apply_multiplier(f, [](const Wavevector& k) -> std::optional<Complex> {
    return -(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
  });
}

SpectralField inverse_negative_laplacian(const SpectralField& f) {
  return apply_multiplier(f, [](const Wavevector& k) -> std::optional<Complex> {
    const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    if (k2 == 0.0) return std::nullopt;
    return 1.0 / k2;
  });
}

SpectralField pointwise_product(const SpectralField& f, const SpectralField& g) {
  if (!f.lattice().same_as(g.lattice())) throw FourierError("fields live on different lattices");
  const auto& lat = f.lattice();
  const int d = lat.dim();
  const std::size_t np = lat.num_grid_points();
  const bool real = f.is_real() && g.is_real();

  if (f.rank() == Rank::scalar || g.rank() == Rank::scalar) {
    const SpectralField& s = f.rank() == Rank::scalar ? f : g;
    const SpectralField& t = f.rank() == Rank::scalar ? g : f;
    const auto sg = s.component_to_grid(0);
    std::vector<Complex> samples(np * static_cast<std::size_t>(t.num_components()));
    for (int c = 0; c < t.num_components(); ++c) {
      const auto tg = t.component_to_grid(c);
      for (std::size_t p = 0; p < np; ++p) samples[c * np + p] = sg[p] * tg[p];
    }
    return SpectralField::from_grid(f.lattice_ptr(), t.rank(), samples, real);
  }
  if (f.rank() == Rank::matrix && g.rank() == Rank::vector) {
    std::vector<std::vector<Complex>> vg(d);
    for (int j = 0; j < d; ++j) vg[j] = g.component_to_grid(j);
    std::vector<Complex> samples(np * static_cast<std::size_t>(d), Complex{});
    for (int r = 0; r < d; ++r) {
      for (int j = 0; j < d; ++j) {
        const auto mg = f.component_to_grid(r * d + j);
        for (std::size_t p = 0; p < np; ++p) samples[r * np + p] += mg[p] * vg[j][p];
      }
    }
    return SpectralField::from_grid(f.lattice_ptr(), Rank::vector, samples, real);
  }
  throw FourierError("unsupported rank combination for pointwise product");
}

double sobolev_norm(const SpectralField& f, double s) {
  const auto& lat = f.lattice();
  double sum = 0.0;
  for (std::size_t i = 0; i < lat.num_modes(); ++i) {
    const Wavevector k = lat.wavevector(i);
    const double w = std::pow(1.0 + k[0] * k[0] + k[1] * k[1] + k[2] * k[2], s);
    for (int c = 0; c < f.num_components(); ++c) sum += w * std::norm(f.coeff(c, i));
  }
  return std::sqrt(sum);
}

SpectralField embed(const SpectralField& f, const LatticePtr& target, int factor,
                    const Wavevector& shift) {
  if (target->dim() != f.dim()) throw FourierError("embedding changes dimension");
  if (factor < 1) throw FourierError("embedding factor must be >= 1");
  const auto& src = f.lattice();
  const bool shifted = shift[0] != 0.0 || shift[1] != 0.0 || shift[2] != 0.0;
  SpectralField out(target, f.rank(), f.is_real());
  for (std::size_t i = 0; i < src.num_modes(); ++i) {
    ModeIndex k = src.mode(i);
    Complex phase = 1.0;
    if (shifted) {
      const Wavevector w = src.wavevector(i);
      phase = std::polar(1.0, w[0] * shift[0] + w[1] * shift[1] + w[2] * shift[2]);
    }
    for (auto& kj : k) kj *= factor;
    const auto j = target->find(k);
    if (!j) continue;
    for (int c = 0; c < f.num_components(); ++c) out.coeff(c, *j) = f.coeff(c, i) * phase;
  }
  return out;
}

}  // namespace homlab
