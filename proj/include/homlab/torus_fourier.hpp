#pragma once

// Spectral algebra on the periodic unit cell.
//
// Coefficient convention: f(x) = sum_k c_k exp(i 2 pi k . x), so c_0 is the
// mean of f over the cell. Modes are restricted to |k_j| <= M and enumerated
// lexicographically with k_1 the slowest index. Products are evaluated on an
// N-point grid per axis with N >= 3M + 1, which makes the truncation of a
// product of two band-limited fields exact.

#include <array>
#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace homlab {

using Complex = std::complex<double>;
using Wavevector = std::array<double, 3>;
using ModeIndex = std::array<int, 3>;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kPi = 3.14159265358979323846264338327950;

class FourierError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string format_mode(const ModeIndex& k, int dim);

// Complex FFT over an n^dim grid (row-major, first axis slowest). Plans are
// created once; execution is safe from several threads on distinct arrays.
class GridFft {
 public:
  GridFft(int dim, int n);
  ~GridFft();
  GridFft(const GridFft&) = delete;
  GridFft& operator=(const GridFft&) = delete;

  int dim() const { return dim_; }
  int size() const { return n_; }
  std::size_t num_points() const { return points_; }

  // Unnormalised exp(-i...) transform.
  void forward(std::span<Complex> data) const;
  // Unnormalised exp(+i...) transform.
  void inverse(std::span<Complex> data) const;

 private:
  int dim_;
  int n_;
  std::size_t points_;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

// Smallest 2,3,5-smooth integer >= n.
int fft_friendly_size(int n);

class FrequencyLattice;
using LatticePtr = std::shared_ptr<const FrequencyLattice>;

class FrequencyLattice {
 public:
  // grid_size == 0 selects the smallest FFT-friendly size >= 3M + 1.
  FrequencyLattice(int dim, int max_mode, int grid_size = 0);

  static LatticePtr make(int dim, int max_mode, int grid_size = 0) {
    return std::make_shared<const FrequencyLattice>(dim, max_mode, grid_size);
  }

  int dim() const { return dim_; }
  int max_mode() const { return max_mode_; }
  int grid_size() const { return fft_->size(); }
  int side() const { return 2 * max_mode_ + 1; }
  std::size_t num_modes() const { return num_modes_; }
  std::size_t num_grid_points() const { return fft_->num_points(); }
  std::size_t zero_index() const { return zero_index_; }

  ModeIndex mode(std::size_t index) const;
  std::optional<std::size_t> find(const ModeIndex& k) const;
  Wavevector wavevector(std::size_t index) const;
  // Position of a lattice mode inside the full grid spectrum.
  std::size_t grid_slot(std::size_t index) const { return slots_[index]; }
  // Physical coordinates of grid point p, in [0, 1)^d.
  Wavevector grid_point(std::size_t p) const;

  const GridFft& fft() const { return *fft_; }

  bool same_as(const FrequencyLattice& other) const {
    return dim_ == other.dim_ && max_mode_ == other.max_mode_ &&
           grid_size() == other.grid_size();
  }

 private:
  int dim_;
  int max_mode_;
  std::size_t num_modes_;
  std::size_t zero_index_;
  std::vector<std::size_t> slots_;
  std::shared_ptr<GridFft> fft_;
};

// Full-grid transforms: the roundtrip is exact for arbitrary samples.
std::vector<Complex> grid_forward(const FrequencyLattice& lattice,
                                  std::span<const Complex> samples);
std::vector<Complex> grid_inverse(const FrequencyLattice& lattice,
                                  std::span<const Complex> spectrum);

enum class Rank { scalar, vector, matrix };

int component_count(Rank rank, int dim);

class SpectralField {
 public:
  SpectralField() = default;
  SpectralField(LatticePtr lattice, Rank rank, bool real = true);

  // Projects grid samples (component-major, N^d values per component) onto
  // the lattice modes.
  static SpectralField from_grid(LatticePtr lattice, Rank rank,
                                 std::span<const Complex> samples,
                                 bool real = true);
  static SpectralField constant(LatticePtr lattice, Complex value);

  std::vector<Complex> to_grid() const;
  std::vector<Complex> component_to_grid(int c) const;

  const FrequencyLattice& lattice() const { return *lattice_; }
  const LatticePtr& lattice_ptr() const { return lattice_; }
  Rank rank() const { return rank_; }
  int dim() const { return lattice_->dim(); }
  int num_components() const { return components_; }
  bool empty() const { return !lattice_; }

  bool is_real() const { return real_; }
  void set_real(bool real) { real_ = real; }

  std::span<Complex> component(int c);
  std::span<const Complex> component(int c) const;
  std::span<Complex> data() { return coefficients_; }
  std::span<const Complex> data() const { return coefficients_; }

  Complex& coeff(int c, std::size_t mode) {
    return coefficients_[static_cast<std::size_t>(c) * lattice_->num_modes() + mode];
  }
  Complex coeff(int c, std::size_t mode) const {
    return coefficients_[static_cast<std::size_t>(c) * lattice_->num_modes() + mode];
  }
  Complex mean(int c = 0) const { return coeff(c, lattice_->zero_index()); }

  // max over modes of |c_{-k} - conj(c_k)| relative to max |c_k|.
  double reality_defect() const;
  // Throws if the field is flagged real but violates c_{-k} = conj(c_k).
  void check_real(double tolerance = 1e-12) const;
  // Projects onto the Hermitian-symmetric subspace and flags the field real.
  void make_real();

  SpectralField& operator+=(const SpectralField& other);
  SpectralField& operator-=(const SpectralField& other);
  SpectralField& operator*=(Complex scale);

  // Scalar component c of this field (vector/matrix) as its own field.
  SpectralField extract(int c) const;
  // Column j of a matrix field as a vector field.
  SpectralField column(int j) const;

 private:
  void check_compatible(const SpectralField& other) const;

  LatticePtr lattice_;
  Rank rank_ = Rank::scalar;
  int components_ = 0;
  bool real_ = true;
  std::vector<Complex> coefficients_;
};

SpectralField operator+(SpectralField a, const SpectralField& b);
SpectralField operator-(SpectralField a, const SpectralField& b);
SpectralField operator*(Complex s, SpectralField a);

// Builds a vector field from d scalar fields, or a matrix field from d*d
// scalar fields in row-major order.
SpectralField assemble(Rank rank, std::span<const SpectralField> parts);

// A symbol evaluated at wavevector 2 pi k; std::nullopt marks a singular mode.
using Multiplier = std::function<std::optional<Complex>(const Wavevector&)>;

// c_k -> m(k) c_k componentwise. A singular mode must carry a vanishing
// coefficient; the result is set to zero there.
SpectralField apply_multiplier(const SpectralField& f, const Multiplier& m);

// (grad + i shift) of a scalar field.
SpectralField gradient(const SpectralField& f, const Wavevector& shift = {});
// (div + i shift .) of a vector field, or row-wise divergence
// (div Y)_i = d_j Y_ij of a matrix field.
SpectralField divergence(const SpectralField& f, const Wavevector& shift = {});
// (curl X)_ij = d_i X_j - d_j X_i.
SpectralField curl(const SpectralField& f);
SpectralField laplacian(const SpectralField& f);
// (-Delta)^{-1} on mean-zero fields.
SpectralField inverse_negative_laplacian(const SpectralField& f);

// Pointwise product with exact quadratic dealiasing. Supported rank pairs:
// scalar * any, any * scalar, matrix * vector (matrix-vector product).
SpectralField pointwise_product(const SpectralField& f, const SpectralField& g);

// (sum_k (1 + |2 pi k|^2)^s |c_k|^2)^{1/2}, summed over components.
double sobolev_norm(const SpectralField& f, double s);
inline double l2_norm(const SpectralField& f) { return sobolev_norm(f, 0.0); }

// Copies f onto another lattice: mode k moves to factor * k and picks up the
// phase exp(i 2 pi k . shift), which realises x -> f(factor x + shift).
// Modes that do not fit are dropped.
SpectralField embed(const SpectralField& f, const LatticePtr& target,
                    int factor = 1, const Wavevector& shift = {});

}  // namespace homlab
