#pragma once

// Periodic spectral grid on the square [-L/2, L/2)^2, complex fields sampled
// on it, FFT wrappers and the discrete integral norms used everywhere else.
//
// Storage is row-major with y as the slow index: value(ix, iy) lives at
// iy * n + ix. Wavenumbers follow the signed FFT ordering with the Nyquist
// mode assigned to the negative frequency.

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "nls2/error.hpp"

namespace nls2 {

using cplx = std::complex<double>;

/// Allocator returning FFTW-aligned storage so buffers can be handed to the
/// new-array execute interface.
template <typename T>
struct FftwAllocator {
  using value_type = T;

  FftwAllocator() = default;
  template <typename U>
  FftwAllocator(const FftwAllocator<U>&) noexcept {}

  T* allocate(std::size_t count) {
    void* p = fftw_malloc(count * sizeof(T));
    if (p == nullptr) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { fftw_free(p); }

  template <typename U>
  bool operator==(const FftwAllocator<U>&) const noexcept { return true; }
};

using cvec = std::vector<cplx, FftwAllocator<cplx>>;

class SpectralGrid {
 public:
  SpectralGrid(int n, double box_length) {
    require(n >= 16 && std::has_single_bit(static_cast<unsigned>(n)),
            "grid: n must be a power of two >= 16, got " + std::to_string(n));
    require(std::isfinite(box_length) && box_length > 0.0, "grid: box length must be positive");
    auto d = std::make_shared<Data>();
    d->n = n;
    d->length = box_length;
    d->dx = box_length / n;
    d->x.resize(n);
    d->k.resize(n);
    d->kd.resize(n);
    const double dk = 2.0 * std::numbers::pi / box_length;
    for (int j = 0; j < n; ++j) {
      d->x[j] = -0.5 * box_length + j * d->dx;
      const int signed_index = j < n / 2 ? j : j - n;
      d->k[j] = dk * signed_index;
      d->kd[j] = (j == n / 2) ? 0.0 : d->k[j];
    }
    data_ = std::move(d);
  }

  int n() const { return data_->n; }
  std::size_t size() const { return static_cast<std::size_t>(data_->n) * data_->n; }
  double length() const { return data_->length; }
  double dx() const { return data_->dx; }
  double cell_area() const { return data_->dx * data_->dx; }
  double nyquist() const { return std::numbers::pi / data_->dx; }

  /// Physical coordinate of grid index j (same on both axes).
  double x(int j) const { return data_->x[j]; }
  /// Wavenumber of FFT index j, Nyquist carried as -pi/dx.
  double k(int j) const { return data_->k[j]; }
  /// Derivative multiplier: k with the Nyquist entry zeroed.
  double kd(int j) const { return data_->kd[j]; }

  std::span<const double> xs() const { return data_->x; }
  std::span<const double> ks() const { return data_->k; }
  std::span<const double> kds() const { return data_->kd; }

  std::size_t index(int ix, int iy) const { return static_cast<std::size_t>(iy) * data_->n + ix; }

  friend bool operator==(const SpectralGrid& a, const SpectralGrid& b) {
    return a.data_ == b.data_ || (a.n() == b.n() && a.length() == b.length());
  }

 private:
  struct Data {
    int n = 0;
    double length = 0.0;
    double dx = 0.0;
    std::vector<double> x, k, kd;
  };
  std::shared_ptr<const Data> data_;
};

class Field {
 public:
  explicit Field(SpectralGrid grid, double t = 0.0) : grid_(std::move(grid)), values_(grid_.size()), t_(t) {}

  Field(SpectralGrid grid, cvec values, double t = 0.0)
      : grid_(std::move(grid)), values_(std::move(values)), t_(t) {
    require(values_.size() == grid_.size(), "field: value count does not match grid");
  }

  /// Samples fn(x, y) at every grid point.
  template <typename Fn>
  static Field sample(const SpectralGrid& grid, Fn&& fn, double t = 0.0) {
    Field f(grid, t);
    const int n = grid.n();
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) f.values_[grid.index(ix, iy)] = cplx(fn(grid.x(ix), grid.x(iy)));
    return f;
  }

  const SpectralGrid& grid() const { return grid_; }
  double t() const { return t_; }
  std::span<const cplx> values() const { return values_; }
  std::span<cplx> values() { return values_; }
  const cvec& storage() const { return values_; }
  cplx operator()(int ix, int iy) const { return values_[grid_.index(ix, iy)]; }

  Field with_time(double t) const {
    Field f = *this;
    f.t_ = t;
    return f;
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](const cplx& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
  }

 private:
  SpectralGrid grid_;
  cvec values_;
  double t_ = 0.0;
};

inline void require_finite(const Field& f, const char* where) {
  if (!f.all_finite()) fail(ErrorKind::run, std::string(where) + ": field has non-finite samples");
}

inline void require_same_grid(const SpectralGrid& a, const SpectralGrid& b, const char* where) {
  require(a == b, std::string(where) + ": grid mismatch");
}

/// Unnormalized DFT coefficients of a field.
struct Spectrum {
  SpectralGrid grid;
  cvec coeffs;
};

namespace detail {

class FftPlans {
 public:
  explicit FftPlans(int n) {
    cvec scratch(static_cast<std::size_t>(n) * n);
    auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
    forward_ = fftw_plan_dft_2d(n, n, p, p, FFTW_FORWARD, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_2d(n, n, p, p, FFTW_BACKWARD, FFTW_ESTIMATE);
    if (forward_ == nullptr || backward_ == nullptr) fail(ErrorKind::run, "fft: planner failed");
  }
  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;
  ~FftPlans() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  void forward(cvec& data) const { fftw_execute_dft(forward_, as_fftw(data), as_fftw(data)); }
  void backward(cvec& data) const { fftw_execute_dft(backward_, as_fftw(data), as_fftw(data)); }

 private:
  static fftw_complex* as_fftw(cvec& v) { return reinterpret_cast<fftw_complex*>(v.data()); }
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

// The FFTW planner is not thread-safe; executing a finished plan is.
inline const FftPlans& plans_for(int n) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<FftPlans>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FftPlans>(n);
  return *slot;
}

}  // namespace detail

/// In-place unnormalized forward transform of a buffer laid out on `grid`.
inline void fft_forward_inplace(const SpectralGrid& grid, cvec& data) {
  require(data.size() == grid.size(), "dft: shape mismatch");
  detail::plans_for(grid.n()).forward(data);
}

/// In-place backward transform without the 1/n^2 factor.
inline void fft_backward_inplace(const SpectralGrid& grid, cvec& data) {
  require(data.size() == grid.size(), "dft: shape mismatch");
  detail::plans_for(grid.n()).backward(data);
}

inline Spectrum dft_forward(const Field& f) {
  Spectrum s{f.grid(), f.storage()};
  fft_forward_inplace(s.grid, s.coeffs);
  return s;
}

inline Field dft_inverse(const Spectrum& s, double t = 0.0) {
  require(s.coeffs.size() == s.grid.size(), "dft: shape mismatch");
  cvec data = s.coeffs;
  fft_backward_inplace(s.grid, data);
  const double scale = 1.0 / static_cast<double>(s.grid.size());
  for (auto& z : data) z *= scale;
  return Field(s.grid, std::move(data), t);
}

/// Visits every Fourier mode as fn(kx, ky, flat_index) using derivative
/// wavenumbers (Nyquist zeroed).
template <typename Fn>
void for_each_mode(const SpectralGrid& grid, Fn&& fn) {
  const int n = grid.n();
  for (int iy = 0; iy < n; ++iy) {
    const double ky = grid.kd(iy);
    for (int ix = 0; ix < n; ++ix) fn(grid.kd(ix), ky, grid.index(ix, iy));
  }
}

/// dx^2 / n^2 * sum weight(k) |c_k|^2 over the spectrum.
template <typename Weight>
double spectral_quadratic(const Spectrum& s, Weight&& weight) {
  double acc = 0.0;
  for_each_mode(s.grid, [&](double kx, double ky, std::size_t i) { acc += weight(kx, ky) * std::norm(s.coeffs[i]); });
  return acc * s.grid.cell_area() / static_cast<double>(s.grid.size());
}

inline double l2_norm_sq(const Field& f) {
  require_finite(f, "l2_norm_sq");
  double acc = 0.0;
  for (const auto& z : f.values()) acc += std::norm(z);
  return acc * f.grid().cell_area();
}

inline double gradient_norm_sq(const Spectrum& s) {
  return spectral_quadratic(s, [](double kx, double ky) { return kx * kx + ky * ky; });
}

inline double gradient_norm_sq(const Field& f) {
  require_finite(f, "gradient_norm_sq");
  return gradient_norm_sq(dft_forward(f));
}

inline double hhalf_norm_sq(const Spectrum& s) {
  return spectral_quadratic(s, [](double kx, double ky) { return std::sqrt(kx * kx + ky * ky); });
}

inline double hhalf_norm_sq(const Field& f) {
  require_finite(f, "hhalf_norm_sq");
  return hhalf_norm_sq(dft_forward(f));
}

/// dx^2 * sum |f|^p for p in {2, 4, 6, 8}.
inline double lp_norm_p(const Field& f, int p) {
  require(p == 2 || p == 4 || p == 6 || p == 8, "lp_norm_p: unsupported exponent " + std::to_string(p));
  require_finite(f, "lp_norm_p");
  const int half = p / 2;
  double acc = 0.0;
  for (const auto& z : f.values()) {
    const double m = std::norm(z);
    double v = m;
    for (int i = 1; i < half; ++i) v *= m;
    acc += v;
  }
  return acc * f.grid().cell_area();
}

/// Spectral partial derivatives (d/dx, d/dy).
inline std::array<Field, 2> gradient(const Field& f) {
  const Spectrum s = dft_forward(f);
  Spectrum sx{s.grid, s.coeffs}, sy{s.grid, s.coeffs};
  for_each_mode(s.grid, [&](double kx, double ky, std::size_t i) {
    sx.coeffs[i] *= cplx(0.0, kx);
    sy.coeffs[i] *= cplx(0.0, ky);
  });
  return {dft_inverse(sx, f.t()), dft_inverse(sy, f.t())};
}

/// Largest |u| on the outermost grid row and column (the periodic seam).
inline double boundary_max_abs(const Field& f) {
  const int n = f.grid().n();
  double m = 0.0;
  for (int j = 0; j < n; ++j) m = std::max({m, std::abs(f(j, 0)), std::abs(f(0, j))});
  return m;
}

inline double max_abs(const Field& f) {
  double m = 0.0;
  for (const auto& z : f.values()) m = std::max(m, std::norm(z));
  return std::sqrt(m);
}

/// Pointwise values resampled on a grid with `factor` times more points per
/// axis by zero-padding the spectrum (band-limited interpolation).
inline Field zero_padded(const Field& f, int factor) {
  require(factor >= 1 && std::has_single_bit(static_cast<unsigned>(factor)), "zero_padded: factor must be a power of two");
  if (factor == 1) return f;
  const SpectralGrid& g = f.grid();
  const int n = g.n();
  const int m = n * factor;
  SpectralGrid fine(m, g.length());
  const Spectrum s = dft_forward(f);
  Spectrum big{fine, cvec(fine.size())};
  auto map_index = [&](int j) { return j < n / 2 ? j : j + (m - n); };
  for (int iy = 0; iy < n; ++iy) {
    if (iy == n / 2) continue;  // drop Nyquist to keep the interpolant real for real data
    for (int ix = 0; ix < n; ++ix) {
      if (ix == n / 2) continue;
      big.coeffs[fine.index(map_index(ix), map_index(iy))] = s.coeffs[g.index(ix, iy)];
    }
  }
  Field out = dft_inverse(big, f.t());
  const double scale = static_cast<double>(fine.size()) / static_cast<double>(g.size());
  for (auto& z : out.values()) z *= scale;
  return out;
}

// ---------------------------------------------------------------------------
// Field checkpoint: "NLS2", u32 version, u32 n, f64 L, f64 t, then n^2 pairs
// of little-endian f64 (re, im), row-major.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  if (!is) fail(ErrorKind::validation, "checkpoint: truncated file");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_checkpoint(const std::string& path, const Field& f) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::validation, "checkpoint: cannot open " + path + " for writing");
  os.write("NLS2", 4);
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(f.grid().n()));
  detail::put<double>(os, f.grid().length());
  detail::put<double>(os, f.t());
  for (const auto& z : f.values()) {
    detail::put<double>(os, z.real());
    detail::put<double>(os, z.imag());
  }
  if (!os) fail(ErrorKind::run, "checkpoint: write failed for " + path);
}

inline Field read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::validation, "checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "NLS2", 4) != 0) fail(ErrorKind::validation, "checkpoint: bad magic in " + path);
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) fail(ErrorKind::validation, "checkpoint: unsupported version " + std::to_string(version));
  const auto n = detail::get<std::uint32_t>(is);
  const auto length = detail::get<double>(is);
  const auto t = detail::get<double>(is);
  SpectralGrid grid(static_cast<int>(n), length);
  Field f(grid, t);
  for (auto& z : f.values()) {
    const double re = detail::get<double>(is);
    const double im = detail::get<double>(is);
    z = cplx(re, im);
  }
  return f;
}

}  // namespace nls2
