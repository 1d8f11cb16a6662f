#pragma once

// Position moments of |u|^2: variance, the V' momentum-flux integral and the
// boundary-band mass that decides whether either is meaningful on the torus.

#include <cmath>

#include "nls2/functionals.hpp"
#include "nls2/grid.hpp"

namespace nls2 {

inline constexpr double kBoundaryMassTol = 1e-10;

/// Mass in the band max(|x|, |y|) >= L/2 - L/16 next to the periodic seam.
inline double boundary_band_mass(const Field& f) {
  const SpectralGrid& g = f.grid();
  const double inner = 0.5 * g.length() - g.length() / 16.0;
  double acc = 0.0;
  for (int iy = 0; iy < g.n(); ++iy)
    for (int ix = 0; ix < g.n(); ++ix)
      if (std::max(std::abs(g.x(ix)), std::abs(g.x(iy))) >= inner) acc += std::norm(f(ix, iy));
  return acc * g.cell_area();
}

inline bool has_finite_variance(const Field& f) { return boundary_band_mass(f) <= kBoundaryMassTol; }

/// int |x|^2 |u|^2 with x the signed box coordinate.
inline double variance(const Field& f) {
  require_finite(f, "variance");
  const double band = boundary_band_mass(f);
  require(band <= kBoundaryMassTol,
          "variance: mass " + std::to_string(band) + " near the boundary makes the variance meaningless");
  const SpectralGrid& g = f.grid();
  double acc = 0.0;
  for (int iy = 0; iy < g.n(); ++iy)
    for (int ix = 0; ix < g.n(); ++ix) acc += (g.x(ix) * g.x(ix) + g.x(iy) * g.x(iy)) * std::norm(f(ix, iy));
  return acc * g.cell_area();
}

/// First moment int x |u|^2.
inline Vec2 first_moment(const Field& f) {
  const SpectralGrid& g = f.grid();
  Vec2 m{0.0, 0.0};
  for (int iy = 0; iy < g.n(); ++iy)
    for (int ix = 0; ix < g.n(); ++ix) {
      const double w = std::norm(f(ix, iy));
      m[0] += g.x(ix) * w;
      m[1] += g.x(iy) * w;
    }
  return {m[0] * g.cell_area(), m[1] * g.cell_area()};
}

/// V'(t) = 4 Im int conj(u) x . grad u.
inline double variance_rate(const Field& f) {
  require_finite(f, "variance_rate");
  const auto grad = gradient(f);
  const SpectralGrid& g = f.grid();
  double acc = 0.0;
  for (int iy = 0; iy < g.n(); ++iy)
    for (int ix = 0; ix < g.n(); ++ix) {
      const std::size_t i = g.index(ix, iy);
      const cplx flux = g.x(ix) * grad[0].values()[i] + g.x(iy) * grad[1].values()[i];
      acc += (std::conj(f.values()[i]) * flux).imag();
    }
  return 4.0 * acc * g.cell_area();
}

/// V''(t) = 8 ||grad u||^2 - (16/3) ||u||_6^6.
inline double virial_second_derivative(double grad_sq, double l6_6) { return 8.0 * grad_sq - 16.0 / 3.0 * l6_6; }

}  // namespace nls2
