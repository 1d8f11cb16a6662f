#pragma once

// Conserved integrals (mass, energy, momentum), the renormalized threshold
// quantities measured against the ground state, Galilean boosts and the
// admissible (G, ME) window.

#include <array>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "nls2/grid.hpp"

namespace nls2 {

using Vec2 = std::array<double, 2>;

inline double norm2(const Vec2& v) { return std::hypot(v[0], v[1]); }

struct ConservedSet {
  double mass = 0.0;
  double energy = 0.0;
  Vec2 momentum{0.0, 0.0};
};

/// Ground-state integrals the renormalized quantities are measured against.
struct GroundStateNorms {
  double massQ = 0.0;     // ||Q||_2^2
  double gradQ_sq = 0.0;  // ||grad Q||_2^2
  double l6Q_6 = 0.0;     // ||Q||_6^6
  double c_gn = 0.0;      // 3 / (4 massQ^2)
  bool certified = false;

  double energyQ() const { return 0.5 * gradQ_sq - l6Q_6 / 6.0; }
  /// ||Q||_2 ||grad Q||_2
  double scale() const { return std::sqrt(massQ * gradQ_sq); }
};

struct RenormalizedSet {
  double G = 0.0;       // renormalized gradient
  double Pn = 0.0;      // |renormalized momentum|
  Vec2 Pvec{0.0, 0.0};  // componentwise renormalized momentum
  double ME = 0.0;      // renormalized mass-energy
};

/// Im(dx^2 sum conj(u) grad u), evaluated in Fourier space.
inline Vec2 momentum(const Spectrum& s) {
  return {spectral_quadratic(s, [](double kx, double) { return kx; }),
          spectral_quadratic(s, [](double, double ky) { return ky; })};
}

inline ConservedSet conserved(const Field& f) {
  require_finite(f, "conserved");
  const Spectrum s = dft_forward(f);
  ConservedSet c;
  c.mass = l2_norm_sq(f);
  c.energy = 0.5 * gradient_norm_sq(s) - lp_norm_p(f, 6) / 6.0;
  c.momentum = momentum(s);
  return c;
}

inline void require_certified(const GroundStateNorms& gs, const char* where) {
  require(gs.certified, std::string(where) + ": ground state is not certified");
}

/// Renormalized quantities from raw integrals.
inline RenormalizedSet renormalized(double mass, double grad_sq, double energy, const Vec2& momentum,
                                    const GroundStateNorms& gs) {
  RenormalizedSet r;
  const double scale = gs.scale();
  r.G = std::sqrt(mass * grad_sq) / scale;
  r.Pvec = {momentum[0] / scale, momentum[1] / scale};
  r.Pn = norm2(r.Pvec);
  r.ME = mass * energy / (gs.massQ * gs.energyQ());
  return r;
}

inline RenormalizedSet renormalized(const Field& f, const GroundStateNorms& gs) {
  require_certified(gs, "renormalized");
  require_finite(f, "renormalized");
  const Spectrum s = dft_forward(f);
  const double mass = l2_norm_sq(f);
  const double grad = gradient_norm_sq(s);
  const double energy = 0.5 * grad - lp_norm_p(f, 6) / 6.0;
  return renormalized(mass, grad, energy, momentum(s), gs);
}

/// Largest boost magnitude accepted: half the Nyquist wavenumber.
inline double max_boost(const SpectralGrid& grid) { return 0.5 * grid.nyquist(); }

/// Multiplies by exp(i xi.x); the t = 0 slice of the Galilean transform.
inline Field galilean_boost(const Field& f, const Vec2& xi) {
  require(norm2(xi) < max_boost(f.grid()), "galilean_boost: |xi| must stay below half the Nyquist wavenumber");
  if (xi[0] == 0.0 && xi[1] == 0.0) return f;
  const SpectralGrid& g = f.grid();
  Field out = f;
  const int n = g.n();
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const double phase = xi[0] * g.x(ix) + xi[1] * g.x(iy);
      out.values()[g.index(ix, iy)] *= cplx(std::cos(phase), std::sin(phase));
    }
  return out;
}

/// Full Galilean map applied to a solution slice at time t:
/// exp(i xi.x) exp(-i t |xi|^2) u(x - x0 - 2 xi t). The translation is
/// performed spectrally.
inline Field galilean_transform(const Field& u, const Vec2& xi, const Vec2& x0 = {0.0, 0.0}) {
  const double t = u.t();
  const Vec2 shift{x0[0] + 2.0 * xi[0] * t, x0[1] + 2.0 * xi[1] * t};
  Spectrum s = dft_forward(u);
  const SpectralGrid& g = s.grid;
  const int n = g.n();
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      // full wavenumbers keep the shift exact for the Nyquist row as well
      const double phase = -(g.k(ix) * shift[0] + g.k(iy) * shift[1]);
      s.coeffs[g.index(ix, iy)] *= cplx(std::cos(phase), std::sin(phase));
    }
  Field shifted = dft_inverse(s, t);
  Field out = galilean_boost(shifted, xi);
  const double global = -t * (xi[0] * xi[0] + xi[1] * xi[1]);
  const cplx rot(std::cos(global), std::sin(global));
  for (auto& z : out.values()) z *= rot;
  return out;
}

struct GalileanReduction {
  Field field;
  Vec2 xi0;
};

/// Boost by xi0 = -P/M so the returned field carries zero momentum.
inline GalileanReduction galilean_reduce(const Field& f) {
  const ConservedSet c = conserved(f);
  require(c.mass > 0.0, "galilean_reduce: zero mass");
  const Vec2 xi0{-c.momentum[0] / c.mass, -c.momentum[1] / c.mass};
  require(norm2(xi0) < max_boost(f.grid()), "galilean_reduce: required boost exceeds grid resolution");
  return {galilean_boost(f, xi0), xi0};
}

enum class WindowStatus { inside, violates_lower, violates_upper };

inline const char* to_string(WindowStatus s) {
  switch (s) {
    case WindowStatus::inside: return "inside";
    case WindowStatus::violates_lower: return "violates_lower";
    case WindowStatus::violates_upper: return "violates_upper";
  }
  return "?";
}

struct WindowReport {
  WindowStatus status = WindowStatus::inside;
  double lower_margin = 0.0;  // ME - (2G^2 - G^4)
  double upper_margin = 0.0;  // 2G^2 - ME
};

inline WindowReport window_margins(const RenormalizedSet& r) {
  const double g2 = r.G * r.G;
  return {WindowStatus::inside, r.ME - (2.0 * g2 - g2 * g2), 2.0 * g2 - r.ME};
}

/// Checks 2G^2 - G^4 <= ME <= 2G^2 for a zero-momentum state.
inline WindowReport window_check(const RenormalizedSet& r, double tol = 1e-8) {
  const double scale = std::max({1.0, std::abs(r.ME), 2.0 * r.G * r.G});
  require(r.Pn <= 1e-8 * std::max(1.0, r.G), "window_check: momentum is nonzero; reduce the field first");
  WindowReport w = window_margins(r);
  if (w.lower_margin < -tol * scale)
    w.status = WindowStatus::violates_lower;
  else if (w.upper_margin < -tol * scale)
    w.status = WindowStatus::violates_upper;
  return w;
}

inline nlohmann::json to_json(const ConservedSet& c, const RenormalizedSet& r, const WindowReport& w) {
  return {{"mass", c.mass},
          {"energy", c.energy},
          {"momentum", {c.momentum[0], c.momentum[1]}},
          {"G", r.G},
          {"P_norm", r.Pn},
          {"ME", r.ME},
          {"window_margins", {w.lower_margin, w.upper_margin}}};
}

}  // namespace nls2
