#pragma once

// Variance and virial machinery: radial cutoffs, localized variance z_R with
// its first and second time derivatives, virial traces along a trajectory,
// the exterior Gagliardo-Nirenberg ratio for radial data, energy/gradient
// margins below threshold, the localized blow-up time bound and a numerical
// scattering detector.

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "nls2/evolution.hpp"
#include "nls2/functionals.hpp"
#include "nls2/grid.hpp"
#include "nls2/ground_state.hpp"
#include "nls2/moments.hpp"

namespace nls2 {

// ---------------------------------------------------------------------------
// Cutoffs

enum class CutoffKind {
  chi,  // r^2 on [0,1], plateau for r >= 4, chi'' <= 2
  phi,  // r^2 on [0,1], zero for r >= 2
};

/// Radial cutoff psi(x) = R^2 f(|x| / R). f is r^2 near the origin and a
/// quintic Hermite blend across the transition layer.
class Cutoff {
 public:
  static constexpr double kChiPlateau = 5.0;

  Cutoff(CutoffKind kind, double radius) : kind_(kind), radius_(radius) {
    require(radius > 0.0 && std::isfinite(radius), "cutoff: radius must be positive");
  }

  CutoffKind kind() const { return kind_; }
  double radius() const { return radius_; }
  /// |x| beyond which the cutoff is constant.
  double outer_radius() const { return radius_ * (kind_ == CutoffKind::chi ? 4.0 : 2.0); }

  /// f and its first four derivatives at rho = |x| / R.
  std::array<double, 5> profile(double rho) const {
    if (rho <= 1.0) return {rho * rho, 2.0 * rho, 2.0, 0.0, 0.0};
    const double width = kind_ == CutoffKind::chi ? 3.0 : 1.0;
    const double s = (rho - 1.0) / width;
    if (s >= 1.0) return {end_value(), 0.0, 0.0, 0.0, 0.0};
    const auto c = coefficients();
    std::array<double, 5> out{};
    // d-th derivative of sum c_j s^j, divided by width^d to convert to rho
    double scale = 1.0;
    for (int d = 0; d <= 4; ++d) {
      double acc = 0.0;
      for (int j = 5; j >= d; --j) {
        double fall = 1.0;
        for (int m = 0; m < d; ++m) fall *= (j - m);
        acc = acc * s + c[j] * fall;
      }
      out[d] = acc / scale;
      scale *= width;
    }
    return out;
  }

  double value(double r) const { return radius_ * radius_ * profile(r / radius_)[0]; }
  /// d/dr of the cutoff.
  double radial_derivative(double r) const { return radius_ * profile(r / radius_)[1]; }
  /// d^2/dr^2 of the cutoff.
  double radial_second_derivative(double r) const { return profile(r / radius_)[2]; }

  /// Laplacian f'' + f'/rho (finite at the origin).
  double laplacian(double r) const {
    const double rho = r / radius_;
    const auto p = profile(rho);
    return p[2] + (rho > 0.0 ? p[1] / rho : 2.0);
  }

 private:
  double end_value() const { return kind_ == CutoffKind::chi ? kChiPlateau : 0.0; }

  // Coefficients in s of the blend matching (1, 2, 2) in rho at s = 0 and
  // (end, 0, 0) at s = 1.
  std::array<double, 6> coefficients() const {
    if (kind_ == CutoffKind::phi) return {1.0, 2.0, 1.0, -25.0, 34.0, -13.0};
    const double c = kChiPlateau;
    return {1.0, 6.0, 9.0, 10.0 * c - 73.0, 90.0 - 15.0 * c, 6.0 * c - 33.0};
  }

  CutoffKind kind_;
  double radius_;
};

// ---------------------------------------------------------------------------
// Localized variance

struct LocalizedVariance {
  double z = 0.0;    // int psi |u|^2
  double zp = 0.0;   // 2 Im int grad psi . grad u conj(u)
  double zpp = 0.0;  // 4 Re int psi_jk d_j conj(u) d_k u - int (Lap psi) Lap|u|^2 - 4/3 int (Lap psi) |u|^6
  double A = 0.0;    // zpp - (8 ||grad u||^2 - 16/3 ||u||_6^6)
};

inline LocalizedVariance localized_variance(const Field& f, const Cutoff& cutoff) {
  require_finite(f, "localized_variance");
  const SpectralGrid& g = f.grid();
  require(cutoff.radius() >= 8.0 * g.dx(), "localized_variance: cutoff radius below 8 grid spacings");
  const auto grad = gradient(f);

  // Lap |u|^2 spectrally
  Field dens(g, f.t());
  for (std::size_t i = 0; i < g.size(); ++i) dens.values()[i] = std::norm(f.values()[i]);
  Spectrum ds = dft_forward(dens);
  for_each_mode(g, [&](double kx, double ky, std::size_t i) { ds.coeffs[i] *= -(kx * kx + ky * ky); });
  const Field lap_dens = dft_inverse(ds);

  const double R = cutoff.radius();
  double z = 0.0, zp = 0.0, hess = 0.0, bilap = 0.0, six = 0.0, grad_sq = 0.0, l6 = 0.0;
  for (int iy = 0; iy < g.n(); ++iy)
    for (int ix = 0; ix < g.n(); ++ix) {
      const std::size_t i = g.index(ix, iy);
      const double x = g.x(ix), y = g.x(iy);
      const double r = std::hypot(x, y);
      const double rho = r / R;
      const auto p = cutoff.profile(rho);
      const cplx u = f.values()[i], ux = grad[0].values()[i], uy = grad[1].values()[i];
      const double m = std::norm(u);
      const double g2 = std::norm(ux) + std::norm(uy);
      const double m3 = m * m * m;
      grad_sq += g2;
      l6 += m3;
      z += R * R * p[0] * m;
      // radial unit vector and Hessian f'' xx^T + (f'/rho)(I - xx^T)
      double ex = 0.0, ey = 0.0, tangential = 2.0;
      if (r > 0.0) {
        ex = x / r;
        ey = y / r;
        tangential = p[1] / rho;
      }
      const double dpsi = R * p[1];
      zp += dpsi * (std::conj(u) * (ex * ux + ey * uy)).imag();
      const cplx radial = ex * ux + ey * uy;
      const double radial2 = std::norm(radial);
      // psi_jk d_j conj(u) d_k u = f'' |e.grad u|^2 + (f'/rho)(|grad u|^2 - |e.grad u|^2)
      hess += p[2] * radial2 + tangential * (g2 - radial2);
      const double lap = p[2] + tangential;
      bilap += lap * lap_dens.values()[i].real();
      six += lap * m3;
    }
  const double da = g.cell_area();
  LocalizedVariance out;
  out.z = z * da;
  out.zp = 2.0 * zp * da;
  out.zpp = (4.0 * hess - bilap - 4.0 / 3.0 * six) * da;
  out.A = out.zpp - virial_second_derivative(grad_sq * da, l6 * da);
  return out;
}

// ---------------------------------------------------------------------------
// Virial trace

struct VirialTrace {
  std::vector<double> t, V, Vp_formula, Vpp_formula, Vpp_fd, z_R, A_R;

  /// max over interior points of |Vpp_formula - Vpp_fd| / max(|Vpp_formula|, 1e-6).
  double max_relative_mismatch() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (std::isnan(Vpp_fd[i])) continue;
      worst = std::max(worst, std::abs(Vpp_formula[i] - Vpp_fd[i]) / std::max(std::abs(Vpp_formula[i]), 1e-6));
    }
    return worst;
  }
};

/// Virial quantities along the regular samples of a trajectory recorded with
/// variance enabled. `localized` optionally carries (z_R, A_R) per sample.
inline VirialTrace virial_check_full(const std::vector<TrajectorySample>& samples,
                                     const std::vector<LocalizedVariance>& localized = {}) {
  require(samples.size() >= 5, "virial_check_full: need at least 5 samples");
  require(localized.empty() || localized.size() == samples.size(), "virial_check_full: localized series length mismatch");
  const double h = samples[1].t - samples[0].t;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double step = samples[i].t - samples[i - 1].t;
    require(std::abs(step - h) <= 1e-9 * std::max(1.0, h), "virial_check_full: probe spacing is not uniform");
  }
  VirialTrace tr;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    require(s.variance.has_value() && s.variance_rate.has_value(),
            "virial_check_full: sample at t=" + detail::fmt(s.t) + " carries no variance");
    tr.t.push_back(s.t);
    tr.V.push_back(*s.variance);
    tr.Vp_formula.push_back(*s.variance_rate);
    tr.Vpp_formula.push_back(virial_second_derivative(s.grad_sq, s.l6_6));
    tr.z_R.push_back(localized.empty() ? nan : localized[i].z);
    tr.A_R.push_back(localized.empty() ? nan : localized[i].A);
  }
  tr.Vpp_fd.assign(samples.size(), nan);
  for (std::size_t i = 1; i + 1 < samples.size(); ++i)
    tr.Vpp_fd[i] = (tr.V[i + 1] - 2.0 * tr.V[i] + tr.V[i - 1]) / (h * h);
  return tr;
}

inline VirialTrace virial_check_full(const TrajectoryRecord& rec, const std::vector<LocalizedVariance>& localized = {}) {
  return virial_check_full(rec.regular_samples(), localized);
}

inline void write_csv(std::ostream& os, const VirialTrace& tr) {
  using detail::fmt;
  os << "t,V,Vp_formula,Vpp_formula,Vpp_fd,z_R,A_R\n";
  for (std::size_t i = 0; i < tr.t.size(); ++i)
    os << fmt(tr.t[i]) << ',' << fmt(tr.V[i]) << ',' << fmt(tr.Vp_formula[i]) << ',' << fmt(tr.Vpp_formula[i]) << ','
       << fmt(tr.Vpp_fd[i]) << ',' << fmt(tr.z_R[i]) << ',' << fmt(tr.A_R[i]) << '\n';
}

// ---------------------------------------------------------------------------
// Radial symmetry

/// Largest deviation of |u - radial average| relative to sup |u|. Grid points
/// are grouped by their exact squared index radius i^2 + j^2 about the
/// origin, so sampled radial data passes without interpolation error.
inline double radial_asymmetry(const Field& f) {
  const SpectralGrid& g = f.grid();
  const int n = g.n();
  const double sup = max_abs(f);
  if (sup == 0.0) return 0.0;
  const int c = n / 2;  // x(c) = 0
  std::unordered_map<long, std::pair<cplx, int>> shells;
  auto key = [c](int ix, int iy) { return static_cast<long>(ix - c) * (ix - c) + static_cast<long>(iy - c) * (iy - c); };
  for (int iy = 1; iy < n; ++iy)
    for (int ix = 1; ix < n; ++ix) {
      auto& [sum, count] = shells[key(ix, iy)];
      sum += f(ix, iy);
      ++count;
    }
  double worst = 0.0;
  for (int iy = 1; iy < n; ++iy)
    for (int ix = 1; ix < n; ++ix) {
      const auto& [sum, count] = shells[key(ix, iy)];
      worst = std::max(worst, std::abs(f(ix, iy) - sum / static_cast<double>(count)));
    }
  return worst / sup;
}

inline constexpr double kRadialTol = 1e-8;

inline bool is_radial(const Field& f, double tol = kRadialTol) { return radial_asymmetry(f) <= tol; }

// ---------------------------------------------------------------------------
// Exterior norms and the radial Gagliardo-Nirenberg ratio

struct ExteriorNorms {
  double mass = 0.0;     // ||u||^2 on |x| >= R
  double grad_sq = 0.0;  // ||grad u||^2 on |x| >= R
  double l6_6 = 0.0;     // ||u||_6^6 on |x| >= R
};

inline ExteriorNorms exterior_norms(const Field& f, double radius) {
  const SpectralGrid& g = f.grid();
  const auto grad = gradient(f);
  ExteriorNorms e;
  for (int iy = 0; iy < g.n(); ++iy)
    for (int ix = 0; ix < g.n(); ++ix) {
      if (std::hypot(g.x(ix), g.x(iy)) < radius) continue;
      const std::size_t i = g.index(ix, iy);
      const double m = std::norm(f.values()[i]);
      e.mass += m;
      e.grad_sq += std::norm(grad[0].values()[i]) + std::norm(grad[1].values()[i]);
      e.l6_6 += m * m * m;
    }
  const double da = g.cell_area();
  e.mass *= da;
  e.grad_sq *= da;
  e.l6_6 *= da;
  return e;
}

/// R^2 ||u||_6^6 / (||u||_2^4 ||grad u||_2^2), all norms over |x| >= R.
inline double radial_gn_exterior_check(const Field& f, double radius) {
  require(radius > 0.0, "radial_gn_exterior_check: radius must be positive");
  require(is_radial(f), "radial_gn_exterior_check: field is not radially symmetric");
  const ExteriorNorms e = exterior_norms(f, radius);
  const double total = l2_norm_sq(f);
  require(e.mass > 1e-14 * total && e.grad_sq > 0.0, "radial_gn_exterior_check: no mass outside the radius");
  return radius * radius * e.l6_6 / (e.mass * e.mass * e.grad_sq);
}

// ---------------------------------------------------------------------------
// Energy / gradient margins below threshold

struct EnergyGradientMargins {
  double t = 0.0;
  double lower = 0.0;         // E - ||grad u||^2 / 4
  double upper = 0.0;         // ||grad u||^2 / 2 - E
  double gradient = 0.0;      // omega - G
  double energy_chain = 0.0;  // 8(1-w^2)||grad u||^2 - 16(1-w^2)E
  double virial_chain = 0.0;  // (8||grad u||^2 - 16/3||u||_6^6) - 8(1-w^2)||grad u||^2
  double scale = 0.0;         // normalization for the relative tolerance

  bool holds(double rel = 1e-8) const {
    const double tol = -rel * scale;
    return lower >= tol && upper >= tol && gradient >= -rel && energy_chain >= tol && virial_chain >= tol;
  }
};

inline std::vector<EnergyGradientMargins> energy_gradient_bounds_check(const std::vector<TrajectorySample>& samples) {
  if (samples.empty()) return {};
  const auto& s0 = samples.front();
  require(s0.ME < 1.0 && s0.G < 1.0, "energy_gradient_bounds_check: data must satisfy ME < 1 and G(0) < 1");
  std::vector<EnergyGradientMargins> out;
  for (const auto& s : samples) {
    const double w2 = std::max(s.ME, 0.0);
    const double omega = std::sqrt(w2);
    EnergyGradientMargins m;
    m.t = s.t;
    m.lower = s.energy - 0.25 * s.grad_sq;
    m.upper = 0.5 * s.grad_sq - s.energy;
    m.gradient = omega - s.G;
    m.energy_chain = 8.0 * (1.0 - w2) * s.grad_sq - 16.0 * (1.0 - w2) * s.energy;
    m.virial_chain = virial_second_derivative(s.grad_sq, s.l6_6) - 8.0 * (1.0 - w2) * s.grad_sq;
    m.scale = std::max({8.0 * s.grad_sq, 16.0 / 3.0 * s.l6_6, 16.0 * std::abs(s.energy), 1e-300});
    out.push_back(m);
  }
  return out;
}

inline std::vector<EnergyGradientMargins> energy_gradient_bounds_check(const TrajectoryRecord& rec) {
  return energy_gradient_bounds_check(rec.samples());
}

// ---------------------------------------------------------------------------
// Localized blow-up time bound

struct BlowupBound {
  std::optional<double> t_b;
  double lambda = 0.0;
  double kappa = 0.0;
  double localized_G = 0.0;  // exterior renormalized gradient at t = 0
  double V = 0.0, Vp = 0.0;  // scaled localized variance and its rate at t = 0
  std::string note;
};

inline constexpr double kKappa0 = 0.1;

/// Emits t_b = V_R'(0) + sqrt(V_R'(0)^2 + 2 V_R(0)) with
/// V_R = z_R / (32 E[Q] lambda^2 (lambda^2 - 1 - kappa)), lambda read off the
/// mass-energy line through ME.
inline BlowupBound blowup_time_bound(const Field& f, const GroundState& gs, double radius, double kappa,
                                     double kappa0 = kKappa0) {
  require_certified(gs.norms, "blowup_time_bound");
  require(gs.profile.has_value(), "blowup_time_bound: ground state carries no radial profile");
  const RenormalizedSet r = renormalized(f, gs.norms);
  require(r.ME < 1.0 && r.G > 1.0, "blowup_time_bound: datum must satisfy ME < 1 and G(0) > 1");
  BlowupBound b;
  b.lambda = std::sqrt(1.0 + std::sqrt(1.0 - std::max(r.ME, 0.0)));
  b.kappa = kappa;
  require(kappa > 0.0 && kappa < std::min(b.lambda - 1.0, kappa0),
          "blowup_time_bound: kappa must lie in (0, min(lambda - 1, kappa0))");

  const ExteriorNorms ext = exterior_norms(f, radius);
  const auto [q_mass, q_grad] = gs.profile->exterior_integrals(radius);
  b.localized_G = std::sqrt(ext.mass * ext.grad_sq) / std::sqrt(q_mass * q_grad);

  const Cutoff phi(CutoffKind::phi, radius);
  const LocalizedVariance lv = localized_variance(f, phi);
  const double denom = 32.0 * gs.norms.energyQ() * b.lambda * b.lambda * (b.lambda * b.lambda - 1.0 - kappa);
  b.V = lv.z / denom;
  b.Vp = lv.zp / denom;
  if (radius * radius * kappa < 1.0) {
    b.note = "radius below kappa^(-1/2)";
    return b;
  }
  if (!(b.localized_G <= kappa)) {
    b.note = "exterior localized gradient exceeds kappa";
    return b;
  }
  b.t_b = b.Vp + std::sqrt(b.Vp * b.Vp + 2.0 * b.V);
  return b;
}

inline nlohmann::json to_json(const BlowupBound& b) {
  nlohmann::json j{{"lambda", b.lambda}, {"kappa", b.kappa}, {"localized_G", b.localized_G}, {"V_R", b.V}, {"V_R_prime", b.Vp}};
  j["t_b"] = b.t_b ? nlohmann::json(*b.t_b) : nlohmann::json(nullptr);
  if (!b.note.empty()) j["note"] = b.note;
  return j;
}

// ---------------------------------------------------------------------------
// Scattering detector

struct ScatteringReport {
  double l6_decay_factor = 0.0;  // max_{[0,T2]} ||u||_6^6 / ||u(T2)||_6^6
  double l6_norm_decay = 0.0;    // the same ratio for ||u||_6
  double d_T1_over_H1 = 0.0;     // ||u(T1) - e^{i T1 Lap} phi+||_H1 / ||u0||_H1
  double d_T2_over_H1 = 0.0;
  bool d_decreasing = false;
  bool box_exit = false;  // |u|^2 on the seam exceeded 1e-6 inside the window
  bool scatter_like = false;
  std::vector<double> t, d;  // d(t) / ||u0||_H1 over the window
};

inline constexpr double kScatterDecay = 10.0;
inline constexpr double kScatterDistance = 0.05;
inline constexpr double kBoxExitDensity = 1e-6;

/// Collects what the detector needs while a trajectory runs: the free
/// pull-back e^{-it Lap} u(t) at samples in [T1, T2] and the seam density.
class ScatteringMonitor {
 public:
  ScatteringMonitor(double t1, double t2) : t1_(t1), t2_(t2) {
    require(t1 >= 0.0 && t2 > t1, "scattering: need 0 <= T1 < T2");
  }

  double t1() const { return t1_; }
  double t2() const { return t2_; }

  void observe(const Field& u, const TrajectorySample& s) {
    if (h1_0_ < 0.0) h1_0_ = s.mass + s.grad_sq;
    if (s.event || s.t < t1_ - 1e-12 || s.t > t2_ + 1e-12) return;
    const double edge = boundary_max_abs(u);
    seam_density_ = std::max(seam_density_, edge * edge);
    Spectrum sp = dft_forward(u);
    const SpectralGrid& g = sp.grid;
    for (int iy = 0; iy < g.n(); ++iy)
      for (int ix = 0; ix < g.n(); ++ix) {
        const double k2 = g.k(ix) * g.k(ix) + g.k(iy) * g.k(iy);
        sp.coeffs[g.index(ix, iy)] *= std::polar(1.0, k2 * s.t);
      }
    times_.push_back(s.t);
    pulled_.push_back(std::move(sp));
  }

  ProbeObserver observer() {
    return [this](const Field& u, const TrajectorySample& s) { observe(u, s); };
  }

  const std::vector<double>& times() const { return times_; }
  const std::vector<Spectrum>& pulled_back() const { return pulled_; }
  double seam_density() const { return seam_density_; }
  double h1_norm_sq_initial() const { return h1_0_; }

 private:
  double t1_, t2_;
  double h1_0_ = -1.0;
  double seam_density_ = 0.0;
  std::vector<double> times_;
  std::vector<Spectrum> pulled_;
};

inline double h1_norm_sq(const Spectrum& s) {
  return spectral_quadratic(s, [](double kx, double ky) { return 1.0 + kx * kx + ky * ky; });
}

inline ScatteringReport scattering_detect(const TrajectoryRecord& rec, const ScatteringMonitor& mon) {
  require(rec.outcome() && rec.outcome()->kind == OutcomeKind::ran_to_t_end,
          "scattering_detect: trajectory did not run to t_end");
  require(rec.outcome()->t >= mon.t2() - 1e-12, "scattering_detect: window exceeds the trajectory");
  require(mon.times().size() >= 2 && std::abs(mon.times().front() - mon.t1()) <= 1e-9 &&
              std::abs(mon.times().back() - mon.t2()) <= 1e-9,
          "scattering_detect: window ends must be probe times");
  ScatteringReport rep;
  double peak = 0.0, last = 0.0;
  for (const auto& s : rec.samples()) {
    if (s.t > mon.t2() + 1e-12) break;
    peak = std::max(peak, s.l6_6);
    last = s.l6_6;
  }
  rep.l6_decay_factor = last > 0.0 ? peak / last : std::numeric_limits<double>::infinity();
  rep.l6_norm_decay = std::pow(rep.l6_decay_factor, 1.0 / 6.0);

  const double h1 = std::sqrt(mon.h1_norm_sq_initial());
  const Spectrum& final_state = mon.pulled_back().back();
  for (std::size_t i = 0; i < mon.times().size(); ++i) {
    Spectrum diff{final_state.grid, mon.pulled_back()[i].coeffs};
    for (std::size_t j = 0; j < diff.coeffs.size(); ++j) diff.coeffs[j] -= final_state.coeffs[j];
    rep.t.push_back(mon.times()[i]);
    rep.d.push_back(h1 > 0.0 ? std::sqrt(h1_norm_sq(diff)) / h1 : 0.0);
  }
  rep.d_T1_over_H1 = rep.d.front();
  rep.d_T2_over_H1 = rep.d.back();
  const double noise = 1e-3 * std::max(rep.d_T1_over_H1, 1e-12);
  rep.d_decreasing = true;
  for (std::size_t i = 1; i < rep.d.size(); ++i)
    if (rep.d[i] > rep.d[i - 1] + noise) rep.d_decreasing = false;
  rep.box_exit = mon.seam_density() > kBoxExitDensity;
  rep.scatter_like = rep.l6_decay_factor >= kScatterDecay && rep.d_T1_over_H1 <= kScatterDistance && rep.d_decreasing;
  return rep;
}

inline nlohmann::json to_json(const ScatteringReport& r) {
  return {{"l6_decay_factor", r.l6_decay_factor},
          {"l6_norm_decay", r.l6_norm_decay},
          {"d_T1_over_H1", r.d_T1_over_H1},
          {"d_T2_over_H1", r.d_T2_over_H1},
          {"d_decreasing", r.d_decreasing},
          {"box_exit", r.box_exit},
          {"verdict", r.scatter_like ? "scatter_like" : "not_scatter_like"}};
}

}  // namespace nls2
