#pragma once

// Ground state Q of -Q + Laplace(Q) + |Q|^4 Q = 0 on R^2.
//
// Two independent solvers: a radial shooting method (bisection on Q(0)) and a
// Petviashvili fixed-point iteration on the spectral grid. A ground state is
// certified when the Pohozhaev identities hold on the grid and both solvers
// agree pointwise.

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "nls2/functionals.hpp"
#include "nls2/grid.hpp"

namespace nls2 {

// ---------------------------------------------------------------------------
// Radial profile

/// Q(r) on a uniform radial mesh with cubic Hermite interpolation, continued
/// by the decaying Bessel tail A K0(r) past the last node.
class RadialProfile {
 public:
  RadialProfile(double step, std::vector<double> q, std::vector<double> dq, double tail_amplitude,
                double matching_radius)
      : h_(step), q_(std::move(q)), dq_(std::move(dq)), tail_amplitude_(tail_amplitude), matching_radius_(matching_radius) {}

  double center_value() const { return q_.front(); }
  double step() const { return h_; }
  double mesh_end() const { return h_ * static_cast<double>(q_.size() - 1); }
  double tail_amplitude() const { return tail_amplitude_; }
  double matching_radius() const { return matching_radius_; }

  double value(double r) const {
    r = std::abs(r);
    if (r >= mesh_end()) return tail_amplitude_ * std::cyl_bessel_k(0.0, r);
    return hermite(r, false);
  }

  double derivative(double r) const {
    const double sign = r < 0 ? -1.0 : 1.0;
    r = std::abs(r);
    if (r >= mesh_end()) return -sign * tail_amplitude_ * std::cyl_bessel_k(1.0, r);
    return sign * hermite(r, true);
  }

  /// (r, Q(r)) pairs on the stored mesh, thinned by `stride`.
  std::vector<std::pair<double, double>> points(std::size_t stride = 1) const {
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i < q_.size(); i += stride) out.emplace_back(h_ * static_cast<double>(i), q_[i]);
    return out;
  }

  /// 2 pi int_R^inf Q^2 r dr and 2 pi int_R^inf Q'^2 r dr.
  std::pair<double, double> exterior_integrals(double radius, double span = 40.0) const {
    // composite Simpson on the interpolant
    const int m = 2 * static_cast<int>(std::ceil(span / (2.0 * h_)));
    const double dr = span / m;
    double mass = 0.0, grad = 0.0;
    for (int i = 0; i <= m; ++i) {
      const double r = radius + i * dr;
      const double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      const double q = value(r), dq = derivative(r);
      mass += w * q * q * r;
      grad += w * dq * dq * r;
    }
    const double c = 2.0 * std::numbers::pi * dr / 3.0;
    return {c * mass, c * grad};
  }

  double mass() const { return exterior_integrals(0.0).first; }

 private:
  double hermite(double r, bool derivative) const {
    const auto last = q_.size() - 2;
    auto i = static_cast<std::size_t>(r / h_);
    if (i > last) i = last;
    const double s = r / h_ - static_cast<double>(i);
    const double q0 = q_[i], q1 = q_[i + 1], m0 = h_ * dq_[i], m1 = h_ * dq_[i + 1];
    if (!derivative) {
      const double s2 = s * s, s3 = s2 * s;
      return (2 * s3 - 3 * s2 + 1) * q0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * q1 + (s3 - s2) * m1;
    }
    const double s2 = s * s;
    return ((6 * s2 - 6 * s) * q0 + (3 * s2 - 4 * s + 1) * m0 + (-6 * s2 + 6 * s) * q1 + (3 * s2 - 2 * s) * m1) / h_;
  }

  double h_;
  std::vector<double> q_, dq_;
  double tail_amplitude_;
  double matching_radius_;
};

// ---------------------------------------------------------------------------
// Shooting

namespace detail {

enum class ShotKind { undershoot, overshoot, undecided };

struct Shot {
  ShotKind kind = ShotKind::undecided;
  std::vector<double> q, dq;  // nodes r_i = i h up to termination
};

// Q'' + Q'/r - Q + Q^5 = 0, Q(0) = a, Q'(0) = 0, integrated with RK4 until
// Q crosses zero (overshoot) or turns upward (undershoot).
inline Shot shoot(double a, double h, double r_stop, bool keep) {
  Shot shot;
  const double c2 = (a - std::pow(a, 5)) / 4.0;
  const double c4 = (1.0 - 5.0 * std::pow(a, 4)) * c2 / 16.0;
  double q = a + c2 * h * h + c4 * std::pow(h, 4);
  double p = 2.0 * c2 * h + 4.0 * c4 * h * h * h;
  if (keep) {
    shot.q = {a, q};
    shot.dq = {0.0, p};
  }
  auto rhs = [](double r, double qq, double pp) { return qq - std::pow(qq, 5) - pp / r; };
  const auto steps = static_cast<std::size_t>(r_stop / h);
  for (std::size_t i = 1; i < steps; ++i) {
    const double r = h * static_cast<double>(i);
    const double k1q = p, k1p = rhs(r, q, p);
    const double k2q = p + 0.5 * h * k1p, k2p = rhs(r + 0.5 * h, q + 0.5 * h * k1q, p + 0.5 * h * k1p);
    const double k3q = p + 0.5 * h * k2p, k3p = rhs(r + 0.5 * h, q + 0.5 * h * k2q, p + 0.5 * h * k2p);
    const double k4q = p + h * k3p, k4p = rhs(r + h, q + h * k3q, p + h * k3p);
    q += h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q);
    p += h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p);
    if (keep) {
      shot.q.push_back(q);
      shot.dq.push_back(p);
    }
    if (q < 0.0) {
      shot.kind = ShotKind::overshoot;
      return shot;
    }
    if (p > 0.0) {
      shot.kind = ShotKind::undershoot;
      return shot;
    }
  }
  return shot;
}

}  // namespace detail

struct ShootingOptions {
  double tol = 1e-12;        // agreement of the bracketing shots that places the matching radius
  double step = 1e-3;        // radial RK4 step
  double mesh_end = 64.0;    // profile tabulated on [0, mesh_end]
  double r_stop = 40.0;      // integration horizon per shot
};

/// Radial ground-state profile by bisection on Q(0) between an undershooting
/// and an overshooting shot, continued by A K0(r) past a matching radius.
inline RadialProfile solve_radial_shooting(const ShootingOptions& opt = {}) {
  require(opt.tol >= 1e-12 && opt.tol <= 1e-6, "solve_radial_shooting: tol must lie in [1e-12, 1e-6]");
  const double h = opt.step;
  using detail::ShotKind;

  // bracket: first overshoot above Q(0) = 1 marks the nodeless solution
  double lo = 1.0 + 1e-3, hi = 0.0;
  if (detail::shoot(lo, h, opt.r_stop, false).kind != ShotKind::undershoot)
    fail(ErrorKind::certification, "solve_radial_shooting: lower bracket does not undershoot");
  for (double a = 1.05; a < 10.0; a += 0.05) {
    const auto kind = detail::shoot(a, h, opt.r_stop, false).kind;
    if (kind == ShotKind::overshoot) {
      hi = a;
      break;
    }
    if (kind == ShotKind::undershoot) lo = a;
  }
  if (hi == 0.0) fail(ErrorKind::certification, "solve_radial_shooting: bisection bracket not found");

  // bisect to machine precision
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const auto kind = detail::shoot(mid, h, opt.r_stop, false).kind;
    if (kind == ShotKind::overshoot)
      hi = mid;
    else
      lo = mid;
  }

  const auto shot_lo = detail::shoot(lo, h, opt.r_stop, true);
  const auto shot_hi = detail::shoot(hi, h, opt.r_stop, true);
  const std::size_t common = std::min(shot_lo.q.size(), shot_hi.q.size());

  // matching radius: where the bracketing shots still agree to `tol`, kept in [8, 12]
  std::size_t split = common - 1;
  for (std::size_t i = 1; i < common; ++i) {
    if (std::abs(shot_hi.q[i] - shot_lo.q[i]) > opt.tol * std::abs(shot_lo.q[i])) {
      split = i;
      break;
    }
  }
  const auto node = [h](double r) { return static_cast<std::size_t>(std::llround(r / h)); };
  split = std::clamp(split, node(8.0), node(12.0));
  if (split >= common) fail(ErrorKind::certification, "solve_radial_shooting: shots terminated before the matching radius");

  const std::size_t blend_begin = split - node(1.0);
  const std::size_t anchor = split - node(0.5);
  const double r_anchor = h * static_cast<double>(anchor);
  const double qa = shot_lo.q[anchor], pa = shot_lo.dq[anchor];
  // amplitude of the K0 component (Wronskian of K0, I0 is 1/r); removes the growing I0 part
  const double amplitude = r_anchor * (qa * std::cyl_bessel_i(1.0, r_anchor) - pa * std::cyl_bessel_i(0.0, r_anchor));

  const std::size_t total = node(opt.mesh_end) + 1;
  std::vector<double> q(total), dq(total);
  for (std::size_t i = 0; i < total; ++i) {
    const double r = h * static_cast<double>(i);
    if (i <= blend_begin) {
      q[i] = shot_lo.q[i];
      dq[i] = shot_lo.dq[i];
      continue;
    }
    const double tail = amplitude * std::cyl_bessel_k(0.0, r);
    const double dtail = -amplitude * std::cyl_bessel_k(1.0, r);
    if (i >= split) {
      q[i] = tail;
      dq[i] = dtail;
      continue;
    }
    // C2 smoothstep between the shot and the tail over one unit of radius
    const double s = (r - h * static_cast<double>(blend_begin)) / (h * static_cast<double>(split - blend_begin));
    const double w = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    const double dw = 30.0 * s * s * (1.0 - s) * (1.0 - s) / (h * static_cast<double>(split - blend_begin));
    q[i] = (1.0 - w) * shot_lo.q[i] + w * tail;
    dq[i] = (1.0 - w) * shot_lo.dq[i] + w * dtail + dw * (tail - shot_lo.q[i]);
  }
  return RadialProfile(h, std::move(q), std::move(dq), amplitude, h * static_cast<double>(split));
}

// ---------------------------------------------------------------------------
// Ground state on the grid

struct PohozhaevResiduals {
  double l6_vs_3mass = 0.0;           // ||Q||_6^6 = 3 ||Q||_2^2
  double l6_vs_mass_plus_grad = 0.0;  // ||Q||_6^6 = ||Q||_2^2 + ||grad Q||_2^2
  double me_vs_half_mass_sq = 0.0;    // M[Q] E[Q] = ||Q||_2^4 / 2
  double sqrt2_relation = 0.0;        // ||Q|| ||grad Q|| = sqrt2 ||Q||^2
  double four_energy = 0.0;           // 4 E[Q] = ||grad Q||^2

  std::array<double, 5> as_array() const {
    return {l6_vs_3mass, l6_vs_mass_plus_grad, me_vs_half_mass_sq, sqrt2_relation, four_energy};
  }
  double max() const {
    const auto a = as_array();
    return *std::max_element(a.begin(), a.end());
  }
};

struct GroundState {
  Field field;
  std::optional<RadialProfile> profile;
  GroundStateNorms norms;
  PohozhaevResiduals residuals;
  double fixed_point_residual = 0.0;
  double stabilizer = 0.0;  // final Petviashvili factor S
  int iterations = 0;
  double oracle_sup_error = std::numeric_limits<double>::quiet_NaN();
  std::string method = "petviashvili";
  double tol = 0.0;

  bool certified() const { return norms.certified; }
};

inline GroundStateNorms norms_of(const Field& q) {
  GroundStateNorms n;
  n.massQ = l2_norm_sq(q);
  n.gradQ_sq = gradient_norm_sq(q);
  n.l6Q_6 = lp_norm_p(q, 6);
  n.c_gn = 3.0 / (4.0 * n.massQ * n.massQ);
  return n;
}

inline PohozhaevResiduals pohozhaev_check(const GroundStateNorms& n) {
  PohozhaevResiduals r;
  const double m = n.massQ, g = n.gradQ_sq, l6 = n.l6Q_6;
  const double e = 0.5 * g - l6 / 6.0;
  r.l6_vs_3mass = std::abs(l6 - 3.0 * m) / (3.0 * m);
  r.l6_vs_mass_plus_grad = std::abs(l6 - m - g) / l6;
  r.me_vs_half_mass_sq = std::abs(m * e - 0.5 * m * m) / (0.5 * m * m);
  r.sqrt2_relation = std::abs(std::sqrt(m * g) - std::sqrt(2.0) * m) / (std::sqrt(2.0) * m);
  r.four_energy = std::abs(4.0 * e - g) / g;
  return r;
}

inline PohozhaevResiduals pohozhaev_check(const GroundState& gs) { return pohozhaev_check(gs.norms); }

inline constexpr double kPohozhaevTolerance = 1e-6;
inline constexpr double kOracleTolerance = 1e-5;

/// Spectral fixed point Q^ <- S^gamma (Q^5)^ / (1 + |k|^2), gamma = 5/4.
inline GroundState solve_petviashvili(const SpectralGrid& grid, double tol = 1e-10, int max_iter = 1000) {
  require(tol > 0.0 && max_iter > 0, "solve_petviashvili: tol and max_iter must be positive");
  constexpr double gamma = 1.25;
  Field q = Field::sample(grid, [](double x, double y) { return std::exp(-0.5 * (x * x + y * y)); });
  const std::size_t size = grid.size();
  std::vector<double> symbol(size);
  for_each_mode(grid, [&](double kx, double ky, std::size_t i) { symbol[i] = 1.0 + kx * kx + ky * ky; });

  // Nyquist modes have no derivative multiplier and would never be damped
  const int half = grid.n() / 2;
  std::vector<char> keep(size, 1);
  for (int j = 0; j < grid.n(); ++j) keep[grid.index(half, j)] = keep[grid.index(j, half)] = 0;

  cvec qhat = q.storage();
  fft_forward_inplace(grid, qhat);
  for (std::size_t i = 0; i < size; ++i)
    if (!keep[i]) qhat[i] = 0.0;
  cvec work(size);
  GroundState gs{q, std::nullopt, {}, {}, 0.0, 0.0, 0, std::numeric_limits<double>::quiet_NaN(), "petviashvili", tol};
  for (int it = 1; it <= max_iter; ++it) {
    // physical Q from the spectrum, real part only
    work = qhat;
    fft_backward_inplace(grid, work);
    const double inv = 1.0 / static_cast<double>(size);
    for (auto& z : work) {
      const double v = z.real() * inv;
      const double v2 = v * v;
      z = cplx(v2 * v2 * v, 0.0);
    }
    fft_forward_inplace(grid, work);  // (Q^5)^
    double num = 0.0, den = 0.0, res = 0.0, qq = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
      if (!keep[i]) continue;
      num += symbol[i] * std::norm(qhat[i]);
      den += (std::conj(qhat[i]) * work[i]).real();
      res += std::norm(work[i] - symbol[i] * qhat[i]);
      qq += std::norm(qhat[i]);
    }
    if (!std::isfinite(num) || !std::isfinite(den)) fail(ErrorKind::certification, "solve_petviashvili: iteration diverged");
    if (qq * grid.cell_area() / static_cast<double>(size) < 1e-20 || den <= 0.0)
      fail(ErrorKind::certification, "solve_petviashvili: iterate collapsed to zero");
    const double s = num / den;
    gs.stabilizer = s;
    gs.fixed_point_residual = std::sqrt(res / qq);
    gs.iterations = it;
    if (gs.fixed_point_residual <= tol) break;
    if (it == max_iter)
      fail(ErrorKind::certification, "solve_petviashvili: no convergence in " + std::to_string(max_iter) +
                                         " iterations (residual " + std::to_string(gs.fixed_point_residual) + ")");
    const double factor = std::pow(s, gamma);
    for (std::size_t i = 0; i < size; ++i) qhat[i] = keep[i] ? factor * work[i] / symbol[i] : cplx(0.0);
  }
  Field solved = dft_inverse(Spectrum{grid, qhat});
  for (auto& z : solved.values()) z = cplx(z.real(), 0.0);
  gs.field = std::move(solved);
  gs.norms = norms_of(gs.field);
  gs.residuals = pohozhaev_check(gs.norms);
  gs.norms.certified = gs.residuals.max() <= kPohozhaevTolerance;
  return gs;
}

/// sup over grid points of |Q_grid - Q_profile(|x|)|.
inline double profile_sup_error(const Field& q, const RadialProfile& profile) {
  const SpectralGrid& g = q.grid();
  double err = 0.0;
  for (int iy = 0; iy < g.n(); ++iy)
    for (int ix = 0; ix < g.n(); ++ix)
      err = std::max(err, std::abs(q(ix, iy) - profile.value(std::hypot(g.x(ix), g.x(iy)))));
  return err;
}

struct GroundStateOptions {
  double tol = 1e-10;
  int max_iter = 1000;
  ShootingOptions shooting{};
};

/// Petviashvili solve certified against the Pohozhaev identities and the
/// shooting oracle.
inline GroundState compute_ground_state(const SpectralGrid& grid, const GroundStateOptions& opt = {}) {
  GroundState gs = solve_petviashvili(grid, opt.tol, opt.max_iter);
  gs.profile = solve_radial_shooting(opt.shooting);
  gs.oracle_sup_error = profile_sup_error(gs.field, *gs.profile);
  gs.norms.certified = gs.residuals.max() <= kPohozhaevTolerance && gs.oracle_sup_error <= kOracleTolerance;
  return gs;
}

struct GnSlack {
  double slack = 0.0;  // C_GN ||u||^2 ||grad u||^4 - ||u||_6^6
  double scale = 0.0;  // max of the two sides

  bool holds(double rel = 1e-8) const { return slack >= -rel * scale; }
  double relative() const { return scale > 0.0 ? slack / scale : 0.0; }
};

inline GnSlack gn_inequality_check(const Field& f, const GroundStateNorms& gs) {
  require_certified(gs, "gn_inequality_check");
  const double m = l2_norm_sq(f), g = gradient_norm_sq(f), l6 = lp_norm_p(f, 6);
  const double rhs = gs.c_gn * m * g * g;
  return {rhs - l6, std::max(rhs, l6)};
}

inline GnSlack gn_inequality_check(const Field& f, const GroundState& gs) { return gn_inequality_check(f, gs.norms); }

// ---------------------------------------------------------------------------
// Initial-data families

struct ScaledQ {
  double lambda = 1.0;  // lambda Q(lambda x)
};

struct Gaussian {
  double amplitude = 1.0;
  double width = 1.0;  // A exp(-|x|^2 / (2 width^2))
};

struct PerturbedQ {
  double lambda = 1.0;
  double epsilon = 1e-3;  // relative size of the radial perturbation
  std::uint64_t seed = 0;
};

struct Boosted;

using InitialData = std::variant<ScaledQ, Gaussian, PerturbedQ, Boosted>;

struct Boosted {
  std::shared_ptr<const InitialData> inner;
  Vec2 xi{0.0, 0.0};
};

inline constexpr double kDefaultBoundaryTol = 1e-12;

namespace detail {

// Smooth radial modulation sum_j a_j cos(j pi r / 6) exp(-r^2 / 16) with a_j
// uniform in [-1, 1] drawn from the seed.
inline std::array<double, 4> perturbation_coefficients(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::array<double, 4> a{};
  for (auto& c : a) c = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
  return a;
}

inline Field sample_data(const InitialData& data, const SpectralGrid& grid, const GroundState& gs) {
  struct Visitor {
    const SpectralGrid& grid;
    const GroundState& gs;

    const RadialProfile& profile() const {
      require(gs.profile.has_value(), "make_initial_data: ground state carries no radial profile");
      return *gs.profile;
    }
    Field operator()(const ScaledQ& d) const {
      require(d.lambda > 0.0, "make_initial_data: lambda must be positive");
      const RadialProfile& p = profile();
      return Field::sample(grid, [&](double x, double y) { return d.lambda * p.value(d.lambda * std::hypot(x, y)); });
    }
    Field operator()(const Gaussian& d) const {
      require(d.width > 0.0, "make_initial_data: gaussian width must be positive");
      const double c = 0.5 / (d.width * d.width);
      return Field::sample(grid, [&](double x, double y) { return d.amplitude * std::exp(-c * (x * x + y * y)); });
    }
    Field operator()(const PerturbedQ& d) const {
      require(d.lambda > 0.0, "make_initial_data: lambda must be positive");
      const RadialProfile& p = profile();
      const auto a = perturbation_coefficients(d.seed);
      return Field::sample(grid, [&](double x, double y) {
        const double r = std::hypot(x, y);
        double mod = 0.0;
        for (int j = 0; j < 4; ++j) mod += a[j] * std::cos((j + 1) * std::numbers::pi * r / 6.0);
        return d.lambda * p.value(d.lambda * r) * (1.0 + d.epsilon * mod * std::exp(-r * r / 16.0));
      });
    }
    Field operator()(const Boosted& d) const {
      require(d.inner != nullptr, "make_initial_data: boosted family needs an inner datum");
      return galilean_boost(std::visit(*this, *d.inner), d.xi);
    }
  };
  return std::visit(Visitor{grid, gs}, data);
}

}  // namespace detail

/// Samples an initial-data family and rejects it when |u| on the periodic
/// seam exceeds `boundary_tol`.
inline Field make_initial_data(const InitialData& data, const SpectralGrid& grid, const GroundState& gs,
                               double boundary_tol = kDefaultBoundaryTol) {
  Field f = detail::sample_data(data, grid, gs);
  const double edge = boundary_max_abs(f);
  if (!(edge <= boundary_tol)) {
    char msg[160];
    std::snprintf(msg, sizeof msg, "make_initial_data: insufficient box, |u| = %.3g on the boundary exceeds %.3g", edge,
                  boundary_tol);
    fail(ErrorKind::validation, msg);
  }
  return f;
}

}  // namespace nls2
