#pragma once

// Strang splitting for i u_t + Laplace(u) + |u|^4 u = 0 with exact sub-flows:
// free propagator half step, pointwise phase rotation exp(i |u|^4 dt), free
// half step. The driver keeps the state in Fourier space, chooses dt from a
// dyadic ladder bounded by cfl_c / ||u||_inf^4 and monitors the gradient norm
// and the high-frequency tail after every step.

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nls2/functionals.hpp"
#include "nls2/grid.hpp"
#include "nls2/ground_state.hpp"
#include "nls2/moments.hpp"

namespace nls2 {

struct StepControls {
  double dt0 = 1e-3;     // anchor of the dyadic step ladder dt0 * 2^j
  double dt_min = 1e-8;
  double dt_max = 1e-2;
  double cfl_c = 0.1;    // bound on the nonlinear phase rotation per step
  double tail_max = 1e-2;
  double grad_blowup_factor = 4.0;
  bool nonlinear = true;

  void validate() const {
    require(dt_min > 0.0 && dt_min <= dt0 && dt0 <= dt_max, "controls: need 0 < dt_min <= dt0 <= dt_max");
    require(cfl_c > 0.0 && cfl_c <= 1.0, "controls: cfl_c must lie in (0, 1]");
    require(tail_max > 0.0 && tail_max <= 0.1, "controls: tail_max must lie in (0, 0.1]");
    require(grad_blowup_factor > 1.0, "controls: grad_blowup_factor must exceed 1");
  }
};

struct ProbeSchedule {
  double cadence = 0.05;
  bool variance = false;  // also record V and V'
};

/// Fraction of sum |u^|^2 carried by |k| > (2/3) k_Nyquist.
inline double tail_fraction(const Spectrum& s) {
  const double cut = 2.0 / 3.0 * s.grid.nyquist();
  const double cut2 = cut * cut;
  double total = 0.0, tail = 0.0;
  const int n = s.grid.n();
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const double kx = s.grid.k(ix), ky = s.grid.k(iy);
      const double w = std::norm(s.coeffs[s.grid.index(ix, iy)]);
      total += w;
      if (kx * kx + ky * ky > cut2) tail += w;
    }
  return total > 0.0 ? tail / total : 0.0;
}

/// One Strang step of size dt.
inline Field step_strang(const Field& f, double dt, bool nonlinear = true) {
  require(dt > 0.0 && std::isfinite(dt), "step_strang: dt must be positive");
  const SpectralGrid& g = f.grid();
  Spectrum s = dft_forward(f);
  auto half_step = [&] {
    const int n = g.n();
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        const double k2 = g.k(ix) * g.k(ix) + g.k(iy) * g.k(iy);
        const double ph = -0.5 * k2 * dt;
        s.coeffs[g.index(ix, iy)] *= cplx(std::cos(ph), std::sin(ph));
      }
  };
  half_step();
  Field u = dft_inverse(s, f.t());
  if (nonlinear)
    for (auto& z : u.values()) {
      const double m = std::norm(z);
      const double ph = m * m * dt;
      z *= cplx(std::cos(ph), std::sin(ph));
    }
  s = dft_forward(u);
  half_step();
  Field out = dft_inverse(s, f.t() + dt);
  if (!out.all_finite()) fail(ErrorKind::run, "step_strang: non-finite field");
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory record

enum class OutcomeKind { ran_to_t_end, blowup_detected, underresolved };

inline const char* to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::ran_to_t_end: return "ran_to_t_end";
    case OutcomeKind::blowup_detected: return "blowup_detected";
    case OutcomeKind::underresolved: return "underresolved";
  }
  return "?";
}

struct Outcome {
  OutcomeKind kind = OutcomeKind::ran_to_t_end;
  double t = 0.0;  // t_end, t* or the time resolution was lost
  std::string reason;
};

struct TrajectorySample {
  double t = 0.0;
  double dt = 0.0;  // step in use when the sample was taken
  double mass = 0.0;
  double energy = 0.0;
  Vec2 momentum{0.0, 0.0};
  double grad_sq = 0.0;
  double l6_6 = 0.0;
  double mass_drift = 0.0;    // relative
  double energy_drift = 0.0;  // relative to max(|E0|, 1e-3)
  double G = 0.0;
  double ME = 0.0;
  double Pn = 0.0;
  double tail_fraction = 0.0;
  std::optional<double> variance;
  std::optional<double> variance_rate;
  bool event = false;  // taken off the probe cadence by the blow-up monitor
};

class TrajectoryRecord {
 public:
  const std::vector<TrajectorySample>& samples() const { return samples_; }
  const std::optional<Outcome>& outcome() const { return outcome_; }
  int steps() const { return steps_; }
  bool has_variance() const { return has_variance_; }

  void add(TrajectorySample s) {
    require(samples_.empty() || s.t > samples_.back().t, "trajectory: sample times must increase");
    if (s.variance) has_variance_ = true;
    samples_.push_back(std::move(s));
  }

  void set_outcome(Outcome o) {
    if (outcome_) fail(ErrorKind::run, "trajectory: outcome already set");
    outcome_ = std::move(o);
  }

  void count_step() { ++steps_; }

  /// Samples on the probe cadence only.
  std::vector<TrajectorySample> regular_samples() const {
    std::vector<TrajectorySample> out;
    for (const auto& s : samples_)
      if (!s.event) out.push_back(s);
    return out;
  }

  double max_G() const {
    double m = 0.0;
    for (const auto& s : samples_) m = std::max(m, s.G);
    return m;
  }
  double min_G() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& s : samples_) m = std::min(m, s.G);
    return m;
  }

 private:
  std::vector<TrajectorySample> samples_;
  std::optional<Outcome> outcome_;
  int steps_ = 0;
  bool has_variance_ = false;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_csv(std::ostream& os, const TrajectoryRecord& rec) {
  const bool var = rec.has_variance();
  os << "t,grad_sq,l6_6,mass_drift,energy_drift,momx,momy,G,tail_fraction";
  if (var) os << ",variance";
  os << '\n';
  using detail::fmt;
  for (const auto& s : rec.samples()) {
    os << fmt(s.t) << ',' << fmt(s.grad_sq) << ',' << fmt(s.l6_6) << ',' << fmt(s.mass_drift) << ','
       << fmt(s.energy_drift) << ',' << fmt(s.momentum[0]) << ',' << fmt(s.momentum[1]) << ',' << fmt(s.G) << ','
       << fmt(s.tail_fraction);
    if (var) os << ',' << (s.variance ? fmt(*s.variance) : std::string("nan"));
    os << '\n';
  }
}

inline nlohmann::json footer_json(const TrajectoryRecord& rec) {
  nlohmann::json j;
  if (rec.outcome()) {
    j["outcome"] = to_string(rec.outcome()->kind);
    j["t"] = rec.outcome()->t;
    j["reason"] = rec.outcome()->reason;
  } else {
    j["outcome"] = nullptr;
  }
  j["steps"] = rec.steps();
  j["samples"] = rec.samples().size();
  return j;
}

/// First time t* at which two consecutive samples both carry
/// grad_sq >= factor * grad_sq(0) while still resolved (tail <= tail_max).
inline std::optional<double> detect_blowup(const std::vector<TrajectorySample>& samples, const StepControls& c) {
  if (samples.size() < 2) return std::nullopt;
  const double threshold = c.grad_blowup_factor * samples.front().grad_sq;
  auto fires = [&](const TrajectorySample& s) { return s.grad_sq >= threshold && s.tail_fraction <= c.tail_max; };
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (fires(samples[i - 1]) && fires(samples[i])) return samples[i - 1].t;
  return std::nullopt;
}

inline std::optional<double> detect_blowup(const TrajectoryRecord& rec, const StepControls& c) {
  return detect_blowup(rec.samples(), c);
}

// ---------------------------------------------------------------------------
// Driver

/// Called with the field and its sample at every recorded sample.
using ProbeObserver = std::function<void(const Field&, const TrajectorySample&)>;

namespace detail {

class SplitStepper {
 public:
  SplitStepper(const SpectralGrid& grid, bool nonlinear) : grid_(grid), nonlinear_(nonlinear) {
    const std::size_t size = grid.size();
    k2_.resize(size);
    high_.resize(size);
    const double cut = 2.0 / 3.0 * grid.nyquist();
    for (int iy = 0; iy < grid.n(); ++iy)
      for (int ix = 0; ix < grid.n(); ++ix) {
        const std::size_t i = grid.index(ix, iy);
        const double k2 = grid.k(ix) * grid.k(ix) + grid.k(iy) * grid.k(iy);
        k2_[i] = k2;
        high_[i] = k2 > cut * cut;
      }
  }

  // phase exp(-i |k|^2 dt / 2); ladder steps are cached
  const cvec& half_phase(double dt) {
    auto it = cache_.find(dt);
    if (it != cache_.end()) return it->second;
    if (cache_.size() > 24) cache_.clear();
    cvec p(grid_.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double ph = -0.5 * k2_[i] * dt;
      p[i] = cplx(std::cos(ph), std::sin(ph));
    }
    return cache_.emplace(dt, std::move(p)).first->second;
  }

  struct Monitor {
    double mass_sum = 0.0;  // sum |u^|^2
    double grad_sum = 0.0;  // sum |k|^2 |u^|^2
    double tail = 0.0;
    double sup_abs = 0.0;   // ||u||_inf entering the nonlinear substep
  };

  // advances uhat in place; returns the monitor of the new state
  Monitor step(cvec& uhat, double dt) {
    const cvec& p = half_phase(dt);
    const std::size_t size = uhat.size();
    for (std::size_t i = 0; i < size; ++i) uhat[i] = mul(uhat[i], p[i]);
    Monitor mon;
    fft_backward_inplace(grid_, uhat);
    const double inv = 1.0 / static_cast<double>(size);
    double sup2 = 0.0;
    for (auto& z : uhat) {
      const double re = z.real() * inv, im = z.imag() * inv;
      const double m = re * re + im * im;
      sup2 = std::max(sup2, m);
      if (nonlinear_) {
        const double ph = m * m * dt;
        const double c = std::cos(ph), s = std::sin(ph);
        z = cplx(re * c - im * s, re * s + im * c);
      } else {
        z = cplx(re, im);
      }
    }
    mon.sup_abs = std::sqrt(sup2);
    fft_forward_inplace(grid_, uhat);
    double high = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
      const cplx z = mul(uhat[i], p[i]);
      uhat[i] = z;
      const double w = z.real() * z.real() + z.imag() * z.imag();
      mon.mass_sum += w;
      mon.grad_sum += k2_[i] * w;
      if (high_[i]) high += w;
    }
    mon.tail = mon.mass_sum > 0.0 ? high / mon.mass_sum : 0.0;
    return mon;
  }

 private:
  static cplx mul(const cplx& a, const cplx& b) {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
  }

  SpectralGrid grid_;
  bool nonlinear_;
  std::vector<double> k2_;
  std::vector<char> high_;
  std::map<double, cvec> cache_;
};

}  // namespace detail

/// Energy evaluated on a 2x zero-padded grid when the tail is not negligible.
inline double diagnostic_energy(const Field& f, double grad_sq, double tail) {
  if (tail <= 1e-6) return 0.5 * grad_sq - lp_norm_p(f, 6) / 6.0;
  return 0.5 * grad_sq - lp_norm_p(zero_padded(f, 2), 6) / 6.0;
}

/// Integrates from f.t() to t_end. Samples are recorded at multiples of the
/// probe cadence and, once the gradient monitor trips, after every step.
inline TrajectoryRecord evolve(const Field& f, double t_end, const StepControls& controls, const GroundStateNorms& gs,
                               const ProbeSchedule& probes = {}, const ProbeObserver& observer = {}) {
  controls.validate();
  require_certified(gs, "evolve");
  require_finite(f, "evolve");
  require(t_end > f.t(), "evolve: t_end must exceed the initial time");
  require(probes.cadence > 0.0, "evolve: probe cadence must be positive");

  const SpectralGrid& g = f.grid();
  detail::SplitStepper stepper(g, controls.nonlinear);
  TrajectoryRecord rec;

  Spectrum state = dft_forward(f);
  double t = f.t();
  double mass0 = 0.0, energy0 = 0.0, grad0 = 0.0;

  auto sample_at = [&](double time, double dt, double tail, bool event) {
    Field u = dft_inverse(state, time);
    TrajectorySample s;
    s.t = time;
    s.dt = dt;
    s.event = event;
    s.mass = l2_norm_sq(u);
    s.grad_sq = gradient_norm_sq(state);
    s.l6_6 = lp_norm_p(u, 6);
    s.tail_fraction = tail;
    s.energy = diagnostic_energy(u, s.grad_sq, tail);
    s.momentum = momentum(state);
    if (rec.samples().empty()) {
      mass0 = s.mass;
      energy0 = s.energy;
      grad0 = s.grad_sq;
    }
    s.mass_drift = mass0 > 0.0 ? std::abs(s.mass - mass0) / mass0 : 0.0;
    s.energy_drift = std::abs(s.energy - energy0) / std::max(std::abs(energy0), 1e-3);
    const RenormalizedSet r = renormalized(s.mass, s.grad_sq, s.energy, s.momentum, gs);
    s.G = r.G;
    s.ME = r.ME;
    s.Pn = r.Pn;
    if (probes.variance && has_finite_variance(u)) {
      s.variance = variance(u);
      s.variance_rate = variance_rate(u);
    }
    if (observer) observer(u, s);
    rec.add(s);
  };

  const double tail_initial = tail_fraction(state);
  const double sup0 = max_abs(f);
  sample_at(t, controls.dt0, tail_initial, false);
  if (tail_initial > controls.tail_max) {
    rec.set_outcome({OutcomeKind::underresolved, t, "initial tail fraction exceeds tail_max"});
    return rec;
  }

  // dt from the dyadic ladder dt0 * 2^j, capped by dt_max and cfl_c / ||u||^4
  auto ladder_step = [&](double sup_abs) {
    const double s4 = sup_abs * sup_abs * sup_abs * sup_abs;
    const double target =
        controls.nonlinear && s4 > 0.0 ? std::min(controls.dt_max, controls.cfl_c / s4) : controls.dt_max;
    double dt = controls.dt0;
    while (dt * 2.0 <= target) dt *= 2.0;
    while (dt > target && dt >= 2.0 * controls.dt_min) dt *= 0.5;
    return dt;
  };

  double sup_abs = sup0;
  long probe_index = 1;
  const double t_start = t;
  auto next_probe = [&] { return std::min(t_end, t_start + static_cast<double>(probe_index) * probes.cadence); };
  bool tripped = false;

  while (true) {
    double dt = ladder_step(sup_abs);
    const double s4 = std::pow(sup_abs, 4);
    if (controls.nonlinear && dt * s4 > controls.cfl_c * (1.0 + 1e-12)) {
      rec.set_outcome({OutcomeKind::underresolved, t, "dt_min reached"});
      return rec;
    }
    const double target = next_probe();
    bool lands = false;
    if (t + dt >= target - 1e-6 * dt) {
      dt = target - t;
      lands = true;
    }
    const auto mon = stepper.step(state.coeffs, dt);
    rec.count_step();
    t = lands ? target : t + dt;
    sup_abs = mon.sup_abs;

    const double grad = mon.grad_sum * g.cell_area() / static_cast<double>(g.size());
    if (!std::isfinite(grad) || !std::isfinite(mon.mass_sum)) {
      rec.set_outcome({OutcomeKind::underresolved, t, "non-finite field"});
      return rec;
    }
    const bool over = grad >= controls.grad_blowup_factor * grad0;
    if (mon.tail > controls.tail_max) {
      if (over || tripped) sample_at(t, dt, mon.tail, !lands);
      if (const auto hit = detect_blowup(rec, controls)) {
        rec.set_outcome({OutcomeKind::blowup_detected, *hit, "gradient growth"});
        return rec;
      }
      rec.set_outcome({OutcomeKind::underresolved, t, "spectral tail exceeds tail_max"});
      return rec;
    }
    if (lands || over) {
      sample_at(t, dt, mon.tail, !lands);
      if (lands) ++probe_index;
      tripped = over;
      if (over) {
        if (const auto hit = detect_blowup(rec, controls)) {
          rec.set_outcome({OutcomeKind::blowup_detected, *hit, "gradient growth"});
          return rec;
        }
      }
    }
    if (lands && t >= t_end) {
      rec.set_outcome({OutcomeKind::ran_to_t_end, t, ""});
      return rec;
    }
  }
}

inline TrajectoryRecord evolve(const Field& f, double t_end, const StepControls& controls, const GroundState& gs,
                               const ProbeSchedule& probes = {}, const ProbeObserver& observer = {}) {
  return evolve(f, t_end, controls, gs.norms, probes, observer);
}

}  // namespace nls2
