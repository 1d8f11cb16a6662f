#pragma once

// Threshold classification of initial data by the boost-invariant
// combinations ME - 2P^2 and G^2 - P^2, and reconciliation of the prediction
// with a simulated trajectory.

#include <cmath>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "nls2/diagnostics.hpp"
#include "nls2/evolution.hpp"
#include "nls2/functionals.hpp"
#include "nls2/ground_state.hpp"
#include "nls2/moments.hpp"

namespace nls2 {

enum class VerdictCase { scatter, blowup_or_diverge, negative_energy_blowup, out_of_scope, boundary, forbidden };

inline const char* to_string(VerdictCase c) {
  switch (c) {
    case VerdictCase::scatter: return "scatter";
    case VerdictCase::blowup_or_diverge: return "blowup_or_diverge";
    case VerdictCase::negative_energy_blowup: return "negative_energy_blowup";
    case VerdictCase::out_of_scope: return "out_of_scope";
    case VerdictCase::boundary: return "boundary";
    case VerdictCase::forbidden: return "forbidden";
  }
  return "?";
}

struct Verdict {
  VerdictCase kase = VerdictCase::boundary;
  double ME = 0.0;
  double G0 = 0.0;
  double Pn = 0.0;
  double me_minus_2p2 = 0.0;
  double g2_minus_p2 = 0.0;
  bool radial = false;
  bool finite_variance = false;
};

inline constexpr double kClassifyTol = 1e-4;
inline constexpr double kWindowTol = 1e-6;

/// Decision from renormalized quantities alone.
inline VerdictCase decide(const RenormalizedSet& r, double energy, double tol = kClassifyTol) {
  const double me2 = r.ME - 2.0 * r.Pn * r.Pn;
  const double g2 = r.G * r.G - r.Pn * r.Pn;
  // the window for the momentum-free reduction
  RenormalizedSet reduced{std::sqrt(std::max(g2, 0.0)), 0.0, {0.0, 0.0}, me2};
  if (window_check(reduced, kWindowTol).status != WindowStatus::inside) return VerdictCase::forbidden;
  if (energy < 0.0) return VerdictCase::negative_energy_blowup;
  if (me2 >= 1.0 - tol) return me2 > 1.0 + tol ? VerdictCase::out_of_scope : VerdictCase::boundary;
  if (g2 < 1.0 - tol) return VerdictCase::scatter;
  if (g2 > 1.0 + tol) return VerdictCase::blowup_or_diverge;
  return VerdictCase::boundary;
}

inline Verdict classify(const Field& f, const GroundStateNorms& gs, double tol = kClassifyTol) {
  require_certified(gs, "classify");
  require(tol > 0.0 && tol < 1.0, "classify: tol must lie in (0, 1)");
  const ConservedSet c = conserved(f);
  const RenormalizedSet r = renormalized(f, gs);
  Verdict v;
  v.ME = r.ME;
  v.G0 = r.G;
  v.Pn = r.Pn;
  v.me_minus_2p2 = r.ME - 2.0 * r.Pn * r.Pn;
  v.g2_minus_p2 = r.G * r.G - r.Pn * r.Pn;
  v.kase = decide(r, c.energy, tol);
  v.radial = is_radial(f);
  v.finite_variance = has_finite_variance(f);
  return v;
}

inline Verdict classify(const Field& f, const GroundState& gs, double tol = kClassifyTol) {
  return classify(f, gs.norms, tol);
}

inline nlohmann::json to_json(const Verdict& v) {
  return {{"case", to_string(v.kase)},      {"ME", v.ME},
          {"G0", v.G0},                     {"Pn", v.Pn},
          {"me_minus_2p2", v.me_minus_2p2}, {"g2_minus_p2", v.g2_minus_p2},
          {"radial", v.radial},             {"finite_variance", v.finite_variance}};
}

enum class Agreement { agree, disagree, inconclusive };

inline const char* to_string(Agreement a) {
  switch (a) {
    case Agreement::agree: return "agree";
    case Agreement::disagree: return "disagree";
    case Agreement::inconclusive: return "inconclusive";
  }
  return "?";
}

/// Compares the prediction with the simulated outcome. A scatter verdict needs
/// the scattering report of the same run.
inline Agreement reconcile(const Verdict& v, const TrajectoryRecord& rec, const StepControls& controls,
                           const std::optional<ScatteringReport>& scattering = std::nullopt) {
  require(rec.outcome().has_value(), "reconcile: trajectory is not complete");
  const OutcomeKind outcome = rec.outcome()->kind;
  if (outcome == OutcomeKind::underresolved) return Agreement::inconclusive;
  switch (v.kase) {
    case VerdictCase::scatter:
      if (outcome == OutcomeKind::blowup_detected) return Agreement::disagree;
      if (!scattering) return Agreement::inconclusive;
      return scattering->scatter_like ? Agreement::agree : Agreement::disagree;
    case VerdictCase::blowup_or_diverge:
    case VerdictCase::negative_energy_blowup: {
      if (outcome == OutcomeKind::blowup_detected) return Agreement::agree;
      const double grad0 = rec.samples().front().grad_sq;
      double peak = 0.0;
      for (const auto& s : rec.samples()) peak = std::max(peak, s.grad_sq);
      return peak >= controls.grad_blowup_factor * grad0 ? Agreement::agree : Agreement::disagree;
    }
    case VerdictCase::out_of_scope:
    case VerdictCase::boundary:
    case VerdictCase::forbidden: return Agreement::inconclusive;
  }
  return Agreement::inconclusive;
}

}  // namespace nls2
