#pragma once

// Experiment orchestration: JSON configuration with schema validation, the
// ground-state cache, single runs (classify, evolve, diagnose, reconcile),
// parallel parameter sweeps with resume, and the self-test battery.

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "nls2/classifier.hpp"
#include "nls2/diagnostics.hpp"
#include "nls2/evolution.hpp"
#include "nls2/functionals.hpp"
#include "nls2/grid.hpp"
#include "nls2/ground_state.hpp"

namespace nls2 {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration schema

struct KeyDoc {
  const char* path;
  json fallback;
  const char* doc;
};

inline const std::vector<KeyDoc>& config_schema() {
  static const std::vector<KeyDoc> schema = {
      {"grid.n", 512, "points per axis of the evolution grid (power of two >= 16)"},
      {"grid.L", 64.0, "box length of the evolution grid"},
      {"ground_state.cache", "", "ground-state cache path (checkpoint; sidecar at <path>.json); empty solves in memory"},
      {"ground_state.n", 512, "points per axis of the certification grid"},
      {"ground_state.L", 48.0, "box length of the certification grid"},
      {"ground_state.tol", 1e-10, "Petviashvili fixed-point residual tolerance"},
      {"ground_state.max_iter", 1000, "Petviashvili iteration cap"},
      {"ground_state.shooting_tol", 1e-12, "radial shooting tolerance, in [1e-12, 1e-6]"},
      {"initial_data.family", "scaled_Q", "scaled_Q | perturbed_Q | gaussian"},
      {"initial_data.lambda", 1.0, "scale of lambda Q(lambda x) (scaled_Q, perturbed_Q)"},
      {"initial_data.epsilon", 1e-3, "relative radial perturbation (perturbed_Q)"},
      {"initial_data.amplitude", 1.0, "gaussian amplitude A in A exp(-|x|^2 / (2 w^2))"},
      {"initial_data.width", 1.0, "gaussian width w"},
      {"initial_data.boost", json::array({0.0, 0.0}), "Galilean boost xi applied to the datum"},
      {"initial_data.boundary_tol", 1e-12, "largest |u| tolerated on the periodic seam"},
      {"controls.dt0", 1e-3, "anchor of the dyadic step ladder dt0 * 2^j"},
      {"controls.dt_min", 1e-8, "smallest admissible step"},
      {"controls.dt_max", 1e-2, "largest step"},
      {"controls.cfl_c", 0.1, "bound on the nonlinear phase per step, in (0, 1]"},
      {"controls.tail_max", 1e-2, "largest admissible spectral tail fraction, in (0, 0.1]"},
      {"controls.grad_blowup_factor", 4.0, "gradient-norm-squared growth that declares blow-up"},
      {"controls.nonlinear", true, "false runs the free flow"},
      {"probes.cadence", 0.05, "probe spacing in time"},
      {"probes.variance", false, "record variance and V' at probes"},
      {"t_end", 5.0, "final time"},
      {"diagnostics.classify_tol", 1e-4, "tolerance band on the decision quantities"},
      {"diagnostics.scattering.enabled", false, "run the scattering detector"},
      {"diagnostics.scattering.T1", 5.0, "window start (a probe time)"},
      {"diagnostics.scattering.T2", 10.0, "window end (a probe time, <= t_end)"},
      {"diagnostics.localized.enabled", false, "record z_R and A_R at probes (needs probes.variance)"},
      {"diagnostics.localized.R", 12.0, "cutoff radius"},
      {"diagnostics.blowup_bound.enabled", false, "emit the localized blow-up time bound"},
      {"diagnostics.blowup_bound.R", 12.0, "cutoff radius"},
      {"diagnostics.blowup_bound.kappa", 0.0, "kappa; 0 picks half of min(lambda - 1, kappa0)"},
      {"diagnostics.blowup_bound.kappa0", kKappa0, "the absolute constant kappa0"},
      {"sweep.param", "lambda", "initial_data key varied by a sweep"},
      {"sweep.values", json::array(), "values taken by sweep.param, one row each"},
      {"seed", 0, "seed of randomized perturbations"},
      {"output", "out", "output directory"},
  };
  return schema;
}

/// Defaults as a key tree.
inline json default_config() {
  json j = json::object();
  for (const auto& k : config_schema()) {
    std::string p = "/" + std::string(k.path);
    std::replace(p.begin(), p.end(), '.', '/');
    j[json::json_pointer(p)] = k.fallback;
  }
  return j;
}

inline std::string explain_config() {
  std::ostringstream os;
  os << "Configuration keys (JSON key tree, dotted paths below), with defaults:\n\n";
  std::size_t width = 0;
  for (const auto& k : config_schema()) width = std::max(width, std::string(k.path).size());
  for (const auto& k : config_schema())
    os << "  " << std::left << std::setw(static_cast<int>(width) + 2) << k.path << std::setw(14) << k.fallback.dump()
       << k.doc << '\n';
  return os.str();
}

namespace detail {

inline json::json_pointer pointer(const std::string& dotted) {
  std::string p = "/" + dotted;
  std::replace(p.begin(), p.end(), '.', '/');
  return json::json_pointer(p);
}

inline void collect_unknown(const json& node, const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    bool leaf = false, branch = false;
    for (const auto& k : config_schema()) {
      const std::string kp = k.path;
      if (kp == path) leaf = true;
      if (kp.rfind(path + ".", 0) == 0) branch = true;
    }
    if (leaf) continue;
    if (branch && it.value().is_object()) {
      collect_unknown(it.value(), path, out);
      continue;
    }
    out.push_back(path);
  }
}

inline bool same_kind(const json& a, const json& fallback) {
  if (fallback.is_number()) return a.is_number();
  if (fallback.is_boolean()) return a.is_boolean();
  if (fallback.is_string()) return a.is_string();
  if (fallback.is_array()) return a.is_array();
  return true;
}

}  // namespace detail

/// User JSON merged over the defaults. Every unknown key and every type
/// mismatch is reported in a single validation error.
inline json resolve_config(const json& user) {
  require(user.is_object(), "config: top level must be a JSON object");
  std::vector<std::string> unknown;
  detail::collect_unknown(user, "", unknown);
  std::vector<std::string> problems;
  for (const auto& u : unknown) problems.push_back("unknown key '" + u + "'");
  json merged = default_config();
  for (const auto& k : config_schema()) {
    const auto ptr = detail::pointer(k.path);
    if (!user.contains(ptr)) continue;
    const json& v = user.at(ptr);
    if (!detail::same_kind(v, k.fallback)) {
      problems.push_back("key '" + std::string(k.path) + "' expects " + k.fallback.type_name() + ", got " + v.type_name());
      continue;
    }
    merged[ptr] = v;
  }
  if (!problems.empty()) {
    std::string msg = "config: invalid keys:";
    for (const auto& p : problems) msg += "\n  " + p;
    fail(ErrorKind::validation, msg);
  }
  return merged;
}

inline json load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::validation, "config: cannot open " + path);
  json user;
  try {
    is >> user;
  } catch (const json::parse_error& e) {
    fail(ErrorKind::validation, "config: " + path + " is not valid JSON: " + e.what());
  }
  return resolve_config(user);
}

template <typename T>
T cfg(const json& c, const char* dotted) {
  return c.at(detail::pointer(dotted)).get<T>();
}

inline StepControls controls_from(const json& c) {
  StepControls s;
  s.dt0 = cfg<double>(c, "controls.dt0");
  s.dt_min = cfg<double>(c, "controls.dt_min");
  s.dt_max = cfg<double>(c, "controls.dt_max");
  s.cfl_c = cfg<double>(c, "controls.cfl_c");
  s.tail_max = cfg<double>(c, "controls.tail_max");
  s.grad_blowup_factor = cfg<double>(c, "controls.grad_blowup_factor");
  s.nonlinear = cfg<bool>(c, "controls.nonlinear");
  s.validate();
  return s;
}

inline InitialData initial_data_from(const json& c) {
  const auto family = cfg<std::string>(c, "initial_data.family");
  InitialData base;
  if (family == "scaled_Q") {
    base = ScaledQ{cfg<double>(c, "initial_data.lambda")};
  } else if (family == "perturbed_Q") {
    base = PerturbedQ{cfg<double>(c, "initial_data.lambda"), cfg<double>(c, "initial_data.epsilon"),
                      cfg<std::uint64_t>(c, "seed")};
  } else if (family == "gaussian") {
    base = Gaussian{cfg<double>(c, "initial_data.amplitude"), cfg<double>(c, "initial_data.width")};
  } else {
    fail(ErrorKind::validation, "config: unknown initial_data.family '" + family + "'");
  }
  const auto xi = cfg<std::vector<double>>(c, "initial_data.boost");
  require(xi.size() == 2, "config: initial_data.boost must have two entries");
  if (xi[0] == 0.0 && xi[1] == 0.0) return base;
  return Boosted{std::make_shared<const InitialData>(base), {xi[0], xi[1]}};
}

// ---------------------------------------------------------------------------
// Ground-state cache

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::validation, "cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline json sidecar_json(const GroundState& gs, const std::string& hash) {
  const auto res = gs.residuals.as_array();
  return {{"massQ", gs.norms.massQ},
          {"gradQ_sq", gs.norms.gradQ_sq},
          {"l6Q_6", gs.norms.l6Q_6},
          {"c_gn", gs.norms.c_gn},
          {"residuals", json(std::vector<double>(res.begin(), res.end()))},
          {"method", gs.method},
          {"tol", gs.tol},
          {"n", gs.field.grid().n()},
          {"L", gs.field.grid().length()},
          {"oracle_sup_error", gs.oracle_sup_error},
          {"fixed_point_residual", gs.fixed_point_residual},
          {"iterations", gs.iterations},
          {"certified", gs.certified()},
          {"hash", hash}};
}

inline GroundStateOptions ground_options_from(const json& c) {
  GroundStateOptions opt;
  opt.tol = cfg<double>(c, "ground_state.tol");
  opt.max_iter = cfg<int>(c, "ground_state.max_iter");
  opt.shooting.tol = cfg<double>(c, "ground_state.shooting_tol");
  return opt;
}

inline void write_ground_cache(const std::string& path, const GroundState& gs) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_checkpoint(path, gs.field);
  const std::string hash = hex64(fnv1a(read_bytes(path)));
  std::ofstream os(path + ".json");
  os << sidecar_json(gs, hash).dump(2) << '\n';
  if (!os) fail(ErrorKind::run, "ground cache: cannot write sidecar for " + path);
}

/// Loads a cached ground state, checks the hash and the stored norms, and
/// recertifies it against the shooting oracle.
inline GroundState read_ground_cache(const std::string& path, const ShootingOptions& shooting) {
  std::ifstream side(path + ".json");
  if (!side) fail(ErrorKind::validation, "ground cache: missing sidecar " + path + ".json");
  json meta;
  try {
    side >> meta;
  } catch (const json::parse_error& e) {
    fail(ErrorKind::validation, std::string("ground cache: bad sidecar: ") + e.what());
  }
  const std::string hash = hex64(fnv1a(read_bytes(path)));
  if (meta.value("hash", std::string()) != hash)
    fail(ErrorKind::validation, "ground cache: hash mismatch for " + path + " (refusing to use it)");
  GroundState gs{read_checkpoint(path), std::nullopt, {}, {}, 0.0, 0.0, 0, 0.0, meta.value("method", "petviashvili"),
                 meta.value("tol", 0.0)};
  gs.norms = norms_of(gs.field);
  for (const char* key : {"massQ", "gradQ_sq", "l6Q_6"}) {
    const double stored = meta.at(key).get<double>();
    const double fresh = key == std::string("massQ") ? gs.norms.massQ
                         : key == std::string("gradQ_sq") ? gs.norms.gradQ_sq
                                                          : gs.norms.l6Q_6;
    if (std::abs(stored - fresh) > 1e-12 * std::abs(stored))
      fail(ErrorKind::validation, std::string("ground cache: stored ") + key + " disagrees with the field");
  }
  gs.fixed_point_residual = meta.value("fixed_point_residual", 0.0);
  gs.iterations = meta.value("iterations", 0);
  gs.residuals = pohozhaev_check(gs.norms);
  gs.profile = solve_radial_shooting(shooting);
  gs.oracle_sup_error = profile_sup_error(gs.field, *gs.profile);
  gs.norms.certified = gs.residuals.max() <= kPohozhaevTolerance && gs.oracle_sup_error <= kOracleTolerance;
  return gs;
}

inline void require_ground_certified(const GroundState& gs) {
  if (!gs.certified())
    fail(ErrorKind::certification, "ground state failed certification: Pohozhaev residual " +
                                       detail::fmt(gs.residuals.max()) + ", oracle sup error " +
                                       detail::fmt(gs.oracle_sup_error));
}

/// Solves and certifies the ground state; writes the cache when a path is set.
inline GroundState cmd_ground(const json& c) {
  const SpectralGrid grid(cfg<int>(c, "ground_state.n"), cfg<double>(c, "ground_state.L"));
  GroundState gs = compute_ground_state(grid, ground_options_from(c));
  require_ground_certified(gs);
  const auto cache = cfg<std::string>(c, "ground_state.cache");
  if (!cache.empty()) write_ground_cache(cache, gs);
  return gs;
}

/// Cached ground state when available, otherwise a fresh solve.
inline GroundState obtain_ground_state(const json& c) {
  const auto cache = cfg<std::string>(c, "ground_state.cache");
  if (!cache.empty() && fs::exists(cache)) {
    GroundState gs = read_ground_cache(cache, ground_options_from(c).shooting);
    require_ground_certified(gs);
    return gs;
  }
  return cmd_ground(c);
}

// ---------------------------------------------------------------------------
// Single run

struct RunResult {
  Verdict verdict;
  ConservedSet initial;
  RenormalizedSet initial_renormalized;
  TrajectoryRecord record;
  std::optional<ScatteringReport> scattering;
  std::optional<BlowupBound> bound;
  std::optional<VirialTrace> virial;
  std::vector<LocalizedVariance> localized;
  Agreement agreement = Agreement::inconclusive;
  double worst_window_margin = 0.0;  // min over samples of both window margins
  bool trapping_ok = true;
  std::optional<bool> margins_ok;  // energy/gradient margins, below-threshold runs
  std::optional<double> t_star;
};

inline json to_json(const RunResult& r) {
  json j;
  j["verdict"] = to_json(r.verdict);
  j["initial"] = to_json(r.initial, r.initial_renormalized, window_margins(r.initial_renormalized));
  j["trajectory"] = footer_json(r.record);
  j["agreement"] = to_string(r.agreement);
  j["worst_window_margin"] = r.worst_window_margin;
  j["trapping_ok"] = r.trapping_ok;
  j["max_G"] = r.record.max_G();
  j["min_G"] = r.record.min_G();
  j["t_star"] = r.t_star ? json(*r.t_star) : json(nullptr);
  if (r.margins_ok) j["energy_gradient_margins_ok"] = *r.margins_ok;
  if (r.scattering) j["scattering"] = to_json(*r.scattering);
  if (r.bound) j["blowup_bound"] = to_json(*r.bound);
  if (r.virial) j["virial_max_relative_mismatch"] = r.virial->max_relative_mismatch();
  return j;
}

namespace detail {

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::trunc);
  os << text;
  if (!os) fail(ErrorKind::run, "cannot write " + p.string());
}

}  // namespace detail

/// Classify, evolve, diagnose and reconcile one datum. Artifacts go to
/// `out_dir` when it is non-empty.
inline RunResult cmd_run(const json& c, const GroundState& gs, const std::string& out_dir = "") {
  require_ground_certified(gs);
  const SpectralGrid grid(cfg<int>(c, "grid.n"), cfg<double>(c, "grid.L"));
  const StepControls controls = controls_from(c);
  const Field u0 = make_initial_data(initial_data_from(c), grid, gs, cfg<double>(c, "initial_data.boundary_tol"));
  const double t_end = cfg<double>(c, "t_end");
  ProbeSchedule probes{cfg<double>(c, "probes.cadence"), cfg<bool>(c, "probes.variance")};

  RunResult res;
  res.verdict = classify(u0, gs, cfg<double>(c, "diagnostics.classify_tol"));
  res.initial = conserved(u0);
  res.initial_renormalized = renormalized(u0, gs.norms);

  if (cfg<bool>(c, "diagnostics.blowup_bound.enabled")) {
    const double R = cfg<double>(c, "diagnostics.blowup_bound.R");
    const double kappa0 = cfg<double>(c, "diagnostics.blowup_bound.kappa0");
    double kappa = cfg<double>(c, "diagnostics.blowup_bound.kappa");
    if (kappa == 0.0) {
      const double me = std::max(res.initial_renormalized.ME, 0.0);
      const double lambda = std::sqrt(1.0 + std::sqrt(std::max(1.0 - me, 0.0)));
      kappa = 0.5 * std::min(lambda - 1.0, kappa0);
    }
    res.bound = blowup_time_bound(u0, gs, R, kappa, kappa0);
  }

  std::optional<ScatteringMonitor> monitor;
  if (cfg<bool>(c, "diagnostics.scattering.enabled"))
    monitor.emplace(cfg<double>(c, "diagnostics.scattering.T1"), cfg<double>(c, "diagnostics.scattering.T2"));
  const bool localized = cfg<bool>(c, "diagnostics.localized.enabled");
  require(!localized || probes.variance, "config: diagnostics.localized needs probes.variance");
  const Cutoff phi(CutoffKind::phi, cfg<double>(c, "diagnostics.localized.R"));

  ProbeObserver observer = [&](const Field& u, const TrajectorySample& s) {
    if (monitor) monitor->observe(u, s);
    if (localized && !s.event) res.localized.push_back(localized_variance(u, phi));
  };
  res.record = evolve(u0, t_end, controls, gs.norms, probes, observer);
  const auto& outcome = *res.record.outcome();
  if (outcome.kind == OutcomeKind::blowup_detected) res.t_star = outcome.t;

  if (monitor && outcome.kind == OutcomeKind::ran_to_t_end) res.scattering = scattering_detect(res.record, *monitor);

  // the virial trace needs uniformly spaced samples that all carry a variance
  if (probes.variance) {
    auto regular = res.record.regular_samples();
    std::size_t usable = 0;
    while (usable < regular.size() && regular[usable].variance) ++usable;
    if (outcome.kind != OutcomeKind::ran_to_t_end && usable == regular.size() && usable > 0) --usable;  // last may be short
    if (usable >= 5) {
      regular.resize(usable);
      std::vector<LocalizedVariance> loc;
      if (localized) loc.assign(res.localized.begin(), res.localized.begin() + static_cast<std::ptrdiff_t>(usable));
      res.virial = virial_check_full(regular, loc);
    }
  }

  res.worst_window_margin = std::numeric_limits<double>::infinity();
  for (const auto& s : res.record.samples()) {
    const auto w = window_margins(RenormalizedSet{std::sqrt(std::max(s.G * s.G - s.Pn * s.Pn, 0.0)), 0.0, {0.0, 0.0},
                                                  s.ME - 2.0 * s.Pn * s.Pn});
    res.worst_window_margin = std::min({res.worst_window_margin, w.lower_margin, w.upper_margin});
  }

  const double p2 = res.verdict.Pn * res.verdict.Pn;
  if (res.verdict.kase == VerdictCase::scatter) {
    for (const auto& s : res.record.samples())
      if (s.G * s.G - p2 >= 1.0) res.trapping_ok = false;
    res.margins_ok = true;
    if (p2 == 0.0 || res.verdict.Pn < 1e-8) {
      for (const auto& m : energy_gradient_bounds_check(res.record))
        if (!m.holds()) res.margins_ok = false;
    }
  } else if (res.verdict.kase == VerdictCase::blowup_or_diverge) {
    for (const auto& s : res.record.samples())
      if (s.G * s.G - p2 <= 1.0) res.trapping_ok = false;
  }
  res.agreement = reconcile(res.verdict, res.record, controls, res.scattering);

  if (!out_dir.empty()) {
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    std::ostringstream csv;
    write_csv(csv, res.record);
    detail::write_text(dir / "trajectory.csv", csv.str());
    detail::write_text(dir / "trajectory.json", footer_json(res.record).dump(2) + "\n");
    detail::write_text(dir / "verdict.json", to_json(res.verdict).dump(2) + "\n");
    detail::write_text(dir / "report.json", to_json(res).dump(2) + "\n");
    if (res.scattering) detail::write_text(dir / "scattering.json", to_json(*res.scattering).dump(2) + "\n");
    if (res.virial) {
      std::ostringstream v;
      write_csv(v, *res.virial);
      detail::write_text(dir / "virial.csv", v.str());
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Sweeps

struct RegionMapRow {
  std::size_t index = 0;
  double value = 0.0;  // swept parameter
  double ME = 0.0;
  double G0_sq = 0.0;
  double Pn = 0.0;
  std::string verdict;
  std::string outcome;
  std::optional<double> t_star;
  std::optional<double> l6_decay_factor;
  std::string agreement;
  bool window_ok = false;
  bool trapping_ok = false;
  std::string error;
};

inline json to_json(const RegionMapRow& r) {
  return {{"index", r.index},
          {"value", r.value},
          {"ME", r.ME},
          {"G0_sq", r.G0_sq},
          {"Pn", r.Pn},
          {"verdict", r.verdict},
          {"outcome", r.outcome},
          {"t_star", r.t_star ? json(*r.t_star) : json(nullptr)},
          {"l6_decay_factor", r.l6_decay_factor ? json(*r.l6_decay_factor) : json(nullptr)},
          {"agreement", r.agreement},
          {"window_ok", r.window_ok},
          {"trapping_ok", r.trapping_ok},
          {"error", r.error}};
}

inline RegionMapRow row_from_json(const json& j) {
  RegionMapRow r;
  r.index = j.at("index").get<std::size_t>();
  r.value = j.at("value").get<double>();
  r.ME = j.at("ME").get<double>();
  r.G0_sq = j.at("G0_sq").get<double>();
  r.Pn = j.at("Pn").get<double>();
  r.verdict = j.at("verdict").get<std::string>();
  r.outcome = j.at("outcome").get<std::string>();
  if (!j.at("t_star").is_null()) r.t_star = j.at("t_star").get<double>();
  if (!j.at("l6_decay_factor").is_null()) r.l6_decay_factor = j.at("l6_decay_factor").get<double>();
  r.agreement = j.at("agreement").get<std::string>();
  r.window_ok = j.at("window_ok").get<bool>();
  r.trapping_ok = j.at("trapping_ok").get<bool>();
  r.error = j.at("error").get<std::string>();
  return r;
}

inline std::string csv_header() {
  return "index,value,ME,G0_sq,Pn,verdict,outcome,t_star,l6_decay_factor,agreement,window_ok,trapping_ok,error\n";
}

inline std::string csv_line(const RegionMapRow& r) {
  using detail::fmt;
  std::string err = r.error;
  std::replace(err.begin(), err.end(), ',', ';');
  std::replace(err.begin(), err.end(), '\n', ' ');
  std::ostringstream os;
  os << r.index << ',' << fmt(r.value) << ',' << fmt(r.ME) << ',' << fmt(r.G0_sq) << ',' << fmt(r.Pn) << ','
     << r.verdict << ',' << r.outcome << ',' << (r.t_star ? fmt(*r.t_star) : "") << ','
     << (r.l6_decay_factor ? fmt(*r.l6_decay_factor) : "") << ',' << r.agreement << ','
     << (r.window_ok ? "true" : "false") << ',' << (r.trapping_ok ? "true" : "false") << ',' << err << '\n';
  return os.str();
}

inline constexpr double kSweepWindowTol = 1e-6;

inline RegionMapRow region_row(std::size_t index, double value, const RunResult& r) {
  RegionMapRow row;
  row.index = index;
  row.value = value;
  row.ME = r.verdict.ME;
  row.G0_sq = r.verdict.G0 * r.verdict.G0;
  row.Pn = r.verdict.Pn;
  row.verdict = to_string(r.verdict.kase);
  row.outcome = to_string(r.record.outcome()->kind);
  row.t_star = r.t_star;
  if (r.scattering) row.l6_decay_factor = r.scattering->l6_decay_factor;
  row.agreement = to_string(r.agreement);
  row.window_ok = r.worst_window_margin >= -kSweepWindowTol;
  row.trapping_ok = r.trapping_ok;
  return row;
}

/// One row per value of sweep.param. Rows finished in an earlier invocation
/// (rows/NNNN/row.json under the output directory) are reused. Rows are
/// written to region_map.csv in input order regardless of completion order.
inline std::vector<RegionMapRow> cmd_sweep(const json& c, const GroundState& gs, unsigned workers) {
  const auto values = cfg<std::vector<double>>(c, "sweep.values");
  require(!values.empty(), "sweep: sweep.values is empty");
  const auto param = cfg<std::string>(c, "sweep.param");
  require(c.at("initial_data").contains(param), "sweep: sweep.param '" + param + "' is not an initial_data key");
  require(c.at("initial_data").at(param).is_number(), "sweep: sweep.param must name a numeric initial_data key");
  const fs::path out(cfg<std::string>(c, "output"));
  fs::create_directories(out / "rows");
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(values.size())));

  std::vector<std::optional<RegionMapRow>> rows(values.size());
  std::mutex mutex;
  std::condition_variable ready;
  std::atomic<std::size_t> next{0};

  auto row_dir = [&](std::size_t i) {
    std::ostringstream name;
    name << std::setw(4) << std::setfill('0') << i;
    return out / "rows" / name.str();
  };

  auto work = [&] {
    for (std::size_t i = next++; i < values.size(); i = next++) {
      const fs::path dir = row_dir(i);
      RegionMapRow row;
      bool done = false;
      if (fs::exists(dir / "row.json")) {
        try {
          row = row_from_json(json::parse(read_bytes((dir / "row.json").string())));
          done = row.index == i && row.value == values[i];
        } catch (const std::exception&) {
          done = false;
        }
      }
      if (!done) {
        json ci = c;
        ci["initial_data"][param] = values[i];
        try {
          const RunResult r = cmd_run(ci, gs, dir.string());
          row = region_row(i, values[i], r);
        } catch (const std::exception& e) {
          row = RegionMapRow{};
          row.index = i;
          row.value = values[i];
          row.verdict = row.outcome = row.agreement = "error";
          row.error = e.what();
        }
        fs::create_directories(dir);
        detail::write_text(dir / "row.json", to_json(row).dump(2) + "\n");
      }
      {
        std::lock_guard<std::mutex> lock(mutex);
        rows[i] = row;
      }
      ready.notify_all();
    }
  };

  // single sink: appends rows to the CSV in input order
  std::ofstream csv(out / "region_map.csv", std::ios::trunc);
  csv << csv_header();
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::unique_lock<std::mutex> lock(mutex);
    ready.wait(lock, [&] { return rows[i].has_value(); });
    csv << csv_line(*rows[i]);
    csv.flush();
  }
  for (auto& t : pool) t.join();
  if (!csv) fail(ErrorKind::run, "sweep: cannot write region_map.csv");

  std::vector<RegionMapRow> result;
  for (auto& r : rows) result.push_back(*r);
  return result;
}

// ---------------------------------------------------------------------------
// Self-test battery

struct VerifyReport {
  json checks = json::array();
  bool passed = true;

  void add(const std::string& name, double value, double bound, bool ok) {
    checks.push_back({{"check", name}, {"value", value}, {"bound", bound}, {"pass", ok}});
    passed = passed && ok;
  }
};

/// Random smooth field: a sum of Gaussian bumps with random centers, widths
/// and complex amplitudes.
inline Field random_smooth_field(const SpectralGrid& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double a, double b) { return a + (b - a) * (static_cast<double>(rng() >> 11) * 0x1.0p-53); };
  const int bumps = 3;
  std::vector<std::array<double, 5>> p(bumps);
  for (auto& b : p) b = {uniform(-4, 4), uniform(-4, 4), uniform(0.8, 2.0), uniform(-1, 1), uniform(-1, 1)};
  Field f(grid);
  for (int iy = 0; iy < grid.n(); ++iy)
    for (int ix = 0; ix < grid.n(); ++ix) {
      cplx acc = 0.0;
      for (const auto& b : p) {
        const double dx = grid.x(ix) - b[0], dy = grid.x(iy) - b[1];
        acc += cplx(b[3], b[4]) * std::exp(-(dx * dx + dy * dy) / (2.0 * b[2] * b[2]));
      }
      f.values()[grid.index(ix, iy)] = acc;
    }
  return f;
}

inline VerifyReport cmd_verify(const GroundState& gs) {
  VerifyReport rep;
  const auto res = gs.residuals.as_array();
  const char* names[] = {"pohozhaev_l6_vs_3mass", "pohozhaev_l6_vs_mass_plus_grad", "pohozhaev_me_vs_half_mass_sq",
                         "pohozhaev_sqrt2_relation", "pohozhaev_four_energy"};
  for (std::size_t i = 0; i < res.size(); ++i) rep.add(names[i], res[i], kPohozhaevTolerance, res[i] <= kPohozhaevTolerance);
  rep.add("oracle_sup_error", gs.oracle_sup_error, kOracleTolerance, gs.oracle_sup_error <= kOracleTolerance);

  const GnSlack sharp = gn_inequality_check(gs.field, gs);
  rep.add("gn_sharpness", std::abs(sharp.relative()), 1e-6, std::abs(sharp.relative()) <= 1e-6);
  double worst = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 1; seed <= 20; ++seed)
    worst = std::min(worst, gn_inequality_check(random_smooth_field(gs.field.grid(), seed), gs).relative());
  rep.add("gn_random_min_relative_slack", worst, 0.0, worst >= -1e-8);

  const double virial = virial_second_derivative(gs.norms.gradQ_sq, gs.norms.l6Q_6);
  rep.add("soliton_virial", std::abs(virial) / gs.norms.gradQ_sq, 1e-5, std::abs(virial) <= 1e-5 * gs.norms.gradQ_sq);
  return rep;
}

}  // namespace nls2
