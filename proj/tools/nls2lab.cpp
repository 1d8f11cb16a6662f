// nls2lab: ground-state cache, single runs, sweeps and self-tests for the
// 2D focusing quintic NLS.

#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "nls2/harness.hpp"

namespace {

nls2::json config_with_overrides(const std::string& path, const std::string& out, const std::optional<std::uint64_t>& seed) {
  nls2::json c = path.empty() ? nls2::default_config() : nls2::load_config(path);
  if (!out.empty()) c["output"] = out;
  if (seed) c["seed"] = *seed;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nls2lab: threshold experiments for the 2D focusing quintic NLS"};
  app.require_subcommand(1);

  std::string config_path, out;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::optional<std::uint64_t> seed;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "seed for randomized perturbations (overrides the config)");
  };

  auto* ground = app.add_subcommand("ground", "solve, certify and cache the ground state");
  add_common(ground);
  auto* run = app.add_subcommand("run", "classify, evolve and diagnose one datum");
  add_common(run);
  auto* sweep = app.add_subcommand("sweep", "run one datum per sweep value and write region_map.csv");
  add_common(sweep);
  sweep->add_option("--workers", workers, "parallel runs")->check(CLI::PositiveNumber);
  auto* explain = app.add_subcommand("explain-config", "print every configuration key with its default");
  auto* verify = app.add_subcommand("verify", "Pohozhaev, Gagliardo-Nirenberg and virial self-tests");
  add_common(verify);

  CLI11_PARSE(app, argc, argv);

  try {
    if (explain->parsed()) {
      std::cout << nls2::explain_config();
      return 0;
    }
    const nls2::json c = config_with_overrides(config_path, out, seed);
    const std::string out_dir = c.at("output").get<std::string>();

    if (ground->parsed()) {
      const auto gs = nls2::cmd_ground(c);
      const auto cache = c.at("ground_state").at("cache").get<std::string>();
      std::cout << (cache.empty() ? nls2::sidecar_json(gs, "").dump(2) + "\n" : nls2::read_bytes(cache + ".json"));
      return 0;
    }
    const nls2::GroundState gs = nls2::obtain_ground_state(c);
    if (verify->parsed()) {
      const auto rep = nls2::cmd_verify(gs);
      std::cout << rep.checks.dump(2) << '\n';
      return rep.passed ? 0 : nls2::exit_code(nls2::ErrorKind::certification);
    }
    if (run->parsed()) {
      const auto res = nls2::cmd_run(c, gs, out_dir);
      std::cout << nls2::to_json(res.verdict).dump() << '\n'
                << "outcome " << nls2::to_string(res.record.outcome()->kind) << " at t = " << res.record.outcome()->t
                << ", agreement " << nls2::to_string(res.agreement) << '\n';
      return 0;
    }
    if (sweep->parsed()) {
      const auto rows = nls2::cmd_sweep(c, gs, workers);
      std::cout << rows.size() << " rows written to " << out_dir << "/region_map.csv\n";
      return 0;
    }
  } catch (const nls2::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return nls2::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return nls2::exit_code(nls2::ErrorKind::run);
  }
  return 0;
}
