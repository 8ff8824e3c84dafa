// softcbf certify | simulate | sweep

#include "softcbf/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

struct Flags {
  std::optional<std::string> benchmark;
  std::optional<std::string> config;
  std::optional<double> epsilon;
  std::optional<double> density;
  std::optional<std::uint64_t> seed;
  std::optional<double> theta;
  std::optional<double> theta_multiplier;
  std::optional<std::string> out;
  std::optional<std::string> thetas;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--benchmark", f.benchmark, "benchmark name");
  cmd->add_option("--config", f.config, "key = value scenario file");
  cmd->add_option("--epsilon", f.epsilon, "tube width");
  cmd->add_option("--density", f.density, "tube samples per unit length");
  cmd->add_option("--seed", f.seed, "sampling seed");
  cmd->add_option("--theta", f.theta, "smoothing parameter (overrides the multiplier)");
  cmd->add_option("--theta-multiplier", f.theta_multiplier, "theta = multiplier * theta*");
  cmd->add_option("--out", f.out, "output directory");
}

softcbf::ScenarioConfig build_config(const Flags& f) {
  softcbf::ScenarioConfig c;
  if (f.config) c = softcbf::parse_config_file(*f.config);
  auto set = [&](const char* key, const std::string& v) { softcbf::apply_setting(c, key, v); };
  auto num = [](double v) { return softcbf::detail::fmt(v); };
  if (f.benchmark) set("benchmark", *f.benchmark);
  if (f.epsilon) set("epsilon", num(*f.epsilon));
  if (f.density) set("density", num(*f.density));
  if (f.seed) set("seed", std::to_string(*f.seed));
  if (f.theta) set("theta", num(*f.theta));
  if (f.theta_multiplier) set("theta_multiplier", num(*f.theta_multiplier));
  if (f.out) set("out", *f.out);
  if (f.thetas) set("thetas", *f.thetas);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft-min barrier certification and safety-filter simulation"};
  app.require_subcommand(1);
  Flags flags;
  auto* certify = app.add_subcommand("certify", "compute and verify theta* for a benchmark");
  auto* simulate = app.add_subcommand("simulate", "run the filtered closed loop, write trace.csv");
  auto* sweep = app.add_subcommand("sweep", "verify and simulate over a list of theta values");
  add_common(certify, flags);
  add_common(simulate, flags);
  add_common(sweep, flags);
  sweep->add_option("--thetas", flags.thetas, "comma-separated theta values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : softcbf::kExitBadConfig;
  }

  try {
    softcbf::ScenarioConfig cfg = build_config(flags);
    if (certify->parsed()) return softcbf::cmd_certify(cfg, std::cout);
    if (simulate->parsed()) return softcbf::cmd_simulate(cfg, std::cout);
    return softcbf::cmd_sweep(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return softcbf::kExitBadConfig;
  }
}
