#pragma once

// Scenario configuration: a key = value text format with '#' comments.
//
//   benchmark = pendulum-backup
//   epsilon = 0.02
//   x0 = 0.1, 0
//   thetas = 100, 200, 400
//
// Unknown or repeated keys are rejected. Benchmark-dependent fields left
// unset are filled from the benchmark by resolve().

#include "softcbf/certify.hpp"
#include "softcbf/filter.hpp"
#include "softcbf/sim.hpp"
#include "softcbf/systems.hpp"
#include "softcbf/types.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace softcbf {

struct ScenarioConfig {
  std::string benchmark = "scalar-stable";
  std::optional<double> setpoint;
  std::optional<double> epsilon;
  std::optional<double> density;
  std::uint64_t seed = 1;
  std::optional<double> theta;
  double theta_multiplier = 1.01;
  std::optional<double> tolerance;  // activity tolerance; ladder when unset
  std::size_t n_check = 500;
  bool check_mfcq = true;
  std::optional<TailSpec> tail;

  // simulation
  std::optional<Vector> x0;
  double t_final = 10.0;
  double dt = 0.01;
  int substeps = 10;
  std::string alpha = "linear";  // linear | cubic | tanh
  double kappa = 1.0;
  double alpha_scale = 1.0;
  InfeasiblePolicy policy = InfeasiblePolicy::BackupTakeover;

  std::vector<double> thetas;
  std::string out = "out";

  ClassK class_k() const {
    if (alpha == "linear") return ClassK::linear(kappa);
    if (alpha == "cubic") return ClassK::cubic(kappa);
    if (alpha == "tanh") return ClassK::tanh_scaled(kappa, alpha_scale);
    throw InvalidInput("alpha must be linear, cubic or tanh, got '" + alpha + "'");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(out)) {
    throw InvalidInput("config: '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    throw InvalidInput("config: '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_double(key, item));
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidInput("config: '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace detail

/// Applies one key = value assignment. Throws InvalidInput on unknown keys
/// or unparsable values.
inline void apply_setting(ScenarioConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  auto positive = [&](double x) {
    if (!(x > 0.0)) throw InvalidInput("config: '" + key + "' must be positive");
    return x;
  };
  auto tail = [&]() -> TailSpec& {
    if (!c.tail) c.tail = TailSpec{};
    return *c.tail;
  };
  if (key == "benchmark") {
    c.benchmark = v;
  } else if (key == "setpoint") {
    c.setpoint = parse_double(key, v);
  } else if (key == "epsilon") {
    c.epsilon = positive(parse_double(key, v));
  } else if (key == "density") {
    c.density = positive(parse_double(key, v));
  } else if (key == "seed") {
    c.seed = parse_int<std::uint64_t>(key, v);
  } else if (key == "theta") {
    c.theta = positive(parse_double(key, v));
  } else if (key == "theta_multiplier") {
    c.theta_multiplier = positive(parse_double(key, v));
  } else if (key == "tolerance") {
    c.tolerance = positive(parse_double(key, v));
  } else if (key == "n_check") {
    c.n_check = parse_int<std::size_t>(key, v);
  } else if (key == "check_mfcq") {
    c.check_mfcq = parse_bool(key, v);
  } else if (key == "tail_R") {
    tail().R = parse_double(key, v);
  } else if (key == "tail_eta") {
    tail().eta_at_R = parse_double(key, v);
  } else if (key == "tail_C") {
    tail().C = parse_double(key, v);
  } else if (key == "tail_p") {
    tail().p = parse_double(key, v);
  } else if (key == "tail_r_inf") {
    tail().r_inf = parse_double(key, v);
  } else if (key == "x0") {
    const auto xs = parse_list(key, v);
    if (xs.empty()) throw InvalidInput("config: x0 is empty");
    c.x0 = Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  } else if (key == "t_final") {
    c.t_final = positive(parse_double(key, v));
  } else if (key == "dt") {
    c.dt = positive(parse_double(key, v));
  } else if (key == "substeps") {
    c.substeps = parse_int<int>(key, v);
    if (c.substeps < 1) throw InvalidInput("config: substeps must be >= 1");
  } else if (key == "alpha") {
    c.alpha = v;
    (void)c.class_k();
  } else if (key == "kappa") {
    c.kappa = positive(parse_double(key, v));
  } else if (key == "alpha_scale") {
    c.alpha_scale = positive(parse_double(key, v));
  } else if (key == "policy") {
    c.policy = parse_policy(v);
  } else if (key == "thetas") {
    c.thetas = parse_list(key, v);
    for (double t : c.thetas) positive(t);
  } else if (key == "out") {
    c.out = v;
  } else {
    throw InvalidInput("config: unknown key '" + key + "'");
  }
}

inline ScenarioConfig parse_config(std::istream& in, ScenarioConfig base = {}) {
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidInput("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw InvalidInput("config line " + std::to_string(lineno) + ": empty key");
    if (!seen.insert(key).second) {
      throw InvalidInput("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    apply_setting(base, key, value);
  }
  return base;
}

inline ScenarioConfig parse_config_file(const std::string& path, ScenarioConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot read config '" + path + "'");
  return parse_config(f, std::move(base));
}

/// Fills benchmark-dependent defaults and checks cross-field consistency.
inline Benchmark resolve(ScenarioConfig& c) {
  Benchmark b = make_benchmark(c.benchmark, c.setpoint);
  if (!c.epsilon) c.epsilon = b.epsilon;
  if (!c.density) c.density = b.density;
  if (!c.x0) c.x0 = b.x0;
  if (c.x0->size() != b.sys.n) {
    throw InvalidInput("config: x0 has " + std::to_string(c.x0->size()) + " entries, benchmark '" +
                       b.name + "' has n = " + std::to_string(b.sys.n));
  }
  if (c.tail) c.tail->validate();
  if (c.t_final < c.dt) throw InvalidInput("config: t_final must be >= dt");
  b.condition = c.class_k();
  return b;
}

/// key = value lines for every field, prefixed, in a fixed order.
inline void write_config(const ScenarioConfig& c, std::ostream& os,
                         const std::string& prefix = "config.") {
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string("unset");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return std::string(buf);
  };
  auto num = [&](double v) { return opt(std::optional<double>(v)); };
  auto list = [&](const auto& xs) {
    std::string s;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(xs.size()); ++i) {
      if (i) s += ", ";
      s += num(xs[i]);
    }
    return s;
  };
  os << prefix << "benchmark = " << c.benchmark << '\n'
     << prefix << "setpoint = " << opt(c.setpoint) << '\n'
     << prefix << "epsilon = " << opt(c.epsilon) << '\n'
     << prefix << "density = " << opt(c.density) << '\n'
     << prefix << "seed = " << c.seed << '\n'
     << prefix << "theta = " << opt(c.theta) << '\n'
     << prefix << "theta_multiplier = " << num(c.theta_multiplier) << '\n'
     << prefix << "tolerance = " << opt(c.tolerance) << '\n'
     << prefix << "n_check = " << c.n_check << '\n'
     << prefix << "check_mfcq = " << (c.check_mfcq ? "true" : "false") << '\n';
  if (c.tail) {
    os << prefix << "tail_R = " << num(c.tail->R) << '\n'
       << prefix << "tail_eta = " << num(c.tail->eta_at_R) << '\n'
       << prefix << "tail_C = " << num(c.tail->C) << '\n'
       << prefix << "tail_p = " << num(c.tail->p) << '\n'
       << prefix << "tail_r_inf = " << num(c.tail->r_inf) << '\n';
  }
  os << prefix << "x0 = " << (c.x0 ? list(*c.x0) : std::string("unset")) << '\n'
     << prefix << "t_final = " << num(c.t_final) << '\n'
     << prefix << "dt = " << num(c.dt) << '\n'
     << prefix << "substeps = " << c.substeps << '\n'
     << prefix << "alpha = " << c.alpha << '\n'
     << prefix << "kappa = " << num(c.kappa) << '\n'
     << prefix << "alpha_scale = " << num(c.alpha_scale) << '\n'
     << prefix << "policy = " << to_string(c.policy) << '\n'
     << prefix << "thetas = " << list(c.thetas) << '\n'
     << prefix << "out = " << c.out << '\n';
}

}  // namespace softcbf
