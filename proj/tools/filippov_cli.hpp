#pragma once

// Command-line front end. Parsing and dispatch only; all numerics live in the
// library headers.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "filippov/analysis.hpp"
#include "filippov/orbit_io.hpp"

namespace filippov::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kNegative = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command;

  // system source: builtin z-theta (default) or a JSON file
  double theta = kPi / 3.0;
  std::optional<std::string> system_path;

  // probe parameters
  int n = 200;
  double epsilon = 0.25;
  double horizon = 200.0;
  int budget = 4;
  unsigned long long seed = 0;

  // orbit
  std::optional<Vec3> start;
  double orbit_horizon = 20.0;
  std::string policy = "tour";

  // classify
  std::optional<Vec3> point;
  int circle = 1;

  // sweep
  std::vector<double> thetas;

  // two-zone
  std::vector<double> a1;
  std::vector<double> a2;
  std::optional<Vec3> normal;
  double offset = 0.0;

  // perturb
  std::optional<Vec3> center;
  double radius = 0.1;
  double amplitude = 1e-3;
  std::optional<Vec3> direction;

  std::optional<std::string> output;
  std::optional<std::string> adjacency;

  ProbeConfig probe() const {
    ProbeConfig c;
    c.n = n;
    c.epsilon = epsilon;
    c.horizon = horizon;
    c.budget = budget;
    c.seed = seed;
    return c;
  }
};

namespace detail {

inline std::vector<double> parse_floats(const std::string& text, std::size_t expect, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": '" + item + "' is not a number");
    }
  }
  if (expect && out.size() != expect) {
    throw UsageError(std::string(what) + ": expected " + std::to_string(expect) + " comma-separated values");
  }
  if (out.empty()) throw UsageError(std::string(what) + ": no values");
  return out;
}

inline Vec3 parse_vec3(const std::string& text, const char* what) {
  const auto v = parse_floats(text, 3, what);
  return Vec3(v[0], v[1], v[2]);
}

inline Vec3 json_vec(const nlohmann::json& j, const char* what) {
  if (j.is_string()) return parse_vec3(j.get<std::string>(), what);
  if (!j.is_array() || j.size() != 3) throw UsageError(std::string(what) + ": expected three numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline std::vector<double> json_floats(const nlohmann::json& j, std::size_t expect, const char* what) {
  if (j.is_string()) return parse_floats(j.get<std::string>(), expect, what);
  if (!j.is_array() || (expect && j.size() != expect)) throw UsageError(std::string(what) + ": wrong length");
  return j.get<std::vector<double>>();
}

/// Applies a config file. Keys use the flag names without dashes.
inline void apply_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file: " + std::string(e.what()));
  }
  if (!doc.is_object()) throw UsageError("config file must hold a JSON object");
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "theta") cfg.theta = v.get<double>();
      else if (key == "system") cfg.system_path = v.get<std::string>();
      else if (key == "builtin") {
        if (v.get<std::string>() != "z-theta") throw UsageError("unknown builtin system");
      }
      else if (key == "n") cfg.n = v.get<int>();
      else if (key == "epsilon") cfg.epsilon = v.get<double>();
      else if (key == "horizon") cfg.horizon = cfg.orbit_horizon = v.get<double>();
      else if (key == "budget") cfg.budget = v.get<int>();
      else if (key == "seed") cfg.seed = v.get<unsigned long long>();
      else if (key == "start") cfg.start = json_vec(v, "start");
      else if (key == "policy") cfg.policy = v.get<std::string>();
      else if (key == "point") cfg.point = json_vec(v, "point");
      else if (key == "circle") cfg.circle = v.get<int>();
      else if (key == "thetas") cfg.thetas = json_floats(v, 0, "thetas");
      else if (key == "a1") cfg.a1 = json_floats(v, 9, "a1");
      else if (key == "a2") cfg.a2 = json_floats(v, 9, "a2");
      else if (key == "normal") cfg.normal = json_vec(v, "normal");
      else if (key == "offset") cfg.offset = v.get<double>();
      else if (key == "center") cfg.center = json_vec(v, "center");
      else if (key == "radius") cfg.radius = v.get<double>();
      else if (key == "amplitude") cfg.amplitude = v.get<double>();
      else if (key == "direction") cfg.direction = json_vec(v, "direction");
      else if (key == "output") cfg.output = v.get<std::string>();
      else if (key == "adjacency") cfg.adjacency = v.get<std::string>();
      else throw UsageError("unknown key '" + key + "' in config file");
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file: " + std::string(e.what()));
  }
}

inline void check(const RunConfig& c) {
  if (!(c.theta > 0.0 && c.theta < kPi)) throw UsageError("theta must lie in (0, pi) radians");
  if (c.n < 12) throw UsageError("n must be at least 12");
  if (!(c.epsilon > 0.0)) throw UsageError("epsilon must be positive");
  if (!(c.horizon > 0.0) || !(c.orbit_horizon > 0.0)) throw UsageError("horizon must be positive");
  if (c.budget < 1) throw UsageError("budget must be positive");
  if (!(c.radius > 0.0)) throw UsageError("radius must be positive");
  if (c.policy != "tour" && c.policy != "stay" && c.policy != "exit-up" && c.policy != "exit-down") {
    throw UsageError("policy must be tour, stay, exit-up or exit-down");
  }
  for (double t : c.thetas) {
    if (!(t > 0.0 && t < kPi)) throw UsageError("every sweep theta must lie in (0, pi) radians");
  }
  if (c.command == "classify" && !c.point) throw UsageError("classify needs --point");
  if (c.command == "orbit" && !c.start) throw UsageError("orbit needs --start");
  if (c.command == "sweep" && c.thetas.empty()) throw UsageError("sweep needs --thetas");
  if (c.command == "two-zone" && (c.a1.size() != 9 || c.a2.size() != 9 || !c.normal)) {
    throw UsageError("two-zone needs --a1, --a2 and --normal");
  }
}

} // namespace detail

/// Parses argv. Throws UsageError on malformed input; returns nullopt when
/// help was printed.
inline std::optional<RunConfig> parse_config(int argc, const char* const* argv) {
  CLI::App app{"Simulation and analysis of piecewise-smooth vector fields on the sphere", "filippov"};
  app.require_subcommand(1);

  std::optional<double> theta;
  std::string builtin, system, config;
  std::optional<int> n, budget, circle;
  std::optional<double> epsilon, horizon, offset, radius, amplitude;
  std::optional<unsigned long long> seed;
  std::string point, start, policy, thetas, a1, a2, normal, center, direction, output, adjacency;

  app.add_option("--theta", theta, "band rotation angle (radians) of the builtin system");
  auto* b = app.add_option("--builtin", builtin, "builtin system name")->check(CLI::IsMember({"z-theta"}));
  auto* s = app.add_option("--system", system, "system JSON file");
  b->excludes(s);
  s->excludes(b);
  app.add_option("--config", config, "JSON file with parameter values (flags win)");
  app.add_option("-o,--output", output, "output file (stdout when omitted)");
  app.fallthrough();

  auto* classify = app.add_subcommand("classify", "classify a point of a switching circle");
  classify->add_option("--point", point, "x,y,z")->required();
  classify->add_option("--circle", circle, "circle id");

  app.add_subcommand("tangencies", "list tangency points with orders and visibility");

  auto* orbit = app.add_subcommand("orbit", "integrate a Filippov orbit and export CSV");
  orbit->add_option("--start", start, "x,y,z")->required();
  orbit->add_option("--horizon", horizon, "integration time");
  orbit->add_option("--policy", policy, "branch policy (default tour)")
      ->check(CLI::IsMember({"tour", "stay", "exit-up", "exit-down"}));

  auto* probe = app.add_subcommand("probe", "finite transitivity probe");
  probe->add_option("--n", n, "net size");
  probe->add_option("--epsilon", epsilon, "target ball radius");
  probe->add_option("--horizon", horizon, "orbit time per search");
  probe->add_option("--budget", budget, "branches per escaping encounter");
  probe->add_option("--seed", seed, "net rotation seed");
  probe->add_option("--adjacency", adjacency, "write the reachability relation as an adjacency list");

  auto* sweep = app.add_subcommand("sweep", "probe the builtin family over several angles");
  sweep->add_option("--thetas", thetas, "a,b,c")->required();
  sweep->add_option("--n", n);
  sweep->add_option("--epsilon", epsilon);
  sweep->add_option("--horizon", horizon);
  sweep->add_option("--budget", budget);
  sweep->add_option("--seed", seed);

  auto* two = app.add_subcommand("two-zone", "case analysis of a two-zone rotation system");
  two->add_option("--a1", a1, "9 floats, row major")->required();
  two->add_option("--a2", a2, "9 floats, row major")->required();
  two->add_option("--normal", normal, "x,y,z")->required();
  two->add_option("--offset", offset, "plane offset");
  two->add_option("--n", n);
  two->add_option("--epsilon", epsilon);
  two->add_option("--horizon", horizon);
  two->add_option("--budget", budget);
  two->add_option("--seed", seed);

  auto* perturb = app.add_subcommand("perturb", "bump the connecting orbit and compare");
  perturb->add_option("--center", center, "x,y,z");
  perturb->add_option("--radius", radius);
  perturb->add_option("--amplitude", amplitude);
  perturb->add_option("--direction", direction, "x,y,z");
  perturb->add_option("--n", n);
  perturb->add_option("--epsilon", epsilon);
  perturb->add_option("--horizon", horizon);
  perturb->add_option("--budget", budget);
  perturb->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return std::nullopt;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return std::nullopt;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  RunConfig cfg;
  cfg.command = app.get_subcommands().front()->get_name();
  if (!config.empty()) detail::apply_file(cfg, config);
  if (!builtin.empty() && cfg.system_path) throw UsageError("--builtin conflicts with the system in the config file");
  if (!system.empty() && !builtin.empty()) throw UsageError("--builtin and --system are exclusive");

  if (theta) cfg.theta = *theta;
  if (!system.empty()) cfg.system_path = system;
  if (!builtin.empty()) cfg.system_path.reset();
  if (n) cfg.n = *n;
  if (epsilon) cfg.epsilon = *epsilon;
  if (horizon) cfg.horizon = cfg.orbit_horizon = *horizon;
  if (budget) cfg.budget = *budget;
  if (seed) cfg.seed = *seed;
  if (!point.empty()) cfg.point = detail::parse_vec3(point, "--point");
  if (circle) cfg.circle = *circle;
  if (!start.empty()) cfg.start = detail::parse_vec3(start, "--start");
  if (!policy.empty()) cfg.policy = policy;
  if (!thetas.empty()) cfg.thetas = detail::parse_floats(thetas, 0, "--thetas");
  if (!a1.empty()) cfg.a1 = detail::parse_floats(a1, 9, "--a1");
  if (!a2.empty()) cfg.a2 = detail::parse_floats(a2, 9, "--a2");
  if (!normal.empty()) cfg.normal = detail::parse_vec3(normal, "--normal");
  if (offset) cfg.offset = *offset;
  if (!center.empty()) cfg.center = detail::parse_vec3(center, "--center");
  if (radius) cfg.radius = *radius;
  if (amplitude) cfg.amplitude = *amplitude;
  if (!direction.empty()) cfg.direction = detail::parse_vec3(direction, "--direction");
  if (!output.empty()) cfg.output = output;
  if (!adjacency.empty()) cfg.adjacency = adjacency;
  detail::check(cfg);
  return cfg;
}

namespace detail {

inline Psvf system_of(const RunConfig& c) {
  return c.system_path ? load_psvf(*c.system_path) : make_z_theta(c.theta);
}

inline void emit(const RunConfig& c, const std::string& text) {
  if (!c.output) {
    std::cout << text;
    return;
  }
  std::ofstream out(*c.output, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + *c.output);
  out << text;
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline Mat3 matrix_of(const std::vector<double>& v) {
  Mat3 m;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m(i, j) = v[static_cast<std::size_t>(3 * i + j)];
  }
  return m;
}

} // namespace detail

/// Executes a parsed configuration and returns the exit code.
inline int run(const RunConfig& c) {
  using nlohmann::json;
  if (c.command == "classify") {
    const Psvf sys = detail::system_of(c);
    const CircleId id{c.circle};
    const Vec3 p = c.point->normalized();
    const RegionClass k = classify_sigma_point(sys, id, p);
    json j{{"point", to_json(p)}, {"circle", c.circle}, {"class", to_string(k.kind)}};
    if (k.kind == SigmaClass::Tangency) j["sides"] = to_string(k.sides);
    detail::emit(c, detail::dump(j));
    return kOk;
  }
  if (c.command == "tangencies") {
    const Psvf sys = detail::system_of(c);
    json list = json::array();
    for (int i = 1; i <= sys.circle_count(); ++i) {
      for (const TangencyInfo& t : find_tangencies(sys, CircleId{i})) list.push_back(to_json(t));
    }
    detail::emit(c, detail::dump(list));
    return kOk;
  }
  if (c.command == "orbit") {
    const Psvf sys = detail::system_of(c);
    const BranchPolicy policy = c.policy == "tour"      ? BranchPolicy::tour()
                                : c.policy == "stay"    ? BranchPolicy::stay_sliding()
                                : c.policy == "exit-up" ? BranchPolicy::exit_now(Side::Above)
                                                        : BranchPolicy::exit_now(Side::Below);
    const FilippovOrbit o = integrate_orbit(sys, c.start->normalized(), c.orbit_horizon, policy);
    std::ostringstream csv;
    write_orbit_csv(csv, o);
    detail::emit(c, csv.str());
    if (c.output) {
      std::ofstream side(*c.output + ".json", std::ios::binary);
      side << detail::dump(orbit_sidecar(o));
    }
    return kOk;
  }
  if (c.command == "probe") {
    const ProbeReport rep = reachability_probe(detail::system_of(c), c.probe());
    detail::emit(c, detail::dump(to_json(rep)));
    if (c.adjacency) {
      std::ofstream adj(*c.adjacency, std::ios::binary);
      write_adjacency(adj, rep);
    }
    return rep.verdict == Verdict::TransitiveEvidence ? kOk : kNegative;
  }
  if (c.command == "sweep") {
    if (c.system_path) throw UsageError("sweep runs the builtin family only");
    const auto rows = theta_sweep(c.thetas, c.probe());
    json list = json::array();
    bool all = true;
    for (const SweepRow& r : rows) {
      list.push_back(to_json(r));
      all = all && r.verdict == Verdict::TransitiveEvidence;
    }
    detail::emit(c, detail::dump({{"config", to_json(c.probe())}, {"rows", list}}));
    return all ? kOk : kNegative;
  }
  if (c.command == "two-zone") {
    const PlaneCircle circle(c.normal->normalized(), c.offset, 1);
    const TwoZoneReport rep = two_zone_check(detail::matrix_of(c.a1), detail::matrix_of(c.a2), circle, c.probe());
    detail::emit(c, detail::dump(to_json(rep)));
    return kOk;
  }
  if (c.command == "perturb") {
    const Psvf sys = detail::system_of(c);
    BumpPerturbation bump = default_connection_bump(sys, c.amplitude, c.radius);
    if (c.center) bump.center = SpherePoint(c.center->normalized());
    if (c.direction) bump.direction = c.direction->normalized();
    const RobustnessReport rep = robustness_experiment(sys, bump, c.probe());
    json j = to_json(rep);
    j["bump"] = {{"center", to_json(bump.center.vec())},
                 {"radius", bump.radius},
                 {"amplitude", bump.amplitude},
                 {"direction", to_json(bump.direction)}};
    detail::emit(c, detail::dump(j));
    return kOk;
  }
  throw UsageError("unknown command " + c.command);
}

/// Full entry point with the exit-code convention.
inline int main(int argc, const char* const* argv) {
  try {
    const auto cfg = parse_config(argc, argv);
    if (!cfg) return kOk;
    return run(*cfg);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

} // namespace filippov::cli
