#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "collision.hpp"
#include "criteria.hpp"
#include "domain.hpp"
#include "json.hpp"
#include "slab_sim.hpp"
#include "velocity.hpp"

namespace kdamp {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& pipeline_names() {
  static const std::vector<std::string> p = {"modes",     "coeffs",   "damping",   "knudsen",
                                             "residuals", "simulate", "verify-all"};
  return p;
}

struct Tolerances {
  double flux_identity = 1e-9;
  double cross_route = 1e-8;
  double solvability = 1e-7;
  double mass = 1e-10;
  double wall = 1e-12;
  double offdiag = 1e-9;
  double compat = 1e-8;
};

struct RunConfig {
  int seed = 12345;
  bool plots = false;
  bool context = false;  // verify-all: refinement and extended-range diagnostics
  DomainSpec domain;
  CollisionSpec collision;
  int grid_D = 2, grid_Q = 12;
  VelocityRule grid_rule = VelocityRule::GaussHermite;
  int mode_count = 5;
  std::vector<int> k = {1, 2, 3, 4, 5};
  std::vector<int> tau = {1, -1};
  std::vector<double> chi = {1.0};
  // residuals
  std::vector<double> eps = {1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
  int order = 2, residual_Q = 10, per_panel = 10;
  LayerCutoff cutoff = LayerCutoff::Bump;
  // knudsen
  int knudsen_Q = 10;
  double knudsen_chi = 1.0;
  HalfSpaceOptions halfspace;
  // simulate
  std::vector<double> sim_eps = {0.01};
  SimConfig sim;
  Tolerances tol;
  nlohmann::json echo;  // every key as read, for the manifest
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  boost::split(parts, s, boost::is_any_of(", \t"), boost::token_compress_on);
  parts.erase(std::remove_if(parts.begin(), parts.end(), [](const std::string& p) { return p.empty(); }), parts.end());
  return parts;
}

template <class T>
T parse_scalar(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out;
  if constexpr (std::is_same_v<T, bool>) {
    std::string t = boost::algorithm::to_lower_copy(v);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError(fmt::format("key '{}': expected a boolean, got '{}'", key, v));
  } else {
    is >> out;
    if (!is || !(is >> std::ws).eof()) throw ConfigError(fmt::format("key '{}': cannot parse '{}'", key, v));
    return out;
  }
}

// key -> line number, from a plain scan of the file
inline std::map<std::string, int> ini_lines(const std::string& text) {
  std::map<std::string, int> lines;
  std::istringstream is(text);
  std::string line, section;
  for (int n = 1; std::getline(is, line); ++n) {
    boost::trim(line);
    if (line.empty() || line[0] == ';' || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      boost::trim(section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    boost::trim(key);
    lines[section.empty() ? key : section + "." + key] = n;
  }
  return lines;
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("line {}: {}", e.line(), e.message()));
  }
  const auto lines = detail::ini_lines(text);
  auto where = [&](const std::string& key) {
    auto it = lines.find(key);
    return it == lines.end() ? std::string("") : fmt::format("line {}: ", it->second);
  };

  static const std::set<std::string> known = {
      "run.seed",           "run.plots",           "domain.kind",         "domain.Lx",
      "domain.Ly",          "domain.R",            "domain.auto_normalize", "collision.kind",
      "collision.a0",       "collision.sigma_a",   "collision.sigma_b",   "collision.sigma_0",
      "grid.D",             "grid.Q",              "grid.rule",           "modes.count",
      "modes.k",            "modes.tau",           "layer.chi",           "residuals.eps",
      "residuals.order",    "residuals.Q",         "residuals.per_panel", "residuals.cutoff",
      "knudsen.Q",          "knudsen.chi",         "knudsen.xi_max",      "knudsen.cells",
      "knudsen.stretch",    "knudsen.tol",         "sim.eps",             "sim.chi",
      "sim.Nx",             "sim.Q",               "sim.cfl",             "sim.t_final",
      "sim.init",           "sim.test_order",      "sim.samples_per_period", "sim.min_periods",
      "sim.stop_fraction",  "sim.mode",            "sim.tau",             "tolerances.flux_identity",
      "tolerances.cross_route", "tolerances.solvability", "tolerances.mass", "tolerances.wall",
      "tolerances.offdiag",     "tolerances.compat", "run.context"};

  RunConfig c;
  std::map<std::string, std::string> kv;
  for (const auto& [sec, body] : tree) {
    if (body.empty()) throw ConfigError(fmt::format("{}key '{}' outside a section", where(sec), sec));
    for (const auto& [key, val] : body) {
      const std::string full = sec + "." + key;
      if (!known.count(full)) throw ConfigError(fmt::format("{}unknown key '{}'", where(full), full));
      kv[full] = val.get_value<std::string>();
    }
  }
  for (const auto& [k, v] : kv) c.echo[k] = v;

  auto get = [&]<class T>(const std::string& key, T& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    try {
      out = detail::parse_scalar<T>(key, it->second);
    } catch (const ConfigError& e) {
      throw ConfigError(where(key) + e.what());
    }
  };
  auto get_list = [&]<class T>(const std::string& key, std::vector<T>& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    out.clear();
    try {
      for (const auto& p : detail::split_list(it->second)) out.push_back(detail::parse_scalar<T>(key, p));
    } catch (const ConfigError& e) {
      throw ConfigError(where(key) + e.what());
    }
    if (out.empty()) throw ConfigError(fmt::format("{}key '{}' is an empty list", where(key), key));
  };
  auto get_enum = [&]<class F>(const std::string& key, F&& parse) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    try {
      parse(it->second);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fmt::format("{}key '{}': {}", where(key), key, e.what()));
    }
  };
  auto fail = [&](const std::string& key, const std::string& msg) {
    throw ConfigError(fmt::format("{}key '{}': {}", where(key), key, msg));
  };

  get("run.seed", c.seed);
  get("run.plots", c.plots);
  get_enum("domain.kind", [&](const std::string& s) { c.domain.kind = parse_domain_kind(s); });
  get("domain.Lx", c.domain.Lx);
  get("domain.Ly", c.domain.Ly);
  get("domain.R", c.domain.R);
  get("domain.auto_normalize", c.domain.auto_normalize);
  get_enum("collision.kind", [&](const std::string& s) { c.collision.kind = parse_collision_kind(s); });
  get("collision.a0", c.collision.a0);
  get("collision.sigma_a", c.collision.sigma_a);
  get("collision.sigma_b", c.collision.sigma_b);
  get("collision.sigma_0", c.collision.sigma_0);
  get("grid.D", c.grid_D);
  get("grid.Q", c.grid_Q);
  get_enum("grid.rule", [&](const std::string& s) { c.grid_rule = parse_velocity_rule(s); });
  get("modes.count", c.mode_count);
  get_list("modes.k", c.k);
  get_list("modes.tau", c.tau);
  get_list("layer.chi", c.chi);
  get_list("residuals.eps", c.eps);
  get("residuals.order", c.order);
  get("residuals.Q", c.residual_Q);
  get("residuals.per_panel", c.per_panel);
  get_enum("residuals.cutoff", [&](const std::string& s) { c.cutoff = parse_layer_cutoff(s); });
  get("knudsen.Q", c.knudsen_Q);
  get("knudsen.chi", c.knudsen_chi);
  get("knudsen.xi_max", c.halfspace.xi_max);
  get("knudsen.cells", c.halfspace.cells);
  get("knudsen.stretch", c.halfspace.stretch);
  get("knudsen.tol", c.halfspace.tol);
  get_list("sim.eps", c.sim_eps);
  get("sim.chi", c.sim.chi);
  get("sim.Nx", c.sim.Nx);
  get("sim.Q", c.sim.Q);
  get("sim.cfl", c.sim.cfl);
  get("sim.t_final", c.sim.t_final);
  get_enum("sim.init", [&](const std::string& s) { c.sim.init = parse_sim_init(s); });
  get("sim.test_order", c.sim.test_order);
  get("sim.samples_per_period", c.sim.samples_per_period);
  get("sim.min_periods", c.sim.min_periods);
  get("sim.stop_fraction", c.sim.stop_fraction);
  get("sim.mode", c.sim.mode);
  get("sim.tau", c.sim.tau);
  get("tolerances.flux_identity", c.tol.flux_identity);
  get("tolerances.cross_route", c.tol.cross_route);
  get("tolerances.solvability", c.tol.solvability);
  get("tolerances.mass", c.tol.mass);
  get("tolerances.wall", c.tol.wall);
  get("tolerances.offdiag", c.tol.offdiag);
  get("tolerances.compat", c.tol.compat);
  get("run.context", c.context);
  c.sim.collision = c.collision;
  c.sim.cutoff = c.cutoff;

  // invariants
  auto check_eps = [&](const std::string& key, std::vector<double> v) {
    for (double e : v)
      if (!(e > 0)) fail(key, "eps values must be positive");
    std::sort(v.begin(), v.end());
    if (std::adjacent_find(v.begin(), v.end()) != v.end()) fail(key, "eps values must be distinct");
  };
  check_eps("residuals.eps", c.eps);
  check_eps("sim.eps", c.sim_eps);
  if (c.mode_count < 1) fail("modes.count", "must be at least 1");
  for (int k : c.k)
    if (k < 1) fail("modes.k", "mode indices are 1-based");
  for (int t : c.tau)
    if (t != 1 && t != -1) fail("modes.tau", "tau must be +1 or -1");
  for (double x : c.chi)
    if (!(x > 0)) fail("layer.chi", "chi must be positive");
  if (c.grid_D != 2 && c.grid_D != 3) fail("grid.D", "D must be 2 or 3");
  if (c.order < 0 || c.order > 2) fail("residuals.order", "order must be 0, 1 or 2");
  if (c.eps.size() < 4) fail("residuals.eps", "slope fits need at least 4 values");
  if (!(c.knudsen_chi > 0)) fail("knudsen.chi", "chi must be positive");
  try {
    for (double e : c.sim_eps) {
      SimConfig s = c.sim;
      s.eps = e;
      s.check();
    }
    make_collision(make_velocity_grid(2, 4), c.collision);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace kdamp
