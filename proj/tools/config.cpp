#include "config.hpp"

#include "delwalk/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace delwalk::cli {

bool ExperimentConfig::has_stage(const std::string& name) const {
  return std::find(stages.begin(), stages.end(), name) != stages.end();
}

namespace {

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double x = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters");
  return x;
}

long to_long(const std::string& v) {
  std::size_t used = 0;
  const long x = std::stol(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters");
  return x;
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> parts;
  boost::split(parts, v, boost::is_any_of(","));
  for (auto& p : parts) boost::trim(p);
  parts.erase(std::remove(parts.begin(), parts.end(), ""), parts.end());
  return parts;
}

template <typename T, typename F>
std::vector<T> map_list(const std::string& v, F f) {
  std::vector<T> out;
  for (const auto& p : to_list(v)) out.push_back(f(p));
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected true or false");
}

WalkKind walk_kind_from_string(const std::string& v) {
  for (WalkKind k : {WalkKind::dtrw, WalkKind::vsrw, WalkKind::induced_discrete, WalkKind::induced_continuous})
    if (to_string(k) == v) return k;
  throw std::invalid_argument("unknown walk kind '" + v + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
  static const std::map<std::string, std::map<std::string, Setter>> table{
      {"experiment",
       {{"seed", [](auto& c, auto& v) { c.seed = std::stoull(v); }},
        {"out", [](auto& c, auto& v) { c.out = v; }},
        {"stages", [](auto& c, auto& v) { c.stages = to_list(v); }}}},
      {"process",
       {{"kind", [](auto& c, auto& v) { c.process.kind = process_kind_from_string(v); }},
        {"intensity", [](auto& c, auto& v) { c.process.intensity = to_double(v); }},
        {"hardcore_radius", [](auto& c, auto& v) { c.process.hardcore_radius = to_double(v); }},
        {"parent_intensity", [](auto& c, auto& v) { c.process.parent_intensity = to_double(v); }},
        {"mean_offspring", [](auto& c, auto& v) { c.process.mean_offspring = to_double(v); }},
        {"cluster_radius", [](auto& c, auto& v) { c.process.cluster_radius = to_double(v); }}}},
      {"window",
       {{"dim", [](auto& c, auto& v) { c.dim = static_cast<int>(to_long(v)); }},
        {"half_width", [](auto& c, auto& v) { c.half_width = to_double(v); }}}},
      {"boxes",
       {{"s", [](auto& c, auto& v) { c.s = to_double(v); }},
        {"alpha", [](auto& c, auto& v) { c.alpha = to_double(v); }},
        {"L", [](auto& c, auto& v) { c.L = static_cast<int>(to_long(v)); }}}},
      {"walk",
       {{"kind", [](auto& c, auto& v) { c.walk_kind = walk_kind_from_string(v); }},
        {"steps", [](auto& c, auto& v) { c.walk_steps = to_long(v); }},
        {"horizon", [](auto& c, auto& v) { c.walk_horizon = to_double(v); }},
        {"write_kernel", [](auto& c, auto& v) { c.write_kernel = to_bool(v); }}}},
      {"corrector",
       {{"region_half_width", [](auto& c, auto& v) { c.region_half_width = to_double(v); }},
        {"radii", [](auto& c, auto& v) { c.radii = map_list<double>(v, to_double); }},
        {"betas", [](auto& c, auto& v) { c.betas = map_list<double>(v, to_double); }}}},
      {"analysis",
       {{"t_grid", [](auto& c, auto& v) { c.t_grid = map_list<double>(v, to_double); }},
        {"u_grid", [](auto& c, auto& v) { c.u_grid = map_list<double>(v, to_double); }},
        {"profile_budget", [](auto& c, auto& v) { c.profile_budget = static_cast<int>(to_long(v)); }},
        {"distance_walkers", [](auto& c, auto& v) { c.distance_walkers = to_long(v); }},
        {"heat_fit_min", [](auto& c, auto& v) { c.heat_fit_min = to_double(v); }},
        {"heat_fit_max", [](auto& c, auto& v) { c.heat_fit_max = to_double(v); }},
        {"conductance_sets", [](auto& c, auto& v) { c.conductance_sets = static_cast<int>(to_long(v)); }},
        {"diffusion_envs", [](auto& c, auto& v) { c.diffusion_envs = static_cast<int>(to_long(v)); }},
        {"diffusion_walkers", [](auto& c, auto& v) { c.diffusion_walkers = to_long(v); }},
        {"palm_half_width", [](auto& c, auto& v) { c.palm_half_width = to_double(v); }},
        {"dtrw_steps", [](auto& c, auto& v) { c.dtrw_steps = map_list<long>(v, to_long); }},
        {"vsrw_times", [](auto& c, auto& v) { c.vsrw_times = map_list<double>(v, to_double); }},
        {"palm_samples", [](auto& c, auto& v) { c.palm_samples = static_cast<int>(to_long(v)); }},
        {"rho_grid", [](auto& c, auto& v) { c.rho_grid = map_list<double>(v, to_double); }},
        {"lens_beta", [](auto& c, auto& v) { c.lens_beta = to_double(v); }},
        {"lens_n_max", [](auto& c, auto& v) { c.lens_n_max = static_cast<int>(to_long(v)); }}}},
      {"report",
       {{"heat_slope_target", [](auto& c, auto& v) { c.heat_slope_target = to_double(v); }},
        {"heat_slope_tol", [](auto& c, auto& v) { c.heat_slope_tol = to_double(v); }},
        {"distance_ratio_max", [](auto& c, auto& v) { c.distance_ratio_max = to_double(v); }},
        {"diffusion_rel_tol", [](auto& c, auto& v) { c.diffusion_rel_tol = to_double(v); }}}},
  };
  return table;
}

template <typename T>
void check_increasing(std::vector<std::string>& errors, const std::string& name, const std::vector<T>& v,
                      bool allow_zero) {
  if (v.empty()) {
    errors.push_back(name + ": must not be empty");
    return;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(allow_zero ? v[i] >= 0 : v[i] > 0)) errors.push_back(name + ": entries must be " + (allow_zero ? "nonnegative" : "positive"));
    if (i && !(v[i] > v[i - 1])) errors.push_back(name + ": entries must be strictly increasing");
  }
}

}  // namespace

ParseResult parse_config(const std::string& text, const std::string& source_path) {
  ParseResult r;
  r.config.text = text;
  r.config.source_path = source_path;
  boost::property_tree::ptree tree;
  try {
    std::istringstream is(text);
    boost::property_tree::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    r.errors.push_back("syntax: " + e.message() + " (line " + std::to_string(e.line()) + ")");
    return r;
  }
  bool kind_seen = false, width_seen = false;
  for (const auto& [section, body] : tree) {
    const auto sec = schema().find(section);
    if (body.empty() || sec == schema().end()) {
      r.errors.push_back(body.empty() ? "key '" + section + "' outside any section" : "unknown section [" + section + "]");
      continue;
    }
    for (const auto& [key, node] : body) {
      const auto setter = sec->second.find(key);
      if (setter == sec->second.end()) {
        r.errors.push_back("unknown key " + section + "." + key);
        continue;
      }
      const std::string value = boost::trim_copy(node.data());
      try {
        setter->second(r.config, value);
      } catch (const std::exception& e) {
        r.errors.push_back(section + "." + key + ": cannot parse '" + value + "': " + e.what());
      }
      kind_seen |= section == "process" && key == "kind";
      width_seen |= section == "window" && key == "half_width";
    }
  }
  if (!kind_seen) r.errors.push_back("process.kind is required");
  if (!width_seen) r.errors.push_back("window.half_width is required");
  return r;
}

ParseResult load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return {{}, {"cannot read config file '" + path + "'"}};
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path);
}

std::vector<std::string> validate_config(const ExperimentConfig& c) {
  std::vector<std::string> e;
  for (const auto& s : c.stages)
    if (std::find(kStageOrder.begin(), kStageOrder.end(), s) == kStageOrder.end())
      e.push_back("experiment.stages: unknown stage '" + s + "'");
  if (c.stages.empty()) e.push_back("experiment.stages: must not be empty");
  if (c.out.empty()) e.push_back("experiment.out: must not be empty");
  try {
    c.process.validate();
  } catch (const Error& err) {
    e.push_back(std::string("process: ") + err.what());
  }
  if (c.dim != 2 && c.dim != 3) e.push_back("window.dim: must be 2 or 3");
  if (!(c.half_width > 0.0)) e.push_back("window.half_width: must be > 0");
  if (!(c.s > 0.0)) e.push_back("boxes.s: must be > 0");
  if (!(c.alpha > 0.0)) e.push_back("boxes.alpha: must be > 0");
  if (c.L < -1 || c.L == 0) e.push_back("boxes.L: must be positive (or omitted for the whole field)");
  if (c.half_width > 0.0 && c.s > 0.0 && c.dim >= 2) {
    const double K = subboxes_per_axis(c.dim) * c.s;
    const int range = static_cast<int>(std::floor((c.half_width - K / 2.0) / K));
    if (range < 1) e.push_back("boxes.s: window too small for a 3^d block of boxes of side " + std::to_string(K));
    else if (c.L > range) e.push_back("boxes.L: exceeds the field range " + std::to_string(range));
  }
  if (c.walk_steps < 0) e.push_back("walk.steps: must be >= 0");
  if (!(c.walk_horizon >= 0.0)) e.push_back("walk.horizon: must be >= 0");

  const double region = c.region_half_width;
  if (region < 0.0) e.push_back("corrector.region_half_width: must be >= 0");
  if (region > c.half_width) e.push_back("corrector.region_half_width: exceeds the window half width");
  if (c.has_stage("corrector")) {
    if (c.radii.size() < 3) e.push_back("corrector.radii: at least three radii are required");
    check_increasing(e, "corrector.radii", c.radii, false);
    for (double r : c.radii) {
      if (r > c.half_width) e.push_back("corrector.radii: radius " + std::to_string(r) + " exceeds the window half width");
      if (region > 0.0 && r > region) e.push_back("corrector.radii: radius " + std::to_string(r) + " exceeds the corrector region");
    }
    for (double b : c.betas)
      if (!(b > 0.0)) e.push_back("corrector.betas: entries must be > 0");
  }

  check_increasing(e, "analysis.t_grid", c.t_grid, true);
  check_increasing(e, "analysis.u_grid", c.u_grid, false);
  for (double u : c.u_grid)
    if (u > 0.5) {
      std::ostringstream m;
      m << "analysis.u_grid: u = " << u << " violates the constraint u <= 1/2 (profile volumes range over (0, 1/2])";
      e.push_back(m.str());
    }
  if (c.profile_budget < 100) e.push_back("analysis.profile_budget: must be >= 100");
  if (c.distance_walkers < 1000) e.push_back("analysis.distance_walkers: must be >= 1000");
  if (c.heat_fit_min < 0.0 || (c.heat_fit_max > 0.0 && !(c.heat_fit_max > c.heat_fit_min)))
    e.push_back("analysis.heat_fit_min/heat_fit_max: need 0 <= min < max");
  if (c.conductance_sets < 0) e.push_back("analysis.conductance_sets: must be >= 0");
  if (c.diffusion_envs != 0) {
    if (c.diffusion_envs < 100) e.push_back("analysis.diffusion_envs: must be 0 or >= 100");
    if (c.diffusion_walkers < 1000) e.push_back("analysis.diffusion_walkers: must be >= 1000");
    if (c.dtrw_steps.size() < 2) e.push_back("analysis.dtrw_steps: at least two entries are required");
    if (c.vsrw_times.size() < 2) e.push_back("analysis.vsrw_times: at least two entries are required");
    check_increasing(e, "analysis.dtrw_steps", c.dtrw_steps, false);
    check_increasing(e, "analysis.vsrw_times", c.vsrw_times, false);
    if (!(c.palm_half_width > 0.0)) e.push_back("analysis.palm_half_width: must be > 0");
  }
  if (c.palm_samples != 0) {
    if (c.palm_samples < 1000) e.push_back("analysis.palm_samples: must be 0 or >= 1000");
    check_increasing(e, "analysis.rho_grid", c.rho_grid, false);
    if (!(c.lens_beta > 1.0)) e.push_back("analysis.lens_beta: must be > 1");
    if (c.lens_n_max < 0) e.push_back("analysis.lens_n_max: must be >= 0");
  }
  if (!(c.heat_slope_tol > 0.0)) e.push_back("report.heat_slope_tol: must be > 0");
  if (!(c.distance_ratio_max >= 1.0)) e.push_back("report.distance_ratio_max: must be >= 1");
  if (!(c.diffusion_rel_tol > 0.0)) e.push_back("report.diffusion_rel_tol: must be > 0");
  return e;
}

}  // namespace delwalk::cli
