#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "delwalk/pointproc.hpp"
#include "delwalk/walker.hpp"

namespace delwalk::cli {

// Dependency order; a stage may only read artifacts of earlier stages.
inline const std::vector<std::string> kStageOrder{"sample", "triangulate", "classify", "walk", "corrector", "analysis"};

struct ExperimentConfig {
  std::string text;  // verbatim source, echoed into the manifest
  std::string source_path;

  std::uint64_t seed = 1;
  std::string out = "out";
  std::vector<std::string> stages = kStageOrder;

  ProcessSpec process;
  int dim = 2;
  double half_width = 0.0;

  double s = 10.0;
  double alpha = 2.0;
  int L = -1;  // cluster range in boxes; -1 means the full field

  WalkKind walk_kind = WalkKind::induced_continuous;
  long walk_steps = 1000;
  double walk_horizon = 100.0;
  bool write_kernel = false;

  double region_half_width = 0.0;  // 0 means half_width minus 2 taint margins
  std::vector<double> radii;
  std::vector<double> betas{0.5};

  std::vector<double> t_grid{1, 2, 4, 8, 16, 32, 64};
  std::vector<double> u_grid{0.05, 0.1, 0.2, 0.3, 0.5};
  int profile_budget = 100;
  long distance_walkers = 10000;
  double heat_fit_min = 0.0;  // fit window for the log-log heat-kernel slope; 0 means the whole grid
  double heat_fit_max = 0.0;
  int conductance_sets = 100;
  int diffusion_envs = 0;  // 0 disables the diffusion block
  long diffusion_walkers = 1000;
  double palm_half_width = 20.0;
  std::vector<long> dtrw_steps{50, 100, 200};
  std::vector<double> vsrw_times{10, 20, 40};
  int palm_samples = 0;  // 0 disables the tail and lens block
  std::vector<double> rho_grid{2, 2.5, 3, 3.5, 4, 4.5, 5};
  double lens_beta = 1.5;
  int lens_n_max = 5;

  double heat_slope_target = -1.0;
  double heat_slope_tol = 0.15;
  double distance_ratio_max = 1.5;
  double diffusion_rel_tol = 0.10;

  bool has_stage(const std::string& name) const;
};

struct ParseResult {
  ExperimentConfig config;
  std::vector<std::string> errors;  // empty when the config is usable
};

/// Parses INI text; unknown sections or keys are errors. All problems are
/// collected rather than thrown.
ParseResult parse_config(const std::string& text, const std::string& source_path = "");
ParseResult load_config(const std::string& path);

/// Structural and cross-field checks on a parsed config.
std::vector<std::string> validate_config(const ExperimentConfig& c);

}  // namespace delwalk::cli
