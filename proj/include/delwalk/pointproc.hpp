#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "delwalk/core.hpp"

namespace delwalk {

enum class ProcessKind { poisson, matern_hardcore_I, matern_hardcore_II, matern_cluster };

std::string to_string(ProcessKind kind);
ProcessKind process_kind_from_string(const std::string& name);

/// Parameters of a stationary point process. Kind-specific fields are
/// present exactly when the kind uses them (see validate()).
struct ProcessSpec {
  ProcessKind kind = ProcessKind::poisson;
  double intensity = 1.0;  // primary intensity (parents are separate for clusters)
  std::optional<double> hardcore_radius;
  std::optional<double> parent_intensity;
  std::optional<double> mean_offspring;
  std::optional<double> cluster_radius;

  static ProcessSpec poisson(double intensity);
  static ProcessSpec hardcore(ProcessKind kind, double intensity, double radius);
  static ProcessSpec cluster(double parent_intensity, double mean_offspring, double radius);

  /// Throws ParameterError on negative parameters or kind/field mismatch.
  void validate() const;

  /// Expected number of points per unit volume of the stationary law when
  /// it has a closed form (Poisson, cluster); for hardcore kinds the
  /// primary intensity is returned.
  double nominal_intensity() const;
};

struct Provenance {
  std::string process;
  std::vector<std::pair<std::string, double>> parameters;
  std::uint64_t seed = 0;
};

/// Finite realization of a point process inside an axis-aligned window.
struct PointSet {
  int dim = 2;
  Box window;
  std::vector<Vec> points;
  Provenance provenance;
  bool palm_conditioned = false;
  // Set by samplers that retained nothing although the parent pattern was
  // nonempty (e.g. a hardcore radius far too large for the window).
  bool empty_warning = false;

  std::size_t size() const { return points.size(); }

  /// Content digest over dimension, window and coordinate bits.
  std::uint64_t digest() const;
};

// Relative magnitude of the general-position jitter applied by samplers.
inline constexpr double kJitterRelative = 1e-9;

PointSet sample_poisson(double intensity, const Box& window, std::uint64_t seed);

PointSet sample_matern_hardcore(const ProcessSpec& spec, const Box& window, std::uint64_t seed);

struct ClusterSample {
  PointSet points;
  std::vector<Vec> parents;
};

PointSet sample_matern_cluster(const ProcessSpec& spec, const Box& window, std::uint64_t seed);
ClusterSample sample_matern_cluster_detailed(const ProcessSpec& spec, const Box& window,
                                             std::uint64_t seed);

/// Dispatches on spec.kind.
PointSet sample_process(const ProcessSpec& spec, const Box& window, std::uint64_t seed);

struct PalmOptions {
  // Nearest-point acceptance radius for non-Poisson kinds; defaults to
  // 0.1 / sqrt(intensity) when unset.
  std::optional<double> rejection_radius;
  int max_attempts = 10000;
};

/// Sample from the Palm distribution: the returned set contains the origin
/// at index 0. Poisson uses Slivnyak (stationary sample plus the origin);
/// other kinds use nearest-point acceptance and re-centering.
PointSet palm_sample(const ProcessSpec& spec, const Box& window, std::uint64_t seed,
                     const PalmOptions& options = {});

/// Independent Poisson(intensity * cell_volume) counts, one per cell.
std::vector<int> sample_poisson_counts(double intensity, double cell_volume, std::size_t cells,
                                       std::uint64_t seed);

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
  bool flagged = false;  // estimate rests on too few events to be trusted
};

struct AssumptionReport {
  std::vector<CurvePoint> void_curve;       // (L, P[#(L-box) = 0])
  std::vector<CurvePoint> tail_curve;       // (L, P[#(L-box) >= c2 L^d])
  std::vector<CurvePoint> palm_void_curve;  // (L, P0[#(C_L) = 0]) for C_L = L e1 + [-L/2, L/2]^d
  std::vector<CurvePoint> exp_moment_curve; // (rho, E0[exp(rho #(xi0 in [-L0, L0]^d))])
  double exp_moment_box = 0.0;              // L0 used for the exponential moments
  double c2 = 0.0;
  double void_log_slope = 0.0;              // least-squares slope of log P[void] vs L^d
  bool void_slope_valid = false;
  int sample_count = 0;
};

/// Empirical estimators for the void, upper-tail, Palm-void and Palm
/// exponential-moment assumptions. `c2` defaults to 2 * nominal intensity.
AssumptionReport assumption_report(const ProcessSpec& spec, const std::vector<double>& L_grid,
                                   const std::vector<double>& rho_grid, int samples,
                                   std::uint64_t seed, std::optional<double> c2 = std::nullopt,
                                   int dim = 2);

void write_pointset(std::ostream& os, const PointSet& ps);
PointSet read_pointset(std::istream& is);

}  // namespace delwalk
