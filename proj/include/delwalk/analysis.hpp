#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "delwalk/geometry.hpp"
#include "delwalk/pointproc.hpp"
#include "delwalk/stats.hpp"
#include "delwalk/walker.hpp"

namespace delwalk {

// Conventions for this module: `g` is the Delaunay graph restricted to the
// filled point set, so g.degree is the reversible measure of the induced
// walk; `good` marks the good points; `kernel` is the exact induced kernel
// on g. The constant-speed comparison walk lives on g restricted to `good`.

struct ConductanceRecord {
  double I_hat = 0.0;    // induced walk
  double I_tilde = 0.0;  // constant-speed walk on the good points
  double vol_hat = 0.0;  // degree of A in g
  double vol_hat_total = 0.0;
  double vol_tilde = 0.0;  // degree of A in g restricted to good
  double vol_tilde_total = 0.0;
  double D = 0.0;
  bool comparison_holds = false;  // I_hat >= I_tilde / D
};

/// A must be a set of good vertices. Throws DependencyError when a kernel
/// row of some x in A is missing.
ConductanceRecord conductance_pair(const Graph& g, std::span<const char> good, const InducedKernel& kernel,
                                   std::span<const int> A, double D);

struct IsoProfile {
  std::vector<double> u_grid;
  std::vector<double> phi_hat;
  std::vector<double> phi_tilde;
  std::vector<std::size_t> candidate_count;  // feasible candidates per u
  double fitted_c = 0.0;  // phi_tilde ~ c min{u^{-1/d} / L, log(L)^{-d/(d-1)}}
  double fit_r2 = 0.0;
  bool exhaustive = false;  // all subsets enumerated (at most 15 good vertices)
};

inline constexpr std::size_t kExhaustiveProfileLimit = 15;

/// Infimum over a candidate family: sweep sets of the second eigenvector of
/// the constant-speed walk, `budget` randomized BFS growths, and sweeps of
/// l-infinity boxes around random centers. Every prefix of every sweep is a
/// candidate. Small good sets are enumerated exhaustively instead.
IsoProfile iso_profile_estimate(const Graph& g, std::span<const char> good, const InducedKernel& kernel,
                                std::span<const double> u_grid, int budget, std::uint64_t seed, double L);

struct UniformizationOptions {
  double tail = 1e-12;           // Poisson mass discarded beyond the last term
  long max_terms = 2'000'000;    // kernel applications allowed
};

/// Law of the rate-1 induced walk at each t, started at x, by Poisson
/// weighting of kernel powers applied to the point mass at x.
std::vector<std::vector<double>> uniformized_distributions(const InducedKernel& kernel, int x,
                                                           std::span<const double> t_grid,
                                                           const UniformizationOptions& options = {});

struct HeatKernelPoint {
  double t = 0.0;
  double probability = 0.0;  // P_x[Y_t = x]
};

std::vector<HeatKernelPoint> heat_kernel_curve(const InducedKernel& kernel, int x, std::span<const double> t_grid,
                                               const UniformizationOptions& options = {});

struct MonteCarloEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Independent estimate of P_x[Y_t = x] by sampling the induced walk from
/// the kernel rows.
MonteCarloEstimate heat_kernel_monte_carlo(const InducedKernel& kernel, int x, double t, long walkers,
                                           std::uint64_t seed);

struct DistancePoint {
  double t = 0.0;
  double ratio = 0.0;  // E||Y_t - x|| / sqrt(t), 0 at t = 0
  double ratio_se = 0.0;
  double second_moment = 0.0;  // E||Y_t - x||^2
  double second_moment_se = 0.0;
};

/// Monte Carlo over `walkers` (at least 1000) kernel-driven walks; standard
/// errors from 20 batches of walkers.
std::vector<DistancePoint> expected_distance_curve(const Graph& g, const InducedKernel& kernel, int x,
                                                   std::span<const double> t_grid, long walkers, std::uint64_t seed);

struct PalmEnvironment {
  PointSet points;  // origin at index 0
  DelaunayGraph graph;
};

struct DiffusionOptions {
  std::vector<long> dtrw_steps;     // at least two
  std::vector<double> vsrw_times;   // at least two
  long walkers = 10000;             // per walk kind, spread over environments
  std::uint64_t seed = 0;
};

struct DiffusionReport {
  std::vector<double> msd_dtrw;  // per dtrw_steps entry
  std::vector<double> msd_vsrw;  // per vsrw_times entry
  stats::LinearFit dtrw_fit;     // msd against n
  stats::LinearFit vsrw_fit;     // msd against t
  double sigma2_dtrw = 0.0;      // slope / d
  double sigma2_vsrw = 0.0;
  double coefficient_ratio = 0.0;     // sigma2_vsrw / sigma2_dtrw
  double mean_palm_degree = 0.0;      // average degree over untainted vertices of all environments
  double mean_origin_degree = 0.0;    // degree of the origin, averaged over environments
  std::vector<std::vector<double>> covariance;  // of X_n / sqrt(n) at the largest n
  double isotropy = 0.0;         // max |off-diagonal| / mean diagonal
  double ks_statistic = 0.0;     // first coordinate of X_n / sqrt(n) against the fitted normal
  double ks_critical_1pct = 0.0;
  long walks = 0;
  long skipped = 0;  // environments whose origin is isolated
  long escaped = 0;  // walks that reached a boundary-tainted vertex; excluded
};

/// Requires at least 100 environments and 1000 walkers.
DiffusionReport diffusion_report(std::span<const PalmEnvironment> envs, const DiffusionOptions& options);

struct PalmObservation {
  int dim = 2;
  int degree = 0;
  double max_neighbor_distance = 0.0;
  std::vector<Vec> neighbors;  // relative to the origin
  std::vector<Vec> points;     // all other points within `radius` of the origin
  double radius = 0.0;
};

/// Origin must be vertex 0 at the coordinate origin.
PalmObservation observe_palm(const PointSet& ps, const DelaunayGraph& g, double radius);

struct LensLevel {
  int n = 0;
  long applicable = 0;  // samples whose 2^d lenses all contain a point
  long violations = 0;  // applicable samples with a neighbor outside Gamma^n
};

struct TailMomentReport {
  std::vector<double> rho_grid;
  std::vector<double> distance_survival;  // P[max neighbor distance > rho]
  stats::LinearFit distance_fit;          // log survival against rho, over positive entries
  std::vector<int> degree_grid;
  std::vector<double> degree_survival;    // P[deg_0 > k]
  stats::LinearFit degree_fit;
  std::vector<double> running_degree_m2;     // running mean of deg_0^2
  std::vector<double> running_distance_m4;   // running mean of max distance^4
  double degree_m2_drift = 0.0;    // (max - min) / final over the second half
  double distance_m4_drift = 0.0;
  double beta = 1.5;
  std::vector<LensLevel> lens;
  long lens_violations = 0;
  std::size_t samples = 0;
};

/// Requires at least 1000 observations.
TailMomentReport tail_moment_report(std::span<const PalmObservation> ensemble, std::span<const double> rho_grid,
                                    double beta = 1.5, int n_max = 5);

/// Point p lies in the lens of sign pattern `mask` at scale r: inside every
/// open ball of radius r centered at sign_i r e_i.
bool in_lens(const Vec& p, int dim, unsigned mask, double r);

/// Point p lies in Gamma at scale r: inside some open ball of radius r
/// centered at +-r e_i.
bool in_gamma(const Vec& p, int dim, double r);

}  // namespace delwalk
