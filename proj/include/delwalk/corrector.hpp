#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "delwalk/geometry.hpp"

namespace delwalk {

enum class VertexRole : char { outside, interior, boundary };

/// Harmonic coordinates on a region: phi solves the unit-conductance
/// Dirichlet problem with phi = position on the boundary; chi = position - phi.
/// Vertices outside region and boundary carry phi = position, chi = 0.
struct HarmonicEmbedding {
  int dim = 2;
  std::vector<Vec> positions;
  std::vector<VertexRole> role;
  std::vector<int> interior;  // ascending
  std::vector<int> boundary;  // ascending
  std::vector<Vec> phi;
  std::vector<Vec> chi;
  double residual = 0.0;   // max interior defect, Euclidean norm over coordinates
  double tolerance = 0.0;
  int solver_iterations = 0;  // max over coordinates
};

inline constexpr int kHarmonicIterationCap = 100'000;

/// Jacobi-preconditioned conjugate gradients, one right-hand side per
/// coordinate. `region` is a vertex mask; the boundary is every outside
/// neighbor of the region. Throws SingularSystemError when an interior
/// component has no boundary contact, ResourceError when the cap is hit.
HarmonicEmbedding solve_harmonic_embedding(const Graph& g, std::span<const char> region, double tolerance);

/// Tolerance defaults to 1e-10 times the window's longest side.
HarmonicEmbedding solve_harmonic_embedding(const DelaunayGraph& g, std::span<const char> region,
                                           std::optional<double> tolerance = std::nullopt);

/// Per-interior-vertex defect ||sum_{y~x} (phi(y) - phi(x))||, indexed like emb.interior.
std::vector<double> harmonic_defects(const Graph& g, const HarmonicEmbedding& emb);

std::vector<Vec> corrector_values(const HarmonicEmbedding& emb);

struct RecursionEntry {
  double n = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
  double r_n = 0.0;
  double r_3n = 0.0;
  bool available = false;  // 3n inside the solved region
  bool holds = false;      // r_n <= epsilon n + delta r_3n
};

struct PolyGrowthEntry {
  double n = 0.0;
  double beta = 0.0;
  double pair_max = 0.0;  // max ||chi(y) - chi(x)|| over nuclei in [-n, n]^d
  double ratio = 0.0;     // pair_max / n^beta
};

struct SublinearityOptions {
  std::vector<std::pair<double, double>> epsilon_delta;
  std::vector<double> betas;
  std::span<const char> good;  // optional mask for the good-only maximum
  double region_half_width = 0.0;  // radii beyond this are not available for recursion
};

struct SublinearityProfile {
  std::vector<double> radii;
  int base_vertex = -1;            // nucleus nearest the origin
  std::vector<double> max_chi;      // max ||chi(x) - chi(base)|| over [-n, n]^d
  std::vector<double> max_chi_good; // same over good points; empty without a mask
  std::vector<double> ratios;       // max_chi / n
  std::vector<RecursionEntry> recursion;
  std::vector<PolyGrowthEntry> poly_growth;
};

/// All radii read one embedding (solved on the largest box), so they share
/// one boundary condition. Boundary-tainted vertices are skipped. Requires at
/// least three strictly increasing positive radii.
SublinearityProfile sublinearity_profile(const Graph& g, const HarmonicEmbedding& emb, std::span<const double> radii,
                                         const SublinearityOptions& options = {});

struct DriftEstimate {
  int vertex = -1;
  long visits = 0;
  Vec mean_increment{};  // empirical E[phi(X_{k+1}) - phi(x) | X_k = x]
  Vec standard_error{};
};

struct MartingaleReport {
  std::vector<double> defects;  // as harmonic_defects
  std::vector<long> steps;      // n values sampled
  std::vector<double> second_moment;  // E||M_n - M_0||^2 over uncensored walks
  std::vector<double> second_moment_se;
  double slope = 0.0;      // least-squares fit of second_moment against n
  double intercept = 0.0;
  double ratio_slope = 0.0;  // fit of (second_moment / n) against n, relative to its mean
  long walks = 0;
  long censored = 0;  // walks that left the interior before n_steps
  std::vector<DriftEstimate> drift;  // vertices visited at least min_visits times
};

/// M_n = phi(X_n) for a DTRW from x0 (interior). Walks that step off the
/// interior are censored and excluded from the moment curve.
MartingaleReport martingale_diagnostic(const Graph& g, const HarmonicEmbedding& emb, int x0, long n_steps, long walks,
                                       std::uint64_t seed, long min_visits = 1000);

/// CSV: vertex, position, phi, chi, interior flag.
void write_embedding_csv(std::ostream& os, const HarmonicEmbedding& emb);

}  // namespace delwalk
