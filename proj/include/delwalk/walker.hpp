#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "delwalk/geometry.hpp"

namespace delwalk {

using WalkEngine = std::mt19937_64;

enum class WalkKind { dtrw, vsrw, induced_discrete, induced_continuous };

std::string to_string(WalkKind kind);

struct WalkStep {
  int vertex = -1;
  double time = 0.0;  // step index for discrete kinds
};

struct WalkPath {
  int start = -1;
  std::vector<WalkStep> steps;  // steps[0] is the start at time 0
  WalkKind kind = WalkKind::dtrw;
  std::uint64_t seed = 0;

  int vertex_at_time(double t) const;  // last recorded vertex with time <= t
};

// Seed policy: neighbor choices draw from an engine seeded with `seed`;
// holding times and the Poisson clock draw from derive_seed(seed, "clock").
// Hence the jump chain of run_vsrw, and run_induced_discrete on a graph
// without holes, reproduce run_dtrw with the same seed exactly.

WalkPath run_dtrw(const Graph& g, int x0, long n_steps, std::uint64_t seed);

/// Holding time at x is exponential with rate deg(x).
WalkPath run_vsrw(const Graph& g, int x0, double horizon, std::uint64_t seed);

/// Positions of the underlying walk at its successive visits to good vertices.
WalkPath run_induced_discrete(const Graph& g, std::span<const char> good, int x0, long n_steps, std::uint64_t seed);

/// Induced discrete steps driven by a rate-1 Poisson clock.
WalkPath run_induced_continuous(const Graph& g, std::span<const char> good, int x0, double horizon,
                                std::uint64_t seed);

// Longest excursion through non-good vertices before the walk is declared trapped.
inline constexpr long kTrapLimit = 1'000'000;

/// One uniform nearest-neighbor step.
int dtrw_step(const Graph& g, int x, WalkEngine& rng);

/// One induced step: walks from x until the next visit to a good vertex.
int induced_step(const Graph& g, std::span<const char> good, int x, WalkEngine& rng);

/// Connected components of non-good vertices ("holes") in g.
struct HoleStructure {
  std::vector<int> hole_of;  // per vertex, -1 for good vertices
  std::vector<std::vector<int>> holes;
  std::vector<char> tainted;  // hole contains a boundary-tainted vertex
};

HoleStructure find_holes(const Graph& g, std::span<const char> good);

/// Sparse row-stochastic kernel on good vertices (CSR over all vertex ids;
/// rows of non-good vertices are empty).
struct InducedKernel {
  std::vector<char> support;
  std::vector<std::size_t> offsets{0};
  std::vector<int> cols;
  std::vector<double> probs;
  double solver_residual = 0.0;

  std::size_t vertex_count() const { return support.size(); }
  std::span<const int> row_cols(int x) const { return {cols.data() + offsets[x], offsets[x + 1] - offsets[x]}; }
  std::span<const double> row_probs(int x) const { return {probs.data() + offsets[x], offsets[x + 1] - offsets[x]}; }
  double at(int x, int y) const;
  bool has_row(int x) const { return offsets[x + 1] > offsets[x]; }
};

struct KernelRow {
  int x = -1;
  std::vector<int> cols;
  std::vector<double> probs;
  double solver_residual = 0.0;
};

/// Exact induced kernel by hole-by-hole absorption solves. Factorizations
/// are cached per hole, so computing many rows costs one solve per hole.
class InducedKernelSolver {
 public:
  InducedKernelSolver(const Graph& g, std::span<const char> good);

  /// Row of x (which must be good). Throws TruncationError if a hole
  /// adjacent to x contains a boundary-tainted vertex.
  KernelRow row(int x);

  /// All rows of good vertices. Rows of good vertices next to a truncated
  /// hole throw unless `skip_truncated`, in which case those rows stay empty.
  InducedKernel full(bool skip_truncated = false);

  const HoleStructure& holes() const { return holes_; }

 private:
  struct HoleSolution {
    bool solved = false;
    std::vector<int> exits;    // good vertices adjacent to the hole
    std::vector<double> hit;   // |hole| x |exits|, row-major
    double residual = 0.0;
  };
  const HoleSolution& solve(int hole);

  const Graph& g_;
  std::vector<char> good_;
  HoleStructure holes_;
  std::vector<HoleSolution> solutions_;
};

KernelRow induced_kernel_exact(const Graph& g, std::span<const char> good, int x);

/// max |deg(x) c(x,y) - deg(y) c(y,x)| over stored pairs.
double detailed_balance_residual(const InducedKernel& k, const Graph& g);

/// max |sum_y c(x,y) - 1| over stored rows.
double row_sum_residual(const InducedKernel& k);

void write_path_csv(std::ostream& os, const WalkPath& path);
void write_kernel_csv(std::ostream& os, const InducedKernel& k);

}  // namespace delwalk
