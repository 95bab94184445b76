#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "delwalk/core.hpp"
#include "delwalk/pointproc.hpp"

namespace delwalk {

/// Undirected graph on indexed vertices with coordinates, stored as sorted
/// CSR adjacency. Restrictions keep vertex indices stable: removed vertices
/// simply lose their edges.
struct Graph {
  int dim = 2;
  std::vector<Vec> positions;
  std::vector<std::size_t> offsets{0};
  std::vector<int> adjacency;
  std::vector<char> tainted;

  std::size_t vertex_count() const { return positions.size(); }
  std::size_t edge_count() const { return adjacency.size() / 2; }
  int degree(int v) const { return static_cast<int>(offsets[v + 1] - offsets[v]); }
  std::span<const int> neighbors(int v) const {
    return {adjacency.data() + offsets[v], offsets[v + 1] - offsets[v]};
  }
  bool has_edge(int a, int b) const;

  /// Builds the CSR structure from an edge list (duplicates and self-loops
  /// are dropped).
  static Graph from_edges(int dim, std::vector<Vec> positions, std::vector<std::pair<int, int>> edges);
};

/// Subgraph keeping only edges whose endpoints both satisfy keep[v] != 0.
Graph restrict_graph(const Graph& g, std::span<const char> keep);

/// Connected components of the subgraph induced by `mask` (all vertices if
/// empty); returns a component id per vertex, -1 for masked-out vertices.
std::vector<int> connected_components(const Graph& g, std::span<const char> mask, int* count = nullptr);

struct Simplex {
  std::array<int, kMaxDim + 1> v{-1, -1, -1, -1};
  Vec circumcenter{};
  double circumradius = 0.0;
};

/// Delaunay triangulation of a PointSet plus per-vertex boundary taint.
struct DelaunayGraph {
  Graph graph;
  std::vector<Simplex> simplices;
  std::vector<char> on_hull;
  Box window;
  std::uint64_t source_digest = 0;

  int dim() const { return graph.dim; }
  std::size_t vertex_count() const { return graph.vertex_count(); }
};

struct DelaunayOptions {
  // Vertices closer than this to the window boundary are marked tainted;
  // negative means the default of 3 / sqrt(intensity) (3 Delaunay layers).
  double taint_margin = -1.0;
};

/// Bowyer-Watson construction with exact-arithmetic fallback predicates.
/// Supports d = 2 and d = 3. Deterministic for a given PointSet.
DelaunayGraph build_delaunay(const PointSet& ps, const DelaunayOptions& options = {});

/// Assembles a DelaunayGraph (adjacency, circumspheres, taint) from given
/// simplices; used for deserialization and for constructing test cases.
DelaunayGraph make_delaunay_graph(const PointSet& ps, std::vector<Simplex> simplices,
                                  const DelaunayOptions& options = {});

struct EmptyCircumsphereVerdict {
  bool pass = true;
  std::vector<int> offending;  // simplex indices
};

/// Exhaustive check that no vertex lies strictly inside any circumsphere,
/// with tolerance 1e-12 relative to the circumradius.
EmptyCircumsphereVerdict verify_empty_circumcircle(const DelaunayGraph& g);

// Exact-sign geometric predicates (floating-point filter with rational
// fallback when the determinant is within 1e-10 relative of zero).
int orient_sign(int dim, std::span<const Vec* const> pts);
int insphere_sign(int dim, std::span<const Vec* const> simplex, const Vec& q);

namespace detail {
// insphere_sign for a simplex already known to be positively oriented.
int insphere_sign_positive(int dim, std::span<const Vec* const> simplex, const Vec& q);
}  // namespace detail

struct HalfSpace {
  Vec normal{};
  double offset = 0.0;  // {x : normal . x <= offset}
  int neighbor = -1;    // Delaunay neighbor generating the bisector, -1 for a window face
};

struct VoronoiCell {
  int nucleus = -1;
  std::vector<HalfSpace> faces;
  std::vector<Vec> vertices;
  bool clipped = false;
};

/// Voronoi cells clipped to the window, computed from Delaunay neighbors.
std::vector<VoronoiCell> voronoi_cells(const PointSet& ps);
std::vector<VoronoiCell> voronoi_cells(const PointSet& ps, const DelaunayGraph& g);

struct NeighborStats {
  int degree = 0;
  double max_neighbor_distance = 0.0;
};

NeighborStats neighbor_stats(const Graph& g, int v);

/// Exact convex-polytope/box intersection (closed sets, touching counts).
bool cell_intersects_box(const VoronoiCell& cell, int dim, const Box& box);

/// Nuclei whose cell meets `box`; the box must lie inside the window.
std::vector<int> cells_intersecting_box(const PointSet& ps, std::span<const VoronoiCell> cells, const Box& box);

void write_graph(std::ostream& os, const DelaunayGraph& g);

/// Reads the edge-list format; simplices are not part of it, so the result
/// carries adjacency, positions and taint only.
Graph read_graph(std::istream& is);

}  // namespace delwalk
