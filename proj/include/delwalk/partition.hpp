#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "delwalk/geometry.hpp"

namespace delwalk {

using BoxIndex = std::array<int, kMaxDim>;

struct BoxRecord {
  BoxIndex z{};
  std::vector<int> subbox_counts;  // lexicographic over sub-box offsets
  bool nice = false;
  bool good = false;
};

/// Boxes B_z = K z + [-K/2, K/2]^d for |z_i| <= range, each split into
/// m^d sub-boxes of side s where m = ceil(3 sqrt(d)) and K = m s.
struct GoodBoxField {
  int dim = 2;
  double s = 0.0;
  double K = 0.0;
  double alpha = 0.0;
  int per_axis = 0;  // m
  int range = 0;
  std::vector<BoxRecord> boxes;  // lexicographic in z
  std::uint64_t source_digest = 0;

  int side_count() const { return 2 * range + 1; }
  bool in_range(const BoxIndex& z) const;
  std::size_t flat(const BoxIndex& z) const;
  BoxIndex unflat(std::size_t i) const;
  Box box(const BoxIndex& z) const;
  const BoxRecord& at(const BoxIndex& z) const { return boxes[flat(z)]; }
  double max_subbox_count() const;  // alpha s^d
  /// Degree bound D = alpha (3K)^d for points meeting a good box.
  double degree_bound() const;
  double good_fraction() const;
};

/// Side multiplier ceil(3 sqrt(d)).
int subboxes_per_axis(int dim);

/// Counts points per sub-box and classifies every box fully inside the
/// window. Throws ConfigurationError unless at least 3^d boxes fit.
GoodBoxField classify_boxes(const PointSet& ps, double s, double alpha);

/// As above, also checking that `g` was built from `ps`.
GoodBoxField classify_boxes(const PointSet& ps, const DelaunayGraph& g, double s, double alpha);

/// Classification from externally supplied sub-box counts, laid out box by
/// box (lexicographic in z) with m^d counts each.
GoodBoxField classify_counts(int dim, double s, double alpha, int range, std::span<const int> counts);

/// Count-only Poisson field: each sub-box count is an independent
/// Poisson(intensity s^d) draw, which is the exact joint law of the counts.
GoodBoxField poisson_box_field(int dim, double s, double alpha, int range, double intensity, std::uint64_t seed);

struct Hole {
  int id = 0;
  std::vector<std::size_t> boxes;  // flat field indices, ascending
  bool enclosed = false;           // does not touch the faces |z_i| = L
  int diameter = 0;                // max over axes of (max z_i - min z_i + 1)
};

struct ClusterDecomposition {
  int L = 0;
  int dim = 2;
  std::vector<std::size_t> cluster;  // flat field indices, ascending
  std::vector<Hole> holes;           // every complement component in [-L, L]^d
  std::vector<std::size_t> filled;   // cluster plus enclosed holes, ascending
  bool empty_cluster = false;
  std::uint64_t source_digest = 0;

  // Vertex sets, populated by good_points().
  std::vector<int> good_points;
  std::vector<int> filled_points;
  bool good_connected = false;
};

/// Largest l1-connected component of good boxes in [-L, L]^d (ties broken by
/// the lexicographically smallest member) and the infinity-connected
/// components of its complement.
ClusterDecomposition cluster_components(const GoodBoxField& field, int L);

/// Nuclei whose Voronoi cell meets a cluster box (good) or a filled box
/// (filled). Stores both sets in `decomp` and checks Delaunay connectivity
/// of the good set.
void good_points(ClusterDecomposition& decomp, const GoodBoxField& field, const PointSet& ps,
                 std::span<const VoronoiCell> cells, const Graph& g);

/// Per-vertex membership mask from a vertex list.
std::vector<char> vertex_mask(std::size_t n, std::span<const int> vertices);

struct HoleDiameter {
  int L = 0;
  int max_diameter = 0;  // l-infinity extent in boxes; a single box has diameter 1
  int hole_count = 0;
};

/// Maximum diameter over enclosed holes for each decomposition.
std::vector<HoleDiameter> hole_diameter_stats(std::span<const ClusterDecomposition> decomps);

struct VolumeGrowthEntry {
  int L = 0;
  double degree_sum = 0.0;  // sum over good points of degree in the filled restriction
  double ratio = 0.0;       // degree_sum / L^d
  std::size_t cluster_boxes = 0;
  std::size_t good_count = 0;
  bool empty = false;
};

struct VolumeGrowthReport {
  std::vector<VolumeGrowthEntry> entries;
  bool drift = false;  // max/min ratio over nonempty entries exceeds 2
};

VolumeGrowthReport volume_growth_report(std::span<const ClusterDecomposition> decomps, const Graph& g);

/// CSV: z coordinates, sub-box counts (';'-separated), nice, good, cluster, hole id.
void write_field_csv(std::ostream& os, const GoodBoxField& field, const ClusterDecomposition* decomp = nullptr);

}  // namespace delwalk
