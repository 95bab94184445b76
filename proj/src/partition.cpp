#include "delwalk/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace delwalk {

namespace {

// Union-find with path halving and union by size.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

std::size_t ipow(std::size_t b, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

// Calls f(offset) for every offset in {-1,0,1}^d except 0; l1 restricts to
// the 2d axis neighbors.
template <typename F>
void for_neighbors(int dim, bool l1, F&& f) {
  const std::size_t total = ipow(3, dim);
  for (std::size_t code = 0; code < total; ++code) {
    BoxIndex off{};
    std::size_t c = code;
    int nonzero = 0;
    for (int i = 0; i < dim; ++i) {
      off[i] = static_cast<int>(c % 3) - 1;
      c /= 3;
      nonzero += off[i] != 0;
    }
    if (nonzero == 0 || (l1 && nonzero != 1)) continue;
    f(off);
  }
}

void validate_box_params(int dim, double s, double alpha) {
  if (dim < 2 || dim > kMaxDim) throw ParameterError("box field: dim must be 2 or 3");
  if (!(s > 0.0) || !std::isfinite(s)) throw ParameterError("box field: s must be > 0");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterError("box field: alpha must be > 0");
}

void classify(GoodBoxField& f) {
  const double cap = f.max_subbox_count();
  for (BoxRecord& b : f.boxes) {
    b.nice = std::all_of(b.subbox_counts.begin(), b.subbox_counts.end(),
                         [&](int c) { return c >= 1 && static_cast<double>(c) <= cap; });
  }
  for (BoxRecord& b : f.boxes) {
    bool good = b.nice;
    for_neighbors(f.dim, false, [&](const BoxIndex& off) {
      if (!good) return;
      BoxIndex n{};
      for (int i = 0; i < f.dim; ++i) n[i] = b.z[i] + off[i];
      good = f.in_range(n) && f.at(n).nice;
    });
    b.good = good;
  }
}

GoodBoxField empty_field(int dim, double s, double alpha, int range) {
  GoodBoxField f;
  f.dim = dim;
  f.s = s;
  f.alpha = alpha;
  f.per_axis = subboxes_per_axis(dim);
  f.K = f.per_axis * s;
  f.range = range;
  const std::size_t n = ipow(static_cast<std::size_t>(f.side_count()), dim);
  const std::size_t sub = ipow(static_cast<std::size_t>(f.per_axis), dim);
  f.boxes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    f.boxes[i].z = f.unflat(i);
    f.boxes[i].subbox_counts.assign(sub, 0);
  }
  return f;
}

}  // namespace

int subboxes_per_axis(int dim) { return static_cast<int>(std::ceil(3.0 * std::sqrt(static_cast<double>(dim)))); }

bool GoodBoxField::in_range(const BoxIndex& z) const {
  for (int i = 0; i < dim; ++i)
    if (z[i] < -range || z[i] > range) return false;
  return true;
}

std::size_t GoodBoxField::flat(const BoxIndex& z) const {
  std::size_t idx = 0;
  for (int i = 0; i < dim; ++i) idx = idx * side_count() + static_cast<std::size_t>(z[i] + range);
  return idx;
}

BoxIndex GoodBoxField::unflat(std::size_t i) const {
  BoxIndex z{};
  for (int k = dim - 1; k >= 0; --k) {
    z[k] = static_cast<int>(i % side_count()) - range;
    i /= side_count();
  }
  return z;
}

Box GoodBoxField::box(const BoxIndex& z) const {
  Box b;
  b.dim = dim;
  for (int i = 0; i < dim; ++i) {
    b.lo[i] = K * z[i] - K / 2.0;
    b.hi[i] = K * z[i] + K / 2.0;
  }
  return b;
}

double GoodBoxField::max_subbox_count() const { return alpha * std::pow(s, dim); }

double GoodBoxField::degree_bound() const { return alpha * std::pow(3.0 * K, dim); }

double GoodBoxField::good_fraction() const {
  if (boxes.empty()) return 0.0;
  const auto good = std::count_if(boxes.begin(), boxes.end(), [](const BoxRecord& b) { return b.good; });
  return static_cast<double>(good) / static_cast<double>(boxes.size());
}

GoodBoxField classify_boxes(const PointSet& ps, double s, double alpha) {
  const int dim = ps.dim;
  validate_box_params(dim, s, alpha);
  const int m = subboxes_per_axis(dim);
  const double K = m * s;
  int range = std::numeric_limits<int>::max();
  for (int i = 0; i < dim; ++i) {
    range = std::min(range, static_cast<int>(std::floor((ps.window.hi[i] - K / 2.0) / K)));
    range = std::min(range, static_cast<int>(std::floor((-ps.window.lo[i] - K / 2.0) / K)));
  }
  if (range < 1)
    throw ConfigurationError("classify_boxes: window too small for 3^d boxes of side " + std::to_string(K));

  GoodBoxField f = empty_field(dim, s, alpha, range);
  f.source_digest = ps.digest();
  for (const Vec& p : ps.points) {
    BoxIndex z{};
    std::size_t sub = 0;
    bool inside = true;
    for (int i = 0; i < dim && inside; ++i) {
      z[i] = static_cast<int>(std::floor((p[i] + K / 2.0) / K));
      if (z[i] < -range || z[i] > range) inside = false;
      const int j = std::clamp(static_cast<int>(std::floor((p[i] - (K * z[i] - K / 2.0)) / s)), 0, m - 1);
      sub = sub * m + static_cast<std::size_t>(j);
    }
    if (inside) ++f.boxes[f.flat(z)].subbox_counts[sub];
  }
  classify(f);
  return f;
}

GoodBoxField classify_boxes(const PointSet& ps, const DelaunayGraph& g, double s, double alpha) {
  if (g.source_digest != ps.digest()) throw ConsistencyError("classify_boxes: graph was built from a different point set");
  return classify_boxes(ps, s, alpha);
}

GoodBoxField classify_counts(int dim, double s, double alpha, int range, std::span<const int> counts) {
  validate_box_params(dim, s, alpha);
  if (range < 1) throw ConfigurationError("classify_counts: range must be >= 1");
  GoodBoxField f = empty_field(dim, s, alpha, range);
  const std::size_t sub = ipow(static_cast<std::size_t>(f.per_axis), dim);
  if (counts.size() != f.boxes.size() * sub) throw ParameterError("classify_counts: wrong number of counts");
  for (std::size_t b = 0; b < f.boxes.size(); ++b)
    std::copy_n(counts.begin() + static_cast<std::ptrdiff_t>(b * sub), sub, f.boxes[b].subbox_counts.begin());
  classify(f);
  return f;
}

GoodBoxField poisson_box_field(int dim, double s, double alpha, int range, double intensity, std::uint64_t seed) {
  validate_box_params(dim, s, alpha);
  if (range < 1) throw ConfigurationError("poisson_box_field: range must be >= 1");
  const std::size_t boxes = ipow(static_cast<std::size_t>(2 * range + 1), dim);
  const std::size_t sub = ipow(static_cast<std::size_t>(subboxes_per_axis(dim)), dim);
  const std::vector<int> counts = sample_poisson_counts(intensity, std::pow(s, dim), boxes * sub, seed);
  return classify_counts(dim, s, alpha, range, counts);
}

ClusterDecomposition cluster_components(const GoodBoxField& field, int L) {
  if (L < 1 || L > field.range) throw ParameterError("cluster_components: L must lie in [1, field range]");
  const int dim = field.dim;
  ClusterDecomposition d;
  d.L = L;
  d.dim = dim;
  d.source_digest = field.source_digest;

  // Flat indices of the boxes in [-L, L]^d, ascending (lexicographic in z).
  std::vector<std::size_t> region;
  for (std::size_t i = 0; i < field.boxes.size(); ++i) {
    const BoxIndex& z = field.boxes[i].z;
    bool in = true;
    for (int k = 0; k < dim; ++k) in = in && std::abs(z[k]) <= L;
    if (in) region.push_back(i);
  }
  auto in_region = [&](const BoxIndex& z) {
    for (int k = 0; k < dim; ++k)
      if (std::abs(z[k]) > L) return false;
    return true;
  };

  DisjointSets good_sets(field.boxes.size());
  for (std::size_t i : region) {
    if (!field.boxes[i].good) continue;
    for_neighbors(dim, true, [&](const BoxIndex& off) {
      BoxIndex n{};
      for (int k = 0; k < dim; ++k) n[k] = field.boxes[i].z[k] + off[k];
      if (in_region(n) && field.at(n).good) good_sets.unite(i, field.flat(n));
    });
  }
  // Component sizes; region is ascending, so the first root reaching the
  // maximal size owns the lexicographically smallest member.
  std::vector<std::size_t> size(field.boxes.size(), 0);
  std::vector<std::size_t> first_member(field.boxes.size(), field.boxes.size());
  for (std::size_t i : region)
    if (field.boxes[i].good) {
      const std::size_t r = good_sets.find(i);
      ++size[r];
      first_member[r] = std::min(first_member[r], i);
    }
  std::size_t best_root = field.boxes.size(), best_size = 0;
  for (std::size_t i : region) {
    if (!field.boxes[i].good) continue;
    const std::size_t r = good_sets.find(i);
    if (size[r] > best_size || (size[r] == best_size && first_member[r] < first_member[best_root])) {
      best_size = size[r];
      best_root = r;
    }
  }
  std::vector<char> in_cluster(field.boxes.size(), 0);
  if (best_size == 0) {
    d.empty_cluster = true;
  } else {
    for (std::size_t i : region)
      if (field.boxes[i].good && good_sets.find(i) == best_root) {
        in_cluster[i] = 1;
        d.cluster.push_back(i);
      }
  }

  DisjointSets hole_sets(field.boxes.size());
  for (std::size_t i : region) {
    if (in_cluster[i]) continue;
    for_neighbors(dim, false, [&](const BoxIndex& off) {
      BoxIndex n{};
      for (int k = 0; k < dim; ++k) n[k] = field.boxes[i].z[k] + off[k];
      if (in_region(n) && !in_cluster[field.flat(n)]) hole_sets.unite(i, field.flat(n));
    });
  }
  std::vector<int> hole_of_root(field.boxes.size(), -1);
  for (std::size_t i : region) {
    if (in_cluster[i]) continue;
    const std::size_t r = hole_sets.find(i);
    if (hole_of_root[r] < 0) {
      hole_of_root[r] = static_cast<int>(d.holes.size());
      Hole h;
      h.id = hole_of_root[r];
      h.enclosed = true;
      d.holes.push_back(h);
    }
    Hole& h = d.holes[hole_of_root[r]];
    h.boxes.push_back(i);
    for (int k = 0; k < dim; ++k)
      if (std::abs(field.boxes[i].z[k]) == L) h.enclosed = false;
  }

  for (Hole& h : d.holes) {
    BoxIndex lo, hi;
    lo.fill(std::numeric_limits<int>::max());
    hi.fill(std::numeric_limits<int>::min());
    for (std::size_t i : h.boxes)
      for (int k = 0; k < dim; ++k) {
        lo[k] = std::min(lo[k], field.boxes[i].z[k]);
        hi[k] = std::max(hi[k], field.boxes[i].z[k]);
      }
    for (int k = 0; k < dim; ++k) h.diameter = std::max(h.diameter, hi[k] - lo[k] + 1);
  }

  d.filled = d.cluster;
  for (const Hole& h : d.holes)
    if (h.enclosed) d.filled.insert(d.filled.end(), h.boxes.begin(), h.boxes.end());
  std::sort(d.filled.begin(), d.filled.end());
  return d;
}

std::vector<char> vertex_mask(std::size_t n, std::span<const int> vertices) {
  std::vector<char> m(n, 0);
  for (int v : vertices) {
    if (v < 0 || static_cast<std::size_t>(v) >= n) throw LookupError("vertex_mask: index out of range");
    m[v] = 1;
  }
  return m;
}

void good_points(ClusterDecomposition& decomp, const GoodBoxField& field, const PointSet& ps,
                 std::span<const VoronoiCell> cells, const Graph& g) {
  if (decomp.source_digest != ps.digest() || field.source_digest != ps.digest())
    throw ConsistencyError("good_points: decomposition was built from a different point set");
  if (cells.size() != ps.size() || g.vertex_count() != ps.size())
    throw ConsistencyError("good_points: cells or graph do not match the point set");
  const int dim = ps.dim;
  std::vector<char> cluster_box(field.boxes.size(), 0), filled_box(field.boxes.size(), 0);
  for (std::size_t i : decomp.cluster) cluster_box[i] = 1;
  for (std::size_t i : decomp.filled) filled_box[i] = 1;

  decomp.good_points.clear();
  decomp.filled_points.clear();
  const double K = field.K;
  for (const VoronoiCell& c : cells) {
    if (c.vertices.empty()) continue;
    BoxIndex lo{}, hi{};
    for (int i = 0; i < dim; ++i) {
      double a = c.vertices[0][i], b = a;
      for (const Vec& x : c.vertices) {
        a = std::min(a, x[i]);
        b = std::max(b, x[i]);
      }
      // Closed boxes: a cell touching a shared face meets both boxes.
      lo[i] = std::max(-decomp.L, static_cast<int>(std::ceil((a - K / 2.0) / K)));
      hi[i] = std::min(decomp.L, static_cast<int>(std::floor((b + K / 2.0) / K)));
    }
    bool good = false, filled = false;
    BoxIndex z = lo;
    bool nonempty = true;
    for (int i = 0; i < dim; ++i) nonempty = nonempty && lo[i] <= hi[i];
    while (nonempty && !(good && filled)) {
      const std::size_t f = field.flat(z);
      const bool want = (filled_box[f] && !filled) || (cluster_box[f] && !good);
      if (want && cell_intersects_box(c, dim, field.box(z))) {
        filled = filled || filled_box[f];
        good = good || cluster_box[f];
      }
      int k = dim - 1;
      while (k >= 0 && ++z[k] > hi[k]) {
        z[k] = lo[k];
        --k;
      }
      if (k < 0) break;
    }
    if (good) decomp.good_points.push_back(c.nucleus);
    if (filled) decomp.filled_points.push_back(c.nucleus);
  }
  std::sort(decomp.good_points.begin(), decomp.good_points.end());
  std::sort(decomp.filled_points.begin(), decomp.filled_points.end());
  int count = 0;
  connected_components(g, vertex_mask(g.vertex_count(), decomp.good_points), &count);
  decomp.good_connected = count == 1;
}

std::vector<HoleDiameter> hole_diameter_stats(std::span<const ClusterDecomposition> decomps) {
  if (decomps.size() < 2) throw ParameterError("hole_diameter_stats: need at least two values of L");
  std::vector<HoleDiameter> out;
  for (const ClusterDecomposition& d : decomps) {
    HoleDiameter hd;
    hd.L = d.L;
    for (const Hole& h : d.holes) {
      if (!h.enclosed) continue;
      ++hd.hole_count;
      hd.max_diameter = std::max(hd.max_diameter, h.diameter);
    }
    out.push_back(hd);
  }
  return out;
}

VolumeGrowthReport volume_growth_report(std::span<const ClusterDecomposition> decomps, const Graph& g) {
  if (decomps.size() < 2) throw ParameterError("volume_growth_report: need at least two values of L");
  VolumeGrowthReport rep;
  double lo = INFINITY, hi = 0.0;
  for (const ClusterDecomposition& d : decomps) {
    VolumeGrowthEntry e;
    e.L = d.L;
    e.cluster_boxes = d.cluster.size();
    e.good_count = d.good_points.size();
    e.empty = d.empty_cluster || d.good_points.empty();
    const std::vector<char> filled = vertex_mask(g.vertex_count(), d.filled_points);
    for (int v : d.good_points)
      for (int w : g.neighbors(v)) e.degree_sum += filled[w] ? 1.0 : 0.0;
    e.ratio = e.degree_sum / std::pow(static_cast<double>(d.L), d.dim);
    if (!e.empty) {
      lo = std::min(lo, e.ratio);
      hi = std::max(hi, e.ratio);
    }
    rep.entries.push_back(e);
  }
  rep.drift = hi > 0.0 && hi > 2.0 * lo;
  return rep;
}

void write_field_csv(std::ostream& os, const GoodBoxField& field, const ClusterDecomposition* decomp) {
  std::vector<int> hole_id(field.boxes.size(), -1);
  std::vector<char> cluster(field.boxes.size(), 0);
  if (decomp) {
    for (std::size_t i : decomp->cluster) cluster[i] = 1;
    for (const Hole& h : decomp->holes)
      for (std::size_t i : h.boxes) hole_id[i] = h.id;
  }
  for (int i = 0; i < field.dim; ++i) os << 'z' << i << ',';
  os << "counts,nice,good,cluster,hole_id\n";
  for (std::size_t b = 0; b < field.boxes.size(); ++b) {
    const BoxRecord& r = field.boxes[b];
    for (int i = 0; i < field.dim; ++i) os << r.z[i] << ',';
    for (std::size_t k = 0; k < r.subbox_counts.size(); ++k) os << (k ? ";" : "") << r.subbox_counts[k];
    os << ',' << r.nice << ',' << r.good << ',' << int(cluster[b]) << ',' << hole_id[b] << '\n';
  }
}

}  // namespace delwalk
