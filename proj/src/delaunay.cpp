#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <map>

#include "delwalk/geometry.hpp"

namespace delwalk {

namespace {

// Interleaves quantized coordinates; used to insert points in a spatially
// coherent order so that point location walks stay short.
std::vector<int> morton_order(const std::vector<Vec>& pts, int dim, const Box& bounds) {
  const int bits = dim == 2 ? 31 : 21;
  const double scale = static_cast<double>((1ULL << bits) - 1);
  std::vector<std::pair<std::uint64_t, int>> keys(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    std::array<std::uint64_t, kMaxDim> q{};
    for (int i = 0; i < dim; ++i) {
      const double side = bounds.side(i) > 0 ? bounds.side(i) : 1.0;
      const double t = std::clamp((pts[k][i] - bounds.lo[i]) / side, 0.0, 1.0);
      q[i] = static_cast<std::uint64_t>(t * scale);
    }
    std::uint64_t code = 0;
    for (int b = bits - 1; b >= 0; --b)
      for (int i = 0; i < dim; ++i) code = (code << 1) | ((q[i] >> b) & 1ULL);
    keys[k] = {code, static_cast<int>(k)};
  }
  std::sort(keys.begin(), keys.end());
  std::vector<int> order(pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) order[k] = keys[k].second;
  return order;
}

// Incremental Delaunay triangulation with a single vertex at infinity: hull
// facets carry "ghost" cells, so points outside the current hull are handled
// by the same cavity mechanism as interior points.
template <int D>
class Triangulator {
 public:
  static constexpr int N = D + 1;
  static constexpr int kInf = -1;

  struct Cell {
    std::array<int, N> v;
    std::array<int, N> nb;
  };

  explicit Triangulator(const std::vector<Vec>& pts) : pts_(pts) {}

  void build(const std::vector<int>& order) {
    const std::vector<int> seq = initial_sequence(order);
    init_simplex({seq.begin(), seq.begin() + N});
    for (std::size_t k = N; k < seq.size(); ++k) insert(seq[k]);
  }

  std::vector<std::array<int, N>> finite_cells() const {
    std::vector<std::array<int, N>> out;
    for (std::size_t c = 0; c < cells_.size(); ++c)
      if (alive_[c] && inf_index(static_cast<int>(c)) < 0) out.push_back(cells_[c].v);
    return out;
  }

 private:
  const Vec& pt(int i) const { return pts_[i]; }

  int inf_index(int c) const {
    for (int i = 0; i < N; ++i)
      if (cells_[c].v[i] == kInf) return i;
    return -1;
  }

  // Orientation of cell c with vertex slot `slot` replaced by p.
  int orient_sub(int c, int slot, const Vec& p) const {
    std::array<const Vec*, N> ptr{};
    for (int i = 0; i < N; ++i) ptr[i] = i == slot ? &p : &pt(cells_[c].v[i]);
    return orient_sign(D, ptr);
  }

  bool conflict(int c, const Vec& p) const {
    const int k = inf_index(c);
    if (k < 0) {
      std::array<const Vec*, N> ptr{};
      for (int i = 0; i < N; ++i) ptr[i] = &pt(cells_[c].v[i]);
      return detail::insphere_sign_positive(D, ptr, p) > 0;
    }
    const int o = orient_sub(c, k, p);
    if (o != 0) return o > 0;
    // On the hull facet's supporting plane: in conflict iff inside the
    // facet's circumsphere, i.e. iff the adjacent finite cell conflicts.
    return conflict(cells_[c].nb[k], p);
  }

  std::vector<int> initial_sequence(const std::vector<int>& order) {
    if (order.size() < static_cast<std::size_t>(N))
      throw GeometryError("build_delaunay: need at least d+1 points");
    std::vector<int> chosen{order[0]};
    std::vector<char> used(order.size(), 0);
    used[0] = 1;
    for (int need = 1; need < N; ++need) {
      bool found = false;
      for (std::size_t k = 1; k < order.size() && !found; ++k) {
        if (used[k]) continue;
        if (independent(chosen, order[k])) {
          chosen.push_back(order[k]);
          used[k] = 1;
          found = true;
        }
      }
      if (!found) throw GeometryError("build_delaunay: all points lie on a common hyperplane");
    }
    std::vector<int> seq = chosen;
    for (std::size_t k = 0; k < order.size(); ++k)
      if (!used[k]) seq.push_back(order[k]);
    return seq;
  }

  bool independent(const std::vector<int>& chosen, int cand) const {
    const Vec& c = pt(cand);
    if (chosen.size() == 1) {
      for (int i = 0; i < D; ++i)
        if (pt(chosen[0])[i] != c[i]) return true;
      return false;
    }
    if (chosen.size() == static_cast<std::size_t>(D)) {
      std::array<const Vec*, N> ptr{};
      for (int i = 0; i < D; ++i) ptr[i] = &pt(chosen[i]);
      ptr[D] = &c;
      return orient_sign(D, ptr) != 0;
    }
    // D == 3, two points chosen: test non-collinearity via 2D projections.
    for (int a = 0; a < 3; ++a) {
      const int b = (a + 1) % 3;
      std::array<Vec, 3> proj{};
      const std::array<const Vec*, 3> src{&pt(chosen[0]), &pt(chosen[1]), &c};
      for (int i = 0; i < 3; ++i) proj[i] = {(*src[i])[a], (*src[i])[b], 0.0};
      const std::array<const Vec*, 3> ptr{&proj[0], &proj[1], &proj[2]};
      if (orient_sign(2, ptr) != 0) return true;
    }
    return false;
  }

  void init_simplex(std::vector<int> first) {
    Cell c0{};
    for (int i = 0; i < N; ++i) c0.v[i] = first[i];
    {
      std::array<const Vec*, N> ptr{};
      for (int i = 0; i < N; ++i) ptr[i] = &pt(c0.v[i]);
      if (orient_sign(D, ptr) < 0) std::swap(c0.v[0], c0.v[1]);
    }
    cells_.push_back(c0);
    for (int i = 0; i < N; ++i) {
      Cell g{};
      g.v = c0.v;
      g.v[i] = kInf;
      std::swap(g.v[(i + 1) % N], g.v[(i + 2) % N]);
      cells_.push_back(g);
    }
    alive_.assign(cells_.size(), 1);
    stamp_.assign(cells_.size(), 0);
    // Brute-force facet matching among the D+2 initial cells.
    for (std::size_t a = 0; a < cells_.size(); ++a)
      for (int sa = 0; sa < N; ++sa) {
        for (std::size_t b = 0; b < cells_.size(); ++b) {
          if (a == b) continue;
          for (int sb = 0; sb < N; ++sb)
            if (same_facet(cells_[a], sa, cells_[b], sb)) cells_[a].nb[sa] = static_cast<int>(b);
        }
      }
    last_ = 0;
  }

  static bool same_facet(const Cell& a, int sa, const Cell& b, int sb) {
    std::array<int, D> fa{}, fb{};
    for (int i = 0, k = 0; i < N; ++i)
      if (i != sa) fa[k++] = a.v[i];
    for (int i = 0, k = 0; i < N; ++i)
      if (i != sb) fb[k++] = b.v[i];
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    return fa == fb;
  }

  int locate(const Vec& p) {
    int c = last_;
    if (!alive_[c]) c = first_alive();
    if (const int k = inf_index(c); k >= 0) c = cells_[c].nb[k];
    const std::size_t cap = 4 * cells_.size() + 100;
    for (std::size_t step = 0; step < cap; ++step) {
      bool moved = false;
      rng_ ^= rng_ << 13;
      rng_ ^= rng_ >> 7;
      rng_ ^= rng_ << 17;
      const int r = static_cast<int>(rng_ % N);
      for (int k = 0; k < N; ++k) {
        const int i = (k + r) % N;
        if (orient_sub(c, i, p) < 0) {
          const int next = cells_[c].nb[i];
          if (inf_index(next) >= 0) return next;
          c = next;
          moved = true;
          break;
        }
      }
      if (!moved) return c;
    }
    // Walk did not terminate; fall back to an exhaustive conflict search.
    for (std::size_t q = 0; q < cells_.size(); ++q)
      if (alive_[q] && conflict(static_cast<int>(q), p)) return static_cast<int>(q);
    throw GeometryError("build_delaunay: point location failed");
  }

  int first_alive() const {
    for (std::size_t c = 0; c < cells_.size(); ++c)
      if (alive_[c]) return static_cast<int>(c);
    return 0;
  }

  void insert(int pi) {
    const Vec& p = pt(pi);
    const int start = locate(p);
    if (!conflict(start, p))
      throw GeometryError("build_delaunay: duplicate or degenerate point " + std::to_string(pi));

    ++current_;
    cavity_.clear();
    boundary_.clear();
    cavity_.push_back(start);
    stamp_[start] = current_ * 2 + 1;
    for (std::size_t q = 0; q < cavity_.size(); ++q) {
      const int c = cavity_[q];
      for (int i = 0; i < N; ++i) {
        const int n = cells_[c].nb[i];
        if (stamp_[n] == current_ * 2 + 1) continue;
        if (stamp_[n] != current_ * 2) {
          if (conflict(n, p)) {
            stamp_[n] = current_ * 2 + 1;
            cavity_.push_back(n);
            continue;
          }
          stamp_[n] = current_ * 2;
        }
        int back = 0;
        while (cells_[n].nb[back] != c) ++back;
        boundary_.push_back({back, i, n, cells_[c].v});
      }
    }

    for (int c : cavity_) {
      alive_[c] = 0;
      free_.push_back(c);
    }

    created_.clear();
    for (const Facet& f : boundary_) {
      Cell t{};
      t.v = f.verts;
      t.v[f.slot] = pi;
      t.nb.fill(-1);
      t.nb[f.slot] = f.outside;
      int id;
      if (!free_.empty()) {
        id = free_.back();
        free_.pop_back();
        cells_[id] = t;
        alive_[id] = 1;
      } else {
        id = static_cast<int>(cells_.size());
        cells_.push_back(t);
        alive_.push_back(1);
        stamp_.push_back(0);
      }
      cells_[f.outside].nb[f.outside_slot] = id;
      created_.push_back({id, f.slot});
    }

    ridges_.clear();
    for (const auto& [id, slot] : created_) {
      for (int j = 0; j < N; ++j) {
        if (j == slot) continue;
        Ridge r{};
        for (int i = 0, k = 0; i < N; ++i)
          if (i != slot && i != j) r.key[k++] = cells_[id].v[i];
        std::sort(r.key.begin(), r.key.end());
        r.cell = id;
        r.slot = j;
        ridges_.push_back(r);
      }
    }
    std::sort(ridges_.begin(), ridges_.end(), [](const Ridge& a, const Ridge& b) { return a.key < b.key; });
    for (std::size_t k = 0; k + 1 < ridges_.size(); k += 2) {
      if (ridges_[k].key != ridges_[k + 1].key)
        throw GeometryError("build_delaunay: inconsistent cavity boundary");
      cells_[ridges_[k].cell].nb[ridges_[k].slot] = ridges_[k + 1].cell;
      cells_[ridges_[k + 1].cell].nb[ridges_[k + 1].slot] = ridges_[k].cell;
    }
    last_ = created_.front().first;
    for (const auto& [id, slot] : created_)
      if (inf_index(id) < 0) {
        last_ = id;
        break;
      }
  }

  struct Facet {
    int outside_slot;  // slot of the outside cell facing the cavity
    int slot;
    int outside;
    std::array<int, N> verts;
  };
  struct Ridge {
    std::array<int, D - 1> key;
    int cell;
    int slot;
  };

  const std::vector<Vec>& pts_;
  std::vector<Cell> cells_;
  std::vector<char> alive_;
  std::vector<std::uint64_t> stamp_;
  std::vector<int> free_;
  std::vector<int> cavity_;
  std::vector<Facet> boundary_;
  std::vector<std::pair<int, int>> created_;
  std::vector<Ridge> ridges_;
  std::uint64_t current_ = 0;
  std::uint64_t rng_ = 0x9e3779b97f4a7c15ULL;
  int last_ = 0;
};

bool solve_small(int n, std::array<std::array<double, kMaxDim + 1>, kMaxDim>& a, Vec& x) {
  // Gaussian elimination with partial pivoting on an n x (n+1) augmented matrix.
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (a[piv][col] == 0.0) return false;
    std::swap(a[piv], a[col]);
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int c = col; c <= n; ++c) a[r][c] -= f * a[col][c];
    }
  }
  for (int i = 0; i < n; ++i) x[i] = a[i][n] / a[i][i];
  return true;
}

void fill_circumsphere(const std::vector<Vec>& pts, int dim, Simplex& s) {
  const Vec& p0 = pts[s.v[0]];
  std::array<std::array<double, kMaxDim + 1>, kMaxDim> a{};
  for (int i = 0; i < dim; ++i) {
    const Vec& pi = pts[s.v[i + 1]];
    double rhs = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double d = pi[j] - p0[j];
      a[i][j] = 2.0 * d;
      rhs += d * d;
    }
    a[i][dim] = rhs;
  }
  Vec rel{};
  if (!solve_small(dim, a, rel)) throw GeometryError("degenerate simplex: circumsphere undefined");
  s.circumcenter = {};
  for (int j = 0; j < dim; ++j) s.circumcenter[j] = p0[j] + rel[j];
  s.circumradius = norm(rel, dim);
}

double default_margin(const PointSet& ps) {
  const double vol = ps.window.volume();
  if (ps.points.empty() || !(vol > 0.0)) return 0.0;
  const double intensity = static_cast<double>(ps.points.size()) / vol;
  return 3.0 * std::pow(intensity, -1.0 / ps.dim);
}

}  // namespace

DelaunayGraph make_delaunay_graph(const PointSet& ps, std::vector<Simplex> simplices, const DelaunayOptions& options) {
  const int dim = ps.dim;
  const int n = dim + 1;
  DelaunayGraph g;
  g.window = ps.window;
  g.source_digest = ps.digest();
  std::vector<std::pair<int, int>> edges;
  for (Simplex& s : simplices) {
    fill_circumsphere(ps.points, dim, s);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) edges.emplace_back(s.v[i], s.v[j]);
  }
  g.graph = Graph::from_edges(dim, ps.points, std::move(edges));

  // Hull facets belong to exactly one simplex.
  std::map<std::array<int, kMaxDim>, int> counts;
  for (const Simplex& s : simplices)
    for (int skip = 0; skip < n; ++skip) {
      std::array<int, kMaxDim> f{-1, -1, -1};
      for (int i = 0, k = 0; i < n; ++i)
        if (i != skip) f[k++] = s.v[i];
      std::sort(f.begin(), f.begin() + dim);
      ++counts[f];
    }
  g.on_hull.assign(ps.points.size(), 0);
  for (const auto& [f, c] : counts)
    if (c == 1)
      for (int i = 0; i < dim; ++i) g.on_hull[f[i]] = 1;

  const double margin = options.taint_margin >= 0.0 ? options.taint_margin : default_margin(ps);
  std::vector<char>& taint = g.graph.tainted;
  taint.assign(ps.points.size(), 0);
  for (std::size_t v = 0; v < ps.points.size(); ++v) {
    if (g.on_hull[v]) taint[v] = 1;
    for (int i = 0; i < dim; ++i)
      if (ps.points[v][i] - ps.window.lo[i] < margin || ps.window.hi[i] - ps.points[v][i] < margin) taint[v] = 1;
  }
  // A simplex whose circumball leaves the window may not survive in the
  // infinite configuration; its vertices are tainted.
  for (const Simplex& s : simplices) {
    bool inside = true;
    for (int i = 0; i < dim; ++i)
      if (s.circumcenter[i] - s.circumradius < ps.window.lo[i] || s.circumcenter[i] + s.circumradius > ps.window.hi[i])
        inside = false;
    if (!inside)
      for (int i = 0; i < n; ++i) taint[s.v[i]] = 1;
  }
  g.simplices = std::move(simplices);
  return g;
}

DelaunayGraph build_delaunay(const PointSet& ps, const DelaunayOptions& options) {
  const int dim = ps.dim;
  if (dim != 2 && dim != 3) throw GeometryError("build_delaunay: only d = 2 and d = 3 are supported");
  if (ps.points.size() < static_cast<std::size_t>(dim + 1))
    throw GeometryError("build_delaunay: need at least d+1 points");
  Box bounds;
  bounds.dim = dim;
  for (int i = 0; i < dim; ++i) {
    bounds.lo[i] = bounds.hi[i] = ps.points[0][i];
    for (const Vec& p : ps.points) {
      bounds.lo[i] = std::min(bounds.lo[i], p[i]);
      bounds.hi[i] = std::max(bounds.hi[i], p[i]);
    }
  }
  const std::vector<int> order = morton_order(ps.points, dim, bounds);
  std::vector<Simplex> simplices;
  if (dim == 2) {
    Triangulator<2> t(ps.points);
    t.build(order);
    for (const auto& c : t.finite_cells()) {
      Simplex s;
      for (int i = 0; i < 3; ++i) s.v[i] = c[i];
      simplices.push_back(s);
    }
  } else {
    Triangulator<3> t(ps.points);
    t.build(order);
    for (const auto& c : t.finite_cells()) {
      Simplex s;
      for (int i = 0; i < 4; ++i) s.v[i] = c[i];
      simplices.push_back(s);
    }
  }
  // Canonical enumeration: vertices ascending within a simplex, simplices
  // in lexicographic order.
  for (Simplex& s : simplices) std::sort(s.v.begin(), s.v.begin() + dim + 1);
  std::sort(simplices.begin(), simplices.end(), [](const Simplex& a, const Simplex& b) { return a.v < b.v; });
  return make_delaunay_graph(ps, std::move(simplices), options);
}

EmptyCircumsphereVerdict verify_empty_circumcircle(const DelaunayGraph& g) {
  const int dim = g.dim();
  const auto& pts = g.graph.positions;
  EmptyCircumsphereVerdict verdict;
  if (pts.empty()) return verdict;

  // Bucket vertices so each circumball only inspects vertices in its
  // bounding box; every vertex that could lie inside is examined.
  Box bounds;
  bounds.dim = dim;
  for (int i = 0; i < dim; ++i) {
    bounds.lo[i] = bounds.hi[i] = pts[0][i];
    for (const Vec& p : pts) {
      bounds.lo[i] = std::min(bounds.lo[i], p[i]);
      bounds.hi[i] = std::max(bounds.hi[i], p[i]);
    }
  }
  const double cells_per_axis = std::max(1.0, std::floor(std::pow(static_cast<double>(pts.size()), 1.0 / dim)));
  std::array<int, kMaxDim> nb{1, 1, 1};
  std::array<double, kMaxDim> width{1, 1, 1};
  for (int i = 0; i < dim; ++i) {
    nb[i] = static_cast<int>(cells_per_axis);
    width[i] = std::max(bounds.side(i), 1e-300) / nb[i];
  }
  auto cell_of = [&](double x, int axis) {
    return std::clamp(static_cast<int>(std::floor((x - bounds.lo[axis]) / width[axis])), 0, nb[axis] - 1);
  };
  std::vector<std::vector<int>> buckets(static_cast<std::size_t>(nb[0]) * nb[1] * nb[2]);
  auto flat = [&](int a, int b, int c) { return (static_cast<std::size_t>(a) * nb[1] + b) * nb[2] + c; };
  for (std::size_t v = 0; v < pts.size(); ++v)
    buckets[flat(cell_of(pts[v][0], 0), cell_of(pts[v][1], 1), dim > 2 ? cell_of(pts[v][2], 2) : 0)].push_back(
        static_cast<int>(v));

  for (std::size_t si = 0; si < g.simplices.size(); ++si) {
    const Simplex& s = g.simplices[si];
    const double r = s.circumradius;
    const double limit = r * (1.0 - 1e-12);
    std::array<int, kMaxDim> lo{0, 0, 0}, hi{0, 0, 0};
    for (int i = 0; i < dim; ++i) {
      lo[i] = cell_of(s.circumcenter[i] - r, i);
      hi[i] = cell_of(s.circumcenter[i] + r, i);
    }
    bool bad = false;
    for (int a = lo[0]; a <= hi[0] && !bad; ++a)
      for (int b = lo[1]; b <= hi[1] && !bad; ++b)
        for (int c = lo[2]; c <= hi[2] && !bad; ++c)
          for (int v : buckets[flat(a, b, c)]) {
            if (std::find(s.v.begin(), s.v.begin() + dim + 1, v) != s.v.begin() + dim + 1) continue;
            if (dist(pts[v], s.circumcenter, dim) < limit) {
              bad = true;
              break;
            }
          }
    if (bad) {
      verdict.pass = false;
      verdict.offending.push_back(static_cast<int>(si));
    }
  }
  return verdict;
}

}  // namespace delwalk
