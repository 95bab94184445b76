#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "delwalk/geometry.hpp"

namespace delwalk {

bool Graph::has_edge(int a, int b) const {
  const auto nb = neighbors(a);
  return std::binary_search(nb.begin(), nb.end(), b);
}

Graph Graph::from_edges(int dim, std::vector<Vec> positions, std::vector<std::pair<int, int>> edges) {
  Graph g;
  g.dim = dim;
  const int n = static_cast<int>(positions.size());
  g.positions = std::move(positions);
  std::vector<std::pair<int, int>> directed;
  directed.reserve(edges.size() * 2);
  for (auto [a, b] : edges) {
    if (a == b) continue;
    if (a < 0 || b < 0 || a >= n || b >= n) throw LookupError("graph edge references a missing vertex");
    directed.emplace_back(a, b);
    directed.emplace_back(b, a);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());
  g.offsets.assign(n + 1, 0);
  for (auto [a, b] : directed) ++g.offsets[a + 1];
  for (int v = 0; v < n; ++v) g.offsets[v + 1] += g.offsets[v];
  g.adjacency.reserve(directed.size());
  for (auto [a, b] : directed) g.adjacency.push_back(b);
  g.tainted.assign(n, 0);
  return g;
}

Graph restrict_graph(const Graph& g, std::span<const char> keep) {
  if (keep.size() != g.vertex_count()) throw ParameterError("restrict_graph: mask size mismatch");
  Graph r;
  r.dim = g.dim;
  r.positions = g.positions;
  r.tainted = g.tainted;
  r.offsets.assign(g.vertex_count() + 1, 0);
  for (std::size_t v = 0; v < g.vertex_count(); ++v) {
    if (keep[v])
      for (int w : g.neighbors(static_cast<int>(v)))
        if (keep[w]) r.adjacency.push_back(w);
    r.offsets[v + 1] = r.adjacency.size();
  }
  return r;
}

std::vector<int> connected_components(const Graph& g, std::span<const char> mask, int* count) {
  const std::size_t n = g.vertex_count();
  if (!mask.empty() && mask.size() != n) throw ParameterError("connected_components: mask size mismatch");
  auto in = [&](int v) { return mask.empty() || mask[v]; };
  std::vector<int> comp(n, -1);
  int next = 0;
  std::vector<int> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (!in(static_cast<int>(s)) || comp[s] >= 0) continue;
    comp[s] = next;
    stack.assign(1, static_cast<int>(s));
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : g.neighbors(v))
        if (in(w) && comp[w] < 0) {
          comp[w] = next;
          stack.push_back(w);
        }
    }
    ++next;
  }
  if (count) *count = next;
  return comp;
}

NeighborStats neighbor_stats(const Graph& g, int v) {
  if (v < 0 || static_cast<std::size_t>(v) >= g.vertex_count())
    throw LookupError("neighbor_stats: no vertex " + std::to_string(v));
  NeighborStats s;
  s.degree = g.degree(v);
  for (int w : g.neighbors(v)) s.max_neighbor_distance = std::max(s.max_neighbor_distance, dist(g.positions[v], g.positions[w], g.dim));
  return s;
}

namespace {

std::vector<HalfSpace> window_faces(const Box& w) {
  std::vector<HalfSpace> out;
  for (int i = 0; i < w.dim; ++i) {
    HalfSpace hi;
    hi.normal[i] = 1.0;
    hi.offset = w.hi[i];
    out.push_back(hi);
    HalfSpace lo;
    lo.normal[i] = -1.0;
    lo.offset = -w.lo[i];
    out.push_back(lo);
  }
  return out;
}

HalfSpace bisector(const Vec& p, const Vec& q, int dim, int neighbor) {
  HalfSpace h;
  for (int i = 0; i < dim; ++i) h.normal[i] = q[i] - p[i];
  h.offset = 0.5 * (dot(q, q, dim) - dot(p, p, dim));
  h.neighbor = neighbor;
  return h;
}

// Convex polygon with one constraint label per edge (edge k runs from
// vertex k to vertex k+1).
struct LabeledPolygon {
  std::vector<Vec> verts;
  std::vector<int> labels;
};

LabeledPolygon clip(const LabeledPolygon& poly, const HalfSpace& h, int label, double tol) {
  LabeledPolygon out;
  const std::size_t n = poly.verts.size();
  if (n == 0) return out;
  auto value = [&](const Vec& x) { return dot(h.normal, x, 2) - h.offset; };
  auto push = [&](const Vec& x, int l) {
    out.verts.push_back(x);
    out.labels.push_back(l);
  };
  for (std::size_t k = 0; k < n; ++k) {
    const Vec& a = poly.verts[k];
    const Vec& b = poly.verts[(k + 1) % n];
    const double va = value(a), vb = value(b);
    const bool ina = va <= tol, inb = vb <= tol;
    auto cross = [&] {
      const double t = va / (va - vb);
      return Vec{a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), 0.0};
    };
    if (ina && inb) {
      push(a, poly.labels[k]);
    } else if (ina) {
      // Leaving: the edge after the exit point runs along the new line.
      if (va < -tol) {
        push(a, poly.labels[k]);
        push(cross(), label);
      } else {
        push(a, label);
      }
    } else if (inb && vb < -tol) {
      push(cross(), poly.labels[k]);
    }
  }
  return out;
}

double scale_tol(const Box& w) { return 1e-12 * std::max(1.0, w.max_side()); }

VoronoiCell cell_2d(const PointSet& ps, int v, const std::vector<int>& nbrs) {
  const std::vector<HalfSpace> win = window_faces(ps.window);
  std::vector<HalfSpace> all = win;
  for (int w : nbrs) all.push_back(bisector(ps.points[v], ps.points[w], 2, w));
  // Window rectangle, counter-clockwise; labels index into `all`.
  LabeledPolygon poly;
  const Box& b = ps.window;
  poly.verts = {{b.lo[0], b.lo[1], 0}, {b.hi[0], b.lo[1], 0}, {b.hi[0], b.hi[1], 0}, {b.lo[0], b.hi[1], 0}};
  poly.labels = {3, 0, 2, 1};  // y >= lo, x <= hi, y <= hi, x >= lo
  const double tol = scale_tol(b);
  for (std::size_t k = win.size(); k < all.size() && !poly.verts.empty(); ++k)
    poly = clip(poly, all[k], static_cast<int>(k), tol);

  VoronoiCell cell;
  cell.nucleus = v;
  cell.vertices = poly.verts;
  std::vector<int> used = poly.labels;
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());
  for (int l : used) {
    cell.faces.push_back(all[l]);
    if (all[l].neighbor < 0) cell.clipped = true;
  }
  return cell;
}

bool solve3(const std::array<const HalfSpace*, 3>& h, Vec& x) {
  double m[3][4];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m[r][c] = h[r]->normal[c];
    m[r][3] = h[r]->offset;
  }
  double scale = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) scale = std::max(scale, std::abs(m[r][c]));
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (std::abs(m[piv][col]) <= 1e-12 * scale) return false;
    for (int c = 0; c < 4; ++c) std::swap(m[piv][c], m[col][c]);
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 4; ++c) m[r][c] -= f * m[col][c];
    }
  }
  for (int i = 0; i < 3; ++i) x[i] = m[i][3] / m[i][i];
  return true;
}

// Vertices of the 3D polytope {x : h.normal . x <= h.offset for all h} by
// enumerating plane triples. Returns the vertices and marks tight constraints.
std::vector<Vec> enumerate_vertices(const std::vector<HalfSpace>& hs, double tol, std::vector<int>* tight_count) {
  std::vector<Vec> verts;
  if (tight_count) tight_count->assign(hs.size(), 0);
  auto feasible = [&](const Vec& x) {
    for (const HalfSpace& h : hs) {
      const double nn = norm(h.normal, 3);
      if (dot(h.normal, x, 3) - h.offset > tol * std::max(1.0, nn)) return false;
    }
    return true;
  };
  const std::size_t m = hs.size();
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a + 1; b < m; ++b)
      for (std::size_t c = b + 1; c < m; ++c) {
        Vec x{};
        if (!solve3({&hs[a], &hs[b], &hs[c]}, x) || !feasible(x)) continue;
        bool dup = false;
        for (const Vec& y : verts)
          if (dist(x, y, 3) <= 1e3 * tol) {
            dup = true;
            break;
          }
        if (!dup) verts.push_back(x);
      }
  if (tight_count)
    for (std::size_t k = 0; k < m; ++k) {
      const double nn = std::max(1.0, norm(hs[k].normal, 3));
      for (const Vec& x : verts)
        if (std::abs(dot(hs[k].normal, x, 3) - hs[k].offset) <= 1e3 * tol * nn) ++(*tight_count)[k];
    }
  return verts;
}

VoronoiCell cell_3d(const PointSet& ps, int v, const std::vector<int>& nbrs) {
  std::vector<HalfSpace> all = window_faces(ps.window);
  for (int w : nbrs) all.push_back(bisector(ps.points[v], ps.points[w], 3, w));
  std::vector<int> tight;
  VoronoiCell cell;
  cell.nucleus = v;
  cell.vertices = enumerate_vertices(all, scale_tol(ps.window), &tight);
  for (std::size_t k = 0; k < all.size(); ++k)
    if (tight[k] >= 3) {
      cell.faces.push_back(all[k]);
      if (all[k].neighbor < 0) cell.clipped = true;
    }
  return cell;
}

std::vector<VoronoiCell> build_cells(const PointSet& ps, const std::vector<std::vector<int>>& nbrs) {
  std::vector<VoronoiCell> cells(ps.points.size());
  for (std::size_t v = 0; v < ps.points.size(); ++v)
    cells[v] = ps.dim == 2 ? cell_2d(ps, static_cast<int>(v), nbrs[v]) : cell_3d(ps, static_cast<int>(v), nbrs[v]);
  return cells;
}

}  // namespace

std::vector<VoronoiCell> voronoi_cells(const PointSet& ps, const DelaunayGraph& g) {
  if (g.vertex_count() != ps.points.size()) throw ConsistencyError("voronoi_cells: graph does not match point set");
  std::vector<std::vector<int>> nbrs(ps.points.size());
  for (std::size_t v = 0; v < ps.points.size(); ++v) {
    const auto nb = g.graph.neighbors(static_cast<int>(v));
    nbrs[v].assign(nb.begin(), nb.end());
  }
  return build_cells(ps, nbrs);
}

std::vector<VoronoiCell> voronoi_cells(const PointSet& ps) {
  if (ps.dim != 2 && ps.dim != 3) throw GeometryError("voronoi_cells: only d = 2 and d = 3 are supported");
  if (ps.points.size() <= static_cast<std::size_t>(ps.dim)) {
    // Too few points to triangulate: every other point is a neighbor.
    std::vector<std::vector<int>> nbrs(ps.points.size());
    for (std::size_t v = 0; v < ps.points.size(); ++v)
      for (std::size_t w = 0; w < ps.points.size(); ++w)
        if (v != w) nbrs[v].push_back(static_cast<int>(w));
    return build_cells(ps, nbrs);
  }
  return voronoi_cells(ps, build_delaunay(ps));
}

bool cell_intersects_box(const VoronoiCell& cell, int dim, const Box& box) {
  if (cell.vertices.empty()) return false;
  // Bounding-box rejection first.
  for (int i = 0; i < dim; ++i) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const Vec& x : cell.vertices) {
      lo = std::min(lo, x[i]);
      hi = std::max(hi, x[i]);
    }
    if (hi < box.lo[i] || lo > box.hi[i]) return false;
  }
  for (const Vec& x : cell.vertices)
    if (box.contains(x)) return true;
  const double tol = 1e-12 * std::max(1.0, box.max_side());
  if (dim == 2) {
    LabeledPolygon poly;
    poly.verts = cell.vertices;
    poly.labels.assign(poly.verts.size(), 0);
    for (const HalfSpace& h : window_faces(box)) {
      poly = clip(poly, h, 0, tol);
      if (poly.verts.empty()) return false;
    }
    return true;
  }
  std::vector<HalfSpace> hs = cell.faces;
  for (const HalfSpace& h : window_faces(box)) hs.push_back(h);
  return !enumerate_vertices(hs, tol, nullptr).empty();
}

std::vector<int> cells_intersecting_box(const PointSet& ps, std::span<const VoronoiCell> cells, const Box& box) {
  if (!ps.window.contains(box)) throw ParameterError("cells_intersecting_box: box is not contained in the window");
  std::vector<int> out;
  for (const VoronoiCell& c : cells)
    if (cell_intersects_box(c, ps.dim, box)) out.push_back(c.nucleus);
  std::sort(out.begin(), out.end());
  return out;
}

void write_graph(std::ostream& os, const DelaunayGraph& g) {
  const Graph& gr = g.graph;
  std::ostringstream buf;
  buf.precision(std::numeric_limits<double>::max_digits10);
  buf << "# delaunay-graph\n" << gr.vertex_count() << ' ' << gr.dim << '\n';
  for (std::size_t v = 0; v < gr.vertex_count(); ++v) {
    buf << "v " << v;
    for (int i = 0; i < gr.dim; ++i) buf << ' ' << gr.positions[v][i];
    buf << '\n';
  }
  for (std::size_t v = 0; v < gr.vertex_count(); ++v)
    for (int w : gr.neighbors(static_cast<int>(v)))
      if (static_cast<std::size_t>(w) > v) buf << "e " << v << ' ' << w << '\n';
  for (std::size_t v = 0; v < gr.vertex_count(); ++v)
    if (gr.tainted[v]) buf << "b " << v << '\n';
  os << buf.str();
}

Graph read_graph(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "# delaunay-graph") throw ParameterError("read_graph: missing header");
  std::size_t n = 0;
  int dim = 0;
  if (!std::getline(is, line)) throw ParameterError("read_graph: truncated input");
  {
    std::istringstream hs(line);
    if (!(hs >> n >> dim) || dim < 2 || dim > kMaxDim) throw ParameterError("read_graph: bad size line");
  }
  std::vector<Vec> pos(n);
  std::vector<char> seen(n, 0), taint(n, 0);
  std::vector<std::pair<int, int>> edges;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    char tag = 0;
    ls >> tag;
    if (tag == 'v') {
      std::size_t i;
      if (!(ls >> i) || i >= n) throw ParameterError("read_graph: bad vertex line");
      for (int k = 0; k < dim; ++k)
        if (!(ls >> pos[i][k])) throw ParameterError("read_graph: bad vertex coordinates");
      seen[i] = 1;
    } else if (tag == 'e') {
      int a, b;
      if (!(ls >> a >> b)) throw ParameterError("read_graph: bad edge line");
      edges.emplace_back(a, b);
    } else if (tag == 'b') {
      std::size_t i;
      if (!(ls >> i) || i >= n) throw ParameterError("read_graph: bad taint line");
      taint[i] = 1;
    } else {
      throw ParameterError("read_graph: unknown record '" + line + "'");
    }
  }
  if (std::count(seen.begin(), seen.end(), 0) != 0) throw ParameterError("read_graph: missing vertex records");
  Graph g = Graph::from_edges(dim, std::move(pos), std::move(edges));
  g.tainted = std::move(taint);
  return g;
}

}  // namespace delwalk
