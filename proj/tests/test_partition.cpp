#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>

#include "delwalk/partition.hpp"
#include "delwalk/pointproc.hpp"

using namespace delwalk;

namespace {

std::vector<int> uniform_counts(int dim, int range, int value) {
  const int m = subboxes_per_axis(dim);
  const std::size_t boxes = static_cast<std::size_t>(std::pow(2 * range + 1, dim));
  const std::size_t sub = static_cast<std::size_t>(std::pow(m, dim));
  return std::vector<int>(boxes * sub, value);
}

// Field with every box nice and good; tests then knock out boxes by hand.
GoodBoxField synthetic_all_good(int range) {
  GoodBoxField f = classify_counts(2, 1.0, 1.0, range, uniform_counts(2, range, 1));
  for (BoxRecord& b : f.boxes) b.nice = b.good = true;
  return f;
}

bool in_region(const BoxIndex& z, int dim, int L) {
  for (int k = 0; k < dim; ++k)
    if (std::abs(z[k]) > L) return false;
  return true;
}

// Oracle: BFS components of good boxes under l1 adjacency, written against
// explicit coordinates instead of the union-find in the library.
std::vector<std::set<std::size_t>> l1_good_components(const GoodBoxField& f, int L) {
  std::vector<std::set<std::size_t>> comps;
  std::vector<char> seen(f.boxes.size(), 0);
  for (std::size_t i = 0; i < f.boxes.size(); ++i) {
    if (seen[i] || !f.boxes[i].good || !in_region(f.boxes[i].z, f.dim, L)) continue;
    std::set<std::size_t> comp;
    std::queue<std::size_t> q;
    q.push(i);
    seen[i] = 1;
    while (!q.empty()) {
      const std::size_t b = q.front();
      q.pop();
      comp.insert(b);
      for (std::size_t j = 0; j < f.boxes.size(); ++j) {
        if (seen[j] || !f.boxes[j].good || !in_region(f.boxes[j].z, f.dim, L)) continue;
        int l1 = 0;
        for (int k = 0; k < f.dim; ++k) l1 += std::abs(f.boxes[j].z[k] - f.boxes[b].z[k]);
        if (l1 == 1) {
          seen[j] = 1;
          q.push(j);
        }
      }
    }
    comps.push_back(std::move(comp));
  }
  return comps;
}

int linf(const BoxIndex& a, const BoxIndex& b, int dim) {
  int d = 0;
  for (int k = 0; k < dim; ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

}  // namespace

TEST_CASE("box side and sub-box count follow from dimension and s") {
  const GoodBoxField f2 = classify_counts(2, 10.0, 2.0, 1, uniform_counts(2, 1, 5));
  CHECK(f2.K == 50.0);
  CHECK(f2.per_axis == 5);
  CHECK(f2.boxes.front().subbox_counts.size() == 25);
  CHECK(f2.max_subbox_count() == doctest::Approx(200.0));
  CHECK(f2.degree_bound() == doctest::Approx(2.0 * 150.0 * 150.0));

  const GoodBoxField f3 = classify_counts(3, 2.0, 1.0, 1, uniform_counts(3, 1, 1));
  CHECK(f3.per_axis == 6);
  CHECK(f3.K == 12.0);
  CHECK(f3.boxes.front().subbox_counts.size() == 216);
}

TEST_CASE("empty sub-box breaks niceness and a non-nice neighbor breaks goodness") {
  const int range = 3;
  std::vector<int> counts = uniform_counts(2, range, 1);
  GoodBoxField probe = classify_counts(2, 1.0, 1.0, range, counts);
  const std::size_t centre = probe.flat({0, 0, 0});
  counts[centre * 25 + 7] = 0;
  const GoodBoxField f = classify_counts(2, 1.0, 1.0, range, counts);

  CHECK_FALSE(f.at({0, 0, 0}).nice);
  for (const BoxRecord& b : f.boxes) {
    const int r = linf(b.z, {0, 0, 0}, 2);
    if (r > 0) CHECK(b.nice);
    // Good exactly on the ring |z|_inf = 2: neighbors nice and in range.
    CHECK(b.good == (r == 2));
  }

  SUBCASE("cluster is the ring, holes are the core and the outer frame") {
    const ClusterDecomposition d = cluster_components(f, 3);
    CHECK(d.cluster.size() == 16);
    REQUIRE(d.holes.size() == 2);
    const Hole& core = d.holes[0].enclosed ? d.holes[0] : d.holes[1];
    const Hole& frame = d.holes[0].enclosed ? d.holes[1] : d.holes[0];
    CHECK(core.enclosed);
    CHECK(core.boxes.size() == 9);
    CHECK(core.diameter == 3);
    CHECK_FALSE(frame.enclosed);
    CHECK(frame.boxes.size() == 24);
    CHECK(d.filled.size() == 25);
  }

  SUBCASE("over-full sub-box also breaks niceness") {
    std::vector<int> c2 = uniform_counts(2, range, 1);
    c2[centre * 25] = 2;
    CHECK_FALSE(classify_counts(2, 1.0, 1.0, range, c2).at({0, 0, 0}).nice);
    CHECK(classify_counts(2, 1.0, 2.0, range, c2).at({0, 0, 0}).nice);
  }
}

TEST_CASE("all-good grid has no holes") {
  const GoodBoxField f = synthetic_all_good(3);
  const ClusterDecomposition d = cluster_components(f, 3);
  CHECK(d.cluster.size() == 49);
  CHECK(d.holes.empty());
  CHECK(d.filled == d.cluster);
  CHECK_FALSE(d.empty_cluster);
}

TEST_CASE("single bad box is a size-one enclosed hole that gets filled") {
  GoodBoxField f = synthetic_all_good(3);
  BoxRecord& b = f.boxes[f.flat({1, -1, 0})];
  b.good = false;
  const ClusterDecomposition d = cluster_components(f, 3);
  REQUIRE(d.holes.size() == 1);
  CHECK(d.holes[0].boxes.size() == 1);
  CHECK(d.holes[0].enclosed);
  CHECK(d.holes[0].diameter == 1);
  CHECK(d.cluster.size() == 48);
  CHECK(d.filled.size() == 49);
  CHECK(std::binary_search(d.filled.begin(), d.filled.end(), f.flat({1, -1, 0})));

  const std::vector<ClusterDecomposition> ds{cluster_components(synthetic_all_good(3), 3), d};
  const auto stats = hole_diameter_stats(ds);
  CHECK(stats[0].max_diameter == 0);
  CHECK(stats[0].hole_count == 0);
  CHECK(stats[1].max_diameter == 1);
  CHECK_THROWS_AS(hole_diameter_stats(std::span(ds).first(1)), ParameterError);
}

TEST_CASE("no good boxes flags an empty cluster") {
  GoodBoxField f = synthetic_all_good(2);
  for (BoxRecord& b : f.boxes) b.good = false;
  const ClusterDecomposition d = cluster_components(f, 2);
  CHECK(d.empty_cluster);
  CHECK(d.cluster.empty());
  CHECK(d.holes.size() == 1);
  CHECK_THROWS_AS(cluster_components(f, 3), ParameterError);
  CHECK_THROWS_AS(cluster_components(f, 0), ParameterError);
}

TEST_CASE("ties between equal components go to the smallest member") {
  GoodBoxField f = synthetic_all_good(2);
  // Split the 5x5 grid into two 5x2 halves separated by the column z0 = 0.
  for (BoxRecord& b : f.boxes)
    if (b.z[0] == 0) b.good = false;
  const ClusterDecomposition d = cluster_components(f, 2);
  REQUIRE(d.cluster.size() == 10);
  CHECK(f.boxes[d.cluster.front()].z[0] == -2);
}

TEST_CASE("random fields satisfy the classification and partition invariants") {
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const double s = 2.0 + 0.1 * static_cast<double>(seed % 15);
    const double alpha = 1.5 + 0.2 * static_cast<double>(seed % 7);
    const int dim = seed % 6 == 0 ? 3 : 2;
    const int range = dim == 2 ? 5 : 2;
    const GoodBoxField f = poisson_box_field(dim, s, alpha, range, 1.0, seed);
    CAPTURE(seed);

    for (const BoxRecord& b : f.boxes) {
      if (b.good) CHECK(b.nice);
      if (b.nice)
        for (int c : b.subbox_counts) CHECK((c >= 1 && c <= alpha * std::pow(s, dim)));
    }

    const int L = range;
    const ClusterDecomposition d = cluster_components(f, L);

    // Cluster and holes partition the region.
    std::vector<int> owner(f.boxes.size(), 0);
    for (std::size_t i : d.cluster) ++owner[i];
    for (const Hole& h : d.holes)
      for (std::size_t i : h.boxes) ++owner[i];
    for (std::size_t i = 0; i < f.boxes.size(); ++i) CHECK(owner[i] == (in_region(f.boxes[i].z, dim, L) ? 1 : 0));

    // Cluster is the largest l1 component of good boxes.
    const auto comps = l1_good_components(f, L);
    std::size_t largest = 0;
    for (const auto& c : comps) largest = std::max(largest, c.size());
    CHECK(d.cluster.size() == largest);
    if (!d.cluster.empty()) {
      const std::set<std::size_t> cl(d.cluster.begin(), d.cluster.end());
      CHECK(std::find(comps.begin(), comps.end(), cl) != comps.end());
    }

    // Distinct holes never touch, even diagonally.
    for (std::size_t a = 0; a < d.holes.size(); ++a)
      for (std::size_t b = a + 1; b < d.holes.size(); ++b)
        for (std::size_t i : d.holes[a].boxes)
          for (std::size_t j : d.holes[b].boxes) CHECK(linf(f.boxes[i].z, f.boxes[j].z, dim) > 1);

    // Filled = cluster plus exactly the holes that stay off the boundary.
    std::set<std::size_t> expect(d.cluster.begin(), d.cluster.end());
    for (const Hole& h : d.holes) {
      bool touches = false;
      for (std::size_t i : h.boxes)
        for (int k = 0; k < dim; ++k) touches = touches || std::abs(f.boxes[i].z[k]) == L;
      CHECK(h.enclosed == !touches);
      if (!touches) expect.insert(h.boxes.begin(), h.boxes.end());
    }
    CHECK(std::vector<std::size_t>(expect.begin(), expect.end()) == d.filled);
  }
}

TEST_CASE("raising alpha never makes a nice box non-nice") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int range = 4;
    const std::size_t n = static_cast<std::size_t>(std::pow(2 * range + 1, 2)) * 25;
    const std::vector<int> counts = sample_poisson_counts(1.0, 4.0, n, seed);
    const GoodBoxField lo = classify_counts(2, 2.0, 1.5, range, counts);
    const GoodBoxField hi = classify_counts(2, 2.0, 2.5, range, counts);
    for (std::size_t i = 0; i < lo.boxes.size(); ++i) {
      if (lo.boxes[i].nice) CHECK(hi.boxes[i].nice);
      if (lo.boxes[i].good) CHECK(hi.boxes[i].good);
    }
  }
}

TEST_CASE("cluster fraction grows with s for Poisson intensity 1 and alpha 2") {
  const int seeds = 50, range = 5;
  auto fraction = [&](double s) {
    double total = 0.0;
    for (int k = 0; k < seeds; ++k) {
      const GoodBoxField f = poisson_box_field(2, s, 2.0, range, 1.0, derive_seed(1234, "frac", k));
      // Only boxes with every neighbor in range can be good.
      total += static_cast<double>(cluster_components(f, range).cluster.size()) / ((2 * range - 1) * (2 * range - 1));
    }
    return total / seeds;
  };
  std::vector<double> fr;
  for (double s : {3.0, 4.0, 5.0, 10.0, 15.0}) fr.push_back(fraction(s));
  CAPTURE(fr);
  CHECK(fr[0] < fr[1]);
  CHECK(fr[1] < fr[2]);
  // At s = 5, 10, 15 nearly every box is good; the sequence must not decrease.
  CHECK(fr[2] <= fr[3]);
  CHECK(fr[3] <= fr[4]);
  CHECK(fr[4] > 0.99);
}

TEST_CASE("classify_boxes counts points exactly and validates its inputs") {
  const PointSet ps = sample_poisson(1.0, Box::centered(2, 25.0), 5);
  const GoodBoxField f = classify_boxes(ps, 3.0, 3.0);
  CHECK(f.range == 1);
  CHECK(f.K == 15.0);
  // Oracle: direct count of points per sub-box by coordinate arithmetic.
  for (const BoxRecord& b : f.boxes) {
    const Box bx = f.box(b.z);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        int n = 0;
        for (const Vec& p : ps.points)
          if (p[0] >= bx.lo[0] + 3.0 * i && p[0] < bx.lo[0] + 3.0 * (i + 1) && p[1] >= bx.lo[1] + 3.0 * j &&
              p[1] < bx.lo[1] + 3.0 * (j + 1))
            ++n;
        CHECK(b.subbox_counts[i * 5 + j] == n);
      }
  }
  CHECK_THROWS_AS(classify_boxes(ps, 6.0, 3.0), ConfigurationError);
  CHECK_THROWS_AS(classify_boxes(ps, -1.0, 3.0), ParameterError);
  CHECK_THROWS_AS(classify_boxes(ps, 3.0, 0.0), ParameterError);

  const PointSet other = sample_poisson(1.0, Box::centered(2, 25.0), 6);
  const DelaunayGraph g_other = build_delaunay(other);
  CHECK_THROWS_AS(classify_boxes(ps, g_other, 3.0, 3.0), ConsistencyError);
  CHECK_NOTHROW(classify_boxes(other, g_other, 3.0, 3.0));
}

TEST_CASE("good points: membership, degree bound and connectivity") {
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    CAPTURE(seed);
    const PointSet ps = sample_poisson(1.0, Box::centered(2, 40.0), seed);
    const DelaunayGraph g = build_delaunay(ps);
    const auto cells = voronoi_cells(ps, g);
    const GoodBoxField f = classify_boxes(ps, g, 3.0, 3.0);
    ClusterDecomposition d = cluster_components(f, f.range);
    good_points(d, f, ps, cells, g.graph);
    if (d.empty_cluster) continue;
    ++checked;

    // Second route: box by box through cells_intersecting_box.
    std::set<int> via_boxes, via_filled;
    for (std::size_t i : d.filled) {
      const auto hit = cells_intersecting_box(ps, cells, f.box(f.boxes[i].z));
      via_filled.insert(hit.begin(), hit.end());
      if (std::binary_search(d.cluster.begin(), d.cluster.end(), i)) via_boxes.insert(hit.begin(), hit.end());
    }
    CHECK(std::vector<int>(via_boxes.begin(), via_boxes.end()) == d.good_points);
    CHECK(std::vector<int>(via_filled.begin(), via_filled.end()) == d.filled_points);

    // Nuclei lying in a cluster box are members.
    for (std::size_t i : d.cluster) {
      const Box bx = f.box(f.boxes[i].z);
      for (std::size_t v = 0; v < ps.size(); ++v)
        if (bx.contains(ps.points[v]))
          CHECK(std::binary_search(d.good_points.begin(), d.good_points.end(), static_cast<int>(v)));
    }

    CHECK(std::includes(d.filled_points.begin(), d.filled_points.end(), d.good_points.begin(), d.good_points.end()));
    for (int v : d.good_points) CHECK(g.graph.degree(v) <= f.degree_bound());
    CHECK(d.good_connected);

    const std::vector<ClusterDecomposition> ds{cluster_components(f, 1), d};
    std::vector<ClusterDecomposition> filled_ds = ds;
    good_points(filled_ds[0], f, ps, cells, g.graph);
    const VolumeGrowthReport rep = volume_growth_report(filled_ds, g.graph);
    for (std::size_t k = 0; k < rep.entries.size(); ++k) {
      const auto& e = rep.entries[k];
      if (e.empty) continue;
      CHECK(e.degree_sum >= static_cast<double>(e.cluster_boxes));
      CHECK(e.degree_sum <= f.degree_bound() * static_cast<double>(e.good_count));
      CHECK(e.ratio == doctest::Approx(e.degree_sum / std::pow(e.L, 2)));
    }
  }
  CHECK(checked >= 15);
}

TEST_CASE("good_points rejects a decomposition from another point set") {
  const PointSet a = sample_poisson(1.0, Box::centered(2, 25.0), 1);
  const PointSet b = sample_poisson(1.0, Box::centered(2, 25.0), 2);
  const DelaunayGraph gb = build_delaunay(b);
  const auto cells_b = voronoi_cells(b, gb);
  const GoodBoxField fa = classify_boxes(a, 3.0, 3.0);
  ClusterDecomposition d = cluster_components(fa, 1);
  CHECK_THROWS_AS(good_points(d, fa, b, cells_b, gb.graph), ConsistencyError);
}

TEST_CASE("volume growth flags drift beyond a factor two") {
  Graph g = Graph::from_edges(2, {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}}, {{0, 1}, {1, 2}, {2, 3}});
  ClusterDecomposition a, b;
  a.L = 1;
  a.good_points = {0, 1};
  a.filled_points = {0, 1};
  a.cluster = {0};
  b.L = 2;
  b.good_points = {0, 1, 2, 3};
  b.filled_points = {0, 1, 2, 3};
  b.cluster = {0};
  const std::vector<ClusterDecomposition> ds{a, b};
  const VolumeGrowthReport rep = volume_growth_report(ds, g);
  CHECK(rep.entries[0].degree_sum == 2.0);
  CHECK(rep.entries[1].degree_sum == 6.0);
  // Ratios 2 and 1.5 are within a factor two.
  CHECK_FALSE(rep.drift);

  ClusterDecomposition c = b;
  c.L = 4;
  const std::vector<ClusterDecomposition> ds2{a, c};
  CHECK(volume_growth_report(ds2, g).drift);
}

TEST_CASE("field CSV has one row per box") {
  GoodBoxField f = synthetic_all_good(1);
  f.boxes[f.flat({0, 0, 0})].good = false;
  const ClusterDecomposition d = cluster_components(f, 1);
  std::ostringstream os;
  write_field_csv(os, f, &d);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "z0,z1,counts,nice,good,cluster,hole_id");
  int rows = 0, holes = 0;
  while (std::getline(is, line)) {
    ++rows;
    if (line.ends_with(",0,0,0")) ++holes;
  }
  CHECK(rows == 9);
  CHECK(holes == 1);
}
