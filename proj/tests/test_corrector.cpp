#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "delwalk/corrector.hpp"
#include "delwalk/pointproc.hpp"

using namespace delwalk;

namespace {

struct Instance {
  PointSet ps;
  DelaunayGraph dg;
  std::vector<char> region;
};

// Region: untainted nuclei inside [-r, r]^2.
Instance make_instance(std::uint64_t seed, double half_width, double r) {
  Instance inst{sample_poisson(1.0, Box::centered(2, half_width), seed), {}, {}};
  inst.dg = build_delaunay(inst.ps);
  inst.region.assign(inst.ps.size(), 0);
  for (std::size_t v = 0; v < inst.ps.size(); ++v) {
    const Vec& p = inst.ps.points[v];
    inst.region[v] = !inst.dg.graph.tainted[v] && std::abs(p[0]) <= r && std::abs(p[1]) <= r;
  }
  return inst;
}

// Dense oracle: assemble the interior Laplacian independently and solve
// with a full-pivoting LU.
std::vector<Vec> dense_phi(const Graph& g, const std::vector<char>& region) {
  const std::size_t n = g.vertex_count();
  std::vector<int> idx(n, -1), verts;
  for (std::size_t v = 0; v < n; ++v)
    if (region[v]) {
      idx[v] = static_cast<int>(verts.size());
      verts.push_back(static_cast<int>(v));
    }
  const int m = static_cast<int>(verts.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, 2);
  for (int i = 0; i < m; ++i)
    for (int y : g.neighbors(verts[i])) {
      A(i, i) += 1.0;
      if (idx[y] >= 0)
        A(i, idx[y]) -= 1.0;
      else
        for (int k = 0; k < 2; ++k) b(i, k) += g.positions[y][k];
    }
  const Eigen::MatrixXd x = A.fullPivLu().solve(b);
  std::vector<Vec> phi = g.positions;
  for (int i = 0; i < m; ++i) phi[verts[i]] = {x(i, 0), x(i, 1), 0.0};
  return phi;
}

void check_maximum_principle(const HarmonicEmbedding& emb) {
  for (int k = 0; k < emb.dim; ++k) {
    double lo = INFINITY, hi = -INFINITY;
    for (int b : emb.boundary) {
      lo = std::min(lo, emb.phi[b][k]);
      hi = std::max(hi, emb.phi[b][k]);
    }
    for (int x : emb.interior) {
      CHECK(emb.phi[x][k] >= lo);
      CHECK(emb.phi[x][k] <= hi);
    }
  }
}

}  // namespace

TEST_CASE("single interior vertex sits at the mean of its neighbors") {
  const Graph g = Graph::from_edges(2, {{0, 0, 0}, {3, 0, 0}, {0, 2, 0}, {-1, -1, 0}, {5, 5, 0}},
                                    {{0, 1}, {0, 2}, {0, 3}, {1, 4}});
  const std::vector<char> region{1, 0, 0, 0, 0};
  const HarmonicEmbedding emb = solve_harmonic_embedding(g, region, 1e-12);
  CHECK(emb.phi[0][0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(emb.phi[0][1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(emb.boundary == std::vector<int>{1, 2, 3});
  CHECK(emb.role[4] == VertexRole::outside);
  CHECK(emb.chi[0][0] == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("degenerate regions are rejected") {
  const Graph g = Graph::from_edges(2, {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1}, {1, 2}, {0, 2}});
  CHECK_THROWS_AS(solve_harmonic_embedding(g, std::vector<char>{1, 1, 1}, 1e-10), SingularSystemError);
  CHECK_THROWS_AS(solve_harmonic_embedding(g, std::vector<char>{0, 0, 0}, 1e-10), ParameterError);
  CHECK_THROWS_AS(solve_harmonic_embedding(g, std::vector<char>{1, 0}, 1e-10), ParameterError);
  CHECK_THROWS_AS(solve_harmonic_embedding(g, std::vector<char>{1, 0, 0}, 0.0), ParameterError);

  // Two components, one of them cut off from any boundary.
  const Graph h = Graph::from_edges(2, {{0, 0, 0}, {1, 0, 0}, {5, 0, 0}, {6, 0, 0}}, {{0, 1}, {2, 3}});
  CHECK_THROWS_AS(solve_harmonic_embedding(h, std::vector<char>{1, 0, 1, 1}, 1e-10), SingularSystemError);
}

TEST_CASE("embedding matches the dense solve and satisfies the Dirichlet invariants") {
  int nonzero = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    CAPTURE(seed);
    // About 20 interior vertices for small seeds, up to ~200 for larger.
    const double r = seed <= 20 ? 2.5 : 7.0;
    const Instance inst = make_instance(seed, r + 4.0, r);
    const Graph& g = inst.dg.graph;
    if (std::count(inst.region.begin(), inst.region.end(), 1) == 0) continue;
    const HarmonicEmbedding emb = solve_harmonic_embedding(inst.dg, inst.region);
    ++total;

    CHECK(emb.tolerance == doctest::Approx(1e-10 * inst.ps.window.max_side()));
    CHECK(emb.residual <= emb.tolerance);
    const auto defects = harmonic_defects(g, emb);
    for (double d : defects) CHECK(d <= emb.tolerance);

    const std::vector<Vec> oracle = dense_phi(g, inst.region);
    for (int x : emb.interior)
      for (int k = 0; k < 2; ++k) CHECK(std::abs(emb.phi[x][k] - oracle[x][k]) < 1e-10);
    for (int b : emb.boundary) {
      CHECK(emb.phi[b] == g.positions[b]);
      CHECK(emb.chi[b] == Vec{});
    }
    check_maximum_principle(emb);

    const std::vector<Vec> chi = corrector_values(emb);
    bool any = false;
    for (std::size_t v = 0; v < chi.size(); ++v) {
      CHECK(chi[v] == emb.chi[v]);
      any = any || std::hypot(chi[v][0], chi[v][1]) > 1e-8;
    }
    nonzero += any;

    // Differences of a vertex potential: antisymmetric, zero around triangles.
    for (const Simplex& s : inst.dg.simplices) {
      Vec loop{};
      for (int i = 0; i < 3; ++i) {
        const int a = s.v[i], b = s.v[(i + 1) % 3];
        for (int k = 0; k < 2; ++k) loop[k] += chi[b][k] - chi[a][k];
      }
      CHECK(std::abs(loop[0]) < 1e-12);
      CHECK(std::abs(loop[1]) < 1e-12);
    }
  }
  CHECK(total >= 38);
  CHECK(nonzero >= 0.95 * total);
}

TEST_CASE("identity is harmonic on a lattice, so the corrector vanishes") {
  std::vector<Vec> pos;
  std::vector<std::pair<int, int>> edges;
  const int n = 9;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      pos.push_back({double(i), double(j), 0});
      if (i + 1 < n) edges.emplace_back(i * n + j, (i + 1) * n + j);
      if (j + 1 < n) edges.emplace_back(i * n + j, i * n + j + 1);
    }
  const Graph g = Graph::from_edges(2, pos, edges);
  std::vector<char> region(n * n, 0);
  for (int i = 1; i + 1 < n; ++i)
    for (int j = 1; j + 1 < n; ++j) region[i * n + j] = 1;
  const HarmonicEmbedding emb = solve_harmonic_embedding(g, region, 1e-11);
  for (const Vec& c : emb.chi) CHECK(std::hypot(c[0], c[1]) < 1e-9);
}

TEST_CASE("sublinearity profile: validation, monotonicity and pair diameter") {
  const Instance inst = make_instance(3, 34.0, 30.0);
  const Graph& g = inst.dg.graph;
  const HarmonicEmbedding emb = solve_harmonic_embedding(inst.dg, inst.region);

  const std::vector<double> one{5.0}, flat{5.0, 5.0, 10.0};
  CHECK_THROWS_AS(sublinearity_profile(g, emb, one), ParameterError);
  CHECK_THROWS_AS(sublinearity_profile(g, emb, flat), ParameterError);

  std::vector<char> good(g.vertex_count(), 0);
  for (std::size_t v = 0; v < good.size(); v += 2) good[v] = 1;
  SublinearityOptions opt;
  opt.epsilon_delta = {{0.1, 1.0 / 81.0}, {0.5, 0.5}};
  opt.betas = {3.5};
  opt.good = good;
  opt.region_half_width = 30.0;
  const std::vector<double> radii{2.5, 5.0, 10.0, 20.0};
  const SublinearityProfile p = sublinearity_profile(g, emb, radii, opt);

  REQUIRE(p.max_chi.size() == 4);
  REQUIRE(p.max_chi_good.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(p.ratios[i] == doctest::Approx(p.max_chi[i] / radii[i]));
    CHECK(p.max_chi_good[i] <= p.max_chi[i]);
    if (i) CHECK(p.max_chi[i] >= p.max_chi[i - 1]);
  }
  CHECK(p.recursion.size() == 8);
  for (const RecursionEntry& e : p.recursion) {
    CHECK(e.available == (3.0 * e.n <= 30.0));
    if (e.available) CHECK(e.holds == (e.r_n <= e.epsilon * e.n + e.delta * e.r_3n));
    else CHECK_FALSE(e.holds);
  }

  // Pair maximum against brute force over all pairs, and decay at beta = d + 1.5.
  REQUIRE(p.poly_growth.size() == 4);
  for (std::size_t i = 0; i < 2; ++i) {
    std::vector<int> members;
    for (std::size_t v = 0; v < g.vertex_count(); ++v)
      if (emb.role[v] != VertexRole::outside && !g.tainted[v] && std::abs(g.positions[v][0]) <= radii[i] &&
          std::abs(g.positions[v][1]) <= radii[i])
        members.push_back(static_cast<int>(v));
    double brute = 0.0;
    for (int a : members)
      for (int b : members)
        brute = std::max(brute, std::hypot(emb.chi[a][0] - emb.chi[b][0], emb.chi[a][1] - emb.chi[b][1]));
    CHECK(p.poly_growth[i].pair_max == doctest::Approx(brute).epsilon(1e-12));
  }
  for (std::size_t i = 1; i < 4; ++i) CHECK(p.poly_growth[i].ratio < p.poly_growth[i - 1].ratio);
  CHECK(std::hypot(g.positions[p.base_vertex][0], g.positions[p.base_vertex][1]) < 2.0);
}

TEST_CASE("martingale diagnostic") {
  const Instance inst = make_instance(9, 124.0, 120.0);
  const Graph& g = inst.dg.graph;
  const HarmonicEmbedding emb = solve_harmonic_embedding(inst.dg, inst.region);
  int x0 = 0;
  double best = INFINITY;
  for (int x : emb.interior)
    if (std::hypot(g.positions[x][0], g.positions[x][1]) < best) {
      best = std::hypot(g.positions[x][0], g.positions[x][1]);
      x0 = x;
    }

  SUBCASE("zero steps gives M_0 = phi(x0)") {
    const MartingaleReport r = martingale_diagnostic(g, emb, x0, 0, 1000, 1);
    CHECK(r.steps == std::vector<long>{0});
    CHECK(r.second_moment[0] == 0.0);
    CHECK(r.censored == 0);
  }

  SUBCASE("argument checks") {
    CHECK_THROWS_AS(martingale_diagnostic(g, emb, x0, 10, 999, 1), ParameterError);
    CHECK_THROWS_AS(martingale_diagnostic(g, emb, emb.boundary.front(), 10, 1000, 1), ParameterError);
  }

  SUBCASE("empirical drift vanishes and the second moment grows linearly") {
    const MartingaleReport r = martingale_diagnostic(g, emb, x0, 1000, 4000, 17);
    CHECK(r.censored < 40);
    CHECK(r.defects.size() == emb.interior.size());
    REQUIRE(!r.drift.empty());
    int outside = 0, tests = 0;
    for (const DriftEstimate& d : r.drift) {
      CHECK(d.visits >= 1000);
      for (int k = 0; k < 2; ++k) {
        ++tests;
        if (std::abs(d.mean_increment[k]) > 3.0 * d.standard_error[k]) ++outside;
      }
    }
    // A 3 SE band excludes about 0.3% of unbiased estimates.
    CHECK(outside <= std::max(2, tests / 50));
    CHECK(std::abs(r.ratio_slope) <= 0.10);
    CHECK(r.slope > 0.0);
    for (std::size_t i = 1; i < r.steps.size(); ++i) CHECK(r.second_moment[i] > 0.0);
  }
}

TEST_CASE("embedding CSV lists region and boundary vertices") {
  const Graph g = Graph::from_edges(2, {{0, 0, 0}, {3, 0, 0}, {0, 2, 0}, {-1, -1, 0}, {5, 5, 0}},
                                    {{0, 1}, {0, 2}, {0, 3}, {1, 4}});
  const HarmonicEmbedding emb = solve_harmonic_embedding(g, std::vector<char>{1, 0, 0, 0, 0}, 1e-12);
  std::ostringstream os;
  write_embedding_csv(os, emb);
  const std::string s = os.str();
  CHECK(s.starts_with("vertex,x,y,phi_x,phi_y,chi_x,chi_y,interior\n0,"));
  CHECK(std::count(s.begin(), s.end(), '\n') == 5);
}
