#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "delwalk/pointproc.hpp"
#include "delwalk/stats.hpp"
#include "delwalk/walker.hpp"

using namespace delwalk;

namespace {

Graph triangle() { return Graph::from_edges(2, {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1}, {1, 2}, {0, 2}}); }

// Non-bipartite, irregular: degrees 3, 3, 3, 2, 1.
Graph kite() {
  return Graph::from_edges(2, {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {2, 2, 0}},
                           {{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 3}, {3, 4}});
}

Graph cycle(int n) {
  std::vector<Vec> pos;
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    pos.push_back({std::cos(2 * M_PI * i / n), std::sin(2 * M_PI * i / n), 0});
    edges.emplace_back(i, (i + 1) % n);
  }
  return Graph::from_edges(2, pos, edges);
}

Eigen::MatrixXd transition_matrix(const Graph& g) {
  const int n = static_cast<int>(g.vertex_count());
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (int x = 0; x < n; ++x)
    for (int y : g.neighbors(x)) P(x, y) += 1.0 / g.degree(x);
  return P;
}

// Stationary vector by power iteration on the lazy chain.
Eigen::VectorXd stationary(const Graph& g) {
  const Eigen::MatrixXd P = transition_matrix(g);
  const int n = static_cast<int>(P.rows());
  const Eigen::MatrixXd lazy = 0.5 * (Eigen::MatrixXd::Identity(n, n) + P);
  Eigen::RowVectorXd pi = Eigen::RowVectorXd::Constant(n, 1.0 / n);
  for (int it = 0; it < 10000; ++it) pi = pi * lazy;
  return pi.transpose();
}

// Oracle: induced kernel from one dense solve over all non-good vertices
// of the full transition matrix, c = P_gg + P_gb (I - P_bb)^{-1} P_bg.
Eigen::MatrixXd dense_induced(const Graph& g, const std::vector<char>& good) {
  const Eigen::MatrixXd P = transition_matrix(g);
  std::vector<int> G, B;
  for (int v = 0; v < static_cast<int>(good.size()); ++v) (good[v] ? G : B).push_back(v);
  const auto sub = [&](const std::vector<int>& r, const std::vector<int>& c) {
    Eigen::MatrixXd M(r.size(), c.size());
    for (std::size_t i = 0; i < r.size(); ++i)
      for (std::size_t j = 0; j < c.size(); ++j) M(i, j) = P(r[i], c[j]);
    return M;
  };
  Eigen::MatrixXd C = sub(G, G);
  if (!B.empty()) {
    const Eigen::MatrixXd Pbb = sub(B, B);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(B.size(), B.size());
    C += sub(G, B) * (I - Pbb).partialPivLu().solve(sub(B, G));
  }
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(g.vertex_count(), g.vertex_count());
  for (std::size_t i = 0; i < G.size(); ++i)
    for (std::size_t j = 0; j < G.size(); ++j) full(G[i], G[j]) = C(i, j);
  return full;
}

// Delaunay graph of a small Poisson sample with a random good mask; taint
// is dropped so every hole is treated as enclosed.
struct Instance {
  Graph g;
  std::vector<char> good;
};

Instance random_instance(std::uint64_t seed, double half_width, double bad_fraction) {
  const PointSet ps = sample_poisson(1.0, Box::centered(2, half_width), seed);
  const DelaunayGraph dg = build_delaunay(ps);
  std::vector<std::pair<int, int>> edges;
  for (int v = 0; v < static_cast<int>(dg.graph.vertex_count()); ++v)
    for (int w : dg.graph.neighbors(v))
      if (v < w) edges.emplace_back(v, w);
  Instance inst{Graph::from_edges(2, dg.graph.positions, edges), {}};
  WalkEngine rng(derive_seed(seed, "mask"));
  std::bernoulli_distribution bad(bad_fraction);
  inst.good.resize(inst.g.vertex_count());
  for (auto& c : inst.good) c = !bad(rng);
  return inst;
}

}  // namespace

TEST_CASE("zero steps and zero horizon give the start alone") {
  const Graph g = triangle();
  CHECK(run_dtrw(g, 1, 0, 7).steps.size() == 1);
  const std::vector<char> good(3, 1);
  const WalkPath p = run_induced_continuous(g, good, 2, 0.0, 7);
  REQUIRE(p.steps.size() == 1);
  CHECK(p.steps[0].vertex == 2);
  CHECK(p.vertex_at_time(5.0) == 2);
}

TEST_CASE("walk errors and argument checks") {
  const Graph g = Graph::from_edges(2, {{0, 0, 0}, {1, 0, 0}, {5, 5, 0}}, {{0, 1}});
  CHECK_THROWS_AS(run_dtrw(g, 2, 10, 1), WalkError);
  CHECK_THROWS_AS(run_vsrw(g, 2, 1.0, 1), WalkError);
  CHECK_THROWS_AS(run_dtrw(g, 3, 10, 1), LookupError);
  CHECK_THROWS_AS(run_dtrw(g, 0, -1, 1), ParameterError);
  CHECK_THROWS_AS(run_vsrw(g, 0, 0.0, 1), ParameterError);
  const std::vector<char> good{1, 0, 1};
  CHECK_THROWS_AS(run_induced_discrete(g, good, 1, 3, 1), ParameterError);
  CHECK_THROWS_AS(run_induced_discrete(g, std::vector<char>{1, 1}, 0, 3, 1), ParameterError);
  CHECK_THROWS_AS(induced_kernel_exact(g, good, 1), ParameterError);
}

TEST_CASE("triangle occupation is uniform") {
  const WalkPath p = run_dtrw(triangle(), 0, 300000, 11);
  std::array<double, 3> freq{};
  for (const WalkStep& s : p.steps) freq[s.vertex] += 1.0;
  for (double f : freq) CHECK(f / p.steps.size() == doctest::Approx(1.0 / 3.0).epsilon(0.01));
}

TEST_CASE("DTRW occupation is proportional to degree") {
  const Graph g = kite();
  const Eigen::VectorXd pi = stationary(g);
  // Degree oracle agrees with the power iteration.
  for (int v = 0; v < 5; ++v) CHECK(pi[v] == doctest::Approx(g.degree(v) / 12.0).epsilon(1e-9));

  const WalkPath p = run_dtrw(g, 4, 400000, 3);
  for (int v = 0; v < 5; ++v) {
    std::vector<double> ind;
    ind.reserve(p.steps.size());
    for (const WalkStep& s : p.steps) ind.push_back(s.vertex == v ? 1.0 : 0.0);
    const double m = stats::mean(ind);
    const double se = stats::batch_standard_error(ind, 100);
    CAPTURE(v);
    CHECK(std::abs(m - pi[v]) <= 3.0 * se);
  }
}

TEST_CASE("consecutive vertices of DTRW and VSRW paths are adjacent") {
  const Instance inst = random_instance(4, 8.0, 0.0);
  const WalkPath d = run_dtrw(inst.g, 0, 5000, 9);
  for (std::size_t i = 1; i < d.steps.size(); ++i) CHECK(inst.g.has_edge(d.steps[i - 1].vertex, d.steps[i].vertex));
  const WalkPath v = run_vsrw(inst.g, 0, 500.0, 9);
  for (std::size_t i = 1; i < v.steps.size(); ++i) {
    CHECK(inst.g.has_edge(v.steps[i - 1].vertex, v.steps[i].vertex));
    CHECK(v.steps[i].time > v.steps[i - 1].time);
  }
  CHECK(v.steps.back().time <= 500.0);
}

TEST_CASE("VSRW holding time at a degree-k vertex has mean 1/k") {
  const Graph g = kite();
  const WalkPath p = run_vsrw(g, 0, 60000.0, 21);
  std::array<std::vector<double>, 5> holds;
  for (std::size_t i = 0; i + 1 < p.steps.size(); ++i)
    holds[p.steps[i].vertex].push_back(p.steps[i + 1].time - p.steps[i].time);
  for (int v = 0; v < 5; ++v) {
    CAPTURE(v);
    REQUIRE(holds[v].size() >= 10000);
    CHECK(std::abs(stats::mean(holds[v]) - 1.0 / g.degree(v)) <= 3.0 * stats::standard_error(holds[v]));
  }
}

TEST_CASE("VSRW jump chain reproduces DTRW with the same seed") {
  const Instance inst = random_instance(8, 6.0, 0.0);
  const WalkPath v = run_vsrw(inst.g, 3, 200.0, 77);
  const WalkPath d = run_dtrw(inst.g, 3, static_cast<long>(v.steps.size()) - 1, 77);
  REQUIRE(d.steps.size() == v.steps.size());
  for (std::size_t i = 0; i < d.steps.size(); ++i) CHECK(d.steps[i].vertex == v.steps[i].vertex);
}

TEST_CASE("VSRW time-average occupation is uniform on a regular graph") {
  const Graph g = cycle(7);
  const double horizon = 60000.0;
  const WalkPath p = run_vsrw(g, 0, horizon, 5);
  std::array<double, 7> time{};
  for (std::size_t i = 0; i < p.steps.size(); ++i) {
    const double end = i + 1 < p.steps.size() ? p.steps[i + 1].time : horizon;
    time[p.steps[i].vertex] += end - p.steps[i].time;
  }
  for (double t : time) CHECK(t / horizon == doctest::Approx(1.0 / 7.0).epsilon(0.03));
}

TEST_CASE("all walks are deterministic in the seed") {
  const Instance inst = random_instance(12, 7.0, 0.2);
  int x0 = 0;
  while (!inst.good[x0]) ++x0;
  auto same = [](const WalkPath& a, const WalkPath& b) {
    if (a.steps.size() != b.steps.size()) return false;
    for (std::size_t i = 0; i < a.steps.size(); ++i)
      if (a.steps[i].vertex != b.steps[i].vertex || a.steps[i].time != b.steps[i].time) return false;
    return true;
  };
  CHECK(same(run_dtrw(inst.g, x0, 1000, 5), run_dtrw(inst.g, x0, 1000, 5)));
  CHECK(same(run_vsrw(inst.g, x0, 100.0, 5), run_vsrw(inst.g, x0, 100.0, 5)));
  CHECK(same(run_induced_discrete(inst.g, inst.good, x0, 1000, 5),
             run_induced_discrete(inst.g, inst.good, x0, 1000, 5)));
  CHECK(same(run_induced_continuous(inst.g, inst.good, x0, 100.0, 5),
             run_induced_continuous(inst.g, inst.good, x0, 100.0, 5)));
  CHECK_FALSE(same(run_dtrw(inst.g, x0, 1000, 5), run_dtrw(inst.g, x0, 1000, 6)));
}

TEST_CASE("kernel row with only good neighbors is uniform") {
  const Graph g = kite();
  const std::vector<char> good{1, 1, 1, 1, 0};
  const KernelRow r = induced_kernel_exact(g, good, 0);
  CHECK(r.cols == std::vector<int>{1, 2});
  for (double p : r.probs) CHECK(p == doctest::Approx(0.5));
}

TEST_CASE("five-vertex toy graph matches the dense absorption oracle") {
  // Vertex 2 is the only non-good vertex; from 3 the walk may return to 3.
  const Graph g = kite();
  const std::vector<char> good{1, 1, 0, 1, 1};
  const Eigen::MatrixXd C = dense_induced(g, good);
  InducedKernelSolver solver(g, good);
  for (int x : {0, 1, 3, 4}) {
    const KernelRow r = solver.row(x);
    double sum = 0.0;
    for (std::size_t i = 0; i < r.cols.size(); ++i) {
      CHECK(r.probs[i] == doctest::Approx(C(x, r.cols[i])).epsilon(1e-12));
      sum += r.probs[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
    for (int y = 0; y < 5; ++y)
      if (C(x, y) > 0) CHECK(std::find(r.cols.begin(), r.cols.end(), y) != r.cols.end());
  }
  // Hand computation from 0: 1/2 to 1 directly, 1/2 into vertex 2 which
  // exits uniformly to {0, 1, 3}.
  const KernelRow r0 = solver.row(0);
  CHECK(r0.cols == std::vector<int>{0, 1, 3});
  CHECK(r0.probs[0] == doctest::Approx(1.0 / 6.0));
  CHECK(r0.probs[1] == doctest::Approx(0.5 + 1.0 / 6.0));
  CHECK(r0.probs[2] == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("random instances: exact kernel equals dense oracle with detailed balance") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    CAPTURE(seed);
    const Instance inst = random_instance(seed, 6.0, 0.3);
    const Eigen::MatrixXd C = dense_induced(inst.g, inst.good);
    InducedKernelSolver solver(inst.g, inst.good);
    const InducedKernel k = solver.full();
    CHECK(row_sum_residual(k) < 1e-10);
    CHECK(detailed_balance_residual(k, inst.g) < 1e-8);
    CHECK(k.solver_residual < 1e-10);
    double worst = 0.0;
    for (std::size_t x = 0; x < inst.g.vertex_count(); ++x) {
      if (!inst.good[x]) {
        CHECK_FALSE(k.has_row(static_cast<int>(x)));
        continue;
      }
      for (std::size_t y = 0; y < inst.g.vertex_count(); ++y)
        worst = std::max(worst, std::abs(k.at(static_cast<int>(x), static_cast<int>(y)) - C(x, y)));
      for (int y : k.row_cols(static_cast<int>(x))) CHECK(inst.good[y]);
    }
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("hole touching the boundary is a truncation error naming the hole") {
  const PointSet ps = sample_poisson(1.0, Box::centered(2, 6.0), 3);
  const DelaunayGraph dg = build_delaunay(ps);
  const Graph& g = dg.graph;
  // Make one tainted vertex bad and query a good neighbor of it.
  int bad = 0;
  while (!g.tainted[bad]) ++bad;
  std::vector<char> good(g.vertex_count(), 1);
  good[bad] = 0;
  const int x = g.neighbors(bad)[0];
  InducedKernelSolver solver(g, good);
  try {
    solver.row(x);
    FAIL("expected a truncation error");
  } catch (const TruncationError& e) {
    CHECK(e.hole_id() == solver.holes().hole_of[bad]);
  }
  const InducedKernel k = solver.full(true);
  CHECK_FALSE(k.has_row(x));
  CHECK_THROWS_AS(solver.full(false), TruncationError);
}

TEST_CASE("induced discrete walk without holes reproduces DTRW") {
  const Instance inst = random_instance(5, 6.0, 0.0);
  const WalkPath a = run_induced_discrete(inst.g, inst.good, 0, 2000, 31);
  const WalkPath b = run_dtrw(inst.g, 0, 2000, 31);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) CHECK(a.steps[i].vertex == b.steps[i].vertex);
}

TEST_CASE("induced one-step law matches the exact kernel") {
  const Instance inst = random_instance(17, 5.0, 0.35);
  const InducedKernel k = InducedKernelSolver(inst.g, inst.good).full();
  int x = 0;
  std::size_t best = 0;
  for (int v = 0; v < static_cast<int>(inst.g.vertex_count()); ++v)
    if (inst.good[v] && k.row_cols(v).size() > best) {
      best = k.row_cols(v).size();
      x = v;
    }
  REQUIRE(best >= 4);

  const long N = 100000;
  WalkEngine rng(99);
  std::vector<double> hits(inst.g.vertex_count(), 0.0);
  for (long n = 0; n < N; ++n) {
    const int y = induced_step(inst.g, inst.good, x, rng);
    CHECK(inst.good[y]);
    hits[y] += 1.0;
  }
  double tv = 0.0;
  for (std::size_t y = 0; y < hits.size(); ++y) {
    const double p = k.at(x, static_cast<int>(y));
    const double f = hits[y] / N;
    tv += std::abs(f - p);
    const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / N);
    CAPTURE(y);
    CHECK(std::abs(f - p) <= 3.5 * se + 1e-12);
  }
  tv /= 2.0;
  CHECK(tv < 5.0 * std::sqrt(static_cast<double>(best) / N));
}

TEST_CASE("induced walks only record good vertices") {
  const Instance inst = random_instance(21, 7.0, 0.3);
  int x0 = 0;
  while (!inst.good[x0]) ++x0;
  for (const WalkStep& s : run_induced_discrete(inst.g, inst.good, x0, 3000, 4).steps) CHECK(inst.good[s.vertex]);
  const WalkPath c = run_induced_continuous(inst.g, inst.good, x0, 300.0, 4);
  for (std::size_t i = 0; i < c.steps.size(); ++i) {
    CHECK(inst.good[c.steps[i].vertex]);
    if (i) CHECK(c.steps[i].time > c.steps[i - 1].time);
  }
}

TEST_CASE("induced continuous jump counts are Poisson") {
  const Graph g = cycle(9);
  const std::vector<char> good{1, 1, 0, 1, 1, 0, 1, 1, 1};
  const double t = 20.0;
  const int runs = 20000;
  std::vector<double> jumps, exceed;
  for (int r = 0; r < runs; ++r) {
    const double n = static_cast<double>(run_induced_continuous(g, good, 0, t, 1000 + r).steps.size() - 1);
    jumps.push_back(n);
    exceed.push_back(n > 1.5 * t ? 1.0 : 0.0);
  }
  CHECK(std::abs(stats::mean(jumps) - t) <= 3.0 * stats::standard_error(jumps));
  CHECK(stats::variance(jumps) == doctest::Approx(t).epsilon(0.05));

  // Exact tail P[N > 3t/2] from the Poisson mass function.
  double cdf = 0.0;
  for (long k = 0; k <= static_cast<long>(1.5 * t); ++k) cdf += std::exp(stats::log_poisson_pmf(t, k));
  const double tail = 1.0 - cdf;
  CHECK(tail < 0.02);
  CHECK(std::abs(stats::mean(exceed) - tail) <= 3.0 * std::sqrt(tail * (1 - tail) / runs));
}

TEST_CASE("path and kernel CSV output") {
  const Graph g = kite();
  std::ostringstream a;
  write_path_csv(a, run_dtrw(g, 0, 3, 1));
  CHECK(a.str().starts_with("step,vertex\n0,0\n1,"));
  std::ostringstream b;
  write_path_csv(b, run_vsrw(g, 0, 1.0, 1));
  CHECK(b.str().starts_with("time,vertex\n0,0\n"));

  const std::vector<char> good{1, 1, 0, 1, 1};
  const InducedKernel k = InducedKernelSolver(g, good).full();
  std::ostringstream c;
  write_kernel_csv(c, k);
  const std::string s = c.str();
  CHECK(s.starts_with("x,y,probability\n0,0,"));
  CHECK(std::count(s.begin(), s.end(), '\n') == static_cast<long>(k.cols.size()) + 1);
  CHECK(to_string(WalkKind::induced_continuous) == "induced_continuous");
}
