#include "delwalk/walker.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace delwalk {

std::string to_string(WalkKind kind) {
  switch (kind) {
    case WalkKind::dtrw: return "dtrw";
    case WalkKind::vsrw: return "vsrw";
    case WalkKind::induced_discrete: return "induced_discrete";
    case WalkKind::induced_continuous: return "induced_continuous";
  }
  return "unknown";
}

int WalkPath::vertex_at_time(double t) const {
  auto it = std::upper_bound(steps.begin(), steps.end(), t,
                             [](double v, const WalkStep& s) { return v < s.time; });
  if (it == steps.begin()) return start;
  return std::prev(it)->vertex;
}

namespace {

void require_vertex(const Graph& g, int x) {
  if (x < 0 || static_cast<std::size_t>(x) >= g.vertex_count())
    throw LookupError("walk start " + std::to_string(x) + " is not a vertex");
  if (g.degree(x) == 0) throw WalkError("walk start " + std::to_string(x) + " is isolated");
}

void require_good(const Graph& g, std::span<const char> good, int x) {
  if (good.size() != g.vertex_count()) throw ParameterError("good mask size does not match the graph");
  require_vertex(g, x);
  if (!good[x]) throw ParameterError("induced walk must start at a good vertex");
}

}  // namespace

int dtrw_step(const Graph& g, int x, WalkEngine& rng) {
  const auto nb = g.neighbors(x);
  if (nb.empty()) throw WalkError("walk reached isolated vertex " + std::to_string(x));
  std::uniform_int_distribution<std::size_t> pick(0, nb.size() - 1);
  return nb[pick(rng)];
}

int induced_step(const Graph& g, std::span<const char> good, int x, WalkEngine& rng) {
  for (long k = 0; k < kTrapLimit; ++k) {
    x = dtrw_step(g, x, rng);
    if (good[x]) return x;
  }
  throw WalkError("walk trapped in a hole for " + std::to_string(kTrapLimit) + " steps near vertex " +
                  std::to_string(x));
}

WalkPath run_dtrw(const Graph& g, int x0, long n_steps, std::uint64_t seed) {
  require_vertex(g, x0);
  if (n_steps < 0) throw ParameterError("run_dtrw: n_steps must be >= 0");
  WalkPath p{x0, {}, WalkKind::dtrw, seed};
  p.steps.reserve(static_cast<std::size_t>(n_steps) + 1);
  p.steps.push_back({x0, 0.0});
  WalkEngine rng(seed);
  int x = x0;
  for (long n = 1; n <= n_steps; ++n) {
    x = dtrw_step(g, x, rng);
    p.steps.push_back({x, static_cast<double>(n)});
  }
  return p;
}

WalkPath run_vsrw(const Graph& g, int x0, double horizon, std::uint64_t seed) {
  require_vertex(g, x0);
  if (!(horizon > 0.0)) throw ParameterError("run_vsrw: horizon must be > 0");
  WalkPath p{x0, {{x0, 0.0}}, WalkKind::vsrw, seed};
  WalkEngine rng(seed);
  WalkEngine clock(derive_seed(seed, "clock"));
  int x = x0;
  double t = 0.0;
  for (;;) {
    std::exponential_distribution<double> hold(static_cast<double>(g.degree(x)));
    t += hold(clock);
    if (t > horizon) break;
    x = dtrw_step(g, x, rng);
    p.steps.push_back({x, t});
  }
  return p;
}

WalkPath run_induced_discrete(const Graph& g, std::span<const char> good, int x0, long n_steps, std::uint64_t seed) {
  require_good(g, good, x0);
  if (n_steps < 0) throw ParameterError("run_induced_discrete: n_steps must be >= 0");
  WalkPath p{x0, {{x0, 0.0}}, WalkKind::induced_discrete, seed};
  WalkEngine rng(seed);
  int x = x0;
  for (long n = 1; n <= n_steps; ++n) {
    x = induced_step(g, good, x, rng);
    p.steps.push_back({x, static_cast<double>(n)});
  }
  return p;
}

WalkPath run_induced_continuous(const Graph& g, std::span<const char> good, int x0, double horizon,
                                std::uint64_t seed) {
  require_good(g, good, x0);
  if (!(horizon >= 0.0)) throw ParameterError("run_induced_continuous: horizon must be >= 0");
  WalkPath p{x0, {{x0, 0.0}}, WalkKind::induced_continuous, seed};
  WalkEngine rng(seed);
  WalkEngine clock(derive_seed(seed, "clock"));
  std::exponential_distribution<double> gap(1.0);
  int x = x0;
  double t = 0.0;
  for (;;) {
    t += gap(clock);
    if (t > horizon) break;
    x = induced_step(g, good, x, rng);
    p.steps.push_back({x, t});
  }
  return p;
}

HoleStructure find_holes(const Graph& g, std::span<const char> good) {
  if (good.size() != g.vertex_count()) throw ParameterError("find_holes: mask size does not match the graph");
  HoleStructure h;
  std::vector<char> bad(g.vertex_count());
  for (std::size_t v = 0; v < bad.size(); ++v) bad[v] = !good[v];
  int count = 0;
  h.hole_of = connected_components(g, bad, &count);
  h.holes.resize(count);
  h.tainted.assign(count, 0);
  for (std::size_t v = 0; v < g.vertex_count(); ++v) {
    const int id = h.hole_of[v];
    if (id < 0) continue;
    h.holes[id].push_back(static_cast<int>(v));
    if (!g.tainted.empty() && g.tainted[v]) h.tainted[id] = 1;
  }
  return h;
}

double InducedKernel::at(int x, int y) const {
  const auto c = row_cols(x);
  const auto it = std::lower_bound(c.begin(), c.end(), y);
  if (it == c.end() || *it != y) return 0.0;
  return probs[offsets[x] + static_cast<std::size_t>(it - c.begin())];
}

InducedKernelSolver::InducedKernelSolver(const Graph& g, std::span<const char> good)
    : g_(g), good_(good.begin(), good.end()), holes_(find_holes(g, good)), solutions_(holes_.holes.size()) {}

const InducedKernelSolver::HoleSolution& InducedKernelSolver::solve(int hole) {
  HoleSolution& sol = solutions_[hole];
  if (sol.solved) return sol;
  const std::vector<int>& verts = holes_.holes[hole];
  const int m = static_cast<int>(verts.size());
  for (int v : verts)
    for (int w : g_.neighbors(v))
      if (good_[w]) sol.exits.push_back(w);
  std::sort(sol.exits.begin(), sol.exits.end());
  sol.exits.erase(std::unique(sol.exits.begin(), sol.exits.end()), sol.exits.end());
  const int e = static_cast<int>(sol.exits.size());
  auto local_of = [&](int v) {
    return static_cast<int>(std::lower_bound(verts.begin(), verts.end(), v) - verts.begin());
  };
  auto exit_of = [&](int v) {
    return static_cast<int>(std::lower_bound(sol.exits.begin(), sol.exits.end(), v) - sol.exits.begin());
  };

  // (I - Q) H = R with Q the within-hole transitions and R the exits.
  std::vector<Eigen::Triplet<double>> a_trip, r_trip;
  for (int i = 0; i < m; ++i) {
    const int v = verts[i];
    const double p = 1.0 / g_.degree(v);
    a_trip.emplace_back(i, i, 1.0);
    for (int w : g_.neighbors(v)) {
      if (good_[w])
        r_trip.emplace_back(i, exit_of(w), p);
      else
        a_trip.emplace_back(i, local_of(w), -p);
    }
  }
  Eigen::SparseMatrix<double> A(m, m), R(m, e);
  A.setFromTriplets(a_trip.begin(), a_trip.end());
  R.setFromTriplets(r_trip.begin(), r_trip.end());
  A.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success)
    throw SingularSystemError("induced kernel: absorption system of hole " + std::to_string(hole) + " is singular");
  const Eigen::MatrixXd Rd(R);
  const Eigen::MatrixXd H = lu.solve(Rd);
  sol.residual = (A * H - Rd).cwiseAbs().maxCoeff();
  sol.hit.resize(static_cast<std::size_t>(m) * e);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < e; ++k) sol.hit[static_cast<std::size_t>(i) * e + k] = H(i, k);
  sol.solved = true;
  return sol;
}

KernelRow InducedKernelSolver::row(int x) {
  require_good(g_, good_, x);
  KernelRow r;
  r.x = x;
  const double p = 1.0 / g_.degree(x);
  std::vector<std::pair<int, double>> acc;
  for (int w : g_.neighbors(x)) {
    if (good_[w]) {
      acc.emplace_back(w, p);
      continue;
    }
    const int h = holes_.hole_of[w];
    if (holes_.tainted[h])
      throw TruncationError("induced kernel: hole " + std::to_string(h) + " next to vertex " + std::to_string(x) +
                                " touches the window boundary",
                            h);
    const HoleSolution& sol = solve(h);
    const auto& verts = holes_.holes[h];
    const std::size_t i = static_cast<std::size_t>(std::lower_bound(verts.begin(), verts.end(), w) - verts.begin());
    const std::size_t e = sol.exits.size();
    for (std::size_t k = 0; k < e; ++k) {
      const double q = sol.hit[i * e + k];
      if (q != 0.0) acc.emplace_back(sol.exits[k], p * q);
    }
    r.solver_residual = std::max(r.solver_residual, sol.residual);
  }
  std::sort(acc.begin(), acc.end());
  for (const auto& [y, q] : acc) {
    if (!r.cols.empty() && r.cols.back() == y)
      r.probs.back() += q;
    else {
      r.cols.push_back(y);
      r.probs.push_back(q);
    }
  }
  return r;
}

InducedKernel InducedKernelSolver::full(bool skip_truncated) {
  InducedKernel k;
  k.support = good_;
  const std::size_t n = g_.vertex_count();
  k.offsets.assign(n + 1, 0);
  for (std::size_t x = 0; x < n; ++x) {
    if (good_[x] && g_.degree(static_cast<int>(x)) > 0) {
      try {
        const KernelRow r = row(static_cast<int>(x));
        k.cols.insert(k.cols.end(), r.cols.begin(), r.cols.end());
        k.probs.insert(k.probs.end(), r.probs.begin(), r.probs.end());
        k.solver_residual = std::max(k.solver_residual, r.solver_residual);
      } catch (const TruncationError&) {
        if (!skip_truncated) throw;
      }
    }
    k.offsets[x + 1] = k.cols.size();
  }
  return k;
}

KernelRow induced_kernel_exact(const Graph& g, std::span<const char> good, int x) {
  InducedKernelSolver solver(g, good);
  return solver.row(x);
}

double detailed_balance_residual(const InducedKernel& k, const Graph& g) {
  double worst = 0.0;
  for (std::size_t x = 0; x < k.vertex_count(); ++x) {
    const auto c = k.row_cols(static_cast<int>(x));
    const auto p = k.row_probs(static_cast<int>(x));
    for (std::size_t i = 0; i < c.size(); ++i) {
      const int y = c[i];
      if (!k.has_row(y)) continue;
      const double lhs = g.degree(static_cast<int>(x)) * p[i];
      const double rhs = g.degree(y) * k.at(y, static_cast<int>(x));
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return worst;
}

double row_sum_residual(const InducedKernel& k) {
  double worst = 0.0;
  for (std::size_t x = 0; x < k.vertex_count(); ++x) {
    if (!k.has_row(static_cast<int>(x))) continue;
    double s = 0.0;
    for (double p : k.row_probs(static_cast<int>(x))) s += p;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

void write_path_csv(std::ostream& os, const WalkPath& path) {
  const bool discrete = path.kind == WalkKind::dtrw || path.kind == WalkKind::induced_discrete;
  os << (discrete ? "step" : "time") << ",vertex\n";
  os.precision(std::numeric_limits<double>::max_digits10);
  for (const WalkStep& s : path.steps) {
    if (discrete)
      os << static_cast<long>(s.time);
    else
      os << s.time;
    os << ',' << s.vertex << '\n';
  }
}

void write_kernel_csv(std::ostream& os, const InducedKernel& k) {
  os << "x,y,probability\n";
  os.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t x = 0; x < k.vertex_count(); ++x) {
    const auto c = k.row_cols(static_cast<int>(x));
    const auto p = k.row_probs(static_cast<int>(x));
    for (std::size_t i = 0; i < c.size(); ++i) os << x << ',' << c[i] << ',' << p[i] << '\n';
  }
}

}  // namespace delwalk
