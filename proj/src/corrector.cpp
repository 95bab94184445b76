#include "delwalk/corrector.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "delwalk/stats.hpp"
#include "delwalk/walker.hpp"

namespace delwalk {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

double norm_d(const Vec& v, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s += v[k] * v[k];
  return std::sqrt(s);
}

Vec sub(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

}  // namespace

std::vector<double> harmonic_defects(const Graph& g, const HarmonicEmbedding& emb) {
  std::vector<double> out;
  out.reserve(emb.interior.size());
  for (int x : emb.interior) {
    Vec s{};
    for (int y : g.neighbors(x))
      for (int k = 0; k < emb.dim; ++k) s[k] += emb.phi[y][k] - emb.phi[x][k];
    out.push_back(norm_d(s, emb.dim));
  }
  return out;
}

HarmonicEmbedding solve_harmonic_embedding(const Graph& g, std::span<const char> region, double tolerance) {
  const std::size_t n = g.vertex_count();
  if (region.size() != n) throw ParameterError("solve_harmonic_embedding: region mask size does not match the graph");
  if (!(tolerance > 0.0) || !std::isfinite(tolerance))
    throw ParameterError("solve_harmonic_embedding: tolerance must be > 0");

  HarmonicEmbedding emb;
  emb.dim = g.dim;
  emb.positions = g.positions;
  emb.tolerance = tolerance;
  emb.role.assign(n, VertexRole::outside);
  for (std::size_t v = 0; v < n; ++v)
    if (region[v]) {
      emb.role[v] = VertexRole::interior;
      emb.interior.push_back(static_cast<int>(v));
    }
  if (emb.interior.empty()) throw ParameterError("solve_harmonic_embedding: region is empty");
  for (int x : emb.interior)
    for (int y : g.neighbors(x))
      if (emb.role[y] == VertexRole::outside) emb.role[y] = VertexRole::boundary;
  for (std::size_t v = 0; v < n; ++v)
    if (emb.role[v] == VertexRole::boundary) emb.boundary.push_back(static_cast<int>(v));

  // Every interior component needs a boundary contact, else the Laplacian is singular.
  int count = 0;
  const std::vector<int> comp = connected_components(g, region, &count);
  std::vector<char> anchored(count, 0);
  for (int x : emb.interior)
    for (int y : g.neighbors(x))
      if (emb.role[y] == VertexRole::boundary) anchored[comp[x]] = 1;
  for (int c = 0; c < count; ++c)
    if (!anchored[c])
      throw SingularSystemError("solve_harmonic_embedding: interior component " + std::to_string(c) +
                                " has no boundary vertex");

  const int m = static_cast<int>(emb.interior.size());
  std::vector<int> local(n, -1);
  for (int i = 0; i < m; ++i) local[emb.interior[i]] = i;
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, g.dim);
  for (int i = 0; i < m; ++i) {
    const int x = emb.interior[i];
    trip.emplace_back(i, i, static_cast<double>(g.degree(x)));
    for (int y : g.neighbors(x)) {
      if (local[y] >= 0)
        trip.emplace_back(i, local[y], -1.0);
      else
        for (int k = 0; k < g.dim; ++k) b(i, k) += g.positions[y][k];
    }
  }
  SpMat A(m, m);
  A.setFromTriplets(trip.begin(), trip.end());

  // Eigen's default preconditioner for this solver is the diagonal (Jacobi) one.
  Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg;
  cg.compute(A);
  emb.phi = g.positions;
  const double per_coord = tolerance / std::sqrt(static_cast<double>(g.dim));
  for (int k = 0; k < g.dim; ++k) {
    const Eigen::VectorXd rhs = b.col(k);
    const double bnorm = rhs.norm();
    // Start from the identity: the corrector is small compared with positions.
    Eigen::VectorXd x(m);
    for (int i = 0; i < m; ++i) x[i] = g.positions[emb.interior[i]][k];
    int used = 0;
    if (bnorm > 0.0) {
      // Relative L2 stopping rule tightened until the max-norm defect passes.
      double rel = 0.5 * per_coord / bnorm;
      for (;;) {
        cg.setMaxIterations(kHarmonicIterationCap - used);
        cg.setTolerance(rel);
        x = cg.solveWithGuess(rhs, x);
        used += static_cast<int>(cg.iterations());
        const double worst = (rhs - A * x).cwiseAbs().maxCoeff();
        if (worst <= 0.5 * per_coord) break;
        if (used >= kHarmonicIterationCap || rel < 1e-17)
          throw ResourceError("solve_harmonic_embedding: no convergence within " +
                                  std::to_string(kHarmonicIterationCap) + " iterations",
                              2 * kHarmonicIterationCap);
        rel *= 0.1;
      }
    }
    emb.solver_iterations = std::max(emb.solver_iterations, used);
    for (int i = 0; i < m; ++i) emb.phi[emb.interior[i]][k] = x[i];
  }

  emb.chi.assign(n, Vec{});
  for (int x : emb.interior) emb.chi[x] = sub(emb.positions[x], emb.phi[x]);
  const std::vector<double> defects = harmonic_defects(g, emb);
  emb.residual = *std::max_element(defects.begin(), defects.end());
  return emb;
}

HarmonicEmbedding solve_harmonic_embedding(const DelaunayGraph& g, std::span<const char> region,
                                           std::optional<double> tolerance) {
  return solve_harmonic_embedding(g.graph, region, tolerance.value_or(1e-10 * g.window.max_side()));
}

std::vector<Vec> corrector_values(const HarmonicEmbedding& emb) {
  std::vector<Vec> chi(emb.positions.size());
  for (std::size_t v = 0; v < chi.size(); ++v)
    chi[v] = emb.role[v] == VertexRole::interior ? sub(emb.positions[v], emb.phi[v]) : Vec{};
  return chi;
}

namespace {

bool usable(const Graph& g, const HarmonicEmbedding& emb, int v) {
  return emb.role[v] != VertexRole::outside && (g.tainted.empty() || !g.tainted[v]);
}

bool in_cube(const Vec& p, int dim, double n) {
  for (int k = 0; k < dim; ++k)
    if (std::abs(p[k]) > n) return false;
  return true;
}

// Exact diameter of a point cloud: scan by distance from the centroid and
// stop once no remaining pair can beat the current best.
double diameter(std::vector<Vec> pts, int dim) {
  if (pts.size() < 2) return 0.0;
  Vec c{};
  for (const Vec& p : pts)
    for (int k = 0; k < dim; ++k) c[k] += p[k] / static_cast<double>(pts.size());
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) order.emplace_back(norm_d(sub(pts[i], c), dim), i);
  std::sort(order.begin(), order.end(), std::greater<>());
  double best = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i].first + order[0].first < best) break;
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (order[i].first + order[j].first < best) break;
      best = std::max(best, norm_d(sub(pts[order[i].second], pts[order[j].second]), dim));
    }
  }
  return best;
}

}  // namespace

SublinearityProfile sublinearity_profile(const Graph& g, const HarmonicEmbedding& emb, std::span<const double> radii,
                                         const SublinearityOptions& options) {
  if (radii.size() < 3) throw ParameterError("sublinearity_profile: need at least three radii");
  for (std::size_t i = 0; i < radii.size(); ++i)
    if (!(radii[i] > 0.0) || (i && !(radii[i] > radii[i - 1])))
      throw ParameterError("sublinearity_profile: radii must be positive and strictly increasing");
  if (emb.positions.size() != g.vertex_count())
    throw ConsistencyError("sublinearity_profile: embedding does not match the graph");
  if (!options.good.empty() && options.good.size() != g.vertex_count())
    throw ParameterError("sublinearity_profile: good mask size does not match the graph");
  const int dim = emb.dim;

  SublinearityProfile prof;
  prof.radii.assign(radii.begin(), radii.end());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < g.vertex_count(); ++v) {
    if (!usable(g, emb, static_cast<int>(v))) continue;
    const double r = norm_d(emb.positions[v], dim);
    if (r < best) {
      best = r;
      prof.base_vertex = static_cast<int>(v);
    }
  }
  if (prof.base_vertex < 0) throw ParameterError("sublinearity_profile: embedding has no usable vertex");
  const Vec base_chi = emb.chi[prof.base_vertex];

  double extent = options.region_half_width;
  if (extent <= 0.0)
    for (int x : emb.interior)
      for (int k = 0; k < dim; ++k) extent = std::max(extent, std::abs(emb.positions[x][k]));

  auto max_chi = [&](double n, bool good_only) {
    double out = 0.0;
    for (std::size_t v = 0; v < g.vertex_count(); ++v) {
      if (!usable(g, emb, static_cast<int>(v)) || !in_cube(emb.positions[v], dim, n)) continue;
      if (good_only && !options.good[v]) continue;
      out = std::max(out, norm_d(sub(emb.chi[v], base_chi), dim));
    }
    return out;
  };

  for (double n : prof.radii) {
    prof.max_chi.push_back(max_chi(n, false));
    prof.ratios.push_back(prof.max_chi.back() / n);
    if (!options.good.empty()) prof.max_chi_good.push_back(max_chi(n, true));
  }
  for (std::size_t i = 0; i < prof.radii.size(); ++i) {
    const double n = prof.radii[i];
    const bool available = 3.0 * n <= extent;
    const double r3 = available ? max_chi(3.0 * n, false) : 0.0;
    for (const auto& [eps, delta] : options.epsilon_delta) {
      RecursionEntry e{n, eps, delta, prof.max_chi[i], r3, available, false};
      e.holds = available && e.r_n <= eps * n + delta * r3;
      prof.recursion.push_back(e);
    }
    if (!options.betas.empty()) {
      std::vector<Vec> vals;
      for (std::size_t v = 0; v < g.vertex_count(); ++v)
        if (usable(g, emb, static_cast<int>(v)) && in_cube(emb.positions[v], dim, n)) vals.push_back(emb.chi[v]);
      const double pm = diameter(std::move(vals), dim);
      for (double beta : options.betas) prof.poly_growth.push_back({n, beta, pm, pm / std::pow(n, beta)});
    }
  }
  return prof;
}

MartingaleReport martingale_diagnostic(const Graph& g, const HarmonicEmbedding& emb, int x0, long n_steps, long walks,
                                       std::uint64_t seed, long min_visits) {
  if (emb.positions.size() != g.vertex_count())
    throw ConsistencyError("martingale_diagnostic: embedding does not match the graph");
  if (x0 < 0 || static_cast<std::size_t>(x0) >= g.vertex_count())
    throw LookupError("martingale_diagnostic: start is not a vertex");
  if (emb.role[x0] != VertexRole::interior) throw ParameterError("martingale_diagnostic: start must be interior");
  if (n_steps < 0) throw ParameterError("martingale_diagnostic: n_steps must be >= 0");
  if (walks < 1000) throw ParameterError("martingale_diagnostic: need at least 1000 walks");
  const int dim = emb.dim;

  MartingaleReport rep;
  rep.defects = harmonic_defects(g, emb);
  rep.walks = walks;
  // At most 100 checkpoints spread evenly over [1, n_steps].
  rep.steps.push_back(0);
  const long points = std::min<long>(n_steps, 100);
  for (long i = 1; i <= points; ++i) {
    const long s = (i * n_steps + points - 1) / points;
    if (s != rep.steps.back()) rep.steps.push_back(s);
  }

  std::vector<std::vector<double>> samples(rep.steps.size());
  std::vector<long> visits(g.vertex_count(), 0);
  std::vector<Vec> inc_sum(g.vertex_count(), Vec{}), inc_sq(g.vertex_count(), Vec{});
  std::vector<double> row(rep.steps.size());
  for (long w = 0; w < walks; ++w) {
    WalkEngine rng(derive_seed(seed, "martingale", static_cast<std::uint64_t>(w)));
    int x = x0;
    std::size_t next = 1;
    row[0] = 0.0;
    bool censored = false;
    for (long k = 1; k <= n_steps; ++k) {
      if (emb.role[x] != VertexRole::interior) {
        censored = true;
        break;
      }
      const int y = dtrw_step(g, x, rng);
      ++visits[x];
      for (int c = 0; c < dim; ++c) {
        const double d = emb.phi[y][c] - emb.phi[x][c];
        inc_sum[x][c] += d;
        inc_sq[x][c] += d * d;
      }
      x = y;
      if (next < rep.steps.size() && rep.steps[next] == k) {
        row[next++] = std::pow(norm_d(sub(emb.phi[x], emb.phi[x0]), dim), 2);
      }
    }
    if (censored) {
      ++rep.censored;
      continue;
    }
    for (std::size_t i = 0; i < row.size(); ++i) samples[i].push_back(row[i]);
  }

  for (const auto& s : samples) {
    rep.second_moment.push_back(s.empty() ? 0.0 : stats::mean(s));
    rep.second_moment_se.push_back(s.size() > 1 ? stats::standard_error(s) : 0.0);
  }

  // Fits use the checkpoints with n >= n_steps / 10 to skip the initial transient.
  std::vector<double> xs, ys, rs;
  for (std::size_t i = 1; i < rep.steps.size(); ++i)
    if (10 * rep.steps[i] >= n_steps) {
      xs.push_back(static_cast<double>(rep.steps[i]));
      ys.push_back(rep.second_moment[i]);
      rs.push_back(rep.second_moment[i] / static_cast<double>(rep.steps[i]));
    }
  if (xs.size() >= 2 && rep.censored < walks) {
    const stats::LinearFit f = stats::fit_line(xs, ys);
    rep.slope = f.slope;
    rep.intercept = f.intercept;
    const stats::LinearFit fr = stats::fit_line(xs, rs);
    const double mean_ratio = stats::mean(rs);
    if (mean_ratio > 0.0) rep.ratio_slope = fr.slope * (xs.back() - xs.front()) / mean_ratio;
  }

  for (std::size_t v = 0; v < g.vertex_count(); ++v) {
    const long k = visits[v];
    if (k < std::max<long>(min_visits, 2)) continue;
    DriftEstimate d;
    d.vertex = static_cast<int>(v);
    d.visits = k;
    for (int c = 0; c < dim; ++c) {
      const double mu = inc_sum[v][c] / k;
      const double var = std::max(0.0, (inc_sq[v][c] - k * mu * mu) / (k - 1));
      d.mean_increment[c] = mu;
      d.standard_error[c] = std::sqrt(var / k);
    }
    rep.drift.push_back(d);
  }
  return rep;
}

void write_embedding_csv(std::ostream& os, const HarmonicEmbedding& emb) {
  static constexpr const char* axis = "xyz";
  os << "vertex";
  for (int k = 0; k < emb.dim; ++k) os << ',' << axis[k];
  for (int k = 0; k < emb.dim; ++k) os << ",phi_" << axis[k];
  for (int k = 0; k < emb.dim; ++k) os << ",chi_" << axis[k];
  os << ",interior\n";
  os.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t v = 0; v < emb.positions.size(); ++v) {
    if (emb.role[v] == VertexRole::outside) continue;
    os << v;
    for (int k = 0; k < emb.dim; ++k) os << ',' << emb.positions[v][k];
    for (int k = 0; k < emb.dim; ++k) os << ',' << emb.phi[v][k];
    for (int k = 0; k < emb.dim; ++k) os << ',' << emb.chi[v][k];
    os << ',' << (emb.role[v] == VertexRole::interior ? 1 : 0) << '\n';
  }
}

}  // namespace delwalk
