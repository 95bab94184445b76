#include "delwalk/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace delwalk {

namespace {

double norm_d(const Vec& v, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s += v[k] * v[k];
  return std::sqrt(s);
}

void require_mask(const Graph& g, std::span<const char> good, const InducedKernel& kernel, const char* who) {
  if (good.size() != g.vertex_count()) throw ParameterError(std::string(who) + ": good mask size does not match the graph");
  if (kernel.vertex_count() != g.vertex_count())
    throw ConsistencyError(std::string(who) + ": kernel does not match the graph");
}

int good_degree(const Graph& g, std::span<const char> good, int x) {
  int d = 0;
  for (int y : g.neighbors(x)) d += good[y] ? 1 : 0;
  return d;
}

// Draws successors from kernel rows by inverse transform on cumulative sums.
class KernelSampler {
 public:
  explicit KernelSampler(const InducedKernel& k) : k_(k), cumulative_(k.probs.size()) {
    for (std::size_t x = 0; x < k.vertex_count(); ++x) {
      double s = 0.0;
      for (std::size_t i = k.offsets[x]; i < k.offsets[x + 1]; ++i) cumulative_[i] = s += k.probs[i];
    }
  }

  int step(int x, WalkEngine& rng) const {
    if (!k_.has_row(x)) throw DependencyError("induced kernel has no row for vertex " + std::to_string(x));
    const std::size_t a = k_.offsets[x], b = k_.offsets[x + 1];
    const double u = std::uniform_real_distribution<double>(0.0, cumulative_[b - 1])(rng);
    const auto it = std::upper_bound(cumulative_.begin() + a, cumulative_.begin() + b, u);
    return k_.cols[std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), b - 1)];
  }

 private:
  const InducedKernel& k_;
  std::vector<double> cumulative_;
};

void check_t_grid(std::span<const double> t_grid, const char* who) {
  for (std::size_t i = 0; i < t_grid.size(); ++i)
    if (!(t_grid[i] >= 0.0) || !std::isfinite(t_grid[i]) || (i && !(t_grid[i] > t_grid[i - 1])))
      throw ParameterError(std::string(who) + ": t grid must be nonnegative and strictly increasing");
}

// Smallest K >= t with Poisson(t) mass beyond K at most `tail`, using the
// geometric bound pmf(K+1) / (1 - t / (K+2)) on the tail.
long truncation_point(double t, double tail) {
  if (t == 0.0) return 0;
  long K = static_cast<long>(std::ceil(t));
  for (;; ++K) {
    const double next = std::exp(stats::log_poisson_pmf(t, K + 1));
    const double ratio = t / static_cast<double>(K + 2);
    if (ratio < 1.0 && next / (1.0 - ratio) <= tail) return K;
  }
}

// Applies v <- v C for k = 0..K and hands (k, v) to `visit`.
template <typename Visit>
void power_sequence(const InducedKernel& kernel, int x, long K, Visit&& visit) {
  const std::size_t n = kernel.vertex_count();
  std::vector<double> v(n, 0.0), next(n, 0.0);
  v[x] = 1.0;
  for (long k = 0;; ++k) {
    visit(k, v);
    if (k == K) break;
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      if (v[a] == 0.0) continue;
      if (!kernel.has_row(static_cast<int>(a)))
        throw DependencyError("uniformization: kernel has no row for vertex " + std::to_string(a));
      const auto c = kernel.row_cols(static_cast<int>(a));
      const auto p = kernel.row_probs(static_cast<int>(a));
      for (std::size_t i = 0; i < c.size(); ++i) next[c[i]] += v[a] * p[i];
    }
    v.swap(next);
  }
}

long checked_horizon(std::span<const double> t_grid, const UniformizationOptions& opt) {
  if (!(opt.tail > 0.0) || opt.max_terms < 1) throw ParameterError("uniformization: invalid options");
  if (t_grid.empty()) return 0;
  const long K = truncation_point(t_grid.back(), opt.tail);
  if (K > opt.max_terms) {
    const double cap = std::max(0.0, opt.max_terms - 10.0 * std::sqrt(static_cast<double>(opt.max_terms)));
    throw ResourceError("uniformization: t = " + std::to_string(t_grid.back()) + " needs " + std::to_string(K) +
                            " kernel applications, above the budget of " + std::to_string(opt.max_terms),
                        static_cast<long>(cap));
  }
  return K;
}

void require_row(const InducedKernel& kernel, int x, const char* who) {
  if (x < 0 || static_cast<std::size_t>(x) >= kernel.vertex_count())
    throw LookupError(std::string(who) + ": start is not a vertex");
  if (!kernel.support[x]) throw ParameterError(std::string(who) + ": start must be a good vertex");
  if (!kernel.has_row(x)) throw DependencyError(std::string(who) + ": kernel has no row for the start");
}

}  // namespace

ConductanceRecord conductance_pair(const Graph& g, std::span<const char> good, const InducedKernel& kernel,
                                   std::span<const int> A, double D) {
  require_mask(g, good, kernel, "conductance_pair");
  if (!(D >= 1.0)) throw ParameterError("conductance_pair: D must be >= 1");
  std::vector<char> in_a(g.vertex_count(), 0);
  for (int x : A) {
    if (x < 0 || static_cast<std::size_t>(x) >= g.vertex_count()) throw LookupError("conductance_pair: bad vertex");
    if (!good[x]) throw ParameterError("conductance_pair: A must contain good vertices only");
    if (!kernel.has_row(x)) throw DependencyError("conductance_pair: kernel row of vertex " + std::to_string(x) + " is missing");
    in_a[x] = 1;
  }
  ConductanceRecord r;
  r.D = D;
  double num_hat = 0.0, num_tilde = 0.0;
  for (std::size_t x = 0; x < g.vertex_count(); ++x) {
    if (!good[x]) continue;
    const double dh = g.degree(static_cast<int>(x));
    const double dt = good_degree(g, good, static_cast<int>(x));
    r.vol_hat_total += dh;
    r.vol_tilde_total += dt;
    if (!in_a[x]) continue;
    r.vol_hat += dh;
    r.vol_tilde += dt;
    const auto c = kernel.row_cols(static_cast<int>(x));
    const auto p = kernel.row_probs(static_cast<int>(x));
    for (std::size_t i = 0; i < c.size(); ++i)
      if (good[c[i]] && !in_a[c[i]]) num_hat += dh * p[i];
    for (int y : g.neighbors(static_cast<int>(x)))
      if (good[y] && !in_a[y]) num_tilde += 1.0;
  }
  r.I_hat = r.vol_hat > 0.0 ? num_hat / r.vol_hat : 0.0;
  r.I_tilde = r.vol_tilde > 0.0 ? num_tilde / r.vol_tilde : 0.0;
  r.comparison_holds = r.I_hat >= r.I_tilde / D;
  return r;
}

namespace {

// Running state of a set grown one vertex at a time.
class GrowingSet {
 public:
  GrowingSet(const Graph& g, std::span<const char> good, const InducedKernel& k)
      : g_(g), good_(good), k_(k), in_(g.vertex_count(), 0) {}

  void add(int x) {
    in_[x] = 1;
    added_.push_back(x);
    const double dh = g_.degree(x);
    vol_hat_ += dh;
    const auto c = k_.row_cols(x);
    const auto p = k_.row_probs(x);
    for (std::size_t i = 0; i < c.size(); ++i) {
      const int y = c[i];
      if (y == x) continue;
      if (in_[y])
        num_hat_ -= g_.degree(y) * k_.at(y, x);
      else
        num_hat_ += dh * p[i];
    }
    for (int y : g_.neighbors(x)) {
      if (!good_[y]) continue;
      vol_tilde_ += 1.0;
      num_tilde_ += in_[y] ? -1.0 : 1.0;
    }
  }

  void clear() {
    for (int x : added_) in_[x] = 0;
    added_.clear();
    vol_hat_ = vol_tilde_ = num_hat_ = num_tilde_ = 0.0;
  }

  bool contains(int x) const { return in_[x]; }
  double vol_hat() const { return vol_hat_; }
  double vol_tilde() const { return vol_tilde_; }
  double I_hat() const { return num_hat_ / vol_hat_; }
  double I_tilde() const { return num_tilde_ / vol_tilde_; }

 private:
  const Graph& g_;
  std::span<const char> good_;
  const InducedKernel& k_;
  std::vector<char> in_;
  std::vector<int> added_;
  double vol_hat_ = 0.0, vol_tilde_ = 0.0, num_hat_ = 0.0, num_tilde_ = 0.0;
};

struct ProfileAccumulator {
  std::span<const double> u;
  double total_hat = 0.0, total_tilde = 0.0;
  std::vector<double> phi_hat, phi_tilde;
  std::vector<std::size_t> count;

  ProfileAccumulator(std::span<const double> grid, double th, double tt)
      : u(grid), total_hat(th), total_tilde(tt),
        phi_hat(grid.size(), std::numeric_limits<double>::infinity()),
        phi_tilde(grid.size(), std::numeric_limits<double>::infinity()), count(grid.size(), 0) {}

  // False once the set is too large for every u.
  bool offer(double vol_hat, double I_hat, double vol_tilde, double I_tilde) {
    bool any = false;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (vol_hat <= u[i] * total_hat) {
        phi_hat[i] = std::min(phi_hat[i], I_hat);
        ++count[i];
        any = true;
      }
      if (vol_tilde > 0.0 && vol_tilde <= u[i] * total_tilde) {
        phi_tilde[i] = std::min(phi_tilde[i], I_tilde);
        any = true;
      }
    }
    return any;
  }
};

// Second eigenvector of the lazy constant-speed walk on the good points,
// by deflated power iteration on the symmetric normalization.
std::vector<double> fiedler_vector(const Graph& g, std::span<const char> good, const std::vector<int>& verts,
                                   WalkEngine& rng, int iterations) {
  const std::size_t n = g.vertex_count();
  std::vector<double> sqrt_deg(n, 0.0), v(n, 0.0), w(n, 0.0), top(n, 0.0);
  double norm_top = 0.0;
  for (int x : verts) {
    sqrt_deg[x] = std::sqrt(static_cast<double>(good_degree(g, good, x)));
    top[x] = sqrt_deg[x];
    norm_top += top[x] * top[x];
  }
  norm_top = std::sqrt(norm_top);
  std::normal_distribution<double> gauss;
  for (int x : verts) v[x] = gauss(rng);
  auto deflate_normalize = [&](std::vector<double>& a) {
    double dot = 0.0, nn = 0.0;
    if (norm_top > 0.0) {
      for (int x : verts) dot += a[x] * top[x] / norm_top;
      for (int x : verts) a[x] -= dot * top[x] / norm_top;
    }
    for (int x : verts) nn += a[x] * a[x];
    nn = std::sqrt(nn);
    if (nn > 0.0)
      for (int x : verts) a[x] /= nn;
  };
  deflate_normalize(v);
  for (int it = 0; it < iterations; ++it) {
    for (int x : verts) {
      double s = 0.0;
      if (sqrt_deg[x] > 0.0)
        for (int y : g.neighbors(x))
          if (good[y]) s += v[y] / (sqrt_deg[x] * sqrt_deg[y]);
      w[x] = 0.5 * (v[x] + s);
    }
    v.swap(w);
    deflate_normalize(v);
  }
  for (int x : verts) v[x] = sqrt_deg[x] > 0.0 ? v[x] / sqrt_deg[x] : 0.0;
  return v;
}

}  // namespace

IsoProfile iso_profile_estimate(const Graph& g, std::span<const char> good, const InducedKernel& kernel,
                                std::span<const double> u_grid, int budget, std::uint64_t seed, double L) {
  require_mask(g, good, kernel, "iso_profile_estimate");
  if (budget < 100) throw ParameterError("iso_profile_estimate: budget must be >= 100");
  if (!(L > 1.0)) throw ParameterError("iso_profile_estimate: L must be > 1");
  if (u_grid.empty()) throw ParameterError("iso_profile_estimate: empty u grid");
  for (std::size_t i = 0; i < u_grid.size(); ++i)
    if (!(u_grid[i] > 0.0 && u_grid[i] <= 0.5) || (i && !(u_grid[i] > u_grid[i - 1])))
      throw ParameterError("iso_profile_estimate: u grid must be increasing within (0, 1/2]");

  std::vector<int> verts;
  double total_hat = 0.0, total_tilde = 0.0;
  for (std::size_t x = 0; x < g.vertex_count(); ++x)
    if (good[x]) {
      if (!kernel.has_row(static_cast<int>(x)))
        throw DependencyError("iso_profile_estimate: kernel row of vertex " + std::to_string(x) + " is missing");
      verts.push_back(static_cast<int>(x));
      total_hat += g.degree(static_cast<int>(x));
      total_tilde += good_degree(g, good, static_cast<int>(x));
    }
  if (verts.empty()) throw ParameterError("iso_profile_estimate: no good vertices");

  ProfileAccumulator acc(u_grid, total_hat, total_tilde);
  GrowingSet set(g, good, kernel);
  IsoProfile prof;
  prof.u_grid.assign(u_grid.begin(), u_grid.end());

  if (verts.size() <= kExhaustiveProfileLimit) {
    prof.exhaustive = true;
    const std::uint32_t subsets = 1u << verts.size();
    for (std::uint32_t mask = 1; mask < subsets; ++mask) {
      set.clear();
      for (std::size_t i = 0; i < verts.size(); ++i)
        if (mask >> i & 1u) set.add(verts[i]);
      acc.offer(set.vol_hat(), set.I_hat(), set.vol_tilde(), set.I_tilde());
    }
  } else {
    WalkEngine rng(derive_seed(seed, "iso"));
    auto sweep = [&](const std::vector<int>& order) {
      set.clear();
      for (int x : order) {
        set.add(x);
        if (!acc.offer(set.vol_hat(), set.I_hat(), set.vol_tilde(), set.I_tilde())) break;
      }
    };

    // Spectral sweeps from both ends.
    std::vector<double> f = fiedler_vector(g, good, verts, rng, 500);
    std::vector<int> order = verts;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return f[a] < f[b]; });
    sweep(order);
    std::reverse(order.begin(), order.end());
    sweep(order);

    // Randomized connected growth along kernel edges.
    std::uniform_int_distribution<std::size_t> pick_start(0, verts.size() - 1);
    std::vector<char> queued(g.vertex_count(), 0);
    for (int b = 0; b < budget; ++b) {
      set.clear();
      std::vector<int> frontier{verts[pick_start(rng)]}, touched = frontier;
      queued[frontier[0]] = 1;
      while (!frontier.empty()) {
        const std::size_t i = std::uniform_int_distribution<std::size_t>(0, frontier.size() - 1)(rng);
        const int x = frontier[i];
        frontier[i] = frontier.back();
        frontier.pop_back();
        set.add(x);
        if (!acc.offer(set.vol_hat(), set.I_hat(), set.vol_tilde(), set.I_tilde())) break;
        for (int y : kernel.row_cols(x))
          if (!queued[y]) {
            queued[y] = 1;
            frontier.push_back(y);
            touched.push_back(y);
          }
      }
      for (int y : touched) queued[y] = 0;
    }

    // Growing l-infinity boxes around random centers.
    const int boxes = std::max(10, budget / 10);
    for (int b = 0; b < boxes; ++b) {
      const Vec c = g.positions[verts[pick_start(rng)]];
      std::vector<std::pair<double, int>> by_dist;
      by_dist.reserve(verts.size());
      for (int x : verts) {
        double d = 0.0;
        for (int k = 0; k < g.dim; ++k) d = std::max(d, std::abs(g.positions[x][k] - c[k]));
        by_dist.emplace_back(d, x);
      }
      std::sort(by_dist.begin(), by_dist.end());
      std::vector<int> ord;
      ord.reserve(by_dist.size());
      for (const auto& [d, x] : by_dist) ord.push_back(x);
      sweep(ord);
    }
  }

  prof.phi_hat = acc.phi_hat;
  prof.phi_tilde = acc.phi_tilde;
  prof.candidate_count = acc.count;

  // Least squares through the origin against the predicted shape.
  const double d = g.dim;
  const double floor_term = 1.0 / std::pow(std::log(L), d / (d - 1.0));
  double sff = 0.0, sfp = 0.0;
  std::vector<double> fs, ps;
  for (std::size_t i = 0; i < u_grid.size(); ++i) {
    if (!std::isfinite(prof.phi_tilde[i])) continue;
    const double shape = std::min(1.0 / (std::pow(u_grid[i], 1.0 / d) * L), floor_term);
    fs.push_back(shape);
    ps.push_back(prof.phi_tilde[i]);
    sff += shape * shape;
    sfp += shape * prof.phi_tilde[i];
  }
  if (sff > 0.0) {
    prof.fitted_c = sfp / sff;
    const double mean = std::accumulate(ps.begin(), ps.end(), 0.0) / static_cast<double>(ps.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      ss_res += std::pow(ps[i] - prof.fitted_c * fs[i], 2);
      ss_tot += std::pow(ps[i] - mean, 2);
    }
    prof.fit_r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  }
  return prof;
}

std::vector<std::vector<double>> uniformized_distributions(const InducedKernel& kernel, int x,
                                                           std::span<const double> t_grid,
                                                           const UniformizationOptions& options) {
  require_row(kernel, x, "uniformized_distributions");
  check_t_grid(t_grid, "uniformized_distributions");
  const long K = checked_horizon(t_grid, options);
  std::vector<long> cut(t_grid.size());
  for (std::size_t i = 0; i < t_grid.size(); ++i) cut[i] = truncation_point(t_grid[i], options.tail);
  std::vector<std::vector<double>> out(t_grid.size(), std::vector<double>(kernel.vertex_count(), 0.0));
  power_sequence(kernel, x, K, [&](long k, const std::vector<double>& v) {
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
      if (k > cut[i]) continue;
      const double w = t_grid[i] == 0.0 ? (k == 0 ? 1.0 : 0.0) : std::exp(stats::log_poisson_pmf(t_grid[i], k));
      if (w == 0.0) continue;
      for (std::size_t y = 0; y < v.size(); ++y) out[i][y] += w * v[y];
    }
  });
  return out;
}

std::vector<HeatKernelPoint> heat_kernel_curve(const InducedKernel& kernel, int x, std::span<const double> t_grid,
                                               const UniformizationOptions& options) {
  require_row(kernel, x, "heat_kernel_curve");
  check_t_grid(t_grid, "heat_kernel_curve");
  const long K = checked_horizon(t_grid, options);
  std::vector<long> cut(t_grid.size());
  for (std::size_t i = 0; i < t_grid.size(); ++i) cut[i] = truncation_point(t_grid[i], options.tail);
  std::vector<HeatKernelPoint> out(t_grid.size());
  for (std::size_t i = 0; i < t_grid.size(); ++i) out[i].t = t_grid[i];
  power_sequence(kernel, x, K, [&](long k, const std::vector<double>& v) {
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
      if (k > cut[i]) continue;
      const double w = t_grid[i] == 0.0 ? (k == 0 ? 1.0 : 0.0) : std::exp(stats::log_poisson_pmf(t_grid[i], k));
      out[i].probability += w * v[x];
    }
  });
  return out;
}

MonteCarloEstimate heat_kernel_monte_carlo(const InducedKernel& kernel, int x, double t, long walkers,
                                           std::uint64_t seed) {
  require_row(kernel, x, "heat_kernel_monte_carlo");
  if (!(t >= 0.0) || walkers < 2) throw ParameterError("heat_kernel_monte_carlo: need t >= 0 and walkers >= 2");
  const KernelSampler sampler(kernel);
  long hits = 0;
  for (long w = 0; w < walkers; ++w) {
    WalkEngine rng(derive_seed(seed, "heat", static_cast<std::uint64_t>(w)));
    const long jumps = t > 0.0 ? std::poisson_distribution<long>(t)(rng) : 0;
    int y = x;
    for (long j = 0; j < jumps; ++j) y = sampler.step(y, rng);
    hits += y == x ? 1 : 0;
  }
  const double p = static_cast<double>(hits) / static_cast<double>(walkers);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(walkers))};
}

std::vector<DistancePoint> expected_distance_curve(const Graph& g, const InducedKernel& kernel, int x,
                                                   std::span<const double> t_grid, long walkers, std::uint64_t seed) {
  require_row(kernel, x, "expected_distance_curve");
  check_t_grid(t_grid, "expected_distance_curve");
  if (walkers < 1000) throw ParameterError("expected_distance_curve: need at least 1000 walkers");
  if (kernel.vertex_count() != g.vertex_count())
    throw ConsistencyError("expected_distance_curve: kernel does not match the graph");
  const KernelSampler sampler(kernel);
  const std::size_t T = t_grid.size();
  std::vector<std::vector<double>> ratio(T, std::vector<double>(walkers)), sq(T, std::vector<double>(walkers));
  for (long w = 0; w < walkers; ++w) {
    WalkEngine rng(derive_seed(seed, "distance", static_cast<std::uint64_t>(w)));
    WalkEngine clock(derive_seed(derive_seed(seed, "distance", static_cast<std::uint64_t>(w)), "clock"));
    std::exponential_distribution<double> gap(1.0);
    int y = x;
    double next_jump = gap(clock);
    for (std::size_t i = 0; i < T; ++i) {
      while (next_jump <= t_grid[i]) {
        y = sampler.step(y, rng);
        next_jump += gap(clock);
      }
      Vec diff{};
      for (int k = 0; k < g.dim; ++k) diff[k] = g.positions[y][k] - g.positions[x][k];
      const double d = norm_d(diff, g.dim);
      ratio[i][w] = t_grid[i] > 0.0 ? d / std::sqrt(t_grid[i]) : 0.0;
      sq[i][w] = d * d;
    }
  }
  std::vector<DistancePoint> out(T);
  for (std::size_t i = 0; i < T; ++i) {
    out[i].t = t_grid[i];
    out[i].ratio = stats::mean(ratio[i]);
    out[i].ratio_se = stats::batch_standard_error(ratio[i], 20);
    out[i].second_moment = stats::mean(sq[i]);
    out[i].second_moment_se = stats::batch_standard_error(sq[i], 20);
  }
  return out;
}

DiffusionReport diffusion_report(std::span<const PalmEnvironment> envs, const DiffusionOptions& opt) {
  if (envs.size() < 100) throw ParameterError("diffusion_report: need at least 100 Palm environments");
  if (opt.walkers < 1000) throw ParameterError("diffusion_report: need at least 1000 walkers");
  if (opt.dtrw_steps.size() < 2 || opt.vsrw_times.size() < 2)
    throw ParameterError("diffusion_report: horizon grids need at least two entries for a slope");
  for (std::size_t i = 0; i < opt.dtrw_steps.size(); ++i)
    if (opt.dtrw_steps[i] < 1 || (i && opt.dtrw_steps[i] <= opt.dtrw_steps[i - 1]))
      throw ParameterError("diffusion_report: dtrw steps must be positive and increasing");
  for (std::size_t i = 0; i < opt.vsrw_times.size(); ++i)
    if (!(opt.vsrw_times[i] > 0.0) || (i && opt.vsrw_times[i] <= opt.vsrw_times[i - 1]))
      throw ParameterError("diffusion_report: vsrw times must be positive and increasing");

  const int dim = envs.front().points.dim;
  DiffusionReport rep;
  double deg_sum = 0.0, deg_count = 0.0, origin_sum = 0.0;
  std::vector<std::size_t> usable;
  for (std::size_t e = 0; e < envs.size(); ++e) {
    const Graph& g = envs[e].graph.graph;
    if (envs[e].graph.source_digest != envs[e].points.digest())
      throw ConsistencyError("diffusion_report: graph was built from a different point set");
    if (norm_d(envs[e].points.points.at(0), dim) != 0.0)
      throw ParameterError("diffusion_report: environment origin must be vertex 0 at the coordinate origin");
    for (std::size_t v = 0; v < g.vertex_count(); ++v)
      if (!g.tainted[v]) {
        deg_sum += g.degree(static_cast<int>(v));
        deg_count += 1.0;
      }
    if (g.degree(0) == 0) {
      ++rep.skipped;
      continue;
    }
    origin_sum += g.degree(0);
    usable.push_back(e);
  }
  if (usable.empty()) throw WalkError("diffusion_report: every environment has an isolated origin");
  rep.mean_palm_degree = deg_sum / deg_count;
  rep.mean_origin_degree = origin_sum / static_cast<double>(usable.size());

  const std::size_t nd = opt.dtrw_steps.size(), nv = opt.vsrw_times.size();
  std::vector<double> msd_d(nd, 0.0), msd_v(nv, 0.0);
  long kept_d = 0, kept_v = 0;
  std::vector<Vec> final_disp;
  for (long w = 0; w < opt.walkers; ++w) {
    const std::size_t e = usable[static_cast<std::size_t>(w) % usable.size()];
    const Graph& g = envs[e].graph.graph;
    ++rep.walks;

    // Discrete-time walk.
    {
      WalkEngine rng(derive_seed(opt.seed, "dtrw", static_cast<std::uint64_t>(w)));
      std::vector<double> sq(nd);
      int x = 0;
      bool escaped = false;
      std::size_t next = 0;
      for (long n = 1; n <= opt.dtrw_steps.back() && !escaped; ++n) {
        x = dtrw_step(g, x, rng);
        escaped = g.tainted[x];
        if (n == opt.dtrw_steps[next]) sq[next++] = std::pow(norm_d(g.positions[x], dim), 2);
      }
      if (escaped) {
        ++rep.escaped;
      } else {
        ++kept_d;
        for (std::size_t i = 0; i < nd; ++i) msd_d[i] += sq[i];
        final_disp.push_back(g.positions[x]);
      }
    }

    // Variable-speed walk with the walker module's seed policy.
    {
      const std::uint64_t s = derive_seed(opt.seed, "vsrw", static_cast<std::uint64_t>(w));
      WalkEngine rng(s);
      WalkEngine clock(derive_seed(s, "clock"));
      std::vector<double> sq(nv);
      int x = 0;
      double t = 0.0;
      bool escaped = false;
      std::size_t next = 0;
      while (next < nv && !escaped) {
        t += std::exponential_distribution<double>(g.degree(x))(clock);
        while (next < nv && opt.vsrw_times[next] < t) sq[next++] = std::pow(norm_d(g.positions[x], dim), 2);
        if (next == nv) break;
        x = dtrw_step(g, x, rng);
        escaped = g.tainted[x];
      }
      if (escaped) {
        ++rep.escaped;
      } else {
        ++kept_v;
        for (std::size_t i = 0; i < nv; ++i) msd_v[i] += sq[i];
      }
    }
  }
  if (kept_d < 2 || kept_v < 2) throw WalkError("diffusion_report: too many walks reached the window boundary");
  for (double& m : msd_d) m /= static_cast<double>(kept_d);
  for (double& m : msd_v) m /= static_cast<double>(kept_v);
  rep.msd_dtrw = msd_d;
  rep.msd_vsrw = msd_v;

  std::vector<double> xs_d(opt.dtrw_steps.begin(), opt.dtrw_steps.end());
  rep.dtrw_fit = stats::fit_line(xs_d, msd_d);
  rep.vsrw_fit = stats::fit_line(opt.vsrw_times, msd_v);
  rep.sigma2_dtrw = rep.dtrw_fit.slope / dim;
  rep.sigma2_vsrw = rep.vsrw_fit.slope / dim;
  rep.coefficient_ratio = rep.sigma2_dtrw != 0.0 ? rep.sigma2_vsrw / rep.sigma2_dtrw : 0.0;

  // Rescaled displacement at the largest n.
  const double scale = 1.0 / std::sqrt(static_cast<double>(opt.dtrw_steps.back()));
  const double m = static_cast<double>(final_disp.size());
  Vec mean{};
  for (const Vec& p : final_disp)
    for (int k = 0; k < dim; ++k) mean[k] += p[k] * scale / m;
  rep.covariance.assign(dim, std::vector<double>(dim, 0.0));
  for (const Vec& p : final_disp)
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) rep.covariance[a][b] += (p[a] * scale - mean[a]) * (p[b] * scale - mean[b]) / (m - 1);
  double diag = 0.0, off = 0.0;
  for (int a = 0; a < dim; ++a) {
    diag += rep.covariance[a][a] / dim;
    for (int b = 0; b < dim; ++b)
      if (a != b) off = std::max(off, std::abs(rep.covariance[a][b]));
  }
  rep.isotropy = diag > 0.0 ? off / diag : 0.0;
  std::vector<double> first;
  first.reserve(final_disp.size());
  for (const Vec& p : final_disp) first.push_back(p[0] * scale);
  rep.ks_statistic = stats::ks_statistic_normal(first, mean[0], std::sqrt(rep.covariance[0][0]));
  rep.ks_critical_1pct = stats::ks_critical_value(first.size(), 0.01);
  return rep;
}

PalmObservation observe_palm(const PointSet& ps, const DelaunayGraph& g, double radius) {
  if (g.source_digest != ps.digest()) throw ConsistencyError("observe_palm: graph was built from a different point set");
  if (ps.points.empty() || norm_d(ps.points[0], ps.dim) != 0.0)
    throw ParameterError("observe_palm: vertex 0 must be the origin");
  if (!(radius > 0.0)) throw ParameterError("observe_palm: radius must be > 0");
  PalmObservation o;
  o.dim = ps.dim;
  o.radius = radius;
  o.degree = g.graph.degree(0);
  for (int y : g.graph.neighbors(0)) {
    o.neighbors.push_back(ps.points[y]);
    o.max_neighbor_distance = std::max(o.max_neighbor_distance, norm_d(ps.points[y], ps.dim));
  }
  for (std::size_t v = 1; v < ps.size(); ++v)
    if (norm_d(ps.points[v], ps.dim) <= radius) o.points.push_back(ps.points[v]);
  return o;
}

bool in_lens(const Vec& p, int dim, unsigned mask, double r) {
  for (int i = 0; i < dim; ++i) {
    Vec c{};
    c[i] = (mask >> i & 1u) ? r : -r;
    double s = 0.0;
    for (int k = 0; k < dim; ++k) s += (p[k] - c[k]) * (p[k] - c[k]);
    if (!(s < r * r)) return false;
  }
  return true;
}

bool in_gamma(const Vec& p, int dim, double r) {
  for (int i = 0; i < dim; ++i)
    for (double sign : {-1.0, 1.0}) {
      double s = 0.0;
      for (int k = 0; k < dim; ++k) {
        const double c = k == i ? sign * r : 0.0;
        s += (p[k] - c) * (p[k] - c);
      }
      if (s < r * r) return true;
    }
  return false;
}

namespace {

stats::LinearFit fit_log_survival(const std::vector<double>& x, const std::vector<double>& s) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (s[i] > 0.0) {
      xs.push_back(x[i]);
      ys.push_back(std::log(s[i]));
    }
  if (xs.size() < 2) return {};
  return stats::fit_line(xs, ys);
}

double second_half_drift(const std::vector<double>& running) {
  if (running.empty() || running.back() == 0.0) return 0.0;
  const auto first = running.begin() + static_cast<std::ptrdiff_t>(running.size() / 2);
  const auto [lo, hi] = std::minmax_element(first, running.end());
  return (*hi - *lo) / std::abs(running.back());
}

}  // namespace

TailMomentReport tail_moment_report(std::span<const PalmObservation> ensemble, std::span<const double> rho_grid,
                                    double beta, int n_max) {
  if (ensemble.size() < 1000) throw ParameterError("tail_moment_report: need at least 1000 Palm observations");
  if (!(beta > 1.0)) throw ParameterError("tail_moment_report: beta must be > 1");
  if (n_max < 0) throw ParameterError("tail_moment_report: n_max must be >= 0");
  TailMomentReport rep;
  rep.beta = beta;
  rep.samples = ensemble.size();
  rep.rho_grid.assign(rho_grid.begin(), rho_grid.end());
  const double N = static_cast<double>(ensemble.size());

  for (double rho : rho_grid) {
    double c = 0.0;
    for (const PalmObservation& o : ensemble) c += o.max_neighbor_distance > rho ? 1.0 : 0.0;
    rep.distance_survival.push_back(c / N);
  }
  rep.distance_fit = fit_log_survival(rep.rho_grid, rep.distance_survival);

  int dmin = std::numeric_limits<int>::max(), dmax = 0;
  for (const PalmObservation& o : ensemble) {
    dmin = std::min(dmin, o.degree);
    dmax = std::max(dmax, o.degree);
  }
  std::vector<double> kx;
  for (int k = dmin; k <= dmax; ++k) {
    double c = 0.0;
    for (const PalmObservation& o : ensemble) c += o.degree > k ? 1.0 : 0.0;
    rep.degree_grid.push_back(k);
    rep.degree_survival.push_back(c / N);
    kx.push_back(k);
  }
  rep.degree_fit = fit_log_survival(kx, rep.degree_survival);

  double s2 = 0.0, s4 = 0.0;
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    s2 += std::pow(ensemble[i].degree, 2);
    s4 += std::pow(ensemble[i].max_neighbor_distance, 4);
    rep.running_degree_m2.push_back(s2 / static_cast<double>(i + 1));
    rep.running_distance_m4.push_back(s4 / static_cast<double>(i + 1));
  }
  rep.degree_m2_drift = second_half_drift(rep.running_degree_m2);
  rep.distance_m4_drift = second_half_drift(rep.running_distance_m4);

  for (int n = 0; n <= n_max; ++n) {
    const double r = std::pow(beta, n);
    LensLevel level{n, 0, 0};
    for (const PalmObservation& o : ensemble) {
      const unsigned lenses = 1u << o.dim;
      bool all = true;
      for (unsigned mask = 0; mask < lenses && all; ++mask)
        all = std::any_of(o.points.begin(), o.points.end(), [&](const Vec& p) { return in_lens(p, o.dim, mask, r); });
      if (!all) continue;
      ++level.applicable;
      const bool inside =
          std::all_of(o.neighbors.begin(), o.neighbors.end(), [&](const Vec& p) { return in_gamma(p, o.dim, r); });
      if (!inside) ++level.violations;
    }
    rep.lens_violations += level.violations;
    rep.lens.push_back(level);
  }
  return rep;
}

}  // namespace delwalk
