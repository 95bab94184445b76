#include "delwalk/pointproc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "delwalk/stats.hpp"

namespace delwalk {

namespace {

using Engine = std::mt19937_64;

Vec uniform_in(const Box& w, Engine& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec p{};
  for (int i = 0; i < w.dim; ++i) p[i] = w.lo[i] + u(rng) * w.side(i);
  return p;
}

Vec uniform_in_ball(int dim, double radius, Engine& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec dir{};
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (int i = 0; i < dim; ++i) {
      dir[i] = g(rng);
      n2 += dir[i] * dir[i];
    }
  } while (n2 == 0.0);
  const double r = radius * std::pow(u(rng), 1.0 / dim) / std::sqrt(n2);
  for (int i = 0; i < dim; ++i) dir[i] *= r;
  return dir;
}

void require_window(const Box& window) {
  if (!window.nondegenerate()) throw ParameterError("window must be a nondegenerate box with 2 <= dim <= 3");
}

// Seeded perturbation of magnitude kJitterRelative * window side, reflected
// back inside the window. `skip` (if >= 0) is left untouched.
void apply_jitter(PointSet& ps, std::uint64_t seed, long skip = -1) {
  Engine rng(derive_seed(seed, "jitter"));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double amp = kJitterRelative * ps.window.max_side();
  for (std::size_t k = 0; k < ps.points.size(); ++k) {
    if (static_cast<long>(k) == skip) {
      for (int i = 0; i < ps.dim; ++i) (void)u(rng);
      continue;
    }
    Vec& p = ps.points[k];
    for (int i = 0; i < ps.dim; ++i) {
      double v = p[i] + amp * u(rng);
      if (v < ps.window.lo[i]) v = 2.0 * ps.window.lo[i] - v;
      if (v > ps.window.hi[i]) v = 2.0 * ps.window.hi[i] - v;
      p[i] = std::clamp(v, ps.window.lo[i], ps.window.hi[i]);
    }
  }
}

std::vector<Vec> poisson_points(double intensity, const Box& w, Engine& rng) {
  std::poisson_distribution<long> count(intensity * w.volume());
  const long n = count(rng);
  std::vector<Vec> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (long k = 0; k < n; ++k) pts.push_back(uniform_in(w, rng));
  return pts;
}

// Uniform bucket grid for fixed-radius neighbor queries.
class BucketGrid {
 public:
  BucketGrid(const std::vector<Vec>& pts, const Box& w, double cell) : pts_(pts), w_(w), cell_(cell) {
    for (int i = 0; i < w.dim; ++i)
      n_[i] = std::max(1, static_cast<int>(std::ceil(w.side(i) / cell)));
    for (std::size_t k = 0; k < pts.size(); ++k) buckets_[key(coords(pts[k]))].push_back(static_cast<int>(k));
  }

  template <typename F>
  void for_each_near(const Vec& p, F&& f) const {
    const auto c = coords(p);
    std::array<int, kMaxDim> lo{}, hi{};
    for (int i = 0; i < kMaxDim; ++i) {
      lo[i] = i < w_.dim ? std::max(0, c[i] - 1) : 0;
      hi[i] = i < w_.dim ? std::min(n_[i] - 1, c[i] + 1) : 0;
    }
    std::array<int, kMaxDim> q{};
    for (q[0] = lo[0]; q[0] <= hi[0]; ++q[0])
      for (q[1] = lo[1]; q[1] <= hi[1]; ++q[1])
        for (q[2] = lo[2]; q[2] <= hi[2]; ++q[2]) {
          auto it = buckets_.find(key(q));
          if (it == buckets_.end()) continue;
          for (int idx : it->second) f(idx);
        }
  }

 private:
  std::array<int, kMaxDim> coords(const Vec& p) const {
    std::array<int, kMaxDim> c{};
    for (int i = 0; i < w_.dim; ++i)
      c[i] = std::clamp(static_cast<int>(std::floor((p[i] - w_.lo[i]) / cell_)), 0, n_[i] - 1);
    return c;
  }
  std::int64_t key(const std::array<int, kMaxDim>& c) const {
    return (static_cast<std::int64_t>(c[0]) * n_[1] + c[1]) * n_[2] + c[2];
  }

  const std::vector<Vec>& pts_;
  Box w_;
  double cell_;
  std::array<int, kMaxDim> n_{1, 1, 1};
  std::unordered_map<std::int64_t, std::vector<int>> buckets_;
};

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

}  // namespace

std::string to_string(ProcessKind kind) {
  switch (kind) {
    case ProcessKind::poisson:
      return "poisson";
    case ProcessKind::matern_hardcore_I:
      return "matern_hardcore_I";
    case ProcessKind::matern_hardcore_II:
      return "matern_hardcore_II";
    case ProcessKind::matern_cluster:
      return "matern_cluster";
  }
  return "unknown";
}

ProcessKind process_kind_from_string(const std::string& name) {
  if (name == "poisson") return ProcessKind::poisson;
  if (name == "matern_hardcore_I") return ProcessKind::matern_hardcore_I;
  if (name == "matern_hardcore_II") return ProcessKind::matern_hardcore_II;
  if (name == "matern_cluster") return ProcessKind::matern_cluster;
  throw ParameterError("unknown process kind '" + name + "'");
}

ProcessSpec ProcessSpec::poisson(double intensity) {
  ProcessSpec s;
  s.kind = ProcessKind::poisson;
  s.intensity = intensity;
  return s;
}

ProcessSpec ProcessSpec::hardcore(ProcessKind kind, double intensity, double radius) {
  ProcessSpec s;
  s.kind = kind;
  s.intensity = intensity;
  s.hardcore_radius = radius;
  return s;
}

ProcessSpec ProcessSpec::cluster(double parent_intensity, double mean_offspring, double radius) {
  ProcessSpec s;
  s.kind = ProcessKind::matern_cluster;
  s.intensity = parent_intensity * mean_offspring;
  s.parent_intensity = parent_intensity;
  s.mean_offspring = mean_offspring;
  s.cluster_radius = radius;
  return s;
}

void ProcessSpec::validate() const {
  const bool hardcore = kind == ProcessKind::matern_hardcore_I || kind == ProcessKind::matern_hardcore_II;
  const bool cluster = kind == ProcessKind::matern_cluster;
  if (!(intensity >= 0.0) || !std::isfinite(intensity)) throw ParameterError("intensity must be finite and >= 0");
  if (hardcore != hardcore_radius.has_value())
    throw ParameterError("hardcore_radius must be given exactly for hardcore kinds");
  if (hardcore && !(*hardcore_radius >= 0.0)) throw ParameterError("hardcore_radius must be >= 0");
  const bool any_cluster_field = parent_intensity || mean_offspring || cluster_radius;
  const bool all_cluster_fields = parent_intensity && mean_offspring && cluster_radius;
  if (cluster ? !all_cluster_fields : any_cluster_field)
    throw ParameterError("parent_intensity, mean_offspring, cluster_radius must be given exactly for matern_cluster");
  if (cluster && (!(*parent_intensity >= 0.0) || !(*mean_offspring >= 0.0) || !(*cluster_radius >= 0.0)))
    throw ParameterError("cluster parameters must be >= 0");
}

double ProcessSpec::nominal_intensity() const {
  if (kind == ProcessKind::matern_cluster) return parent_intensity.value_or(0.0) * mean_offspring.value_or(0.0);
  return intensity;
}

std::uint64_t PointSet::digest() const {
  std::uint64_t h = fnv1a("pointset");
  auto mix = [&h](const void* data, std::size_t n) {
    h = fnv1a(std::string_view(static_cast<const char*>(data), n), h);
  };
  mix(&dim, sizeof dim);
  for (int i = 0; i < dim; ++i) {
    mix(&window.lo[i], sizeof(double));
    mix(&window.hi[i], sizeof(double));
  }
  for (const Vec& p : points)
    for (int i = 0; i < dim; ++i) mix(&p[i], sizeof(double));
  return h;
}

PointSet sample_poisson(double intensity, const Box& window, std::uint64_t seed) {
  if (!(intensity > 0.0) || !std::isfinite(intensity)) throw ParameterError("sample_poisson: intensity must be > 0");
  require_window(window);
  Engine rng(seed);
  PointSet ps;
  ps.dim = window.dim;
  ps.window = window;
  ps.points = poisson_points(intensity, window, rng);
  ps.provenance = {"poisson", {{"intensity", intensity}}, seed};
  apply_jitter(ps, seed);
  return ps;
}

PointSet sample_matern_hardcore(const ProcessSpec& spec, const Box& window, std::uint64_t seed) {
  spec.validate();
  if (spec.kind != ProcessKind::matern_hardcore_I && spec.kind != ProcessKind::matern_hardcore_II)
    throw ParameterError("sample_matern_hardcore: kind must be a hardcore kind");
  if (!(spec.intensity > 0.0)) throw ParameterError("sample_matern_hardcore: intensity must be > 0");
  require_window(window);
  const double r = *spec.hardcore_radius;
  const Box padded = window.padded(r);
  Engine rng(seed);
  const std::vector<Vec> base = poisson_points(spec.intensity, padded, rng);
  std::vector<double> marks(base.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& m : marks) m = u(rng);

  std::vector<char> keep(base.size(), 1);
  if (r > 0.0 && !base.empty()) {
    const int dim = window.dim;
    const double r2 = r * r;
    BucketGrid grid(base, padded, r);
    for (std::size_t k = 0; k < base.size(); ++k) {
      grid.for_each_near(base[k], [&](int j) {
        if (static_cast<std::size_t>(j) == k || dist2(base[k], base[j], dim) >= r2) return;
        if (spec.kind == ProcessKind::matern_hardcore_I) {
          keep[k] = 0;
        } else {
          // Type II: a point dies if a close neighbor carries an earlier mark.
          const bool earlier = marks[j] < marks[k] || (marks[j] == marks[k] && static_cast<std::size_t>(j) < k);
          if (earlier) keep[k] = 0;
        }
      });
    }
  }

  PointSet ps;
  ps.dim = window.dim;
  ps.window = window;
  for (std::size_t k = 0; k < base.size(); ++k)
    if (keep[k] && window.contains(base[k])) ps.points.push_back(base[k]);
  ps.empty_warning = ps.points.empty() && !base.empty();
  ps.provenance = {to_string(spec.kind), {{"intensity", spec.intensity}, {"hardcore_radius", r}}, seed};
  // Jitter magnitude (1e-9 of the side) is far below any meaningful radius;
  // the hardcore distance is checked on the unjittered configuration.
  apply_jitter(ps, seed);
  return ps;
}

ClusterSample sample_matern_cluster_detailed(const ProcessSpec& spec, const Box& window, std::uint64_t seed) {
  spec.validate();
  if (spec.kind != ProcessKind::matern_cluster) throw ParameterError("sample_matern_cluster: kind must be matern_cluster");
  require_window(window);
  const double lp = *spec.parent_intensity, mo = *spec.mean_offspring, rc = *spec.cluster_radius;
  Engine rng(seed);
  ClusterSample out;
  PointSet& ps = out.points;
  ps.dim = window.dim;
  ps.window = window;
  ps.provenance = {"matern_cluster",
                   {{"parent_intensity", lp}, {"mean_offspring", mo}, {"cluster_radius", rc}},
                   seed};
  if (lp > 0.0) out.parents = poisson_points(lp, window.padded(rc), rng);
  std::poisson_distribution<long> offspring(mo > 0.0 ? mo : 1.0);
  for (const Vec& parent : out.parents) {
    const long n = mo > 0.0 ? offspring(rng) : 0;
    for (long k = 0; k < n; ++k) {
      Vec c = uniform_in_ball(window.dim, rc, rng);
      for (int i = 0; i < window.dim; ++i) c[i] += parent[i];
      if (window.contains(c)) ps.points.push_back(c);
    }
  }
  apply_jitter(ps, seed);
  return out;
}

PointSet sample_matern_cluster(const ProcessSpec& spec, const Box& window, std::uint64_t seed) {
  return sample_matern_cluster_detailed(spec, window, seed).points;
}

PointSet sample_process(const ProcessSpec& spec, const Box& window, std::uint64_t seed) {
  spec.validate();
  switch (spec.kind) {
    case ProcessKind::poisson:
      return sample_poisson(spec.intensity, window, seed);
    case ProcessKind::matern_hardcore_I:
    case ProcessKind::matern_hardcore_II:
      return sample_matern_hardcore(spec, window, seed);
    case ProcessKind::matern_cluster:
      return sample_matern_cluster(spec, window, seed);
  }
  throw ParameterError("unhandled process kind");
}

PointSet palm_sample(const ProcessSpec& spec, const Box& window, std::uint64_t seed, const PalmOptions& options) {
  spec.validate();
  require_window(window);
  for (int i = 0; i < window.dim; ++i)
    if (std::abs(window.lo[i] + window.hi[i]) > 1e-12 * window.max_side())
      throw ParameterError("palm_sample: window must be centered at the origin");

  auto with_origin_first = [&](PointSet ps, std::size_t origin_idx) {
    std::swap(ps.points[0], ps.points[origin_idx]);
    ps.points[0] = Vec{};
    ps.palm_conditioned = true;
    return ps;
  };

  if (spec.kind == ProcessKind::poisson) {
    // Slivnyak: the Palm version of a Poisson process is the process plus the origin.
    PointSet ps = sample_poisson(spec.intensity, window, seed);
    ps.points.insert(ps.points.begin(), Vec{});
    ps.palm_conditioned = true;
    return ps;
  }

  const double intensity = spec.nominal_intensity();
  if (!(intensity > 0.0)) throw ParameterError("palm_sample: process has zero intensity");
  const double radius = options.rejection_radius.value_or(0.1 / std::sqrt(intensity));
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    PointSet ps = sample_process(spec, window, derive_seed(seed, "palm", static_cast<std::uint64_t>(attempt)));
    std::size_t best = ps.points.size();
    double best_d2 = radius * radius;
    for (std::size_t k = 0; k < ps.points.size(); ++k) {
      const double d2 = dot(ps.points[k], ps.points[k], ps.dim);
      if (d2 <= best_d2) {
        best_d2 = d2;
        best = k;
      }
    }
    if (best == ps.points.size()) continue;
    const Vec shift = ps.points[best];
    PointSet out = ps;
    out.points.clear();
    std::size_t origin_idx = 0;
    for (std::size_t k = 0; k < ps.points.size(); ++k) {
      Vec q = ps.points[k];
      for (int i = 0; i < ps.dim; ++i) q[i] -= shift[i];
      if (k == best) origin_idx = out.points.size();
      if (k == best || window.contains(q)) out.points.push_back(q);
    }
    out.provenance.parameters.emplace_back("palm_rejection_radius", radius);
    out.provenance.parameters.emplace_back("palm_attempts", attempt + 1);
    out.provenance.seed = seed;
    return with_origin_first(std::move(out), origin_idx);
  }
  throw SamplingFailure("palm_sample: rejection budget exhausted after " + std::to_string(options.max_attempts) +
                            " attempts",
                        options.max_attempts);
}

std::vector<int> sample_poisson_counts(double intensity, double cell_volume, std::size_t cells, std::uint64_t seed) {
  if (!(intensity > 0.0) || !(cell_volume > 0.0)) throw ParameterError("sample_poisson_counts: positive rates required");
  Engine rng(seed);
  std::poisson_distribution<int> count(intensity * cell_volume);
  std::vector<int> out(cells);
  for (int& c : out) c = count(rng);
  return out;
}

AssumptionReport assumption_report(const ProcessSpec& spec, const std::vector<double>& L_grid,
                                   const std::vector<double>& rho_grid, int samples, std::uint64_t seed,
                                   std::optional<double> c2, int dim) {
  spec.validate();
  if (L_grid.empty() || rho_grid.empty()) throw ParameterError("assumption_report: grids must be nonempty");
  if (!std::is_sorted(L_grid.begin(), L_grid.end()) ||
      std::adjacent_find(L_grid.begin(), L_grid.end()) != L_grid.end() || !(L_grid.front() > 0.0))
    throw ParameterError("assumption_report: L_grid must be positive and strictly increasing");
  if (!std::is_sorted(rho_grid.begin(), rho_grid.end()) ||
      std::adjacent_find(rho_grid.begin(), rho_grid.end()) != rho_grid.end())
    throw ParameterError("assumption_report: rho_grid must be strictly increasing");
  if (samples < 100) throw ParameterError("assumption_report: samples must be >= 100");

  // Probabilities backed by fewer events than this are flagged.
  constexpr int kMinEvents = 5;
  if (dim < 2 || dim > kMaxDim) throw ParameterError("assumption_report: dim must be 2 or 3");
  AssumptionReport rep;
  rep.sample_count = samples;
  rep.c2 = c2.value_or(2.0 * spec.nominal_intensity());

  for (std::size_t li = 0; li < L_grid.size(); ++li) {
    const double L = L_grid[li];
    Box box;
    box.dim = dim;
    for (int i = 0; i < dim; ++i) box.hi[i] = L;
    const double threshold = rep.c2 * std::pow(L, dim);
    int voids = 0, tails = 0, palm_voids = 0;
    for (int s = 0; s < samples; ++s) {
      const PointSet ps = sample_process(spec, box, derive_seed(seed, "stationary", li * 1000003ULL + s));
      if (ps.size() == 0) ++voids;
      if (static_cast<double>(ps.size()) >= threshold) ++tails;

      const PointSet palm =
          palm_sample(spec, Box::centered(dim, 1.5 * L), derive_seed(seed, "palm_void", li * 1000003ULL + s));
      Box cube;
      cube.dim = dim;
      for (int i = 0; i < dim; ++i) {
        cube.lo[i] = i == 0 ? L / 2.0 : -L / 2.0;
        cube.hi[i] = i == 0 ? 1.5 * L : L / 2.0;
      }
      bool empty = true;
      for (const Vec& p : palm.points)
        if (cube.contains(p)) {
          empty = false;
          break;
        }
      if (empty) ++palm_voids;
    }
    const double n = samples;
    rep.void_curve.push_back({L, voids / n, voids < kMinEvents});
    rep.tail_curve.push_back({L, tails / n, tails < kMinEvents && tails > 0});
    rep.palm_void_curve.push_back({L, palm_voids / n, palm_voids < kMinEvents});
  }

  rep.exp_moment_box = L_grid.front();
  std::vector<double> counts;
  counts.reserve(samples);
  for (int s = 0; s < samples; ++s) {
    const PointSet palm =
        palm_sample(spec, Box::centered(dim, rep.exp_moment_box), derive_seed(seed, "palm_moment", s));
    counts.push_back(static_cast<double>(palm.size()));
  }
  for (double rho : rho_grid) {
    double acc = 0.0;
    for (double c : counts) acc += std::exp(rho * c);
    rep.exp_moment_curve.push_back({rho, acc / samples, false});
  }

  std::vector<double> xs, ys;
  for (const CurvePoint& p : rep.void_curve)
    if (!p.flagged && p.y > 0.0) {
      xs.push_back(std::pow(p.x, dim));
      ys.push_back(std::log(p.y));
    }
  if (xs.size() >= 2) {
    rep.void_log_slope = stats::fit_line(xs, ys).slope;
    rep.void_slope_valid = true;
  }
  return rep;
}

void write_pointset(std::ostream& os, const PointSet& ps) {
  os << "# pointset dim=" << ps.dim << " n=" << ps.points.size() << " window=";
  for (int i = 0; i < ps.dim; ++i) os << (i ? "," : "") << fmt_double(ps.window.lo[i]);
  os << ":";
  for (int i = 0; i < ps.dim; ++i) os << (i ? "," : "") << fmt_double(ps.window.hi[i]);
  os << " process=" << ps.provenance.process << " seed=" << ps.provenance.seed
     << " palm=" << (ps.palm_conditioned ? 1 : 0) << " warning=" << (ps.empty_warning ? 1 : 0);
  for (const auto& [k, v] : ps.provenance.parameters) os << " param." << k << "=" << fmt_double(v);
  os << "\n";
  for (const Vec& p : ps.points) {
    for (int i = 0; i < ps.dim; ++i) os << (i ? " " : "") << fmt_double(p[i]);
    os << "\n";
  }
}

PointSet read_pointset(std::istream& is) {
  std::string header;
  if (!std::getline(is, header) || header.rfind("# pointset", 0) != 0)
    throw ParameterError("read_pointset: missing '# pointset' header");
  PointSet ps;
  std::istringstream hs(header.substr(10));
  std::string tok;
  std::size_t n = 0;
  auto parse_list = [](const std::string& s) {
    std::vector<double> v;
    std::istringstream ls(s);
    std::string item;
    while (std::getline(ls, item, ',')) v.push_back(std::stod(item));
    return v;
  };
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ParameterError("read_pointset: malformed header token '" + tok + "'");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "dim") {
      ps.dim = std::stoi(val);
    } else if (key == "n") {
      n = std::stoul(val);
    } else if (key == "window") {
      const auto colon = val.find(':');
      if (colon == std::string::npos) throw ParameterError("read_pointset: malformed window");
      const auto lo = parse_list(val.substr(0, colon)), hi = parse_list(val.substr(colon + 1));
      if (lo.size() != hi.size() || lo.empty() || lo.size() > kMaxDim)
        throw ParameterError("read_pointset: malformed window");
      ps.window.dim = static_cast<int>(lo.size());
      for (std::size_t i = 0; i < lo.size(); ++i) {
        ps.window.lo[i] = lo[i];
        ps.window.hi[i] = hi[i];
      }
    } else if (key == "process") {
      ps.provenance.process = val;
    } else if (key == "seed") {
      ps.provenance.seed = std::stoull(val);
    } else if (key == "palm") {
      ps.palm_conditioned = val == "1";
    } else if (key == "warning") {
      ps.empty_warning = val == "1";
    } else if (key.rfind("param.", 0) == 0) {
      ps.provenance.parameters.emplace_back(key.substr(6), std::stod(val));
    } else {
      throw ParameterError("read_pointset: unknown header key '" + key + "'");
    }
  }
  if (ps.dim != ps.window.dim) throw ParameterError("read_pointset: dim does not match window");
  ps.points.reserve(n);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Vec p{};
    for (int i = 0; i < ps.dim; ++i) {
      std::string t;
      if (!(ls >> t)) throw ParameterError("read_pointset: short coordinate line");
      p[i] = std::strtod(t.c_str(), nullptr);
    }
    ps.points.push_back(p);
  }
  if (ps.points.size() != n) throw ParameterError("read_pointset: point count does not match header");
  return ps;
}

}  // namespace delwalk
