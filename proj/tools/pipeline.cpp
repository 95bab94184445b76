#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include <openssl/evp.h>

#include "delwalk/analysis.hpp"
#include "delwalk/corrector.hpp"
#include "delwalk/geometry.hpp"
#include "delwalk/partition.hpp"
#include "delwalk/stats.hpp"

namespace fs = std::filesystem;

namespace delwalk::cli {

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw ResourceError("sha256 digest failed", 0.0);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw LookupError("cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Shortest round-trip representation, so CSVs are byte-stable.
std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Summary = std::vector<std::pair<std::string, std::string>>;

}  // namespace

std::string sha256_file(const fs::path& p) { return sha256_hex(read_file(p)); }

const StageRecord* RunManifest::stage(const std::string& name) const {
  for (const auto& s : stages)
    if (s.name == name) return &s;
  return nullptr;
}

bool RunManifest::ok() const {
  return std::none_of(stages.begin(), stages.end(), [](const StageRecord& s) { return s.status == "failed"; });
}

nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json j;
  j["artifact_version"] = m.artifact_version;
  j["config_digest"] = m.config_digest;
  j["config"] = m.config_text;
  j["config_path"] = m.config_path;
  j["seed"] = m.seed;
  j["threads"] = m.threads;
  j["stages"] = nlohmann::json::array();
  for (const auto& s : m.stages) {
    nlohmann::json js{{"name", s.name}, {"status", s.status}, {"seconds", s.seconds}, {"error", s.error}};
    js["files"] = nlohmann::json::array();
    for (const auto& f : s.files) js["files"].push_back({{"path", f.path}, {"schema", f.schema}, {"sha256", f.sha256}});
    j["stages"].push_back(js);
  }
  return j;
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.artifact_version = j.at("artifact_version").get<std::string>();
    if (m.artifact_version != kArtifactVersion)
      throw ConsistencyError("manifest artifact version '" + m.artifact_version + "' is not supported");
    m.config_digest = j.at("config_digest").get<std::string>();
    m.config_text = j.at("config").get<std::string>();
    m.config_path = j.value("config_path", "");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.threads = j.value("threads", 1);
    for (const auto& js : j.at("stages")) {
      StageRecord s;
      s.name = js.at("name").get<std::string>();
      s.status = js.at("status").get<std::string>();
      s.seconds = js.at("seconds").get<double>();
      s.error = js.value("error", "");
      for (const auto& f : js.at("files"))
        s.files.push_back({f.at("path").get<std::string>(), f.at("schema").get<std::string>(), f.at("sha256").get<std::string>()});
      m.stages.push_back(std::move(s));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConsistencyError(std::string("malformed manifest: ") + e.what());
  }
}

RunManifest load_manifest(const fs::path& p) {
  if (!fs::exists(p)) throw LookupError("no manifest at " + p.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConsistencyError(std::string("manifest is not valid JSON: ") + e.what());
  }
  return manifest_from_json(j);
}

namespace {

void save_manifest(const fs::path& p, const RunManifest& m) {
  std::ofstream os(p, std::ios::binary);
  os << to_json(m).dump(2) << '\n';
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  }
};

// Rectangular CSV with a header; throws ConsistencyError otherwise.
Table parse_csv(const std::string& text, const std::string& what) {
  Table t;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.empty()) throw ConsistencyError(what + ": missing CSV header");
  t.header = split_line(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto row = split_line(line);
    if (row.size() != t.header.size()) throw ConsistencyError(what + ": ragged CSV row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::map<std::string, std::string> read_summary(const fs::path& p) {
  const Table t = parse_csv(read_file(p), p.filename().string());
  std::map<std::string, std::string> out;
  for (const auto& r : t.rows) out[r[0]] = r[1];
  return out;
}

struct Masks {
  std::vector<char> good, filled;
  double degree_bound = 0.0;
  int L = 0;
};

// Lazily materialized artifacts. Anything not produced in this process is
// read back from the output directory.
class Context {
 public:
  Context(const ExperimentConfig& c, fs::path dir) : c_(c), dir_(std::move(dir)) {}

  const ExperimentConfig& config() const { return c_; }
  const fs::path& dir() const { return dir_; }
  std::uint64_t seed(const char* stage) const { return derive_seed(c_.seed, stage); }

  PointSet& points() {
    if (!ps_) {
      std::istringstream is(read_file(require("points.txt", "sample")));
      ps_ = read_pointset(is);
    }
    return *ps_;
  }
  void set_points(PointSet ps) { ps_ = std::move(ps); }

  // The triangulation is rebuilt deterministically from the points and
  // checked against the stored edge list.
  const DelaunayGraph& delaunay() {
    if (!dg_) {
      dg_ = build_delaunay(points());
      if (!built_here_) {
        std::istringstream is(read_file(require("graph.txt", "triangulate")));
        const Graph stored = read_graph(is);
        if (stored.adjacency != dg_->graph.adjacency || stored.offsets != dg_->graph.offsets)
          throw ConsistencyError("graph.txt does not match the triangulation of points.txt");
      }
    }
    return *dg_;
  }
  void mark_built_here() { built_here_ = true; }

  Masks& masks() {
    if (!masks_) {
      const Table t = parse_csv(read_file(require("masks.csv", "classify")), "masks.csv");
      Masks m;
      for (const auto& r : t.rows) {
        m.good.push_back(r.at(1) == "1");
        m.filled.push_back(r.at(2) == "1");
      }
      const auto s = read_summary(require("classify_summary.csv", "classify"));
      m.degree_bound = std::stod(s.at("degree_bound"));
      m.L = std::stoi(s.at("L"));
      if (m.good.size() != points().size()) throw ConsistencyError("masks.csv does not match points.txt");
      masks_ = std::move(m);
    }
    return *masks_;
  }
  bool masks_available() { return masks_ || fs::exists(dir_ / "masks.csv"); }
  void set_masks(Masks m) { masks_ = std::move(m); }

  const Graph& filled_graph() {
    if (!filled_) filled_ = restrict_graph(delaunay().graph, masks().filled);
    return *filled_;
  }

  const InducedKernel& kernel() {
    if (!kernel_) kernel_ = InducedKernelSolver(filled_graph(), masks().good).full(true);
    return *kernel_;
  }

  // Good vertex with a kernel row nearest the origin.
  int start_vertex() {
    const Graph& g = filled_graph();
    const auto& good = masks().good;
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < g.vertex_count(); ++v) {
      if (!good[v] || g.degree(static_cast<int>(v)) == 0) continue;
      double d = 0.0;
      for (int k = 0; k < g.dim; ++k) d += g.positions[v][k] * g.positions[v][k];
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(v);
      }
    }
    if (best < 0) throw WalkError("no good vertex with neighbors; the good-box cluster is empty");
    return best;
  }

  double region_half_width() const {
    return c_.region_half_width > 0.0 ? c_.region_half_width
                                      : c_.half_width - 6.0 / std::pow(c_.process.nominal_intensity(), 1.0 / c_.dim);
  }

 private:
  fs::path require(const char* name, const char* stage) const {
    const fs::path p = dir_ / name;
    if (!fs::exists(p)) throw DependencyError(std::string(name) + " is missing; run the " + stage + " stage first");
    return p;
  }

  const ExperimentConfig& c_;
  fs::path dir_;
  std::optional<PointSet> ps_;
  std::optional<DelaunayGraph> dg_;
  std::optional<Masks> masks_;
  std::optional<Graph> filled_;
  std::optional<InducedKernel> kernel_;
  bool built_here_ = false;
};

class StageWriter {
 public:
  StageWriter(fs::path dir, StageRecord& rec) : dir_(std::move(dir)), rec_(rec) {}

  void emit(const std::string& name, const std::string& schema, const std::function<void(std::ostream&)>& body) {
    std::ostringstream os;
    body(os);
    const std::string bytes = os.str();
    std::ofstream f(dir_ / name, std::ios::binary);
    f << bytes;
    if (!f) throw ResourceError("cannot write " + (dir_ / name).string(), 0.0);
    rec_.files.push_back({name, schema, sha256_hex(bytes)});
  }

  void summary(const std::string& stage, const Summary& rows) {
    emit(stage + "_summary.csv", "csv", [&](std::ostream& os) {
      os << "key,value\n";
      for (const auto& [k, v] : rows) os << k << ',' << v << '\n';
    });
  }

 private:
  fs::path dir_;
  StageRecord& rec_;
};

void stage_sample(Context& ctx, StageWriter& w) {
  const auto& c = ctx.config();
  PointSet ps = sample_process(c.process, Box::centered(c.dim, c.half_width), ctx.seed("sample"));
  w.emit("points.txt", "pointset", [&](std::ostream& os) { write_pointset(os, ps); });
  double volume = 1.0;
  for (int k = 0; k < c.dim; ++k) volume *= 2.0 * c.half_width;
  w.summary("sample", {{"points", std::to_string(ps.size())},
                       {"empirical_intensity", num(static_cast<double>(ps.size()) / volume)},
                       {"empty_warning", ps.empty_warning ? "1" : "0"}});
  ctx.set_points(std::move(ps));
}

void stage_triangulate(Context& ctx, StageWriter& w) {
  ctx.mark_built_here();
  const DelaunayGraph& dg = ctx.delaunay();
  w.emit("graph.txt", "graph", [&](std::ostream& os) { write_graph(os, dg); });
  long tainted = 0;
  for (char t : dg.graph.tainted) tainted += t ? 1 : 0;
  w.summary("triangulate", {{"vertices", std::to_string(dg.vertex_count())},
                            {"edges", std::to_string(dg.graph.edge_count())},
                            {"simplices", std::to_string(dg.simplices.size())},
                            {"tainted", std::to_string(tainted)},
                            {"mean_degree", num(2.0 * dg.graph.edge_count() / std::max<double>(1, dg.vertex_count()))}});
}

void stage_classify(Context& ctx, StageWriter& w) {
  const auto& c = ctx.config();
  const PointSet& ps = ctx.points();
  const DelaunayGraph& dg = ctx.delaunay();
  const GoodBoxField field = classify_boxes(ps, dg, c.s, c.alpha);
  const int L = c.L < 0 ? field.range : c.L;
  ClusterDecomposition decomp = cluster_components(field, L);
  const auto cells = voronoi_cells(ps, dg);
  good_points(decomp, field, ps, cells, dg.graph);

  Masks m{vertex_mask(ps.size(), decomp.good_points), vertex_mask(ps.size(), decomp.filled_points),
          field.degree_bound(), L};
  w.emit("boxes.csv", "csv", [&](std::ostream& os) { write_field_csv(os, field, &decomp); });
  w.emit("masks.csv", "csv", [&](std::ostream& os) {
    os << "vertex,good,filled\n";
    for (std::size_t v = 0; v < ps.size(); ++v) os << v << ',' << int(m.good[v]) << ',' << int(m.filled[v]) << '\n';
  });
  const Graph gf = restrict_graph(dg.graph, m.filled);
  int max_good_degree = 0, enclosed = 0, max_diam = 0;
  for (int v : decomp.good_points) max_good_degree = std::max(max_good_degree, gf.degree(v));
  for (const Hole& h : decomp.holes)
    if (h.enclosed) {
      ++enclosed;
      max_diam = std::max(max_diam, h.diameter);
    }
  w.summary("classify", {{"range", std::to_string(field.range)},
                         {"L", std::to_string(L)},
                         {"K", num(field.K)},
                         {"degree_bound", num(field.degree_bound())},
                         {"good_box_fraction", num(field.good_fraction())},
                         {"cluster_boxes", std::to_string(decomp.cluster.size())},
                         {"holes", std::to_string(decomp.holes.size())},
                         {"enclosed_holes", std::to_string(enclosed)},
                         {"max_enclosed_hole_diameter", std::to_string(max_diam)},
                         {"good_points", std::to_string(decomp.good_points.size())},
                         {"filled_points", std::to_string(decomp.filled_points.size())},
                         {"good_connected", decomp.good_connected ? "1" : "0"},
                         {"empty_cluster", decomp.empty_cluster ? "1" : "0"},
                         {"max_good_degree", std::to_string(max_good_degree)}});
  ctx.set_masks(std::move(m));
}

void stage_walk(Context& ctx, StageWriter& w) {
  const auto& c = ctx.config();
  const std::uint64_t seed = ctx.seed("walk");
  const int x0 = ctx.start_vertex();
  const Graph& full = ctx.delaunay().graph;
  const Graph& gf = ctx.filled_graph();
  const auto& good = ctx.masks().good;
  WalkPath path;
  switch (c.walk_kind) {
    case WalkKind::dtrw: path = run_dtrw(full, x0, c.walk_steps, seed); break;
    case WalkKind::vsrw: path = run_vsrw(full, x0, c.walk_horizon, seed); break;
    case WalkKind::induced_discrete: path = run_induced_discrete(gf, good, x0, c.walk_steps, seed); break;
    case WalkKind::induced_continuous: path = run_induced_continuous(gf, good, x0, c.walk_horizon, seed); break;
  }
  w.emit("path.csv", "csv", [&](std::ostream& os) { write_path_csv(os, path); });

  const InducedKernel& k = ctx.kernel();
  long rows = 0, missing = 0;
  for (std::size_t v = 0; v < k.vertex_count(); ++v) {
    if (!good[v]) continue;
    if (k.has_row(static_cast<int>(v))) ++rows;
    else ++missing;
  }
  if (c.write_kernel) w.emit("kernel.csv", "csv", [&](std::ostream& os) { write_kernel_csv(os, k); });
  w.summary("walk", {{"kind", to_string(c.walk_kind)},
                     {"start_vertex", std::to_string(x0)},
                     {"path_events", std::to_string(path.steps.size())},
                     {"kernel_rows", std::to_string(rows)},
                     {"kernel_rows_missing", std::to_string(missing)},
                     {"row_sum_residual", num(row_sum_residual(k))},
                     {"detailed_balance_residual", num(detailed_balance_residual(k, gf))},
                     {"solver_residual", num(k.solver_residual)}});
}

void stage_corrector(Context& ctx, StageWriter& w) {
  const auto& c = ctx.config();
  const DelaunayGraph& dg = ctx.delaunay();
  const double R = ctx.region_half_width();
  if (!(R > 0.0)) throw ConfigurationError("corrector region is empty; set corrector.region_half_width");
  for (double r : c.radii)
    if (r > R) throw ConfigurationError("corrector radius " + num(r) + " exceeds the region half width " + num(R));
  std::vector<char> region(dg.vertex_count(), 0);
  for (std::size_t v = 0; v < dg.vertex_count(); ++v) {
    bool inside = !dg.graph.tainted[v];
    for (int k = 0; k < dg.dim(); ++k) inside = inside && std::abs(dg.graph.positions[v][k]) <= R;
    region[v] = inside;
  }
  const HarmonicEmbedding emb = solve_harmonic_embedding(dg, region);

  // Discrete maximum principle per coordinate, checked exactly.
  bool max_principle = true;
  if (!emb.boundary.empty())
    for (int k = 0; k < emb.dim; ++k) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int b : emb.boundary) {
        lo = std::min(lo, emb.phi[b][k]);
        hi = std::max(hi, emb.phi[b][k]);
      }
      for (int x : emb.interior) max_principle = max_principle && emb.phi[x][k] >= lo && emb.phi[x][k] <= hi;
    }

  SublinearityOptions opt;
  opt.betas = c.betas;
  opt.region_half_width = R;
  std::vector<char> good;
  if (ctx.masks_available()) {
    good = ctx.masks().good;
    opt.good = good;
  }
  const SublinearityProfile prof = sublinearity_profile(dg.graph, emb, c.radii, opt);
  bool decreasing = true;
  for (std::size_t i = 1; i < prof.ratios.size(); ++i) decreasing = decreasing && prof.ratios[i] < prof.ratios[i - 1];

  w.emit("embedding.csv", "csv", [&](std::ostream& os) { write_embedding_csv(os, emb); });
  w.emit("sublinearity.csv", "csv", [&](std::ostream& os) {
    os << "n,max_chi,max_chi_good,ratio\n";
    for (std::size_t i = 0; i < prof.radii.size(); ++i)
      os << num(prof.radii[i]) << ',' << num(prof.max_chi[i]) << ','
         << (prof.max_chi_good.empty() ? "nan" : num(prof.max_chi_good[i])) << ',' << num(prof.ratios[i]) << '\n';
  });
  w.emit("poly_growth.csv", "csv", [&](std::ostream& os) {
    os << "n,beta,pair_max,ratio\n";
    for (const auto& e : prof.poly_growth)
      os << num(e.n) << ',' << num(e.beta) << ',' << num(e.pair_max) << ',' << num(e.ratio) << '\n';
  });
  w.summary("corrector", {{"region_half_width", num(R)},
                          {"interior", std::to_string(emb.interior.size())},
                          {"boundary", std::to_string(emb.boundary.size())},
                          {"residual", num(emb.residual)},
                          {"tolerance", num(emb.tolerance)},
                          {"iterations", std::to_string(emb.solver_iterations)},
                          {"max_principle", max_principle ? "1" : "0"},
                          {"ratios_decreasing", decreasing ? "1" : "0"}});
}

// Sets for the comparison check: l1-ball growths in the good-restricted
// graph around random good centers, cut at random sizes.
std::vector<std::vector<int>> comparison_sets(const Graph& g, std::span<const char> good, int count, std::uint64_t seed) {
  std::vector<int> verts;
  for (std::size_t v = 0; v < g.vertex_count(); ++v)
    if (good[v] && g.degree(static_cast<int>(v)) > 0) verts.push_back(static_cast<int>(v));
  std::vector<std::vector<int>> sets;
  if (verts.empty()) return sets;
  WalkEngine rng(seed);
  std::vector<char> seen(g.vertex_count(), 0);
  for (int i = 0; i < count; ++i) {
    const int centre = verts[std::uniform_int_distribution<std::size_t>(0, verts.size() - 1)(rng)];
    const std::size_t target = std::uniform_int_distribution<std::size_t>(1, std::max<std::size_t>(1, verts.size() / 2))(rng);
    std::vector<int> set{centre};
    seen[centre] = 1;
    for (std::size_t head = 0; head < set.size() && set.size() < target; ++head)
      for (int y : g.neighbors(set[head]))
        if (good[y] && !seen[y] && set.size() < target) {
          seen[y] = 1;
          set.push_back(y);
        }
    for (int v : set) seen[v] = 0;
    std::sort(set.begin(), set.end());
    sets.push_back(std::move(set));
  }
  return sets;
}

void stage_analysis(Context& ctx, StageWriter& w) {
  const auto& c = ctx.config();
  const Graph& gf = ctx.filled_graph();
  const auto& good = ctx.masks().good;
  const InducedKernel& k = ctx.kernel();
  const int x0 = ctx.start_vertex();
  Summary s;

  const auto heat = heat_kernel_curve(k, x0, c.t_grid);
  w.emit("heat_kernel.csv", "csv", [&](std::ostream& os) {
    os << "t,probability\n";
    for (const auto& p : heat) os << num(p.t) << ',' << num(p.probability) << '\n';
  });
  const double fit_hi = c.heat_fit_max > 0.0 ? c.heat_fit_max : std::numeric_limits<double>::infinity();
  std::vector<double> lx, ly;
  for (const auto& p : heat)
    if (p.t > 0.0 && p.t >= c.heat_fit_min && p.t <= fit_hi && p.probability > 0.0) {
      lx.push_back(std::log(p.t));
      ly.push_back(std::log(p.probability));
    }
  if (lx.size() >= 2) {
    const auto fit = stats::fit_line(lx, ly);
    s.emplace_back("heat_slope", num(fit.slope));
    s.emplace_back("heat_fit_r2", num(fit.r2));
  }

  const auto dist = expected_distance_curve(gf, k, x0, c.t_grid, c.distance_walkers, ctx.seed("distance"));
  w.emit("distance.csv", "csv", [&](std::ostream& os) {
    os << "t,ratio,ratio_se,second_moment,second_moment_se\n";
    for (const auto& p : dist)
      os << num(p.t) << ',' << num(p.ratio) << ',' << num(p.ratio_se) << ',' << num(p.second_moment) << ','
         << num(p.second_moment_se) << '\n';
  });
  double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
  for (const auto& p : dist)
    if (p.t > 0.0 && p.t >= c.heat_fit_min && p.t <= fit_hi) {
      rmin = std::min(rmin, p.ratio);
      rmax = std::max(rmax, p.ratio);
    }
  if (rmax > 0.0) s.emplace_back("distance_ratio_spread", num(rmax / rmin));

  const IsoProfile prof = iso_profile_estimate(gf, good, k, c.u_grid, c.profile_budget, ctx.seed("profile"), c.half_width);
  bool monotone = true;
  for (std::size_t i = 1; i < prof.u_grid.size(); ++i)
    monotone = monotone && prof.phi_hat[i] <= prof.phi_hat[i - 1] && prof.phi_tilde[i] <= prof.phi_tilde[i - 1];
  w.emit("profile.csv", "csv", [&](std::ostream& os) {
    os << "u,phi_hat,phi_tilde,candidates\n";
    for (std::size_t i = 0; i < prof.u_grid.size(); ++i)
      os << num(prof.u_grid[i]) << ',' << num(prof.phi_hat[i]) << ',' << num(prof.phi_tilde[i]) << ','
         << prof.candidate_count[i] << '\n';
  });
  s.emplace_back("profile_fitted_c", num(prof.fitted_c));
  s.emplace_back("profile_fit_r2", num(prof.fit_r2));
  s.emplace_back("profile_monotone", monotone ? "1" : "0");

  const double D = ctx.masks().degree_bound;
  const auto sets = comparison_sets(gf, good, c.conductance_sets, ctx.seed("conductance"));
  long violations = 0;
  w.emit("conductance.csv", "csv", [&](std::ostream& os) {
    os << "set,size,I_hat,I_tilde,holds\n";
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const ConductanceRecord r = conductance_pair(gf, good, k, sets[i], D);
      violations += r.comparison_holds ? 0 : 1;
      os << i << ',' << sets[i].size() << ',' << num(r.I_hat) << ',' << num(r.I_tilde) << ',' << int(r.comparison_holds) << '\n';
    }
  });
  s.emplace_back("conductance_sets", std::to_string(sets.size()));
  s.emplace_back("conductance_violations", std::to_string(violations));

  if (c.diffusion_envs > 0) {
    std::vector<PalmEnvironment> envs;
    envs.reserve(c.diffusion_envs);
    for (int i = 0; i < c.diffusion_envs; ++i) {
      PointSet ps = palm_sample(c.process, Box::centered(c.dim, c.palm_half_width),
                                derive_seed(c.seed, "palm_env", static_cast<std::uint64_t>(i)));
      DelaunayGraph dg = build_delaunay(ps);
      envs.push_back({std::move(ps), std::move(dg)});
    }
    DiffusionOptions opt{c.dtrw_steps, c.vsrw_times, c.diffusion_walkers, ctx.seed("diffusion")};
    const DiffusionReport rep = diffusion_report(envs, opt);
    w.emit("diffusion.csv", "csv", [&](std::ostream& os) {
      os << "kind,x,msd\n";
      for (std::size_t i = 0; i < rep.msd_dtrw.size(); ++i) os << "dtrw," << c.dtrw_steps[i] << ',' << num(rep.msd_dtrw[i]) << '\n';
      for (std::size_t i = 0; i < rep.msd_vsrw.size(); ++i) os << "vsrw," << num(c.vsrw_times[i]) << ',' << num(rep.msd_vsrw[i]) << '\n';
    });
    s.emplace_back("sigma2_dtrw", num(rep.sigma2_dtrw));
    s.emplace_back("sigma2_vsrw", num(rep.sigma2_vsrw));
    s.emplace_back("coefficient_ratio", num(rep.coefficient_ratio));
    s.emplace_back("mean_palm_degree", num(rep.mean_palm_degree));
    s.emplace_back("mean_origin_degree", num(rep.mean_origin_degree));
    s.emplace_back("isotropy", num(rep.isotropy));
    s.emplace_back("ks_statistic", num(rep.ks_statistic));
    s.emplace_back("ks_critical_1pct", num(rep.ks_critical_1pct));
    s.emplace_back("diffusion_escaped", std::to_string(rep.escaped));
  }

  if (c.palm_samples > 0) {
    const double lens_reach = 2.0 * std::pow(c.lens_beta, c.lens_n_max);
    const double radius = std::max(lens_reach, c.rho_grid.back()) + 1.0;
    const double hw = radius + 6.0 / std::pow(c.process.nominal_intensity(), 1.0 / c.dim);
    std::vector<PalmObservation> obs;
    obs.reserve(c.palm_samples);
    for (int i = 0; i < c.palm_samples; ++i) {
      const PointSet ps = palm_sample(c.process, Box::centered(c.dim, hw), derive_seed(c.seed, "palm_tail", static_cast<std::uint64_t>(i)));
      obs.push_back(observe_palm(ps, build_delaunay(ps), radius));
    }
    const TailMomentReport rep = tail_moment_report(obs, c.rho_grid, c.lens_beta, c.lens_n_max);
    w.emit("tail.csv", "csv", [&](std::ostream& os) {
      os << "rho,survival\n";
      for (std::size_t i = 0; i < rep.rho_grid.size(); ++i) os << num(rep.rho_grid[i]) << ',' << num(rep.distance_survival[i]) << '\n';
    });
    w.emit("degree_tail.csv", "csv", [&](std::ostream& os) {
      os << "k,survival\n";
      for (std::size_t i = 0; i < rep.degree_grid.size(); ++i) os << rep.degree_grid[i] << ',' << num(rep.degree_survival[i]) << '\n';
    });
    w.emit("lens.csv", "csv", [&](std::ostream& os) {
      os << "n,applicable,violations\n";
      for (const auto& l : rep.lens) os << l.n << ',' << l.applicable << ',' << l.violations << '\n';
    });
    s.emplace_back("lens_violations", std::to_string(rep.lens_violations));
    s.emplace_back("distance_tail_slope", num(rep.distance_fit.slope));
    s.emplace_back("distance_tail_r2", num(rep.distance_fit.r2));
    s.emplace_back("distance_m4_drift", num(rep.distance_m4_drift));
    s.emplace_back("degree_m2_drift", num(rep.degree_m2_drift));
  }
  w.summary("analysis", s);
}

using StageFn = void (*)(Context&, StageWriter&);

const std::map<std::string, StageFn>& stage_table() {
  static const std::map<std::string, StageFn> t{{"sample", stage_sample},   {"triangulate", stage_triangulate},
                                                {"classify", stage_classify}, {"walk", stage_walk},
                                                {"corrector", stage_corrector}, {"analysis", stage_analysis}};
  return t;
}

}  // namespace

RunManifest run_stages(const ExperimentConfig& c, std::vector<std::string> stages, int threads) {
  for (const auto& s : stages)
    if (!stage_table().count(s)) throw ParameterError("unknown stage '" + s + "'");
  const fs::path dir = c.out;
  fs::create_directories(dir);

  RunManifest m;
  m.config_digest = sha256_hex(c.text);
  m.config_text = c.text;
  m.config_path = c.source_path;
  m.seed = c.seed;
  m.threads = threads;
  std::map<std::string, StageRecord> previous;
  if (fs::exists(dir / kManifestName)) {
    try {
      const RunManifest old = load_manifest(dir / kManifestName);
      if (old.config_digest == m.config_digest && old.seed == m.seed)
        for (const auto& s : old.stages) previous[s.name] = s;
    } catch (const Error&) {
      // An unreadable manifest is replaced.
    }
  }
  std::ofstream(dir / "config.ini", std::ios::binary) << c.text;

  Context ctx(c, dir);
  bool halted = false;
  for (const auto& name : kStageOrder) {
    const bool requested = std::find(stages.begin(), stages.end(), name) != stages.end();
    if (!requested) {
      if (previous.count(name)) m.stages.push_back(previous[name]);
      continue;
    }
    StageRecord rec;
    rec.name = name;
    if (halted) {
      rec.status = "skipped";
      rec.error = "an earlier stage failed";
      m.stages.push_back(rec);
      continue;
    }
    StageWriter w(dir, rec);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      stage_table().at(name)(ctx, w);
      rec.status = "ok";
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      halted = true;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.stages.push_back(rec);
  }
  save_manifest(dir / kManifestName, m);
  return m;
}

std::vector<std::string> verify_outputs(const fs::path& dir, const RunManifest& m) {
  std::vector<std::string> problems;
  for (const auto& s : m.stages)
    for (const auto& f : s.files) {
      const fs::path p = dir / f.path;
      if (!fs::exists(p)) {
        problems.push_back(f.path + ": missing");
        continue;
      }
      const std::string bytes = read_file(p);
      if (sha256_hex(bytes) != f.sha256) problems.push_back(f.path + ": digest mismatch");
      try {
        std::istringstream is(bytes);
        if (f.schema == "pointset") read_pointset(is);
        else if (f.schema == "graph") read_graph(is);
        else if (f.schema == "csv") parse_csv(bytes, f.path);
        else problems.push_back(f.path + ": unknown schema '" + f.schema + "'");
      } catch (const std::exception& e) {
        problems.push_back(f.path + ": does not parse as " + f.schema + ": " + e.what());
      }
    }
  return problems;
}

namespace {

// Two-column numeric plot data from CSV columns, non-finite rows dropped.
bool write_plot(const fs::path& dir, const std::string& csv, const std::string& x, const std::string& y,
                const std::string& out, Report& rep, const std::string& filter_col = "",
                const std::string& filter_val = "") {
  if (!fs::exists(dir / csv)) return false;
  const Table t = parse_csv(read_file(dir / csv), csv);
  const int cx = t.column(x), cy = t.column(y), cf = filter_col.empty() ? -1 : t.column(filter_col);
  if (cx < 0 || cy < 0) return false;
  fs::create_directories(dir / "plots");
  std::ofstream os(dir / "plots" / out, std::ios::binary);
  for (const auto& r : t.rows) {
    if (cf >= 0 && r[cf] != filter_val) continue;
    const double a = std::stod(r[cx]), b = std::stod(r[cy]);
    if (std::isfinite(a) && std::isfinite(b)) os << num(a) << ' ' << num(b) << '\n';
  }
  rep.plot_files.push_back("plots/" + out);
  return true;
}

}  // namespace

Report make_report(const fs::path& manifest_path) {
  const RunManifest m = load_manifest(manifest_path);
  const fs::path dir = manifest_path.parent_path().empty() ? fs::path(".") : manifest_path.parent_path();
  ExperimentConfig c = parse_config(m.config_text).config;

  Report rep;
  rep.problems = verify_outputs(dir, m);
  std::map<std::string, std::map<std::string, std::string>> sums;
  for (const auto& name : kStageOrder) {
    const StageRecord* s = m.stage(name);
    if (!s || s->status != "ok") {
      rep.problems.push_back("stage " + name + ": " + (s ? s->status + (s->error.empty() ? "" : " (" + s->error + ")") : "not run"));
      continue;
    }
    const fs::path p = dir / (name + "_summary.csv");
    if (fs::exists(p)) sums[name] = read_summary(p);
  }

  auto claim = [&](const std::string& text, const std::string& stage, const std::vector<std::string>& keys,
                   const std::function<std::pair<bool, std::string>(const std::map<std::string, std::string>&)>& eval) {
    const auto it = sums.find(stage);
    if (it == sums.end()) {
      rep.claims.push_back({text, "NOT RUN", "requires the " + stage + " stage"});
      return;
    }
    for (const auto& k : keys)
      if (!it->second.count(k)) {
        rep.claims.push_back({text, "NOT RUN", "the " + stage + " stage did not compute " + k});
        return;
      }
    const auto [pass, detail] = eval(it->second);
    rep.claims.push_back({text, pass ? "PASS" : "FAIL", detail});
  };
  auto d = [](const std::map<std::string, std::string>& s, const std::string& k) { return std::stod(s.at(k)); };

  claim("induced kernel rows sum to 1", "walk", {"row_sum_residual"}, [&](const auto& s) {
    return std::pair{d(s, "row_sum_residual") <= 1e-10, "max |row sum - 1| = " + s.at("row_sum_residual") + " (tol 1e-10)"};
  });
  claim("induced kernel detailed balance", "walk", {"detailed_balance_residual"}, [&](const auto& s) {
    return std::pair{d(s, "detailed_balance_residual") < 1e-8, "residual = " + s.at("detailed_balance_residual") + " (tol 1e-8)"};
  });
  claim("harmonic residual within tolerance", "corrector", {"residual", "tolerance"}, [&](const auto& s) {
    return std::pair{d(s, "residual") <= d(s, "tolerance"), "residual " + s.at("residual") + " <= " + s.at("tolerance")};
  });
  claim("discrete maximum principle", "corrector", {"max_principle"},
        [&](const auto& s) { return std::pair{s.at("max_principle") == "1", "phi within boundary range per coordinate"}; });
  claim("corrector max ||chi|| / n decreasing", "corrector", {"ratios_decreasing"},
        [&](const auto& s) { return std::pair{s.at("ratios_decreasing") == "1", "over the configured radii"}; });
  claim("conductance comparison I_hat >= I_tilde / D", "analysis", {"conductance_violations"}, [&](const auto& s) {
    return std::pair{s.at("conductance_violations") == "0", s.at("conductance_violations") + " violations over " + s.at("conductance_sets") + " sets"};
  });
  claim("isoperimetric profile nonincreasing in u", "analysis", {"profile_monotone"},
        [&](const auto& s) { return std::pair{s.at("profile_monotone") == "1", "fitted c = " + s.at("profile_fitted_c")}; });
  claim("heat-kernel log-log slope", "analysis", {"heat_slope"}, [&](const auto& s) {
    std::ostringstream os;
    os << "slope " << s.at("heat_slope") << ", target " << c.heat_slope_target << " +- " << c.heat_slope_tol;
    return std::pair{std::abs(d(s, "heat_slope") - c.heat_slope_target) <= c.heat_slope_tol, os.str()};
  });
  claim("expected distance / sqrt(t) bounded", "analysis", {"distance_ratio_spread"}, [&](const auto& s) {
    std::ostringstream os;
    os << "max/min = " << s.at("distance_ratio_spread") << " (limit " << c.distance_ratio_max << ")";
    return std::pair{d(s, "distance_ratio_spread") <= c.distance_ratio_max, os.str()};
  });
  claim("sigma^2 relation: sigma2_vsrw = E[deg] sigma2_dtrw", "analysis", {"coefficient_ratio", "mean_palm_degree"},
        [&](const auto& s) {
          const double rel = std::abs(d(s, "coefficient_ratio") / d(s, "mean_palm_degree") - 1.0);
          std::ostringstream os;
          os << "ratio " << s.at("coefficient_ratio") << " vs mean degree " << s.at("mean_palm_degree")
             << ", relative gap " << rel << " (tol " << c.diffusion_rel_tol << ")";
          return std::pair{rel <= c.diffusion_rel_tol, os.str()};
        });
  claim("lens criterion", "analysis", {"lens_violations"},
        [&](const auto& s) { return std::pair{s.at("lens_violations") == "0", s.at("lens_violations") + " violations"}; });

  write_plot(dir, "heat_kernel.csv", "t", "probability", "heat_kernel.dat", rep);
  write_plot(dir, "distance.csv", "t", "ratio", "distance_ratio.dat", rep);
  write_plot(dir, "sublinearity.csv", "n", "ratio", "sublinearity.dat", rep);
  write_plot(dir, "profile.csv", "u", "phi_hat", "profile_hat.dat", rep);
  write_plot(dir, "profile.csv", "u", "phi_tilde", "profile_tilde.dat", rep);
  write_plot(dir, "diffusion.csv", "x", "msd", "msd_dtrw.dat", rep, "kind", "dtrw");
  write_plot(dir, "diffusion.csv", "x", "msd", "msd_vsrw.dat", rep, "kind", "vsrw");
  write_plot(dir, "tail.csv", "rho", "survival", "distance_survival.dat", rep);
  write_plot(dir, "degree_tail.csv", "k", "survival", "degree_survival.dat", rep);

  std::ostringstream os;
  os << "delwalk report for " << manifest_path.string() << "\n";
  for (const auto& cl : rep.claims) os << cl.verdict << (cl.verdict.size() < 7 ? std::string(7 - cl.verdict.size(), ' ') : "") << "  " << cl.claim << ": " << cl.detail << '\n';
  for (const auto& p : rep.problems) os << "note     " << p << '\n';
  for (const auto& p : rep.plot_files) os << "plot     " << p << '\n';
  rep.text = os.str();
  std::ofstream(dir / "report.txt", std::ios::binary) << rep.text;
  return rep;
}

}  // namespace delwalk::cli
