#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "delwalk/pointproc.hpp"
#include "delwalk/stats.hpp"

using namespace delwalk;

namespace {

Box square(double lo, double hi) {
  Box b;
  b.dim = 2;
  b.lo = {lo, lo, 0};
  b.hi = {hi, hi, 0};
  return b;
}

double min_pair_distance(const PointSet& ps) {
  double m = INFINITY;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = i + 1; j < ps.size(); ++j) m = std::min(m, dist(ps.points[i], ps.points[j], ps.dim));
  return m;
}

}  // namespace

TEST_CASE("poisson counts have mean intensity times area") {
  std::vector<double> counts;
  for (std::uint64_t s = 0; s < 1000; ++s)
    counts.push_back(static_cast<double>(sample_poisson(1.0, square(0, 10), s).size()));
  const double m = stats::mean(counts);
  CHECK(m >= 97.0);
  CHECK(m <= 103.0);
  // Poisson variance equals the mean.
  CHECK(stats::variance(counts) == doctest::Approx(100.0).epsilon(0.15));
}

TEST_CASE("poisson points lie in the window and sampling is deterministic") {
  const PointSet a = sample_poisson(2.0, square(-3, 5), 42);
  const PointSet b = sample_poisson(2.0, square(-3, 5), 42);
  REQUIRE(a.size() == b.size());
  CHECK(a.points == b.points);
  CHECK(a.digest() == b.digest());
  for (const Vec& p : a.points) CHECK(a.window.contains(p));
  CHECK(sample_poisson(2.0, square(-3, 5), 43).digest() != a.digest());
}

TEST_CASE("poisson void probability matches the exponential law") {
  // P[no point in a box of area A] = exp(-A); checked at A = 2.25.
  int empty = 0;
  const int n = 20000;
  for (int s = 0; s < n; ++s) empty += sample_poisson(1.0, square(0, 1.5), s).size() == 0;
  const double p = std::exp(-2.25);
  const double se = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(empty / static_cast<double>(n) - p) < 4 * se);
}

TEST_CASE("poisson sampler rejects bad parameters") {
  CHECK_THROWS_AS(sample_poisson(0.0, square(0, 1), 1), ParameterError);
  CHECK_THROWS_AS(sample_poisson(1.0, square(1, 1), 1), ParameterError);
}

TEST_CASE("matern hardcore respects the hardcore distance") {
  for (auto kind : {ProcessKind::matern_hardcore_I, ProcessKind::matern_hardcore_II}) {
    const auto spec = ProcessSpec::hardcore(kind, 2.0, 0.5);
    for (std::uint64_t s = 0; s < 20; ++s) {
      const PointSet ps = sample_matern_hardcore(spec, square(0, 10), s);
      CHECK(min_pair_distance(ps) >= 0.5 - 1e-8);
    }
  }
}

TEST_CASE("matern II retained intensity matches the analytic formula") {
  const double lambda = 2.0, r = 0.5;
  const double area = std::numbers::pi * r * r;
  const double expected = (1.0 - std::exp(-lambda * area)) / area;
  const auto spec = ProcessSpec::hardcore(ProcessKind::matern_hardcore_II, lambda, r);
  std::vector<double> dens;
  const Box w = square(0, 5);
  for (std::uint64_t s = 0; s < 10000; ++s)
    dens.push_back(static_cast<double>(sample_matern_hardcore(spec, w, s).size()) / w.volume());
  CHECK(std::abs(stats::mean(dens) - expected) < 3 * stats::standard_error(dens));
}

TEST_CASE("matern I retained intensity matches the analytic formula") {
  const double lambda = 1.0, r = 0.5;
  const double expected = lambda * std::exp(-lambda * std::numbers::pi * r * r);
  const auto spec = ProcessSpec::hardcore(ProcessKind::matern_hardcore_I, lambda, r);
  std::vector<double> dens;
  const Box w = square(0, 6);
  for (std::uint64_t s = 0; s < 4000; ++s)
    dens.push_back(static_cast<double>(sample_matern_hardcore(spec, w, s).size()) / w.volume());
  CHECK(std::abs(stats::mean(dens) - expected) < 3 * stats::standard_error(dens));
}

TEST_CASE("matern II with zero radius is poisson") {
  const auto spec = ProcessSpec::hardcore(ProcessKind::matern_hardcore_II, 2.0, 0.0);
  std::vector<double> counts;
  for (std::uint64_t s = 0; s < 2000; ++s) counts.push_back(static_cast<double>(sample_matern_hardcore(spec, square(0, 5), s).size()));
  CHECK(std::abs(stats::mean(counts) - 50.0) < 3 * stats::standard_error(counts));
}

TEST_CASE("matern hardcore with a huge radius sets the empty warning") {
  const auto spec = ProcessSpec::hardcore(ProcessKind::matern_hardcore_I, 5.0, 3.0);
  const PointSet ps = sample_matern_hardcore(spec, square(0, 4), 3);
  CHECK(ps.size() == 0);
  CHECK(ps.empty_warning);
}

TEST_CASE("matern cluster mean count and parent proximity") {
  const auto spec = ProcessSpec::cluster(0.2, 5.0, 1.0);
  std::vector<double> counts;
  const Box w = square(0, 10);
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const ClusterSample cs = sample_matern_cluster_detailed(spec, w, s);
    counts.push_back(static_cast<double>(cs.points.size()));
    if (s < 50)
      for (const Vec& p : cs.points.points) {
        double best = INFINITY;
        for (const Vec& q : cs.parents) best = std::min(best, dist(p, q, 2));
        CHECK(best <= 1.0 + 1e-7);
      }
  }
  CHECK(std::abs(stats::mean(counts) - 0.2 * 5.0 * 100.0) < 3 * stats::standard_error(counts));
  CHECK(sample_matern_cluster(ProcessSpec::cluster(0.2, 0.0, 1.0), w, 1).size() == 0);
}

TEST_CASE("process spec validation") {
  ProcessSpec bad = ProcessSpec::poisson(1.0);
  bad.hardcore_radius = 1.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  CHECK_THROWS_AS(ProcessSpec::hardcore(ProcessKind::matern_hardcore_I, 1.0, -1.0).validate(), ParameterError);
  CHECK_THROWS_AS(process_kind_from_string("gibbs"), ParameterError);
  CHECK(process_kind_from_string(to_string(ProcessKind::matern_cluster)) == ProcessKind::matern_cluster);
}

TEST_CASE("palm samples contain the origin") {
  const Box w = Box::centered(2, 5.0);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const PointSet p = palm_sample(ProcessSpec::poisson(1.0), w, s);
    CHECK(p.palm_conditioned);
    CHECK(p.points[0] == Vec{0, 0, 0});
    const PointSet h = palm_sample(ProcessSpec::hardcore(ProcessKind::matern_hardcore_II, 1.0, 0.3), w, s);
    CHECK(h.points[0] == Vec{0, 0, 0});
    CHECK(min_pair_distance(h) >= 0.3 - 1e-8);
    const PointSet c = palm_sample(ProcessSpec::cluster(0.3, 4.0, 1.0), w, s);
    CHECK(c.points[0] == Vec{0, 0, 0});
    for (const Vec& q : c.points) CHECK(w.contains(q));
  }
  CHECK(palm_sample(ProcessSpec::poisson(1.0), w, 9).points == palm_sample(ProcessSpec::poisson(1.0), w, 9).points);
}

TEST_CASE("palm sampling errors") {
  CHECK_THROWS_AS(palm_sample(ProcessSpec::poisson(1.0), square(0, 4), 1), ParameterError);
  PalmOptions opt;
  opt.max_attempts = 5;
  const auto hopeless = ProcessSpec::hardcore(ProcessKind::matern_hardcore_I, 5.0, 3.0);
  try {
    palm_sample(hopeless, Box::centered(2, 2.0), 1, opt);
    FAIL("expected SamplingFailure");
  } catch (const SamplingFailure& e) {
    CHECK(e.attempts() == 5);
  }
}

TEST_CASE("stripping the palm origin leaves stationary counts") {
  const Box w = Box::centered(2, 4.0);
  std::vector<double> palm, stat;
  for (std::uint64_t s = 0; s < 2000; ++s) {
    palm.push_back(static_cast<double>(palm_sample(ProcessSpec::poisson(1.0), w, s).size() - 1));
    stat.push_back(static_cast<double>(sample_poisson(1.0, w, s + 100000).size()));
  }
  const double se = std::hypot(stats::standard_error(palm), stats::standard_error(stat));
  CHECK(std::abs(stats::mean(palm) - stats::mean(stat)) < 3.5 * se);
}

TEST_CASE("assumption report schema and void slope") {
  const std::vector<double> Ls{0.5, 1.0, 1.5};
  const std::vector<double> rhos{0.01, 0.05};
  const AssumptionReport r = assumption_report(ProcessSpec::poisson(1.0), Ls, rhos, 20000, 7);
  REQUIRE(r.void_curve.size() == 3);
  REQUIRE(r.tail_curve.size() == 3);
  REQUIRE(r.palm_void_curve.size() == 3);
  REQUIRE(r.exp_moment_curve.size() == 2);
  for (const auto* c : {&r.void_curve, &r.tail_curve, &r.palm_void_curve}) {
    for (std::size_t i = 0; i < c->size(); ++i) {
      CHECK((*c)[i].y >= 0.0);
      CHECK((*c)[i].y <= 1.0);
      if (i) CHECK((*c)[i].x > (*c)[i - 1].x);
    }
  }
  REQUIRE(r.void_slope_valid);
  CHECK(r.void_log_slope == doctest::Approx(-1.0).epsilon(0.08));
  // Palm void for a Poisson process equals the stationary void (Slivnyak).
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(r.palm_void_curve[i].y == doctest::Approx(std::exp(-Ls[i] * Ls[i])).epsilon(0.15));
  // Exponential moments of a Poisson count plus the origin point.
  for (const auto& e : r.exp_moment_curve) {
    const double vol = std::pow(2 * r.exp_moment_box, 2);
    CHECK(e.y == doctest::Approx(std::exp(e.x) * std::exp(vol * (std::exp(e.x) - 1))).epsilon(0.05));
  }
}

TEST_CASE("assumption report tail curve is nonincreasing for a large threshold") {
  const AssumptionReport r = assumption_report(ProcessSpec::poisson(1.0), {1.0, 2.0, 3.0, 4.0}, {0.1}, 4000, 11, 2.5);
  for (std::size_t i = 1; i < r.tail_curve.size(); ++i) CHECK(r.tail_curve[i].y <= r.tail_curve[i - 1].y + 1e-12);
  // Chernoff bound for Poisson(m) exceeding c m: exp(-m (c log c - c + 1)).
  for (const auto& t : r.tail_curve) {
    const double m = t.x * t.x, c = 2.5;
    const double bound = std::exp(-m * (c * std::log(c) - c + 1));
    CHECK(t.y <= bound + 3 * std::sqrt(bound / 4000) + 1e-12);
  }
}

TEST_CASE("assumption report flags rare events and validates input") {
  const AssumptionReport r = assumption_report(ProcessSpec::poisson(1.0), {1.0, 4.0}, {0.1}, 100, 1);
  REQUIRE(r.void_curve.size() == 2);
  CHECK(r.void_curve[1].flagged);
  CHECK_THROWS_AS(assumption_report(ProcessSpec::poisson(1.0), {1.0}, {0.1}, 99, 1), ParameterError);
  CHECK_THROWS_AS(assumption_report(ProcessSpec::poisson(1.0), {2.0, 1.0}, {0.1}, 100, 1), ParameterError);
  CHECK_THROWS_AS(assumption_report(ProcessSpec::poisson(1.0), {}, {0.1}, 100, 1), ParameterError);
}

TEST_CASE("pointset serialization round-trips losslessly") {
  PointSet ps = palm_sample(ProcessSpec::hardcore(ProcessKind::matern_hardcore_II, 1.0, 0.2), Box::centered(2, 3.0), 5);
  std::stringstream ss;
  write_pointset(ss, ps);
  const PointSet back = read_pointset(ss);
  CHECK(back.points == ps.points);
  CHECK(back.digest() == ps.digest());
  CHECK(back.palm_conditioned);
  CHECK(back.provenance.seed == ps.provenance.seed);
  CHECK(back.provenance.process == ps.provenance.process);
  std::stringstream bad("garbage\n");
  CHECK_THROWS_AS(read_pointset(bad), ParameterError);
}

TEST_CASE("poisson count sampler") {
  const auto c = sample_poisson_counts(1.0, 4.0, 20000, 3);
  std::vector<double> v(c.begin(), c.end());
  CHECK(std::abs(stats::mean(v) - 4.0) < 3 * stats::standard_error(v));
  CHECK(sample_poisson_counts(1.0, 4.0, 10, 3) == sample_poisson_counts(1.0, 4.0, 10, 3));
}
