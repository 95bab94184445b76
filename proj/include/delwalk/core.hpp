#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace delwalk {

inline constexpr int kMaxDim = 3;

// Fixed-capacity coordinate vector; components beyond the active
// dimension are kept at zero.
using Vec = std::array<double, kMaxDim>;

inline double dot(const Vec& a, const Vec& b, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) s += a[i] * b[i];
  return s;
}

inline double dist2(const Vec& a, const Vec& b, int dim) {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

inline double dist(const Vec& a, const Vec& b, int dim) { return std::sqrt(dist2(a, b, dim)); }

inline double norm(const Vec& a, int dim) { return std::sqrt(dot(a, a, dim)); }

/// Axis-aligned box [lo, hi] in `dim` dimensions.
struct Box {
  int dim = 2;
  Vec lo{};
  Vec hi{};

  static Box centered(int dim, double half_width) {
    Box b;
    b.dim = dim;
    for (int i = 0; i < dim; ++i) {
      b.lo[i] = -half_width;
      b.hi[i] = half_width;
    }
    return b;
  }

  double side(int axis) const { return hi[axis] - lo[axis]; }

  double volume() const {
    double v = 1.0;
    for (int i = 0; i < dim; ++i) v *= side(i);
    return v;
  }

  double max_side() const {
    double m = 0.0;
    for (int i = 0; i < dim; ++i) m = std::max(m, side(i));
    return m;
  }

  bool nondegenerate() const {
    if (dim < 2 || dim > kMaxDim) return false;
    for (int i = 0; i < dim; ++i)
      if (!(hi[i] > lo[i])) return false;
    return true;
  }

  bool contains(const Vec& p) const {
    for (int i = 0; i < dim; ++i)
      if (p[i] < lo[i] || p[i] > hi[i]) return false;
    return true;
  }

  bool contains(const Box& other) const {
    for (int i = 0; i < dim; ++i)
      if (other.lo[i] < lo[i] || other.hi[i] > hi[i]) return false;
    return true;
  }

  bool intersects(const Box& other) const {
    for (int i = 0; i < dim; ++i)
      if (other.hi[i] < lo[i] || other.lo[i] > hi[i]) return false;
    return true;
  }

  // Squared distance from p to the box (0 inside).
  double dist2_to(const Vec& p) const {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) {
      double t = 0.0;
      if (p[i] < lo[i]) t = lo[i] - p[i];
      if (p[i] > hi[i]) t = p[i] - hi[i];
      s += t * t;
    }
    return s;
  }

  Box padded(double margin) const {
    Box b = *this;
    for (int i = 0; i < dim; ++i) {
      b.lo[i] -= margin;
      b.hi[i] += margin;
    }
    return b;
  }
};

// Error hierarchy. Each module throws the most specific type; callers that
// only care about failure catch delwalk::Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class ConfigurationError : public Error {
 public:
  using Error::Error;
};

class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class WalkError : public Error {
 public:
  using Error::Error;
};

class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, int hole_id) : Error(what), hole_id_(hole_id) {}
  int hole_id() const { return hole_id_; }

 private:
  int hole_id_;
};

class SingularSystemError : public Error {
 public:
  using Error::Error;
};

class SamplingFailure : public Error {
 public:
  SamplingFailure(const std::string& what, int attempts) : Error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

class ResourceError : public Error {
 public:
  ResourceError(const std::string& what, double suggested_cap)
      : Error(what), suggested_cap_(suggested_cap) {}
  double suggested_cap() const { return suggested_cap_; }

 private:
  double suggested_cap_;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class DependencyError : public Error {
 public:
  using Error::Error;
};

// Seed handling: every stochastic routine takes an explicit 64-bit seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Per-stage seed: hash of (master seed, stage name, repetition index).
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stage, std::uint64_t rep = 0) {
  return splitmix64(splitmix64(master) ^ fnv1a(stage) ^ splitmix64(rep + 0x632be59bd9b4e019ULL));
}

}  // namespace delwalk
