#include <gmpxx.h>

#include <cmath>

#include "delwalk/geometry.hpp"

namespace delwalk {

namespace {

constexpr int kMaxN = kMaxDim + 1;

template <typename T>
using Mat = std::array<std::array<T, kMaxN>, kMaxN>;

// Laplace expansion along the first row over the active columns.
template <typename T>
T det_rec(const Mat<T>& m, int n, int row, unsigned cols) {
  if (row == n - 1) {
    for (int c = 0; c < n; ++c)
      if (cols & (1u << c)) return m[row][c];
  }
  T acc = 0;
  int sign = 1;
  for (int c = 0; c < n; ++c) {
    if (!(cols & (1u << c))) continue;
    T minor = det_rec(m, n, row + 1, cols & ~(1u << c));
    if (sign > 0)
      acc += m[row][c] * minor;
    else
      acc -= m[row][c] * minor;
    sign = -sign;
  }
  return acc;
}

// Same expansion with absolute values: bounds the magnitude of rounding error.
double perm_rec(const Mat<double>& m, int n, int row, unsigned cols) {
  if (row == n - 1) {
    for (int c = 0; c < n; ++c)
      if (cols & (1u << c)) return std::abs(m[row][c]);
  }
  double acc = 0.0;
  for (int c = 0; c < n; ++c) {
    if (!(cols & (1u << c))) continue;
    acc += std::abs(m[row][c]) * perm_rec(m, n, row + 1, cols & ~(1u << c));
  }
  return acc;
}

constexpr double kFilterRelative = 1e-10;

int sgn(double v) { return (v > 0) - (v < 0); }

int orient_double(int dim, std::span<const Vec* const> p, double& det) {
  Mat<double> m{};
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m[i][j] = (*p[i + 1])[j] - (*p[0])[j];
  det = det_rec(m, dim, 0, (1u << dim) - 1);
  const double bound = perm_rec(m, dim, 0, (1u << dim) - 1);
  if (std::abs(det) > kFilterRelative * bound) return sgn(det);
  return 2;  // undecided
}

int orient_exact(int dim, std::span<const Vec* const> p) {
  Mat<mpq_class> m;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m[i][j] = mpq_class((*p[i + 1])[j]) - mpq_class((*p[0])[j]);
  const mpq_class d = det_rec(m, dim, 0, (1u << dim) - 1);
  return sgn(d);
}

int lifted_sign(int dim, std::span<const Vec* const> s, const Vec& q) {
  const int n = dim + 1;
  Mat<double> m{};
  for (int i = 0; i < n; ++i) {
    double sq = 0.0;
    for (int j = 0; j < dim; ++j) {
      m[i][j] = (*s[i])[j] - q[j];
      sq += m[i][j] * m[i][j];
    }
    m[i][dim] = sq;
  }
  const unsigned all = (1u << n) - 1;
  const double det = det_rec(m, n, 0, all);
  const double bound = perm_rec(m, n, 0, all);
  if (std::abs(det) > kFilterRelative * bound) return sgn(det);

  Mat<mpq_class> e;
  for (int i = 0; i < n; ++i) {
    mpq_class sq = 0;
    for (int j = 0; j < dim; ++j) {
      e[i][j] = mpq_class((*s[i])[j]) - mpq_class(q[j]);
      sq += e[i][j] * e[i][j];
    }
    e[i][dim] = sq;
  }
  return sgn(det_rec(e, n, 0, all));
}

// Sign convention of the lifted determinant for a positively oriented
// simplex and an interior query point, per dimension.
int lifted_convention(int dim) {
  static const std::array<int, kMaxDim + 1> conv = [] {
    std::array<int, kMaxDim + 1> c{};
    for (int d = 2; d <= kMaxDim; ++d) {
      std::array<Vec, kMaxN> pts{};
      Vec centroid{};
      for (int i = 1; i <= d; ++i) pts[i][i - 1] = 1.0;
      for (int i = 0; i <= d; ++i)
        for (int j = 0; j < d; ++j) centroid[j] += pts[i][j] / (d + 1);
      std::array<const Vec*, kMaxN> ptr{};
      for (int i = 0; i <= d; ++i) ptr[i] = &pts[i];
      double det = 0.0;
      const int o = orient_double(d, {ptr.data(), static_cast<std::size_t>(d + 1)}, det);
      const int l = lifted_sign(d, {ptr.data(), static_cast<std::size_t>(d + 1)}, centroid);
      c[d] = o * l;
    }
    return c;
  }();
  return conv[dim];
}

}  // namespace

int orient_sign(int dim, std::span<const Vec* const> pts) {
  double det = 0.0;
  const int s = orient_double(dim, pts, det);
  return s != 2 ? s : orient_exact(dim, pts);
}

namespace detail {
int insphere_sign_positive(int dim, std::span<const Vec* const> simplex, const Vec& q) {
  return lifted_sign(dim, simplex, q) * lifted_convention(dim);
}
}  // namespace detail

int insphere_sign(int dim, std::span<const Vec* const> simplex, const Vec& q) {
  const int o = orient_sign(dim, simplex);
  if (o == 0) return 0;
  return lifted_sign(dim, simplex, q) * o * lifted_convention(dim);
}

}  // namespace delwalk
