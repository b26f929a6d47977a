#include "ldfr/basis.hpp"

#include <algorithm>
#include <cmath>

namespace ldfr {

void SplineBasisSpec::validate() const {
  if (degree < 0) fail(ErrorKind::spec, "spline degree must be >= 0");
  if (!(domain.hi > domain.lo)) fail(ErrorKind::spec, "empty basis domain");
  for (std::size_t l = 0; l < knots.size(); ++l) {
    if (l > 0 && !(knots[l] > knots[l - 1]))
      fail(ErrorKind::spec, "knots must be strictly increasing");
    if (!(knots[l] > domain.lo && knots[l] < domain.hi))
      fail(ErrorKind::spec, "knots must lie strictly inside the domain");
  }
  if (kind == SplineKind::bspline && num_basis() < degree + 1)
    fail(ErrorKind::spec, "B-spline basis needs at least degree+1 functions");
}

SplineBasisSpec SplineBasisSpec::truncated(int degree, std::vector<double> knots, Interval domain) {
  SplineBasisSpec s;
  s.kind = SplineKind::truncated_polynomial;
  s.degree = degree;
  s.knots = std::move(knots);
  s.domain = domain;
  s.validate();
  return s;
}

SplineBasisSpec SplineBasisSpec::bspline(int degree, int num_basis, Interval domain) {
  SplineBasisSpec s;
  s.kind = SplineKind::bspline;
  s.degree = degree;
  s.domain = domain;
  int interior = num_basis - degree - 1;
  if (interior < 0) fail(ErrorKind::spec, "B-spline basis needs at least degree+1 functions");
  s.knots.resize(interior);
  for (int l = 0; l < interior; ++l)
    s.knots[l] = domain.lo + domain.length() * (l + 1) / (interior + 1);
  s.validate();
  return s;
}

std::vector<double> quantile_knots(std::vector<double> points, int count) {
  if (points.empty()) fail(ErrorKind::data, "no points for knot placement");
  if (count < 1) fail(ErrorKind::spec, "knot count must be >= 1");
  std::sort(points.begin(), points.end());
  const double lo = points.front(), hi = points.back();
  std::vector<double> knots(count);
  const double n = static_cast<double>(points.size());
  for (int l = 0; l < count; ++l) {
    double q = (l + 1.0) / (count + 1.0);
    double pos = q * (n - 1.0);
    auto idx = static_cast<std::size_t>(std::floor(pos));
    double frac = pos - static_cast<double>(idx);
    double v = (idx + 1 < points.size())
                   ? points[idx] * (1.0 - frac) + points[idx + 1] * frac
                   : points[idx];
    // keep knots strictly interior and strictly increasing
    double eps = 1e-10 * std::max(1.0, hi - lo);
    v = std::min(std::max(v, lo + eps), hi - eps);
    if (l > 0 && v <= knots[l - 1]) v = knots[l - 1] + eps;
    knots[l] = v;
  }
  return knots;
}

QuadratureRule QuadratureRule::trapezoid(const Vector& grid) {
  const auto n = grid.size();
  if (n < 2) fail(ErrorKind::spec, "trapezoid rule needs at least two points");
  for (Eigen::Index r = 1; r < n; ++r)
    if (!(grid[r] > grid[r - 1])) fail(ErrorKind::spec, "quadrature grid must be increasing");
  QuadratureRule rule;
  rule.points = grid;
  rule.weights = Vector::Zero(n);
  for (Eigen::Index r = 0; r + 1 < n; ++r) {
    double h = 0.5 * (grid[r + 1] - grid[r]);
    rule.weights[r] += h;
    rule.weights[r + 1] += h;
  }
  return rule;
}

Vector truncated_polynomial_row(double t, const SplineBasisSpec& spec) {
  if (!spec.domain.contains(t)) fail(ErrorKind::domain, "time outside basis domain");
  const int p = spec.degree;
  const int L = static_cast<int>(spec.knots.size());
  Vector row(p + 1 + L);
  double tp = 1.0;
  for (int j = 0; j <= p; ++j) {
    row[j] = tp;
    tp *= t;
  }
  for (int l = 0; l < L; ++l) {
    double d = t - spec.knots[l];
    row[p + 1 + l] = d > 0.0 ? std::pow(d, p) : 0.0;
  }
  return row;
}

Matrix truncated_polynomial_design(const Vector& times, const SplineBasisSpec& spec) {
  spec.validate();
  Matrix X(times.size(), spec.num_basis());
  for (Eigen::Index i = 0; i < times.size(); ++i)
    X.row(i) = truncated_polynomial_row(times[i], spec).transpose();
  return X;
}

namespace {

// Full clamped knot vector: lo repeated degree+1 times, interior knots,
// hi repeated degree+1 times.
std::vector<double> clamped_knots(const SplineBasisSpec& spec) {
  const int p = spec.degree;
  std::vector<double> t;
  t.reserve(spec.knots.size() + 2 * (p + 1));
  for (int j = 0; j <= p; ++j) t.push_back(spec.domain.lo);
  for (double k : spec.knots) t.push_back(k);
  for (int j = 0; j <= p; ++j) t.push_back(spec.domain.hi);
  return t;
}

}  // namespace

int bspline_band(double x, const SplineBasisSpec& spec, double* values) {
  if (!spec.domain.contains(x)) fail(ErrorKind::domain, "point outside basis domain");
  const int p = spec.degree;
  const int nb = spec.num_basis();
  const std::vector<double> t = clamped_knots(spec);

  // knot span index: largest i with t[i] <= x < t[i+1]; right boundary maps
  // to the last non-degenerate span.
  int span;
  if (x >= spec.domain.hi) {
    span = nb - 1;
  } else {
    span = static_cast<int>(std::upper_bound(t.begin() + p, t.begin() + nb + 1,
                                             std::max(x, spec.domain.lo)) -
                            t.begin()) - 1;
    span = std::min(std::max(span, p), nb - 1);
  }

  // Cox-de Boor triangular scheme over the p+1 active functions.
  std::vector<double> left(p + 1), right(p + 1);
  values[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - t[span + 1 - j];
    right[j] = t[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      double denom = right[r + 1] + left[j - r];
      double tmp = denom > 0.0 ? values[r] / denom : 0.0;
      values[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    values[j] = saved;
  }
  return span - p;
}

Vector bspline_row(double x, const SplineBasisSpec& spec) {
  Vector row = Vector::Zero(spec.num_basis());
  std::vector<double> band(spec.degree + 1);
  int first = bspline_band(x, spec, band.data());
  for (int j = 0; j <= spec.degree; ++j) row[first + j] = band[j];
  return row;
}

Matrix bspline_design(const Vector& points, const SplineBasisSpec& spec) {
  spec.validate();
  Matrix X = Matrix::Zero(points.size(), spec.num_basis());
  std::vector<double> band(spec.degree + 1);
  for (Eigen::Index i = 0; i < points.size(); ++i) {
    int first = bspline_band(points[i], spec, band.data());
    for (int j = 0; j <= spec.degree; ++j) X(i, first + j) = band[j];
  }
  return X;
}

PenaltyMatrix difference_penalty(int num_basis, int order) {
  if (order < 1 || num_basis <= order)
    fail(ErrorKind::spec, "difference penalty needs num_basis > order >= 1");
  Matrix D = Matrix::Zero(num_basis - order, num_basis);
  // binomial coefficients with alternating signs
  std::vector<double> c(order + 1);
  for (int j = 0; j <= order; ++j) {
    double binom = 1.0;
    for (int m = 0; m < j; ++m) binom = binom * (order - m) / (m + 1);
    c[j] = ((order - j) % 2 == 0 ? 1.0 : -1.0) * binom;
  }
  for (int i = 0; i + order < num_basis; ++i)
    for (int j = 0; j <= order; ++j) D(i, i + j) = c[j];
  PenaltyMatrix P;
  P.mat = D.transpose() * D;
  P.order = order;
  return P;
}

PenaltyMatrix ridge_penalty(const SplineBasisSpec& spec) {
  const int p = spec.degree;
  const int nb = spec.num_basis();
  PenaltyMatrix P;
  P.mat = Matrix::Zero(nb, nb);
  for (int j = p + 1; j < nb; ++j) P.mat(j, j) = 1.0;
  P.ridge = true;
  return P;
}

Vector tensor_product_design(const Vector& row_s, const Vector& row_t) {
  if (row_s.size() == 0 || row_t.size() == 0)
    fail(ErrorKind::dimension, "tensor product of empty rows");
  Vector out(row_s.size() * row_t.size());
  for (Eigen::Index a = 0; a < row_s.size(); ++a)
    for (Eigen::Index b = 0; b < row_t.size(); ++b)
      out[a * row_t.size() + b] = row_s[a] * row_t[b];
  return out;
}

double inner_product(const Vector& f, const Vector& g, const QuadratureRule& rule) {
  if (f.size() != g.size() || f.size() != rule.weights.size())
    fail(ErrorKind::dimension, "inner_product length mismatch");
  return (f.array() * g.array() * rule.weights.array()).sum();
}

}  // namespace ldfr
