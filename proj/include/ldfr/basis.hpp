#pragma once

#include <vector>

#include "ldfr/types.hpp"

namespace ldfr {

enum class SplineKind { truncated_polynomial, bspline };

// Specification of a univariate spline basis on a closed interval.
// Knots are interior knots, strictly increasing and strictly inside the domain.
struct SplineBasisSpec {
  SplineKind kind = SplineKind::truncated_polynomial;
  int degree = 1;
  std::vector<double> knots;
  Interval domain;

  int num_basis() const { return degree + 1 + static_cast<int>(knots.size()); }
  void validate() const;

  static SplineBasisSpec truncated(int degree, std::vector<double> knots, Interval domain);
  // B-spline basis with clamped boundary knots and equispaced interior knots,
  // sized so that the basis has `num_basis` functions.
  static SplineBasisSpec bspline(int degree, int num_basis, Interval domain);
};

// Interior knots at equispaced quantiles of the observed points.
std::vector<double> quantile_knots(std::vector<double> points, int count);

// Symmetric positive-semidefinite quadratic-form matrix used to penalize
// spline coefficients. `order` is the difference order (B-spline case);
// `ridge` marks the truncated-polynomial identity-on-spline-block penalty.
struct PenaltyMatrix {
  Matrix mat;
  int order = 0;
  bool ridge = false;
};

struct QuadratureRule {
  Vector points;
  Vector weights;
  static QuadratureRule trapezoid(const Vector& grid);
  double domain_length() const { return weights.sum(); }
};

// Row for time t: [1, t, ..., t^p, (t-k_1)_+^p, ..., (t-k_L)_+^p].
Matrix truncated_polynomial_design(const Vector& times, const SplineBasisSpec& spec);
Vector truncated_polynomial_row(double t, const SplineBasisSpec& spec);

// Rows of B-spline evaluations; each row sums to one.
Matrix bspline_design(const Vector& points, const SplineBasisSpec& spec);
Vector bspline_row(double x, const SplineBasisSpec& spec);
// Banded evaluation: writes the degree+1 non-zero values into `values` and
// returns the index of the first active basis function.
int bspline_band(double x, const SplineBasisSpec& spec, double* values);

// P = D^T D for the order-d difference operator on `num_basis` coefficients.
PenaltyMatrix difference_penalty(int num_basis, int order);

// Identity on the truncated-power block, zero on the polynomial block.
PenaltyMatrix ridge_penalty(const SplineBasisSpec& spec);

// Kronecker product of two design rows.
Vector tensor_product_design(const Vector& row_s, const Vector& row_t);

// Trapezoidal approximation of the L2 inner product of f and g.
double inner_product(const Vector& f, const Vector& g, const QuadratureRule& rule);

}  // namespace ldfr
