#pragma once

#include "ldfr/basis.hpp"
#include "ldfr/dataset.hpp"
#include "ldfr/types.hpp"

namespace ldfr {

enum class LambdaSelector { gcv, reml, fixed };

struct SelectorSpec {
  LambdaSelector method = LambdaSelector::gcv;
  double fixed_lambda = 0.0;
};

struct PenalizedLsFit {
  Vector coefficients;
  double lambda = 0.0;
  double edf = 0.0;   // trace of the hat matrix
  double rss = 0.0;
  double gcv = 0.0;
};

// Minimize ||y - X theta||^2 + lambda theta' P theta with the smoothing
// parameter chosen by the selector (GCV or REML on a log grid with local
// refinement, or held fixed).
PenalizedLsFit fit_penalized_ls(const Matrix& design, const PenaltyMatrix& penalty,
                                const Vector& y, const SelectorSpec& selector);

// Canonical smoothing-parameter search grid shared by the 1-d selectors.
std::vector<double> lambda_search_grid();

// Tensor-product spline surface f(s,t) = b_s(s)' C b_t(t).
struct SmoothSurface {
  SplineBasisSpec basis_s;
  SplineBasisSpec basis_t;
  Matrix coef;  // num_basis_s x num_basis_t
  double lambda_s = 0.0;
  double lambda_t = 0.0;

  double operator()(double s, double t) const;
  // Surface values at every grid point of `s_points` for a single t.
  Vector eval_at_time(const Vector& s_points, double t) const;
  Matrix eval_grid(const Vector& s_points, const Vector& t_points) const;
};

struct BivariateConfig {
  int num_basis_s = 35;
  int num_basis_t = 35;
  int degree = 3;
  int penalty_order = 2;
  SelectorSpec selector;  // GCV by default
};

// Penalized tensor-product fit of all observed predictor values W_ijr over
// (s_r, t_ij), pooling subjects under working independence.
SmoothSurface fit_bivariate_mean(const LongitudinalFunctionalDataset& data,
                                 const BivariateConfig& config);

// Generic scattered-data version used by the covariance smoothers.
SmoothSurface fit_bivariate_scattered(const std::vector<double>& x1,
                                      const std::vector<double>& x2,
                                      const std::vector<double>& values,
                                      Interval domain1, Interval domain2,
                                      const BivariateConfig& config,
                                      bool tie_lambdas = false);

// Symmetric smooth surface over a shared grid.
struct CovarianceSurface {
  SmoothSurface surface;
  Matrix grid_values;  // symmetrized evaluation on the fitting grid
  Vector grid;
  double operator()(double a, double b) const {
    return 0.5 * (surface(a, b) + surface(b, a));
  }
};

struct CovarianceSmoothResult {
  CovarianceSurface cov;
  double sigma2_white = 0.0;  // diagonal nugget estimate, floored at zero
  bool floored = false;
};

// Smooth the off-diagonal entries of a raw covariance matrix on `grid`;
// the nugget variance is the average raw-minus-smooth diagonal gap over the
// central half of the grid.
CovarianceSmoothResult smooth_covariance_surface(const Matrix& raw, const Vector& grid,
                                                 const BivariateConfig& config,
                                                 bool exclude_diagonal = true);

}  // namespace ldfr
