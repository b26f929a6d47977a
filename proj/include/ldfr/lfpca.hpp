#pragma once

#include "ldfr/basis.hpp"
#include "ldfr/dataset.hpp"
#include "ldfr/smoothing.hpp"

namespace ldfr {

// Marginal eigenbasis of the predictor process: mean surface, orthonormal
// eigenfunctions on the s-grid, eigenvalues, truncation by proportion of
// variance explained, and the white-noise variance of the measurements.
struct MarginalFpca {
  SmoothSurface tau;
  Vector s_grid;
  QuadratureRule quad;
  Matrix phi;      // R x K, orthonormal under the quadrature rule
  Vector lambda;   // K, nonincreasing, positive
  int K = 0;
  double pve = 0.95;
  double sigma2_white = 0.0;
};

// Pooled second-moment matrix of the demeaned curves:
// Xi(r, r') = sum_ij Wd_ijr Wd_ijr' / sum_i n_i.
Matrix pooled_covariance(const LongitudinalFunctionalDataset& data, const SmoothSurface& tau);

struct EigenBasis {
  Matrix phi;
  Vector lambda;
  int K = 0;
};

// Eigendecomposition of a covariance matrix on a grid in the quadrature
// metric, so the returned eigenfunctions are orthonormal in L2. Negative
// eigenvalues are dropped; K is the smallest truncation reaching `pve`.
// Sign convention: positive grid sum, ties broken by the first non-zero
// coordinate.
EigenBasis eigendecompose(const Matrix& cov, double pve, const QuadratureRule& quad);

// Loadings of the demeaned curves on the eigenfunctions, by numerical
// integration; one value per visit per retained component.
struct RawScores {
  std::vector<Matrix> by_subject;  // n_i x K
};
RawScores compute_raw_scores(const LongitudinalFunctionalDataset& data,
                             const MarginalFpca& fpca);

struct ScoreProcessConfig {
  int grid_size = 41;
  double pve = 0.95;
  BivariateConfig smoother;
};

// Random-curve model for the loadings of one component over visit time:
// covariance eigenpairs, score-noise variance, and per-subject predicted
// coefficients via conditional expectation.
struct ScoreProcess {
  int component = 0;
  Vector t_grid;
  QuadratureRule quad;
  Matrix psi;      // grid x L
  Vector eta;      // L
  double sigma2 = 0.0;
  Matrix g_hat;    // smoothed covariance on t_grid
  Matrix zeta;     // I x L, training-subject coefficients
  int L() const { return static_cast<int>(eta.size()); }

  // psi columns at an arbitrary time, linear interpolation along the grid.
  Vector psi_at(double t) const;
  // Conditional-expectation coefficients given noisy scores at `times`.
  Vector blup(const Vector& times, const Vector& scores) const;
  Vector trajectory(const Vector& zeta_coef, const Vector& t_eval) const;
};

ScoreProcess fit_score_process(const std::vector<Vector>& times_by_subject,
                               const std::vector<Vector>& scores_by_subject,
                               int component, Interval t_domain,
                               const ScoreProcessConfig& config);

// Predicted loading trajectory for one subject's observed raw scores.
Vector predict_score_trajectory(const ScoreProcess& process, const Vector& times,
                                const Vector& scores, const Vector& t_eval);

struct FpcaConfig {
  double pve = 0.95;
  BivariateConfig mean_smoother;
  BivariateConfig cov_smoother;
};

// Full covariate preprocessing: mean surface, smoothed marginal covariance,
// eigenbasis with PVE truncation.
MarginalFpca fit_marginal_fpca(const LongitudinalFunctionalDataset& data,
                               const FpcaConfig& config);

}  // namespace ldfr
