#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ldfr/basis.hpp"
#include "ldfr/lfpca.hpp"
#include "ldfr/types.hpp"

namespace ldfr {

enum class Link { identity, logit };

enum class RandomStructure {
  none,
  subject_intercept,
  subject_intercept_slope,
  group_and_subject  // group intercept plus nested subject intercept and slope
};

// Model layout for the time-varying coefficient regression: a shared
// truncated-polynomial basis for the intercept function and every component
// coefficient function, one smoothing parameter for the intercept and one
// common smoothing parameter for the component functions.
struct LdfrModelSpec {
  Link link = Link::identity;
  int degree = 1;
  std::vector<double> knots;
  Interval t_domain;
  int K = 0;
  RandomStructure structure = RandomStructure::none;
  std::vector<std::string> covariate_names;

  int num_knots() const { return static_cast<int>(knots.size()); }
  int num_covariates() const { return static_cast<int>(covariate_names.size()); }
  int subject_dim() const {
    switch (structure) {
      case RandomStructure::none: return 0;
      case RandomStructure::subject_intercept: return 1;
      default: return 2;
    }
  }
  bool has_group() const { return structure == RandomStructure::group_and_subject; }
  SplineBasisSpec basis() const {
    return SplineBasisSpec::truncated(degree, knots, t_domain);
  }
  void validate() const;
};

// Stacked regression design. Fixed block V, spline random blocks Z (u_0..u_K
// contiguous, L columns each), subject/group random block Zb.
struct DesignBlocks {
  Matrix V;
  Matrix Z;
  Matrix Zb;
  std::vector<int> subject_of_row;
  Vector times;
  Matrix loadings;  // N x K, the per-row predicted loadings
  int num_subjects = 0;
  int num_groups = 0;
  std::vector<std::string> subject_ids;
  std::vector<std::string> group_ids;
  std::vector<int> group_of_subject;

  Eigen::Index rows() const { return V.rows(); }
  int v_cols() const { return static_cast<int>(V.cols()); }
  int z_cols() const { return static_cast<int>(Z.cols()); }
  int zb_cols() const { return static_cast<int>(Zb.cols()); }
};

struct RegressionData {
  std::vector<Vector> times_by_subject;
  std::vector<Matrix> loadings_by_subject;    // n_i x K
  std::vector<Matrix> covariates_by_subject;  // may be empty
  std::vector<std::string> subject_ids;       // defaults to running index
  std::vector<int> group_of_subject;          // group structure only
  std::vector<std::string> group_ids;
};

DesignBlocks assemble_design(const RegressionData& data, const LdfrModelSpec& spec);

struct FitControl {
  int max_outer = 200;         // working-response iterations, logit link
  double outer_tol = 1e-6;     // relative linear-predictor change
  double inner_tol = 1e-8;     // relative objective change in the optimizer
  int max_optimizer_iter = 600;
  double gradient_tol = 1e-4;  // polish target for the criterion gradient
  double eta_cap = 20.0;       // divergence guard for the logit link
  // When set, variance parameters are held at these values (log scale, same
  // layout as the optimizer) and only the coefficient solve runs.
  std::optional<Vector> fixed_log_params;
};

struct LdfrFit {
  LdfrModelSpec spec;
  Vector beta;        // fixed effects
  Matrix u;           // L x (K+1), columns u_0..u_K
  double lambda0 = 0.0;  // 1/sigma_0^2
  double lambda = 0.0;   // 1/sigma^2, 0 when K = 0
  Matrix D;              // subject random-effect covariance, q x q
  double sigma2_group = 0.0;
  double sigma2_e = 1.0;  // residual variance; dispersion 1 under PQL
  Matrix b;               // num_subjects x q
  Vector b_group;
  Vector eta;             // linear predictor at the data rows
  Vector fitted;          // mean scale
  double edf = 0.0;
  double reml = 0.0;          // criterion value at the optimum
  double minus2loglik = 0.0;  // marginal -2 log-likelihood at the optimum
  double aic = 0.0;
  int num_variance_params = 0;
  bool aic_is_working_approx = false;
  bool converged = false;
  int outer_iterations = 0;
  double gradient_norm = 0.0;
  Matrix posterior_cov;  // covariance of [beta; u; b] under the penalized fit

  // bookkeeping mirrored from the design
  int v_cols = 0, z_cols = 0, zb_cols = 0;
  int num_subjects = 0, num_groups = 0;
  std::vector<std::string> subject_ids;
  std::vector<std::string> group_ids;
  std::vector<int> group_of_subject;

  int subject_index(const std::string& id) const;
};

// Thrown when an iteration limit is reached; carries the last iterate.
struct ConvergenceError : Error {
  ConvergenceError(const std::string& msg, LdfrFit last_fit)
      : Error(ErrorKind::convergence, msg), last(std::move(last_fit)) {}
  LdfrFit last;
};

LdfrFit fit_gaussian(const Vector& y, const DesignBlocks& design,
                     const LdfrModelSpec& spec, const FitControl& control = {});

LdfrFit fit_binomial(const Vector& y, const DesignBlocks& design,
                     const LdfrModelSpec& spec, const FitControl& control = {});

double marginal_aic(const LdfrFit& fit);

// Number of variance parameters in the optimizer layout for a spec.
int variance_param_count(const LdfrModelSpec& spec);

// The (restricted) criterion minimized over the log variance parameters, for
// a fixed design and data; exposed so selection can be cross-checked against
// grid search. Gaussian path profiles the dispersion; the weighted path with
// `profile_dispersion = false` holds it at one.
double reml_criterion(const Vector& y, const Vector& weights, const DesignBlocks& design,
                      const LdfrModelSpec& spec, const Vector& log_params,
                      bool profile_dispersion);

// Full-width design row [v | z | zb] at time t for given loadings; subject
// and group indices of -1 zero out the corresponding random-effect columns.
Vector henderson_row(const LdfrFit& fit, double t, const Vector& loadings_at_t,
                     const Vector& covariates, int subject_idx, int group_idx);

// Estimated intercept and component coefficient functions with the induced
// bivariate regression surface.
struct CoefficientSurface {
  SplineBasisSpec basis;
  Vector alpha_coef;   // (p+1)+L
  Matrix beta_coef;    // ((p+1)+L) x K
  Matrix phi;          // eigenfunctions on the s-grid
  Vector s_grid;
  Matrix alpha_cov;    // posterior covariance of the alpha coefficients

  double alpha(double t) const;
  double alpha_se(double t) const;
  double beta_k(int k, double t) const;
  double gamma(double s, double t) const;  // sum_k phi_k(s) beta_k(t)
  Matrix gamma_grid(const Vector& s_points, const Vector& t_points) const;
};

CoefficientSurface estimate_coefficient_surface(const LdfrFit& fit, const MarginalFpca& fpca);

}  // namespace ldfr
