#pragma once

#include "ldfr/dataset.hpp"
#include "ldfr/prediction.hpp"

namespace ldfr {

// Settings for the full estimation pipeline: covariate preprocessing,
// loading-trajectory models, and the penalized regression fit.
struct PipelineConfig {
  double pve = 0.95;
  BivariateConfig mean_smoother;
  BivariateConfig cov_smoother;
  ScoreProcessConfig score;
  int num_knots = 15;
  int degree = 1;
  RandomStructure structure = RandomStructure::subject_intercept;
  Link link = Link::identity;
  FitControl control;

  // Smaller smoother bases for fast repeated fits in simulations.
  static PipelineConfig desk_scale();
};

struct LdfrModel {
  MarginalFpca fpca;
  std::vector<ScoreProcess> processes;
  LdfrFit fit;
  CoefficientSurface surface;

  // Predicted loading trajectories for a training subject.
  Matrix loadings_at(int subject_idx, const Vector& t_eval) const;

  TrajectoryPrediction predict_subject(const std::string& id, const Vector& t_eval,
                                       const Matrix& covariates = Matrix()) const {
    return predict_existing(fit, fpca, processes, id, t_eval, covariates);
  }
  TrajectoryPrediction predict_new_subject(const Matrix& curves, const Vector& times,
                                           const Vector& t_eval,
                                           const Matrix& covariates = Matrix()) const {
    return predict_new(fit, fpca, processes, curves, times, t_eval, covariates);
  }
};

LdfrModel fit_ldfr(const LongitudinalFunctionalDataset& data, const PipelineConfig& config);

}  // namespace ldfr
