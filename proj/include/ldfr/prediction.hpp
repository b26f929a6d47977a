#pragma once

#include "ldfr/lfpca.hpp"
#include "ldfr/regression.hpp"

namespace ldfr {

enum class SubjectKind { existing, fresh };

struct TrajectoryPrediction {
  Vector times;
  Vector linear;     // linear predictor
  Vector mean;       // predicted mean response
  Vector response;   // identity link: mean; logit link: 0/1 class
  SubjectKind kind = SubjectKind::existing;
  Matrix c_rows;     // full design rows, for the fit-variance term
  Matrix zb_rows;    // fresh subjects: random design rows for the prior term
};

// Mean-response trajectory for a training subject, combining the estimated
// coefficient functions, the subject's predicted loading trajectories, and
// its random effects.
TrajectoryPrediction predict_existing(const LdfrFit& fit, const MarginalFpca& fpca,
                                      const std::vector<ScoreProcess>& processes,
                                      const std::string& subject_id, const Vector& t_eval,
                                      const Matrix& covariates = Matrix());

// Trajectory for a subject outside the training data: curves are demeaned,
// projected to raw scores, and run through the trained score processes; no
// subject random effect enters the predictor.
TrajectoryPrediction predict_new(const LdfrFit& fit, const MarginalFpca& fpca,
                                 const std::vector<ScoreProcess>& processes,
                                 const Matrix& curves, const Vector& times,
                                 const Vector& t_eval, const Matrix& covariates = Matrix());

struct PredictionBand {
  double level = 0.95;
  Vector times;
  Vector center;
  Vector se;      // standard error of (predicted minus realized) response
  Vector lower;
  Vector upper;
};

// Pointwise band center +/- z * SE with
//   SE^2 = Var(fit part) + sigma_e^2,
// where the fit part uses the penalized-fit covariance of [beta; u; b]; for a
// fresh subject the unobservable random effect contributes its prior variance
// through D instead. Identity link only.
PredictionBand prediction_band(const LdfrFit& fit, const TrajectoryPrediction& pred,
                               double level);

// Inverse standard-normal CDF (rational approximation with one correction
// step; accurate well beyond 1e-8).
double normal_quantile(double p);

}  // namespace ldfr
