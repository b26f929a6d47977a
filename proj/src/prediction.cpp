#include "ldfr/prediction.hpp"

#include <cmath>

namespace ldfr {

namespace {

// Coefficient stack in the design order [beta | u_0..u_K | group | subjects].
Vector full_theta(const LdfrFit& fit) {
  Vector theta(fit.v_cols + fit.z_cols + fit.zb_cols);
  theta.head(fit.v_cols) = fit.beta;
  const int L = fit.spec.num_knots();
  for (int k = 0; k <= fit.spec.K; ++k)
    theta.segment(fit.v_cols + k * L, L) = fit.u.col(k);
  int off = fit.v_cols + fit.z_cols;
  for (int g = 0; g < fit.num_groups; ++g) theta[off + g] = fit.b_group[g];
  off += fit.num_groups;
  const int q = fit.spec.subject_dim();
  for (int i = 0; i < fit.num_subjects; ++i)
    for (int j = 0; j < q; ++j) theta[off + i * q + j] = fit.b(i, j);
  return theta;
}

Vector covariate_row(const Matrix& covariates, Eigen::Index j, int expected) {
  if (expected == 0) return Vector();
  if (covariates.rows() == 0)
    fail(ErrorKind::data, "model has covariates; evaluation values required");
  if (covariates.cols() != expected)
    fail(ErrorKind::dimension, "covariate columns do not match the model");
  return covariates.row(j).transpose();
}

TrajectoryPrediction assemble(const LdfrFit& fit, const Vector& t_eval,
                              const Matrix& loadings, const Matrix& covariates,
                              int subject_idx, int group_idx, SubjectKind kind) {
  const Vector theta = full_theta(fit);
  TrajectoryPrediction out;
  out.times = t_eval;
  out.kind = kind;
  out.linear = Vector(t_eval.size());
  out.mean = Vector(t_eval.size());
  out.response = Vector(t_eval.size());
  out.c_rows = Matrix(t_eval.size(), theta.size());
  const int q = fit.spec.subject_dim();
  out.zb_rows = Matrix::Zero(t_eval.size(), kind == SubjectKind::fresh ? q : 0);

  for (Eigen::Index j = 0; j < t_eval.size(); ++j) {
    Vector cov = covariate_row(covariates, j, fit.spec.num_covariates());
    Vector row = henderson_row(fit, t_eval[j], loadings.row(j).transpose(), cov,
                               subject_idx, group_idx);
    out.c_rows.row(j) = row.transpose();
    double eta = row.dot(theta);
    out.linear[j] = eta;
    if (fit.spec.link == Link::identity) {
      out.mean[j] = eta;
      out.response[j] = eta;
    } else {
      double mu = 1.0 / (1.0 + std::exp(-eta));
      out.mean[j] = mu;
      out.response[j] = mu >= 0.5 ? 1.0 : 0.0;
    }
    if (kind == SubjectKind::fresh && q > 0) {
      out.zb_rows(j, 0) = 1.0;
      if (q > 1) out.zb_rows(j, 1) = t_eval[j];
    }
  }
  return out;
}

}  // namespace

TrajectoryPrediction predict_existing(const LdfrFit& fit, const MarginalFpca& fpca,
                                      const std::vector<ScoreProcess>& processes,
                                      const std::string& subject_id, const Vector& t_eval,
                                      const Matrix& covariates) {
  if (static_cast<int>(processes.size()) != fit.spec.K)
    fail(ErrorKind::dimension, "score processes do not match the model order");
  const int idx = fit.subject_index(subject_id);
  const int gidx = fit.group_of_subject.empty() ? -1 : fit.group_of_subject[idx];

  Matrix loadings(t_eval.size(), fit.spec.K);
  for (int k = 0; k < fit.spec.K; ++k)
    loadings.col(k) = processes[k].trajectory(processes[k].zeta.row(idx).transpose(), t_eval);
  (void)fpca;
  return assemble(fit, t_eval, loadings, covariates, idx, gidx, SubjectKind::existing);
}

TrajectoryPrediction predict_new(const LdfrFit& fit, const MarginalFpca& fpca,
                                 const std::vector<ScoreProcess>& processes,
                                 const Matrix& curves, const Vector& times,
                                 const Vector& t_eval, const Matrix& covariates) {
  if (static_cast<int>(processes.size()) != fit.spec.K)
    fail(ErrorKind::dimension, "score processes do not match the model order");
  if (curves.cols() != fpca.s_grid.size())
    fail(ErrorKind::dimension, "curves are not on the training grid");
  if (curves.rows() != times.size())
    fail(ErrorKind::dimension, "one curve per observation time required");

  // raw scores of the demeaned curves, then conditional-expectation loadings
  Matrix phi_w = fpca.quad.weights.asDiagonal() * fpca.phi;
  Matrix scores(times.size(), fpca.K);
  for (Eigen::Index j = 0; j < times.size(); ++j) {
    Vector centered = curves.row(j).transpose() - fpca.tau.eval_at_time(fpca.s_grid, times[j]);
    scores.row(j) = (phi_w.transpose() * centered).transpose();
  }
  Matrix loadings(t_eval.size(), fit.spec.K);
  for (int k = 0; k < fit.spec.K; ++k) {
    Vector zeta = processes[k].blup(times, scores.col(k));
    loadings.col(k) = processes[k].trajectory(zeta, t_eval);
  }
  return assemble(fit, t_eval, loadings, covariates, -1, -1, SubjectKind::fresh);
}

PredictionBand prediction_band(const LdfrFit& fit, const TrajectoryPrediction& pred,
                               double level) {
  if (fit.spec.link != Link::identity)
    fail(ErrorKind::unsupported, "prediction bands are available for the identity link only");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorKind::spec, "band level must lie in (0, 1)");

  PredictionBand band;
  band.level = level;
  band.times = pred.times;
  band.center = pred.mean;
  band.se = Vector(pred.times.size());
  const double z = normal_quantile(1.0 - 0.5 * (1.0 - level));
  for (Eigen::Index j = 0; j < pred.times.size(); ++j) {
    Vector c = pred.c_rows.row(j).transpose();
    double var = c.dot(fit.posterior_cov * c) + fit.sigma2_e;
    if (pred.kind == SubjectKind::fresh && pred.zb_rows.cols() > 0) {
      Vector zb = pred.zb_rows.row(j).transpose();
      var += zb.dot(fit.D * zb);
      if (fit.spec.has_group()) var += fit.sigma2_group;
    }
    band.se[j] = std::sqrt(std::max(var, 0.0));
  }
  band.lower = band.center - z * band.se;
  band.upper = band.center + z * band.se;
  return band;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::domain, "quantile argument must lie in (0, 1)");
  // rational approximation (Acklam), then one Halley step against erfc
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p > 1.0 - plow) {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

}  // namespace ldfr
