#include "ldfr/regression.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace ldfr {

void LdfrModelSpec::validate() const {
  if (degree < 1) fail(ErrorKind::spec, "regression basis needs degree >= 1");
  if (knots.empty()) fail(ErrorKind::spec, "regression basis needs at least one knot");
  if (K < 0) fail(ErrorKind::spec, "K must be nonnegative");
  basis();  // validates knot ordering and placement
}

DesignBlocks assemble_design(const RegressionData& data, const LdfrModelSpec& spec) {
  spec.validate();
  const int I = static_cast<int>(data.times_by_subject.size());
  if (I == 0) fail(ErrorKind::data, "no subjects in regression data");
  if (data.loadings_by_subject.size() != static_cast<std::size_t>(I))
    fail(ErrorKind::dimension, "loadings do not match subjects");

  const int p = spec.degree;
  const int K = spec.K;
  const int L = spec.num_knots();
  const int c = spec.num_covariates();
  const int q = spec.subject_dim();
  const SplineBasisSpec basis = spec.basis();

  int num_groups = 0;
  if (spec.has_group()) {
    if (data.group_of_subject.size() != static_cast<std::size_t>(I))
      fail(ErrorKind::data, "group structure requires a group index per subject");
    for (int g : data.group_of_subject) num_groups = std::max(num_groups, g + 1);
  }

  Eigen::Index N = 0;
  for (const auto& t : data.times_by_subject) N += t.size();
  if (N == 0) fail(ErrorKind::data, "no observations in regression data");

  DesignBlocks d;
  d.V = Matrix::Zero(N, (p + 1) * (K + 1) + c);
  d.Z = Matrix::Zero(N, L * (K + 1));
  d.Zb = Matrix::Zero(N, num_groups + I * q);
  d.times = Vector(N);
  d.loadings = Matrix::Zero(N, K);
  d.subject_of_row.resize(N);
  d.num_subjects = I;
  d.num_groups = num_groups;
  d.group_of_subject = data.group_of_subject;
  d.group_ids = data.group_ids;
  if (!data.subject_ids.empty()) {
    d.subject_ids = data.subject_ids;
  } else {
    for (int i = 0; i < I; ++i) d.subject_ids.push_back(std::to_string(i));
  }

  Eigen::Index row = 0;
  for (int i = 0; i < I; ++i) {
    const Vector& times = data.times_by_subject[i];
    const Matrix& loadings = data.loadings_by_subject[i];
    if (loadings.rows() != times.size() || loadings.cols() != K)
      fail(ErrorKind::data, "missing loadings for subject " + d.subject_ids[i]);
    if (!loadings.allFinite())
      fail(ErrorKind::data, "non-finite loading for subject " + d.subject_ids[i]);
    for (Eigen::Index j = 0; j < times.size(); ++j, ++row) {
      const double t = times[j];
      Vector brow = truncated_polynomial_row(t, basis);  // [poly | truncated]
      for (int k = 0; k <= K; ++k) {
        const double xi = k == 0 ? 1.0 : loadings(j, k - 1);
        d.V.block(row, (p + 1) * k, 1, p + 1) = xi * brow.head(p + 1).transpose();
        d.Z.block(row, L * k, 1, L) = xi * brow.tail(L).transpose();
      }
      if (c > 0) {
        const Matrix& cov = data.covariates_by_subject[i];
        d.V.block(row, (p + 1) * (K + 1), 1, c) = cov.row(j);
      }
      if (q > 0) {
        int off = num_groups + i * q;
        d.Zb(row, off) = 1.0;
        if (q > 1) d.Zb(row, off + 1) = t;
      }
      if (spec.has_group()) d.Zb(row, data.group_of_subject[i]) = 1.0;
      d.times[row] = t;
      if (K > 0) d.loadings.row(row) = loadings.row(j);
      d.subject_of_row[row] = i;
    }
  }
  return d;
}

int variance_param_count(const LdfrModelSpec& spec) {
  int n = 1;                 // u_0 variance
  if (spec.K > 0) ++n;       // shared u_k variance
  if (spec.has_group()) ++n; // group intercept variance
  const int q = spec.subject_dim();
  n += q * (q + 1) / 2;      // log-Cholesky of D
  return n;
}

namespace {

constexpr double kBig = 1e30;

double clamp_log(double x) { return std::min(std::max(x, -40.0), 40.0); }

// Subject covariance from the log-Cholesky parameters.
Matrix d_from_params(const double* p, int q) {
  Matrix Lc = Matrix::Zero(q, q);
  if (q == 1) {
    Lc(0, 0) = std::exp(0.5 * clamp_log(p[0]));
  } else if (q == 2) {
    Lc(0, 0) = std::exp(clamp_log(p[0]));
    Lc(1, 1) = std::exp(clamp_log(p[1]));
    Lc(1, 0) = p[2];
  }
  return Lc * Lc.transpose();
}

double logdet_d_from_params(const double* p, int q) {
  if (q == 1) return clamp_log(p[0]);
  return 2.0 * (clamp_log(p[0]) + clamp_log(p[1]));
}

// Penalized mixed-model normal equations for the stacked design M = [V Z Zb]
// with block-diagonal precision on the random part. Variance parameters are
// ratios to the dispersion when the dispersion is profiled, absolute values
// otherwise.
class Engine {
public:
  Engine(const DesignBlocks& d, const LdfrModelSpec& spec) : spec_(spec) {
    pV_ = d.v_cols();
    L_ = spec.num_knots();
    K_ = spec.K;
    q_ = spec.subject_dim();
    I_ = d.num_subjects;
    G_ = d.num_groups;
    dim_ = pV_ + d.z_cols() + d.zb_cols();
    M_.resize(d.rows(), dim_);
    M_ << d.V, d.Z, d.Zb;
  }

  int dim() const { return dim_; }
  int fixed_cols() const { return pV_; }

  void set_data(const Vector& y, const Vector& w) {
    if (y.size() != M_.rows() || w.size() != M_.rows())
      fail(ErrorKind::dimension, "response length does not match design");
    Matrix WM = w.asDiagonal() * M_;
    mtm_.noalias() = M_.transpose() * WM;
    mty_.noalias() = WM.transpose() * y;
    yy_ = y.dot(w.asDiagonal() * y);
    sum_log_w_ = w.array().log().sum();
    n_ = y.size();
  }

  int num_params() const { return variance_param_count(spec_); }

  // layout: [log g0, log g1 (K>0), log g_group, D params]
  struct Blocks {
    double g0, g1, gg;
    Matrix D, Dinv;
    double logdetG;
  };

  Blocks unpack(const Vector& lp) const {
    Blocks b;
    int idx = 0;
    b.g0 = std::exp(clamp_log(lp[idx++]));
    b.g1 = K_ > 0 ? std::exp(clamp_log(lp[idx++])) : 1.0;
    b.gg = spec_.has_group() ? std::exp(clamp_log(lp[idx++])) : 0.0;
    b.logdetG = L_ * std::log(b.g0) + L_ * K_ * std::log(b.g1);
    if (spec_.has_group()) b.logdetG += G_ * std::log(b.gg);
    if (q_ > 0) {
      b.D = d_from_params(lp.data() + idx, q_);
      b.logdetG += I_ * logdet_d_from_params(lp.data() + idx, q_);
      Eigen::LDLT<Matrix> dl(b.D);
      b.Dinv = dl.solve(Matrix::Identity(q_, q_));
    }
    return b;
  }

  Matrix build_system(const Blocks& b) const {
    Matrix A = mtm_;
    int off = pV_;
    for (int j = 0; j < L_; ++j) A(off + j, off + j) += 1.0 / b.g0;
    off += L_;
    for (int k = 1; k <= K_; ++k, off += L_)
      for (int j = 0; j < L_; ++j) A(off + j, off + j) += 1.0 / b.g1;
    if (spec_.has_group())
      for (int g = 0; g < G_; ++g, ++off) A(off, off) += 1.0 / b.gg;
    for (int i = 0; i < I_; ++i, off += q_)
      A.block(off, off, q_, q_) += b.Dinv;
    return A;
  }

  double criterion(const Vector& lp, bool profile) const {
    Blocks b = unpack(lp);
    Matrix A = build_system(b);
    Eigen::LDLT<Matrix> ldlt(A);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
      return kBig;
    double logdetA = ldlt.vectorD().array().log().sum();
    Vector sol = ldlt.solve(mty_);
    double rpen = yy_ - mty_.dot(sol);
    if (!(rpen > 0.0)) rpen = 1e-12 * std::max(yy_, 1.0);
    if (profile)
      return static_cast<double>(n_ - pV_) * std::log(rpen) + b.logdetG + logdetA;
    return b.logdetG + logdetA + rpen;
  }

  struct Solution {
    Vector theta;
    double rpen = 0.0;
    double sigma2_e = 1.0;
    double edf = 0.0;
    double logdetA = 0.0;
    double logdetAuu = 0.0;
    double logdetG = 0.0;
    Matrix cov;     // sigma2_e * A^{-1}
    Blocks blocks;
  };

  Solution solve(const Vector& lp, bool profile) const {
    Solution s;
    s.blocks = unpack(lp);
    Matrix A = build_system(s.blocks);
    Eigen::LDLT<Matrix> ldlt(A);
    if (ldlt.info() != Eigen::Success)
      fail(ErrorKind::numerical, "mixed-model system not positive definite");
    s.theta = ldlt.solve(mty_);
    s.rpen = std::max(yy_ - mty_.dot(s.theta), 0.0);
    s.sigma2_e = profile ? s.rpen / static_cast<double>(n_ - pV_) : 1.0;
    s.logdetA = ldlt.vectorD().array().max(1e-300).log().sum();
    s.logdetG = s.blocks.logdetG;
    Matrix Ainv = ldlt.solve(Matrix::Identity(dim_, dim_));
    s.edf = (Ainv * mtm_).trace();
    s.cov = s.sigma2_e * Ainv;
    // random-random block, for the marginal likelihood
    int ru = dim_ - pV_;
    Eigen::LDLT<Matrix> uu(A.bottomRightCorner(ru, ru));
    s.logdetAuu = uu.vectorD().array().max(1e-300).log().sum();
    return s;
  }

  Vector linear_predictor(const Vector& theta) const { return M_ * theta; }
  Eigen::Index n() const { return n_; }
  double sum_log_w() const { return sum_log_w_; }

private:
  const LdfrModelSpec& spec_;
  Matrix M_, mtm_;
  Vector mty_;
  double yy_ = 0.0, sum_log_w_ = 0.0;
  Eigen::Index n_ = 0;
  int pV_ = 0, L_ = 0, K_ = 0, q_ = 0, I_ = 0, G_ = 0, dim_ = 0;
};

using Objective = std::function<double(const Vector&)>;

Vector fd_gradient(const Objective& f, const Vector& x, double h = 1e-5) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    double fp = f(xp);
    xp[i] = x[i] - h;
    double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Nelder-Mead simplex search.
Vector nelder_mead(const Objective& f, Vector x0, int max_iter, double ftol) {
  const int n = static_cast<int>(x0.size());
  std::vector<Vector> simplex(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (int i = 0; i < n; ++i) simplex[i + 1][i] += 0.5;
  for (int i = 0; i <= n; ++i) fv[i] = f(simplex[i]);

  for (int it = 0; it < max_iter; ++it) {
    std::vector<int> ord(n + 1);
    for (int i = 0; i <= n; ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    int best = ord[0], worst = ord[n], second = ord[n - 1];
    if (fv[worst] - fv[best] < ftol * (std::abs(fv[best]) + 1.0)) break;

    Vector centroid = Vector::Zero(n);
    for (int i = 0; i <= n; ++i)
      if (i != worst) centroid += simplex[i];
    centroid /= n;

    Vector xr = centroid + (centroid - simplex[worst]);
    double fr = f(xr);
    if (fr < fv[best]) {
      Vector xe = centroid + 2.0 * (centroid - simplex[worst]);
      double fe = f(xe);
      if (fe < fr) { simplex[worst] = xe; fv[worst] = fe; }
      else { simplex[worst] = xr; fv[worst] = fr; }
    } else if (fr < fv[second]) {
      simplex[worst] = xr; fv[worst] = fr;
    } else {
      Vector xc = centroid + 0.5 * (simplex[worst] - centroid);
      double fc = f(xc);
      if (fc < fv[worst]) { simplex[worst] = xc; fv[worst] = fc; }
      else {
        for (int i = 0; i <= n; ++i) {
          if (i == best) continue;
          simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
          fv[i] = f(simplex[i]);
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (fv[i] < fv[best]) best = i;
  return simplex[best];
}

// BFGS with finite-difference gradients; polishes the simplex solution until
// the gradient is small.
Vector bfgs_polish(const Objective& f, Vector x, int max_iter, double grad_tol,
                   double* grad_norm_out) {
  const int n = static_cast<int>(x.size());
  Matrix H = Matrix::Identity(n, n);
  Vector g = fd_gradient(f, x);
  double fx = f(x);
  for (int it = 0; it < max_iter; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < grad_tol) break;
    Vector p = -H * g;
    if (p.dot(g) >= 0.0) { p = -g; H.setIdentity(); }
    double step = 1.0;
    double fnew = fx;
    Vector xnew = x;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      xnew = x + step * p;
      fnew = f(xnew);
      if (fnew <= fx + 1e-4 * step * g.dot(p)) { accepted = true; break; }
      step *= 0.5;
    }
    if (!accepted) break;
    Vector gnew = fd_gradient(f, xnew);
    Vector s = xnew - x;
    Vector yv = gnew - g;
    double sy = s.dot(yv);
    if (sy > 1e-12) {
      Matrix Iden = Matrix::Identity(n, n);
      H = (Iden - s * yv.transpose() / sy) * H * (Iden - yv * s.transpose() / sy) +
          s * s.transpose() / sy;
    }
    x = xnew;
    fx = fnew;
    g = gnew;
  }
  if (grad_norm_out) *grad_norm_out = g.lpNorm<Eigen::Infinity>();
  return x;
}

Vector initial_params(const LdfrModelSpec& spec, const DesignBlocks& design,
                      const Vector& y, bool profile) {
  // dispersion seed: residual variance from the fixed-effects least squares fit
  Matrix vtv = design.V.transpose() * design.V;
  vtv.diagonal().array() += 1e-8 * std::max(vtv.trace(), 1.0);
  Vector beta0 = Eigen::LDLT<Matrix>(vtv).solve(design.V.transpose() * y);
  Vector resid = y - design.V * beta0;
  double s2 = std::max(resid.squaredNorm() / std::max<double>(1.0, resid.size() - 1), 1e-8);
  const double base = profile ? -std::log(s2) : 0.0;  // unit smoothing variances

  Vector lp(variance_param_count(spec));
  int idx = 0;
  lp[idx++] = base;                       // sigma_0^2 = 1
  if (spec.K > 0) lp[idx++] = base;       // sigma^2 = 1
  const double d0 = profile ? 0.1 / s2 : 0.1;
  if (spec.has_group()) lp[idx++] = std::log(d0);
  const int q = spec.subject_dim();
  if (q == 1) lp[idx++] = std::log(d0);
  if (q == 2) {
    lp[idx++] = 0.5 * std::log(d0);
    lp[idx++] = 0.5 * std::log(d0);
    lp[idx++] = 0.0;
  }
  return lp;
}

LdfrFit finalize(const Engine& engine, const DesignBlocks& design,
                 const LdfrModelSpec& spec, const Vector& lp, bool profile,
                 double criterion_value, double grad_norm, bool converged) {
  Engine::Solution s = engine.solve(lp, profile);
  const int L = spec.num_knots();
  const int K = spec.K;
  const int q = spec.subject_dim();

  LdfrFit fit;
  fit.spec = spec;
  fit.v_cols = design.v_cols();
  fit.z_cols = design.z_cols();
  fit.zb_cols = design.zb_cols();
  fit.num_subjects = design.num_subjects;
  fit.num_groups = design.num_groups;
  fit.subject_ids = design.subject_ids;
  fit.group_ids = design.group_ids;
  fit.group_of_subject = design.group_of_subject;

  fit.beta = s.theta.head(design.v_cols());
  fit.u = Matrix(L, K + 1);
  for (int k = 0; k <= K; ++k)
    fit.u.col(k) = s.theta.segment(design.v_cols() + k * L, L);
  int off = design.v_cols() + design.z_cols();
  fit.b_group = Vector::Zero(design.num_groups);
  for (int g = 0; g < design.num_groups; ++g) fit.b_group[g] = s.theta[off + g];
  off += design.num_groups;
  fit.b = Matrix::Zero(design.num_subjects, q);
  for (int i = 0; i < design.num_subjects; ++i)
    for (int j = 0; j < q; ++j) fit.b(i, j) = s.theta[off + i * q + j];

  fit.sigma2_e = s.sigma2_e;
  fit.lambda0 = 1.0 / (s.blocks.g0 * s.sigma2_e);
  fit.lambda = K > 0 ? 1.0 / (s.blocks.g1 * s.sigma2_e) : 0.0;
  fit.sigma2_group = spec.has_group() ? s.blocks.gg * s.sigma2_e : 0.0;
  if (q > 0) {
    fit.D = s.blocks.D * s.sigma2_e;
    Eigen::SelfAdjointEigenSolver<Matrix> es(fit.D);
    if (es.eigenvalues().minCoeff() < 0.0) {
      warn("subject covariance projected to the PSD cone");
      Vector ev = es.eigenvalues().cwiseMax(0.0);
      fit.D = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    }
  } else {
    fit.D = Matrix::Zero(0, 0);
  }

  fit.eta = engine.linear_predictor(s.theta);
  fit.fitted = spec.link == Link::identity
                   ? fit.eta
                   : (1.0 / (1.0 + (-fit.eta.array()).exp())).matrix();
  fit.edf = s.edf;
  fit.reml = criterion_value;
  fit.posterior_cov = s.cov;
  fit.gradient_norm = grad_norm;
  fit.converged = converged;

  const double n = static_cast<double>(engine.n());
  fit.num_variance_params = variance_param_count(spec) + (profile ? 1 : 0);
  if (profile) {
    fit.minus2loglik = n * std::log(2.0 * M_PI) + n * std::log(std::max(s.sigma2_e, 1e-300)) +
                       s.logdetG + s.logdetAuu + s.rpen / std::max(s.sigma2_e, 1e-300);
  } else {
    fit.minus2loglik = n * std::log(2.0 * M_PI) - engine.sum_log_w() + s.logdetG +
                       s.logdetAuu + s.rpen;
    fit.aic_is_working_approx = true;
  }
  fit.aic = fit.minus2loglik + 2.0 * (fit.num_variance_params + design.v_cols());
  if (!fit.fitted.allFinite()) fail(ErrorKind::numerical, "non-finite fitted values");
  return fit;
}

Vector optimize_params(const Engine& engine, const LdfrModelSpec& spec,
                       const DesignBlocks& design, const Vector& y, bool profile,
                       const FitControl& control, const Vector* warm,
                       double* grad_norm, double* crit_value, bool* converged) {
  auto obj = [&](const Vector& lp) { return engine.criterion(lp, profile); };
  Vector lp;
  if (control.fixed_log_params) {
    lp = *control.fixed_log_params;
    if (lp.size() != engine.num_params())
      fail(ErrorKind::spec, "fixed variance parameters have the wrong length");
    *grad_norm = 0.0;
    *crit_value = obj(lp);
    *converged = true;
    return lp;
  }
  Vector x0 = warm ? *warm : initial_params(spec, design, y, profile);
  lp = nelder_mead(obj, x0, control.max_optimizer_iter, control.inner_tol);
  lp = bfgs_polish(obj, lp, 100, control.gradient_tol, grad_norm);
  *crit_value = obj(lp);
  *converged = *grad_norm <= 10.0 * control.gradient_tol + 1e-3;
  return lp;
}

}  // namespace

double reml_criterion(const Vector& y, const Vector& weights, const DesignBlocks& design,
                      const LdfrModelSpec& spec, const Vector& log_params,
                      bool profile_dispersion) {
  Engine engine(design, spec);
  engine.set_data(y, weights);
  if (log_params.size() != engine.num_params())
    fail(ErrorKind::dimension, "wrong number of variance parameters");
  return engine.criterion(log_params, profile_dispersion);
}

LdfrFit fit_gaussian(const Vector& y, const DesignBlocks& design,
                     const LdfrModelSpec& spec, const FitControl& control) {
  if (spec.link != Link::identity)
    fail(ErrorKind::unsupported, "fit_gaussian requires the identity link");
  if (!y.allFinite()) fail(ErrorKind::data, "responses must be finite");
  if (y.size() != design.rows()) fail(ErrorKind::dimension, "responses do not match design");
  if (y.size() <= design.v_cols())
    fail(ErrorKind::data, "fewer observations than fixed effects");

  Engine engine(design, spec);
  engine.set_data(y, Vector::Ones(y.size()));
  double grad_norm = 0.0, crit = 0.0;
  bool converged = false;
  Vector lp = optimize_params(engine, spec, design, y, /*profile=*/true, control,
                              nullptr, &grad_norm, &crit, &converged);
  LdfrFit fit = finalize(engine, design, spec, lp, true, crit, grad_norm, converged);
  fit.outer_iterations = 1;
  if (!converged)
    throw ConvergenceError("smoothing-parameter search did not converge", fit);
  return fit;
}

LdfrFit fit_binomial(const Vector& y, const DesignBlocks& design,
                     const LdfrModelSpec& spec, const FitControl& control) {
  if (spec.link != Link::logit)
    fail(ErrorKind::unsupported, "fit_binomial requires the logit link");
  if (y.size() != design.rows()) fail(ErrorKind::dimension, "responses do not match design");
  bool any0 = false, any1 = false;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) any0 = true;
    else if (y[i] == 1.0) any1 = true;
    else fail(ErrorKind::data, "binomial responses must be 0 or 1");
  }
  if (!any0 || !any1)
    fail(ErrorKind::data, "binomial fit needs at least one 0 and one 1");

  Engine engine(design, spec);
  Vector mu = (y.array() + 0.5) / 2.0;
  Vector eta = (mu.array() / (1.0 - mu.array())).log();
  Vector lp;
  bool have_lp = false;
  bool warned_cap = false;
  double grad_norm = 0.0, crit = 0.0;
  bool converged = false;
  LdfrFit fit;

  int outer = 0;
  for (; outer < control.max_outer; ++outer) {
    Vector w = (mu.array() * (1.0 - mu.array())).cwiseMax(1e-6);
    Vector z = eta.array() + (y - mu).array() / w.array();
    engine.set_data(z, w);
    Vector start = have_lp ? lp : Vector();
    lp = optimize_params(engine, spec, design, z, /*profile=*/false, control,
                         have_lp ? &start : nullptr, &grad_norm, &crit, &converged);
    have_lp = true;
    Engine::Solution sol = engine.solve(lp, false);
    Vector eta_new = engine.linear_predictor(sol.theta);
    if (eta_new.lpNorm<Eigen::Infinity>() > control.eta_cap && !warned_cap) {
      warn("linear predictor capped; responses may be separable");
      warned_cap = true;
    }
    eta_new = eta_new.cwiseMax(-control.eta_cap).cwiseMin(control.eta_cap);
    double change = (eta_new - eta).norm() / std::max(1.0, eta.norm());
    eta = eta_new;
    mu = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    if (change < control.outer_tol) {
      fit = finalize(engine, design, spec, lp, false, crit, grad_norm, converged);
      fit.outer_iterations = outer + 1;
      fit.eta = eta;
      fit.fitted = mu;
      return fit;
    }
  }
  fit = finalize(engine, design, spec, lp, false, crit, grad_norm, false);
  fit.outer_iterations = outer;
  fit.eta = eta;
  fit.fitted = mu;
  throw ConvergenceError("working-response iteration did not converge", fit);
}

double marginal_aic(const LdfrFit& fit) { return fit.aic; }

int LdfrFit::subject_index(const std::string& id) const {
  for (std::size_t i = 0; i < subject_ids.size(); ++i)
    if (subject_ids[i] == id) return static_cast<int>(i);
  fail(ErrorKind::lookup, "unknown subject id: " + id);
}

Vector henderson_row(const LdfrFit& fit, double t, const Vector& loadings_at_t,
                     const Vector& covariates, int subject_idx, int group_idx) {
  const LdfrModelSpec& spec = fit.spec;
  const int p1 = spec.degree + 1;
  const int L = spec.num_knots();
  const int K = spec.K;
  if (loadings_at_t.size() != K)
    fail(ErrorKind::dimension, "loadings do not match the model order");
  if (covariates.size() != spec.num_covariates())
    fail(ErrorKind::dimension, "covariates do not match the model spec");

  Vector row = Vector::Zero(fit.v_cols + fit.z_cols + fit.zb_cols);
  Vector brow = truncated_polynomial_row(t, spec.basis());
  for (int k = 0; k <= K; ++k) {
    const double xi = k == 0 ? 1.0 : loadings_at_t[k - 1];
    row.segment(p1 * k, p1) = xi * brow.head(p1);
    row.segment(fit.v_cols + L * k, L) = xi * brow.tail(L);
  }
  for (int c = 0; c < spec.num_covariates(); ++c)
    row[p1 * (K + 1) + c] = covariates[c];
  int off = fit.v_cols + fit.z_cols;
  if (group_idx >= 0 && spec.has_group()) row[off + group_idx] = 1.0;
  off += fit.num_groups;
  const int q = spec.subject_dim();
  if (subject_idx >= 0 && q > 0) {
    row[off + subject_idx * q] = 1.0;
    if (q > 1) row[off + subject_idx * q + 1] = t;
  }
  return row;
}

double CoefficientSurface::alpha(double t) const {
  return truncated_polynomial_row(t, basis).dot(alpha_coef);
}

double CoefficientSurface::alpha_se(double t) const {
  Vector row = truncated_polynomial_row(t, basis);
  return std::sqrt(std::max(row.dot(alpha_cov * row), 0.0));
}

double CoefficientSurface::beta_k(int k, double t) const {
  if (k < 0 || k >= beta_coef.cols()) fail(ErrorKind::lookup, "component index out of range");
  return truncated_polynomial_row(t, basis).dot(beta_coef.col(k));
}

namespace {

double interp_column(const Vector& grid, const Matrix& values, int col, double s) {
  const auto R = grid.size();
  if (s <= grid[0]) return values(0, col);
  if (s >= grid[R - 1]) return values(R - 1, col);
  auto hi = std::upper_bound(grid.data(), grid.data() + R, s) - grid.data();
  auto lo = hi - 1;
  double w = (s - grid[lo]) / (grid[hi] - grid[lo]);
  return (1.0 - w) * values(lo, col) + w * values(hi, col);
}

}  // namespace

double CoefficientSurface::gamma(double s, double t) const {
  double out = 0.0;
  for (int k = 0; k < beta_coef.cols(); ++k)
    out += interp_column(s_grid, phi, k, s) * beta_k(k, t);
  return out;
}

Matrix CoefficientSurface::gamma_grid(const Vector& s_points, const Vector& t_points) const {
  Matrix out = Matrix::Zero(s_points.size(), t_points.size());
  const int K = static_cast<int>(beta_coef.cols());
  Matrix bt(t_points.size(), K);
  for (Eigen::Index j = 0; j < t_points.size(); ++j)
    for (int k = 0; k < K; ++k) bt(j, k) = beta_k(k, t_points[j]);
  for (Eigen::Index r = 0; r < s_points.size(); ++r)
    for (Eigen::Index j = 0; j < t_points.size(); ++j) {
      double v = 0.0;
      for (int k = 0; k < K; ++k) v += interp_column(s_grid, phi, k, s_points[r]) * bt(j, k);
      out(r, j) = v;
    }
  return out;
}

CoefficientSurface estimate_coefficient_surface(const LdfrFit& fit, const MarginalFpca& fpca) {
  const int p1 = fit.spec.degree + 1;
  const int L = fit.spec.num_knots();
  const int K = fit.spec.K;
  if (K != fpca.K) fail(ErrorKind::dimension, "fit and eigenbasis disagree on K");

  CoefficientSurface cs;
  cs.basis = fit.spec.basis();
  cs.alpha_coef = Vector(p1 + L);
  cs.alpha_coef << fit.beta.head(p1), fit.u.col(0);
  cs.beta_coef = Matrix(p1 + L, K);
  for (int k = 1; k <= K; ++k) {
    Vector col(p1 + L);
    col << fit.beta.segment(p1 * k, p1), fit.u.col(k);
    cs.beta_coef.col(k - 1) = col;
  }
  cs.phi = fpca.phi;
  cs.s_grid = fpca.s_grid;

  // posterior covariance of the alpha coefficients: polynomial block plus u_0
  std::vector<int> idx;
  for (int j = 0; j < p1; ++j) idx.push_back(j);
  for (int j = 0; j < L; ++j) idx.push_back(fit.v_cols + j);
  cs.alpha_cov = Matrix(p1 + L, p1 + L);
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = 0; b < idx.size(); ++b)
      cs.alpha_cov(a, b) = fit.posterior_cov(idx[a], idx[b]);
  return cs;
}

}  // namespace ldfr
