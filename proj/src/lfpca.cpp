#include "ldfr/lfpca.hpp"

#include <algorithm>
#include <cmath>

namespace ldfr {

Matrix pooled_covariance(const LongitudinalFunctionalDataset& data, const SmoothSurface& tau) {
  data.validate();
  const auto R = data.s_grid.size();
  Matrix cov = Matrix::Zero(R, R);
  long total = 0;
  for (const auto& subj : data.subjects) {
    for (std::size_t j = 0; j < subj.times.size(); ++j) {
      Vector centered = subj.curves.row(static_cast<Eigen::Index>(j)).transpose() -
                        tau.eval_at_time(data.s_grid, subj.times[j]);
      cov.selfadjointView<Eigen::Lower>().rankUpdate(centered);
      ++total;
    }
  }
  if (total == 0) fail(ErrorKind::data, "no curves for pooled covariance");
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(total);
  return cov;
}

namespace {

// Positive grid sum; if the sum is essentially zero, the first non-zero
// coordinate decides.
void fix_sign(Eigen::Ref<Vector> v) {
  double s = v.sum();
  if (std::abs(s) > 1e-8) {
    if (s < 0) v = -v;
    return;
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0) {
      if (v[i] < 0) v = -v;
      return;
    }
  }
}

}  // namespace

EigenBasis eigendecompose(const Matrix& cov, double pve, const QuadratureRule& quad) {
  if (!(pve > 0.0 && pve <= 1.0)) fail(ErrorKind::spec, "pve must lie in (0, 1]");
  const auto R = quad.points.size();
  if (cov.rows() != R || cov.cols() != R)
    fail(ErrorKind::dimension, "covariance does not match quadrature grid");

  // weighted eigenproblem: W^(1/2) C W^(1/2) has the L2 eigenvalues, and
  // scaling back by W^(-1/2) restores L2-orthonormal functions
  Vector wsqrt = quad.weights.array().sqrt();
  Matrix A = wsqrt.asDiagonal() * cov * wsqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (A + A.transpose()));
  if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "eigendecomposition failed");

  // descending order, positive eigenvalues only
  std::vector<int> order;
  for (Eigen::Index i = 0; i < R; ++i)
    if (es.eigenvalues()[i] > 0.0) order.push_back(static_cast<int>(i));
  if (order.empty()) fail(ErrorKind::numerical, "degenerate covariance: no positive eigenvalues");
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return es.eigenvalues()[a] > es.eigenvalues()[b];
  });

  double total = 0.0;
  for (int idx : order) total += es.eigenvalues()[idx];
  int K = 0;
  double cum = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    cum += es.eigenvalues()[order[i]];
    K = static_cast<int>(i) + 1;
    if (cum / total >= pve - 1e-12) break;
  }

  EigenBasis out;
  out.K = K;
  out.lambda = Vector(K);
  out.phi = Matrix(R, K);
  for (int k = 0; k < K; ++k) {
    out.lambda[k] = es.eigenvalues()[order[k]];
    out.phi.col(k) = es.eigenvectors().col(order[k]).array() / wsqrt.array();
    fix_sign(out.phi.col(k));
  }
  return out;
}

RawScores compute_raw_scores(const LongitudinalFunctionalDataset& data,
                             const MarginalFpca& fpca) {
  if (fpca.phi.rows() != data.s_grid.size())
    fail(ErrorKind::dimension, "eigenfunctions not on the data grid");
  RawScores out;
  out.by_subject.reserve(data.subjects.size());
  // weighted eigenfunctions so each score is a single dot product
  Matrix phi_w = fpca.quad.weights.asDiagonal() * fpca.phi;
  for (const auto& subj : data.subjects) {
    const auto n = static_cast<Eigen::Index>(subj.times.size());
    Matrix scores(n, fpca.K);
    for (Eigen::Index j = 0; j < n; ++j) {
      Vector centered = subj.curves.row(j).transpose() -
                        fpca.tau.eval_at_time(data.s_grid, subj.times[j]);
      scores.row(j) = (phi_w.transpose() * centered).transpose();
    }
    out.by_subject.push_back(std::move(scores));
  }
  return out;
}

Vector ScoreProcess::psi_at(double t) const {
  const auto G = t_grid.size();
  if (t <= t_grid[0]) return psi.row(0).transpose();
  if (t >= t_grid[G - 1]) return psi.row(G - 1).transpose();
  auto hi = std::upper_bound(t_grid.data(), t_grid.data() + G, t) - t_grid.data();
  auto lo = hi - 1;
  double w = (t - t_grid[lo]) / (t_grid[hi] - t_grid[lo]);
  return ((1.0 - w) * psi.row(lo) + w * psi.row(hi)).transpose();
}

Vector ScoreProcess::blup(const Vector& times, const Vector& scores) const {
  if (times.size() != scores.size())
    fail(ErrorKind::dimension, "times and scores length mismatch");
  const int Lk = L();
  if (times.size() == 0) return Vector::Zero(Lk);
  Matrix Psi(times.size(), Lk);
  for (Eigen::Index j = 0; j < times.size(); ++j) Psi.row(j) = psi_at(times[j]).transpose();
  Matrix C = Psi * eta.asDiagonal() * Psi.transpose();
  C.diagonal().array() += sigma2;
  Eigen::LDLT<Matrix> ldlt(C);
  Vector sol = ldlt.solve(scores);
  double resid = (C * sol - scores).norm();
  if (!(resid <= 1e-6 * std::max(1.0, scores.norm()))) {
    warn("singular score covariance; applying ridge regularization");
    C.diagonal().array() += 1e-8 * C.trace();
    sol = Eigen::LDLT<Matrix>(C).solve(scores);
  }
  return eta.asDiagonal() * Psi.transpose() * sol;
}

Vector ScoreProcess::trajectory(const Vector& zeta_coef, const Vector& t_eval) const {
  Vector out(t_eval.size());
  for (Eigen::Index j = 0; j < t_eval.size(); ++j)
    out[j] = psi_at(t_eval[j]).dot(zeta_coef);
  return out;
}

Vector predict_score_trajectory(const ScoreProcess& process, const Vector& times,
                                const Vector& scores, const Vector& t_eval) {
  return process.trajectory(process.blup(times, scores), t_eval);
}

ScoreProcess fit_score_process(const std::vector<Vector>& times_by_subject,
                               const std::vector<Vector>& scores_by_subject,
                               int component, Interval t_domain,
                               const ScoreProcessConfig& config) {
  if (times_by_subject.size() != scores_by_subject.size())
    fail(ErrorKind::dimension, "subject lists length mismatch");
  if (times_by_subject.size() < 2)
    fail(ErrorKind::data, "score-process fit needs at least two subjects");

  // off-diagonal cross products estimate the covariance, same-time products
  // carry the additional score noise
  std::vector<double> t1, t2, prod;
  double same_sum = 0.0;
  long same_count = 0, pair_count = 0;
  for (std::size_t i = 0; i < times_by_subject.size(); ++i) {
    const Vector& t = times_by_subject[i];
    const Vector& x = scores_by_subject[i];
    if (t.size() != x.size()) fail(ErrorKind::dimension, "scores do not match times");
    for (Eigen::Index a = 0; a < t.size(); ++a) {
      same_sum += x[a] * x[a];
      ++same_count;
      for (Eigen::Index b = 0; b < t.size(); ++b) {
        if (a == b) continue;
        t1.push_back(t[a]);
        t2.push_back(t[b]);
        prod.push_back(x[a] * x[b]);
        ++pair_count;
      }
    }
  }
  if (pair_count < 2)
    fail(ErrorKind::data, "too few distinct time pairs to estimate the score covariance");

  SmoothSurface fit = fit_bivariate_scattered(t1, t2, prod, t_domain, t_domain,
                                              config.smoother, /*tie_lambdas=*/true);

  ScoreProcess out;
  out.component = component;
  out.t_grid = Vector::LinSpaced(config.grid_size, t_domain.lo, t_domain.hi);
  out.quad = QuadratureRule::trapezoid(out.t_grid);
  Matrix vals = fit.eval_grid(out.t_grid, out.t_grid);
  out.g_hat = 0.5 * (vals + vals.transpose());

  // score-noise variance: same-time products minus the smoothed diagonal
  double diag_sum = 0.0;
  for (std::size_t i = 0; i < times_by_subject.size(); ++i)
    for (Eigen::Index a = 0; a < times_by_subject[i].size(); ++a) {
      double t = times_by_subject[i][a];
      diag_sum += fit(t, t);
    }
  double sigma2 = (same_sum - diag_sum) / static_cast<double>(same_count);
  if (sigma2 < 0.0) {
    warn("score-noise variance estimate negative; floored at zero");
    sigma2 = 0.0;
  }
  out.sigma2 = sigma2;

  EigenBasis eig = eigendecompose(out.g_hat, config.pve, out.quad);
  out.psi = eig.phi;
  out.eta = eig.lambda;

  // training-subject coefficients
  out.zeta = Matrix::Zero(static_cast<Eigen::Index>(times_by_subject.size()), out.L());
  for (std::size_t i = 0; i < times_by_subject.size(); ++i)
    out.zeta.row(static_cast<Eigen::Index>(i)) =
        out.blup(times_by_subject[i], scores_by_subject[i]).transpose();
  return out;
}

MarginalFpca fit_marginal_fpca(const LongitudinalFunctionalDataset& data,
                               const FpcaConfig& config) {
  MarginalFpca out;
  out.tau = fit_bivariate_mean(data, config.mean_smoother);
  out.s_grid = data.s_grid;
  out.quad = QuadratureRule::trapezoid(data.s_grid);
  out.pve = config.pve;

  Matrix raw = pooled_covariance(data, out.tau);
  CovarianceSmoothResult sm = smooth_covariance_surface(raw, data.s_grid, config.cov_smoother);
  out.sigma2_white = sm.sigma2_white;

  EigenBasis eig = eigendecompose(sm.cov.grid_values, config.pve, out.quad);
  out.phi = eig.phi;
  out.lambda = eig.lambda;
  out.K = eig.K;
  return out;
}

}  // namespace ldfr
