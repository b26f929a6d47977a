#include "ldfr/smoothing.hpp"

#include <cmath>
#include <limits>

namespace ldfr {

namespace {

struct PenalizedSystem {
  Matrix gram;     // X'X
  Vector rhs;      // X'y
  double yy = 0.0;
  Eigen::Index n = 0;

  struct Solution {
    Vector theta;
    double rss = 0.0;      // ||y - X theta||^2
    double rss_pen = 0.0;  // rss + lambda * theta' P theta
    double edf = 0.0;
  };

  Solution solve(const Matrix& penalty) const {
    Matrix M = gram + penalty;
    Eigen::LDLT<Matrix> ldlt(M);
    if (ldlt.info() != Eigen::Success)
      fail(ErrorKind::numerical, "penalized normal equations are not positive definite");
    Solution s;
    s.theta = ldlt.solve(rhs);
    double tb = s.theta.dot(rhs);
    s.rss = yy - 2.0 * tb + s.theta.dot(gram * s.theta);
    s.rss_pen = yy - tb;  // identity at the minimizer
    s.edf = ldlt.solve(gram).trace();
    return s;
  }

  double gcv(const Solution& s) const {
    double denom = static_cast<double>(n) - s.edf;
    if (denom < 1e-8) denom = 1e-8;
    return static_cast<double>(n) * std::max(s.rss, 0.0) / (denom * denom);
  }
};

double log_det_ldlt(const Matrix& M) {
  Eigen::LDLT<Matrix> ldlt(M);
  return ldlt.vectorD().array().max(1e-300).log().sum();
}

// Golden-section refinement of a unimodal bracket on the log scale.
template <typename F>
double golden_refine(F crit, double lo, double hi, int iters = 24) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = std::log(lo), b = std::log(hi);
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = crit(std::exp(x1)), f2 = crit(std::exp(x2));
  for (int it = 0; it < iters; ++it) {
    if (f1 < f2) {
      b = x2; x2 = x1; f2 = f1;
      x1 = b - phi * (b - a);
      f1 = crit(std::exp(x1));
    } else {
      a = x1; x1 = x2; f1 = f2;
      x2 = a + phi * (b - a);
      f2 = crit(std::exp(x2));
    }
  }
  return std::exp(0.5 * (a + b));
}

}  // namespace

std::vector<double> lambda_search_grid() {
  std::vector<double> grid(50);
  for (int i = 0; i < 50; ++i)
    grid[i] = std::pow(10.0, -8.0 + 16.0 * i / 49.0);
  return grid;
}

PenalizedLsFit fit_penalized_ls(const Matrix& design, const PenaltyMatrix& penalty,
                                const Vector& y, const SelectorSpec& selector) {
  if (design.rows() != y.size())
    fail(ErrorKind::dimension, "design rows must match response length");
  if (penalty.mat.rows() != design.cols() || penalty.mat.cols() != design.cols())
    fail(ErrorKind::dimension, "penalty dimension must match design columns");

  PenalizedSystem sys;
  sys.gram = design.transpose() * design;
  sys.rhs = design.transpose() * y;
  sys.yy = y.squaredNorm();
  sys.n = y.size();

  // penalty rank / nullity, needed by the REML criterion
  Eigen::SelfAdjointEigenSolver<Matrix> pe(penalty.mat);
  const Vector pev = pe.eigenvalues();
  const double pmax = std::max(pev.maxCoeff(), 0.0);
  int rank = 0;
  for (Eigen::Index i = 0; i < pev.size(); ++i)
    if (pev[i] > 1e-10 * std::max(pmax, 1.0)) ++rank;
  const int nullity = static_cast<int>(design.cols()) - rank;

  auto solve_at = [&](double lambda) { return sys.solve(lambda * penalty.mat); };

  auto criterion = [&](double lambda) {
    PenalizedSystem::Solution s = solve_at(lambda);
    if (selector.method == LambdaSelector::reml) {
      double df = static_cast<double>(sys.n - nullity);
      return df * std::log(std::max(s.rss_pen, 1e-300)) +
             log_det_ldlt(sys.gram + lambda * penalty.mat) - rank * std::log(lambda);
    }
    return std::log(sys.gcv(s));
  };

  double lambda_hat;
  if (selector.method == LambdaSelector::fixed) {
    lambda_hat = selector.fixed_lambda;
    if (lambda_hat == 0.0) {
      Eigen::SelfAdjointEigenSolver<Matrix> ge(sys.gram);
      double gmax = ge.eigenvalues().maxCoeff();
      if (ge.eigenvalues().minCoeff() <= 1e-12 * std::max(gmax, 1.0))
        fail(ErrorKind::numerical, "unpenalized normal equations are rank deficient");
    }
  } else {
    const std::vector<double> grid = lambda_search_grid();
    int best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double v = criterion(grid[i]);
      if (v < best_val) {
        best_val = v;
        best = static_cast<int>(i);
      }
    }
    double lo = grid[std::max(best - 1, 0)];
    double hi = grid[std::min<std::size_t>(best + 1, grid.size() - 1)];
    lambda_hat = golden_refine(criterion, lo, hi);
    if (criterion(grid[best]) < criterion(lambda_hat)) lambda_hat = grid[best];
  }

  PenalizedSystem::Solution s = solve_at(lambda_hat);
  PenalizedLsFit fit;
  fit.coefficients = s.theta;
  fit.lambda = lambda_hat;
  fit.edf = s.edf;
  fit.rss = s.rss;
  fit.gcv = sys.gcv(s);
  return fit;
}

double SmoothSurface::operator()(double s, double t) const {
  Vector rs = bspline_row(s, basis_s);
  Vector rt = bspline_row(t, basis_t);
  return rs.dot(coef * rt);
}

Vector SmoothSurface::eval_at_time(const Vector& s_points, double t) const {
  Vector rt = bspline_row(t, basis_t);
  Vector ct = coef * rt;
  Vector out(s_points.size());
  std::vector<double> band(basis_s.degree + 1);
  for (Eigen::Index r = 0; r < s_points.size(); ++r) {
    int first = bspline_band(s_points[r], basis_s, band.data());
    double v = 0.0;
    for (int j = 0; j <= basis_s.degree; ++j) v += band[j] * ct[first + j];
    out[r] = v;
  }
  return out;
}

Matrix SmoothSurface::eval_grid(const Vector& s_points, const Vector& t_points) const {
  Matrix B_s = bspline_design(s_points, basis_s);
  Matrix B_t = bspline_design(t_points, basis_t);
  return B_s * coef * B_t.transpose();
}

namespace {

// Accumulates normal equations for scattered tensor-product data. Row for a
// point (x1, x2) is b2(x2) kron b1(x1); both marginal rows are banded so each
// point touches (d1+1)(d2+1) coefficients. Coefficient layout: index = a*n1+b
// for t-basis index a and s-basis index b, matching vec of the n1 x n2
// coefficient matrix.
class TensorAccumulator {
public:
  TensorAccumulator(const SplineBasisSpec& b1, const SplineBasisSpec& b2)
      : b1_(b1), b2_(b2), n1_(b1.num_basis()), n2_(b2.num_basis()) {
    sys_.gram = Matrix::Zero(n1_ * n2_, n1_ * n2_);
    sys_.rhs = Vector::Zero(n1_ * n2_);
    band1_.resize(b1_.degree + 1);
    band2_.resize(b2_.degree + 1);
    cols_.resize(band1_.size() * band2_.size());
    vals_.resize(cols_.size());
  }

  void add(double x1, double x2, double y) {
    int f1 = bspline_band(x1, b1_, band1_.data());
    int f2 = bspline_band(x2, b2_, band2_.data());
    int m = 0;
    for (std::size_t a = 0; a < band2_.size(); ++a)
      for (std::size_t b = 0; b < band1_.size(); ++b) {
        cols_[m] = (f2 + static_cast<int>(a)) * n1_ + f1 + static_cast<int>(b);
        vals_[m] = band2_[a] * band1_[b];
        ++m;
      }
    for (int p = 0; p < m; ++p) {
      sys_.rhs[cols_[p]] += vals_[p] * y;
      for (int q = 0; q < m; ++q) sys_.gram(cols_[p], cols_[q]) += vals_[p] * vals_[q];
    }
    sys_.yy += y * y;
    ++sys_.n;
  }

  // Select (lambda_1, lambda_2) by GCV or REML coordinate descent on a log
  // grid with golden refinement; returns the coefficient matrix.
  SmoothSurface fit(int penalty_order, const SelectorSpec& selector, bool tie_lambdas) {
    if (sys_.n == 0) fail(ErrorKind::data, "no data points for surface fit");
    Matrix P1 = difference_penalty(n1_, penalty_order).mat;
    Matrix P2 = difference_penalty(n2_, penalty_order).mat;
    Matrix P1full = Matrix::Zero(n1_ * n2_, n1_ * n2_);
    Matrix P2full = Matrix::Zero(n1_ * n2_, n1_ * n2_);
    for (int a = 0; a < n2_; ++a)
      P1full.block(a * n1_, a * n1_, n1_, n1_) = P1;
    for (int a = 0; a < n2_; ++a)
      for (int c = 0; c < n2_; ++c)
        if (P2(a, c) != 0.0)
          P2full.block(a * n1_, c * n1_, n1_, n1_) += P2(a, c) * Matrix::Identity(n1_, n1_);

    auto criterion_at = [&](double l1, double l2) {
      Matrix Lam = l1 * P1full + l2 * P2full;
      auto s = sys_.solve(Lam);
      if (selector.method == LambdaSelector::reml) {
        Eigen::SelfAdjointEigenSolver<Matrix> pe(Lam);
        const Vector ev = pe.eigenvalues();
        const double emax = std::max(ev.maxCoeff(), 1e-300);
        double logdet_plus = 0.0;
        int rank = 0;
        for (Eigen::Index i = 0; i < ev.size(); ++i)
          if (ev[i] > 1e-10 * emax) {
            logdet_plus += std::log(ev[i]);
            ++rank;
          }
        const double nullity = static_cast<double>(Lam.rows() - rank);
        return (static_cast<double>(sys_.n) - nullity) *
                   std::log(std::max(s.rss_pen, 1e-300)) +
               log_det_ldlt(sys_.gram + Lam) - logdet_plus;
      }
      return std::log(sys_.gcv(s));
    };

    double l1 = 1.0, l2 = 1.0;
    if (selector.method == LambdaSelector::fixed) {
      l1 = l2 = selector.fixed_lambda;
    } else if (tie_lambdas) {
      auto crit = [&](double l) { return criterion_at(l, l); };
      l1 = l2 = select_1d(crit);
    } else {
      for (int cycle = 0; cycle < 2; ++cycle) {
        l1 = select_1d([&](double l) { return criterion_at(l, l2); });
        l2 = select_1d([&](double l) { return criterion_at(l1, l); });
      }
    }

    auto sol = sys_.solve(l1 * P1full + l2 * P2full);
    SmoothSurface out;
    out.basis_s = b1_;
    out.basis_t = b2_;
    out.coef = Matrix(n1_, n2_);
    for (int a = 0; a < n2_; ++a) out.coef.col(a) = sol.theta.segment(a * n1_, n1_);
    out.lambda_s = l1;
    out.lambda_t = l2;
    return out;
  }

private:
  template <typename F>
  double select_1d(F crit) const {
    // coarser grid than the 1-d smoother: each evaluation is a full solve
    std::vector<double> grid;
    for (int i = 0; i <= 14; ++i) grid.push_back(std::pow(10.0, -6.0 + i));
    int best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double v = crit(grid[i]);
      if (v < best_val) {
        best_val = v;
        best = static_cast<int>(i);
      }
    }
    double lo = grid[std::max(best - 1, 0)];
    double hi = grid[std::min<std::size_t>(best + 1, grid.size() - 1)];
    return golden_refine(crit, lo, hi, 16);
  }

  SplineBasisSpec b1_, b2_;
  int n1_, n2_;
  PenalizedSystem sys_;
  std::vector<double> band1_, band2_, vals_;
  std::vector<int> cols_;
};

}  // namespace

SmoothSurface fit_bivariate_mean(const LongitudinalFunctionalDataset& data,
                                 const BivariateConfig& config) {
  data.validate();
  Interval sdom{data.s_grid[0], data.s_grid[data.s_grid.size() - 1]};
  SplineBasisSpec bs = SplineBasisSpec::bspline(config.degree, config.num_basis_s, sdom);
  SplineBasisSpec bt = SplineBasisSpec::bspline(config.degree, config.num_basis_t, data.t_domain);
  TensorAccumulator acc(bs, bt);
  for (const auto& subj : data.subjects)
    for (std::size_t j = 0; j < subj.times.size(); ++j)
      for (Eigen::Index r = 0; r < data.s_grid.size(); ++r)
        acc.add(data.s_grid[r], subj.times[j], subj.curves(static_cast<Eigen::Index>(j), r));
  return acc.fit(config.penalty_order, config.selector, false);
}

SmoothSurface fit_bivariate_scattered(const std::vector<double>& x1,
                                      const std::vector<double>& x2,
                                      const std::vector<double>& values,
                                      Interval domain1, Interval domain2,
                                      const BivariateConfig& config, bool tie_lambdas) {
  if (x1.size() != x2.size() || x1.size() != values.size())
    fail(ErrorKind::dimension, "scattered surface inputs must have equal length");
  SplineBasisSpec b1 = SplineBasisSpec::bspline(config.degree, config.num_basis_s, domain1);
  SplineBasisSpec b2 = SplineBasisSpec::bspline(config.degree, config.num_basis_t, domain2);
  TensorAccumulator acc(b1, b2);
  for (std::size_t p = 0; p < x1.size(); ++p) acc.add(x1[p], x2[p], values[p]);
  return acc.fit(config.penalty_order, config.selector, tie_lambdas);
}

CovarianceSmoothResult smooth_covariance_surface(const Matrix& raw, const Vector& grid,
                                                 const BivariateConfig& config,
                                                 bool exclude_diagonal) {
  const auto R = grid.size();
  if (raw.rows() != R || raw.cols() != R)
    fail(ErrorKind::dimension, "raw covariance does not match grid");
  if (R < 4) fail(ErrorKind::data, "covariance grid too small");

  Interval dom{grid[0], grid[R - 1]};
  SplineBasisSpec b = SplineBasisSpec::bspline(config.degree, config.num_basis_s, dom);
  TensorAccumulator acc(b, b);
  for (Eigen::Index a = 0; a < R; ++a)
    for (Eigen::Index c = 0; c < R; ++c) {
      if (exclude_diagonal && a == c) continue;
      acc.add(grid[a], grid[c], raw(a, c));
    }
  SmoothSurface fit = acc.fit(config.penalty_order, config.selector, true);

  CovarianceSmoothResult out;
  Matrix vals = fit.eval_grid(grid, grid);
  out.cov.surface = fit;
  out.cov.grid_values = 0.5 * (vals + vals.transpose());
  out.cov.grid = grid;

  // nugget: diagonal inflation averaged over the central half of the grid
  double acc_gap = 0.0;
  int count = 0;
  for (Eigen::Index r = R / 4; r < R - R / 4; ++r) {
    acc_gap += raw(r, r) - out.cov.grid_values(r, r);
    ++count;
  }
  double sigma2 = count > 0 ? acc_gap / count : 0.0;
  if (sigma2 < 0.0) {
    warn("white-noise variance estimate negative; floored at zero");
    out.floored = true;
    sigma2 = 0.0;
  }
  out.sigma2_white = sigma2;
  return out;
}

}  // namespace ldfr
