#include "ldfr/simulation.hpp"

#include <algorithm>
#include <cmath>

#include "ldfr/basis.hpp"

namespace ldfr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t Rng::substream(std::uint64_t base, std::uint64_t index) {
  return splitmix64(base ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

std::vector<int> Rng::sample_without_replacement(int n, int count) {
  if (count > n) fail(ErrorKind::spec, "cannot sample more indices than available");
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  for (int j = 0; j < count; ++j) std::swap(pool[j], pool[j + uniform_int(n - j)]);
  std::vector<int> out(pool.begin(), pool.begin() + count);
  std::sort(out.begin(), out.end());
  return out;
}

double true_gamma(EffectShape effect, double delta, double s, double t) {
  const double sq2 = std::sqrt(2.0);
  if (effect == EffectShape::trig_exp)
    return sq2 * std::exp(-delta * t) * std::cos(2.0 * M_PI * s) +
           sq2 * delta * t * std::sin(delta * t) * std::sin(2.0 * M_PI * s);
  return sq2 * (1.0 + delta * t) * std::cos(2.0 * M_PI * s) +
         sq2 * (1.0 - delta * t + delta * t * t) * std::sin(2.0 * M_PI * s);
}

GeneratedPredictors generate_predictors(const ScenarioConfig& config, Rng& rng) {
  if (config.subjects < 1) fail(ErrorKind::spec, "need at least one subject");
  GeneratedPredictors out;
  out.s_grid = Vector::LinSpaced(config.s_points, 0.0, 1.0);
  out.t_grid = Vector::LinSpaced(config.t_points, 0.0, 1.0);
  const int R = config.s_points;
  const int T = config.t_points;
  const double sq2 = std::sqrt(2.0);
  const double sd3 = std::sqrt(config.sigma2_white());

  Vector cos_s(R), sin_s(R);
  for (int r = 0; r < R; ++r) {
    cos_s[r] = sq2 * std::cos(2.0 * M_PI * out.s_grid[r]);
    sin_s[r] = sq2 * std::sin(2.0 * M_PI * out.s_grid[r]);
  }

  for (int i = 0; i < config.subjects; ++i) {
    const double z11 = rng.normal(0.0, std::sqrt(3.5));
    const double z12 = rng.normal(0.0, std::sqrt(2.0));
    const double z21 = rng.normal(0.0, std::sqrt(3.0));
    const double z22 = rng.normal(0.0, std::sqrt(1.5));

    Matrix x(T, R);
    for (int j = 0; j < T; ++j) {
      const double t = out.t_grid[j];
      const double a = z11 * std::cos(2.0 * M_PI * t) + z12 * std::sin(2.0 * M_PI * t);
      const double b = z21 * std::cos(4.0 * M_PI * t) + z22 * std::sin(4.0 * M_PI * t);
      for (int r = 0; r < R; ++r) {
        const double s = out.s_grid[r];
        const double tau = 1.0 + 2.0 * s + 3.0 * t + 4.0 * s * t;
        x(j, r) = tau + a * cos_s[r] + b * sin_s[r];
      }
    }

    const int n = config.visits_lo() +
                  rng.uniform_int(config.visits_hi() - config.visits_lo() + 1);
    std::vector<int> idx = rng.sample_without_replacement(T, n);

    Matrix w(n, R);
    for (int j = 0; j < n; ++j) {
      const double e1 = rng.normal(0.0, std::sqrt(0.3));
      const double e2 = rng.normal(0.0, std::sqrt(0.7));
      for (int r = 0; r < R; ++r)
        w(j, r) = x(idx[j], r) + e1 * cos_s[r] + e2 * sin_s[r] + rng.normal(0.0, sd3);
    }

    out.x_latent.push_back(std::move(x));
    out.w_observed.push_back(std::move(w));
    out.obs_idx.push_back(std::move(idx));
  }
  return out;
}

GeneratedResponses generate_responses(const ScenarioConfig& config,
                                      const GeneratedPredictors& predictors, Rng& rng) {
  const int I = static_cast<int>(predictors.x_latent.size());
  const int T = static_cast<int>(predictors.t_grid.size());
  const int R = static_cast<int>(predictors.s_grid.size());
  QuadratureRule quad = QuadratureRule::trapezoid(predictors.s_grid);

  // gamma on the grid, one column per grid time
  Matrix gmat(R, T);
  for (int j = 0; j < T; ++j)
    for (int r = 0; r < R; ++r)
      gmat(r, j) =
          true_gamma(config.effect, config.delta, predictors.s_grid[r], predictors.t_grid[j]);

  GeneratedResponses out;
  out.y_full = Matrix(I, T);
  out.mu_full = Matrix(I, T);
  out.omega_full = Matrix::Zero(I, T);
  const bool binary = config.response == ResponseFamily::binary;

  for (int i = 0; i < I; ++i) {
    for (int j = 0; j < T; ++j) {
      const double t = predictors.t_grid[j];
      double integral = 0.0;
      for (int r = 0; r < R; ++r)
        integral += quad.weights[r] * predictors.x_latent[i](j, r) * gmat(r, j);
      const double alpha = binary ? 2.0 : 7.0 * std::sin(3.0 * M_PI * t);
      out.mu_full(i, j) = alpha + integral;
    }

    switch (config.response) {
      case ResponseFamily::gaussian_iid: {
        for (int j = 0; j < T; ++j)
          out.y_full(i, j) = out.mu_full(i, j) + rng.normal(0.0, std::sqrt(2.0));
        break;
      }
      case ResponseFamily::gaussian_cs: {
        const double b0 = rng.normal(0.0, 1.0);
        for (int j = 0; j < T; ++j)
          out.y_full(i, j) = out.mu_full(i, j) + b0 + rng.normal(0.0, std::sqrt(0.5));
        break;
      }
      case ResponseFamily::gaussian_rem: {
        const double z1 = rng.normal(), z2 = rng.normal();
        const double b0 = z1;                          // var 1
        const double b1 = 0.1 * z1 + 0.7 * z2;         // var 0.5, cov 0.1
        for (int j = 0; j < T; ++j)
          out.y_full(i, j) = out.mu_full(i, j) + b0 + b1 * predictors.t_grid[j] +
                             rng.normal(0.0, std::sqrt(0.3));
        break;
      }
      case ResponseFamily::binary: {
        const double z1 = rng.normal(), z2 = rng.normal();
        const double b0 = z1;
        const double b1 = 0.1 * z1 + 0.7 * z2;
        for (int j = 0; j < T; ++j) {
          const double omega = out.mu_full(i, j) + b0 + b1 * predictors.t_grid[j];
          out.omega_full(i, j) = omega;
          const double p = 1.0 / (1.0 + std::exp(-omega));
          out.y_full(i, j) = rng.uniform() < p ? 1.0 : 0.0;
        }
        break;
      }
    }
  }
  return out;
}

LongitudinalFunctionalDataset observed_dataset(const GeneratedPredictors& predictors,
                                               const GeneratedResponses& responses) {
  LongitudinalFunctionalDataset data;
  data.s_grid = predictors.s_grid;
  data.t_domain = Interval{predictors.t_grid[0], predictors.t_grid[predictors.t_grid.size() - 1]};
  const int I = static_cast<int>(predictors.x_latent.size());
  for (int i = 0; i < I; ++i) {
    Subject subj;
    subj.id = std::to_string(i);
    const auto& idx = predictors.obs_idx[i];
    subj.curves = predictors.w_observed[i];
    subj.responses = Vector(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      subj.times.push_back(predictors.t_grid[idx[j]]);
      subj.responses[static_cast<Eigen::Index>(j)] = responses.y_full(i, idx[j]);
    }
    data.subjects.push_back(std::move(subj));
  }
  return data;
}

LongitudinalFunctionalDataset generate_grouped(const GroupedConfig& config,
                                               const GroupedComponents& comp, Rng& rng) {
  const int R = static_cast<int>(comp.s_grid.size());
  const int T = static_cast<int>(comp.t_grid.size());
  if (R == 0 || T == 0) fail(ErrorKind::data, "grouped generator needs grid components");
  if (comp.tau.rows() != R || comp.tau.cols() != T)
    fail(ErrorKind::dimension, "mean surface does not match the grids");
  if (comp.phi.rows() != R) fail(ErrorKind::dimension, "eigenfunctions not on the s-grid");
  const int K = static_cast<int>(comp.phi.cols());
  if (static_cast<int>(comp.score_cov.size()) != K)
    fail(ErrorKind::data, "need one score covariance per component");
  if (comp.alpha.size() != T) fail(ErrorKind::dimension, "intercept not on the t-grid");
  if (comp.gamma.rows() != R || comp.gamma.cols() != T)
    fail(ErrorKind::dimension, "regression surface does not match the grids");
  if (config.visits_hi > T) fail(ErrorKind::spec, "more visits requested than grid times");

  QuadratureRule quad = QuadratureRule::trapezoid(comp.s_grid);
  const bool smooth_err = comp.smooth_error_cov.rows() == R;
  Matrix smooth_chol;
  if (smooth_err) {
    Matrix C = comp.smooth_error_cov;
    C.diagonal().array() += 1e-10 * std::max(C.trace(), 1.0);
    smooth_chol = Eigen::LLT<Matrix>(C).matrixL();
  }

  std::vector<double> bg(config.groups);
  for (int g = 0; g < config.groups; ++g) bg[g] = rng.normal(0.0, std::sqrt(comp.sigma2_group));

  LongitudinalFunctionalDataset data;
  data.s_grid = comp.s_grid;
  data.t_domain = Interval{comp.t_grid[0], comp.t_grid[T - 1]};
  for (int i = 0; i < config.subjects; ++i) {
    const int g = i % config.groups;
    const int n = config.visits_lo + rng.uniform_int(config.visits_hi - config.visits_lo + 1);
    std::vector<int> idx = rng.sample_without_replacement(T, n);

    // score trajectories at the visit times, one draw per component
    Matrix xi(n, K);
    for (int k = 0; k < K; ++k) {
      Matrix Gk(n, n);
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) Gk(a, b) = comp.score_cov[k](idx[a], idx[b]);
      Gk.diagonal().array() += 1e-10 * std::max(Gk.trace(), 1.0);
      Eigen::LLT<Matrix> llt(Gk);
      Vector z(n);
      for (int a = 0; a < n; ++a) z[a] = rng.normal();
      xi.col(k) = llt.matrixL() * z;
    }

    const double b0 = rng.normal(0.0, std::sqrt(comp.sigma2_b0));
    const double b1 = rng.normal(0.0, std::sqrt(comp.sigma2_b1));

    Subject subj;
    subj.id = std::to_string(i);
    subj.group = "g" + std::to_string(g);
    subj.curves = Matrix(n, R);
    subj.responses = Vector(n);
    for (int j = 0; j < n; ++j) {
      const double t = comp.t_grid[idx[j]];
      Vector latent = comp.tau.col(idx[j]);
      for (int k = 0; k < K; ++k) latent += xi(j, k) * comp.phi.col(k);
      double integral = 0.0;
      for (int r = 0; r < R; ++r)
        integral += quad.weights[r] * latent[r] * comp.gamma(r, idx[j]);
      subj.times.push_back(t);
      subj.responses[j] = comp.alpha[idx[j]] + integral + bg[g] + b0 + b1 * t +
                          rng.normal(0.0, std::sqrt(comp.sigma2_e));
      Vector noise = Vector::Zero(R);
      if (smooth_err) {
        Vector z(R);
        for (int r = 0; r < R; ++r) z[r] = rng.normal();
        noise = smooth_chol * z;
      }
      for (int r = 0; r < R; ++r)
        subj.curves(j, r) = latent[r] + noise[r] + rng.normal(0.0, std::sqrt(comp.sigma2_white));
    }
    data.subjects.push_back(std::move(subj));
  }
  return data;
}

TrainTestSplit train_test_split(const LongitudinalFunctionalDataset& data,
                                const SplitSpec& spec, Rng& rng) {
  const int I = data.num_subjects();
  TrainTestSplit split;
  split.test_by_subject.resize(I);
  split.train_by_subject.resize(I);

  if (spec.mode == SplitMode::holdout_per_subject) {
    for (int i = 0; i < I; ++i) {
      const int n = static_cast<int>(data.subjects[i].times.size());
      if (n <= spec.holdout)
        fail(ErrorKind::spec, "subject " + data.subjects[i].id +
                                  " has too few visits for the holdout split");
      split.test_by_subject[i] = rng.sample_without_replacement(n, spec.holdout);
    }
  } else if (spec.mode == SplitMode::last_days) {
    std::vector<int> eligible;
    for (int i = 0; i < I; ++i)
      if (static_cast<int>(data.subjects[i].times.size()) > spec.last_k) eligible.push_back(i);
    int want = spec.subject_count < 0 ? static_cast<int>(eligible.size()) : spec.subject_count;
    if (want > static_cast<int>(eligible.size()))
      fail(ErrorKind::spec, "not enough subjects with more visits than the holdout span");
    std::vector<int> chosen = rng.sample_without_replacement(static_cast<int>(eligible.size()), want);
    for (int c : chosen) {
      const int i = eligible[c];
      const auto& times = data.subjects[i].times;
      const int n = static_cast<int>(times.size());
      // visit indices of the last_k largest times
      std::vector<int> ord(n);
      for (int j = 0; j < n; ++j) ord[j] = j;
      std::sort(ord.begin(), ord.end(), [&](int a, int b) { return times[a] < times[b]; });
      std::vector<int> test(ord.end() - spec.last_k, ord.end());
      std::sort(test.begin(), test.end());
      split.test_by_subject[i] = std::move(test);
    }
  } else {
    for (int i = 0; i < I; ++i) {
      const int n = static_cast<int>(data.subjects[i].times.size());
      int count = static_cast<int>(std::floor(spec.fraction * n));
      if (count >= n)
        fail(ErrorKind::spec, "fraction split would leave subject " + data.subjects[i].id +
                                  " with no training visits");
      if (count > 0) split.test_by_subject[i] = rng.sample_without_replacement(n, count);
    }
  }

  for (int i = 0; i < I; ++i) {
    const int n = static_cast<int>(data.subjects[i].times.size());
    const auto& test = split.test_by_subject[i];
    std::size_t pos = 0;
    for (int j = 0; j < n; ++j) {
      if (pos < test.size() && test[pos] == j) { ++pos; continue; }
      split.train_by_subject[i].push_back(j);
    }
  }
  return split;
}

LongitudinalFunctionalDataset subset_visits(const LongitudinalFunctionalDataset& data,
                                            const std::vector<std::vector<int>>& keep) {
  if (keep.size() != data.subjects.size())
    fail(ErrorKind::dimension, "keep list does not match subjects");
  LongitudinalFunctionalDataset out;
  out.s_grid = data.s_grid;
  out.t_domain = data.t_domain;
  out.covariate_names = data.covariate_names;
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const Subject& src = data.subjects[i];
    Subject subj;
    subj.id = src.id;
    subj.group = src.group;
    const auto& idx = keep[i];
    subj.curves = Matrix(static_cast<Eigen::Index>(idx.size()), data.s_grid.size());
    subj.responses = Vector(static_cast<Eigen::Index>(idx.size()));
    if (src.covariates.size() > 0)
      subj.covariates = Matrix(static_cast<Eigen::Index>(idx.size()), src.covariates.cols());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      subj.times.push_back(src.times[idx[j]]);
      subj.curves.row(static_cast<Eigen::Index>(j)) = src.curves.row(idx[j]);
      subj.responses[static_cast<Eigen::Index>(j)] = src.responses[idx[j]];
      if (src.covariates.size() > 0)
        subj.covariates.row(static_cast<Eigen::Index>(j)) = src.covariates.row(idx[j]);
    }
    out.subjects.push_back(std::move(subj));
  }
  return out;
}

double prediction_error(const std::vector<Vector>& truth, const std::vector<Vector>& predicted) {
  if (truth.size() != predicted.size())
    fail(ErrorKind::dimension, "prediction error inputs differ in subject count");
  double acc = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].size() == 0) continue;
    if (truth[i].size() != predicted[i].size())
      fail(ErrorKind::dimension, "prediction error inputs differ within a subject");
    acc += (truth[i] - predicted[i]).squaredNorm() / static_cast<double>(truth[i].size());
    ++used;
  }
  if (used == 0) fail(ErrorKind::data, "prediction error over an empty set");
  return std::sqrt(acc / used);
}

double true_positive_rate(const std::vector<Vector>& truth, const std::vector<Vector>& predicted) {
  long hits = 0, positives = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (Eigen::Index j = 0; j < truth[i].size(); ++j)
      if (truth[i][j] == 1.0) {
        ++positives;
        if (predicted[i][j] == 1.0) ++hits;
      }
  if (positives == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(hits) / static_cast<double>(positives);
}

}  // namespace ldfr
