#include "ldfr/model.hpp"

#include <algorithm>

namespace ldfr {

PipelineConfig PipelineConfig::desk_scale() {
  PipelineConfig cfg;
  cfg.mean_smoother.num_basis_s = 12;
  cfg.mean_smoother.num_basis_t = 12;
  cfg.cov_smoother.num_basis_s = 12;
  cfg.cov_smoother.num_basis_t = 12;
  cfg.score.smoother.num_basis_s = 10;
  cfg.score.smoother.num_basis_t = 10;
  return cfg;
}

Matrix LdfrModel::loadings_at(int subject_idx, const Vector& t_eval) const {
  Matrix out(t_eval.size(), fpca.K);
  for (int k = 0; k < fpca.K; ++k)
    out.col(k) =
        processes[k].trajectory(processes[k].zeta.row(subject_idx).transpose(), t_eval);
  return out;
}

LdfrModel fit_ldfr(const LongitudinalFunctionalDataset& data, const PipelineConfig& config) {
  data.validate();
  LdfrModel model;

  FpcaConfig fcfg;
  fcfg.pve = config.pve;
  fcfg.mean_smoother = config.mean_smoother;
  fcfg.cov_smoother = config.cov_smoother;
  model.fpca = fit_marginal_fpca(data, fcfg);

  RawScores raw = compute_raw_scores(data, model.fpca);
  const int I = data.num_subjects();
  std::vector<Vector> times_by_subject(I);
  for (int i = 0; i < I; ++i) {
    const auto& t = data.subjects[i].times;
    times_by_subject[i] = Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size()));
  }

  ScoreProcessConfig scfg = config.score;
  scfg.pve = config.pve;
  model.processes.reserve(model.fpca.K);
  for (int k = 0; k < model.fpca.K; ++k) {
    std::vector<Vector> scores(I);
    for (int i = 0; i < I; ++i) scores[i] = raw.by_subject[i].col(k);
    model.processes.push_back(
        fit_score_process(times_by_subject, scores, k, data.t_domain, scfg));
  }

  // predicted loadings at the observed times feed the regression design
  RegressionData reg;
  reg.times_by_subject = times_by_subject;
  reg.loadings_by_subject.resize(I);
  for (int i = 0; i < I; ++i) {
    Matrix xi(times_by_subject[i].size(), model.fpca.K);
    for (int k = 0; k < model.fpca.K; ++k)
      xi.col(k) = model.processes[k].trajectory(
          model.processes[k].zeta.row(i).transpose(), times_by_subject[i]);
    reg.loadings_by_subject[i] = std::move(xi);
  }
  for (const auto& s : data.subjects) reg.subject_ids.push_back(s.id);
  if (data.num_covariates() > 0) {
    reg.covariates_by_subject.resize(I);
    for (int i = 0; i < I; ++i) reg.covariates_by_subject[i] = data.subjects[i].covariates;
  }

  LdfrModelSpec spec;
  spec.link = config.link;
  spec.degree = config.degree;
  spec.t_domain = data.t_domain;
  spec.K = model.fpca.K;
  spec.structure = config.structure;
  spec.covariate_names = data.covariate_names;
  std::vector<double> all_times;
  for (const auto& t : times_by_subject)
    all_times.insert(all_times.end(), t.data(), t.data() + t.size());
  spec.knots = quantile_knots(all_times, config.num_knots);

  if (spec.has_group()) {
    std::vector<std::string> labels = data.group_labels();
    if (labels.empty())
      fail(ErrorKind::data, "group random structure requires group labels");
    reg.group_ids = labels;
    reg.group_of_subject.resize(I);
    for (int i = 0; i < I; ++i) {
      auto it = std::find(labels.begin(), labels.end(), data.subjects[i].group);
      reg.group_of_subject[i] = static_cast<int>(it - labels.begin());
    }
  }

  DesignBlocks design = assemble_design(reg, spec);
  Vector y(design.rows());
  Eigen::Index row = 0;
  for (const auto& s : data.subjects)
    for (Eigen::Index j = 0; j < s.responses.size(); ++j) y[row++] = s.responses[j];

  model.fit = config.link == Link::identity
                  ? fit_gaussian(y, design, spec, config.control)
                  : fit_binomial(y, design, spec, config.control);
  model.surface = estimate_coefficient_surface(model.fit, model.fpca);
  return model;
}

}  // namespace ldfr
