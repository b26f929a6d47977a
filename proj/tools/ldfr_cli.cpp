// Command-line front end: scenario simulation, model fitting, prediction,
// covariate preprocessing, and fit reports.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "ldfr/io.hpp"

namespace {

using namespace ldfr;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return 4;
    case ErrorKind::convergence: return 3;
    case ErrorKind::numerical: return 5;
    default: return 2;  // schema, spec, data, dimension, domain, lookup, ...
  }
}

std::map<std::string, std::string> config_echo(const KeyValueConfig& cfg) {
  std::map<std::string, std::string> echo(cfg.entries.begin(), cfg.entries.end());
  return echo;
}

int cmd_simulate(const std::string& config_path, std::uint64_t seed_override,
                 int replicates_override, int threads_override, const std::string& out_dir) {
  KeyValueConfig cfg = KeyValueConfig::parse_file(config_path);
  SimulationPlan plan = plan_from_config(cfg);
  if (seed_override) plan.scenario.seed = seed_override;
  if (replicates_override > 0) plan.replicates = replicates_override;
  if (threads_override > 0) plan.threads = threads_override;

  std::filesystem::create_directories(out_dir);
  std::vector<ReplicateResult> results = run_simulation(plan, &std::cerr);

  auto header = config_echo(cfg);
  header["seed"] = std::to_string(plan.scenario.seed);
  header["replicates"] = std::to_string(plan.replicates);
  write_results_csv(out_dir + "/results.csv", results, header);

  std::string summary = format_summary(results);
  std::ofstream sf(out_dir + "/summary.txt");
  if (!sf) fail(ErrorKind::io, "cannot write summary");
  for (const auto& [k, v] : header) sf << "# " << k << " = " << v << "\n";
  sf << summary;
  std::cout << summary;

  for (const auto& r : results)
    if (!r.ok)
      std::cerr << "replicate seed " << r.seed << " failed: " << r.error << "\n";
  return 0;
}

int cmd_fit(const std::string& predictors, const std::string& responses,
            const std::string& config_path, const std::string& out_path) {
  KeyValueConfig cfg =
      config_path.empty() ? KeyValueConfig{} : KeyValueConfig::parse_file(config_path);
  cfg.require_known({"pve", "mean_basis", "cov_basis", "score_basis", "score_grid",
                     "knots", "degree", "link", "structure", "desk_scale"});
  PipelineConfig pipeline = pipeline_from_config(cfg);

  LongitudinalFunctionalDataset data = ingest({predictors, responses});
  LdfrModel model = fit_ldfr(data, pipeline);

  auto meta = config_echo(cfg);
  meta["predictors"] = predictors;
  meta["responses"] = responses;
  save_model(model, out_path, meta);

  std::cout << "subjects: " << data.num_subjects()
            << "  observations: " << data.total_observations() << "\n"
            << "K: " << model.fpca.K << "  pve: " << model.fpca.pve << "\n"
            << "edf: " << model.fit.edf << "  aic: " << model.fit.aic << "\n"
            << "bundle: " << out_path << "\n";
  return 0;
}

int cmd_predict(const std::string& bundle, std::vector<std::string> subjects,
                const std::string& new_predictors, int grid_size,
                const std::string& times_csv, double level, const std::string& out_path) {
  LdfrModel model = load_model(bundle);
  Vector t_eval;
  if (!times_csv.empty()) {
    std::vector<double> ts;
    std::stringstream ss(times_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) ts.push_back(std::stod(tok));
    t_eval = Eigen::Map<Vector>(ts.data(), static_cast<Eigen::Index>(ts.size()));
  } else {
    t_eval = Vector::LinSpaced(grid_size, model.fit.spec.t_domain.lo,
                               model.fit.spec.t_domain.hi);
  }

  const bool gaussian = model.fit.spec.link == Link::identity;
  std::ofstream out(out_path);
  if (!out) fail(ErrorKind::io, "cannot write " + out_path);
  out << "# bundle = " << bundle << "\n# level = " << level << "\n";
  out << "subject_id,kind,t,mean,response";
  if (gaussian) out << ",se,lower,upper";
  out << "\n";
  out << std::setprecision(17);

  auto emit = [&](const std::string& id, const char* kind, const TrajectoryPrediction& tp) {
    PredictionBand band;
    if (gaussian) band = prediction_band(model.fit, tp, level);
    for (Eigen::Index j = 0; j < tp.times.size(); ++j) {
      out << id << ',' << kind << ',' << tp.times[j] << ',' << tp.mean[j] << ','
          << tp.response[j];
      if (gaussian)
        out << ',' << band.se[j] << ',' << band.lower[j] << ',' << band.upper[j];
      out << "\n";
    }
  };

  if (!new_predictors.empty()) {
    auto fresh = ingest_predictors_only(new_predictors, model.fpca.s_grid);
    for (const auto& n : fresh)
      emit(n.id, "new", model.predict_new_subject(n.curves, n.times, t_eval));
  }
  if (subjects.size() == 1 && subjects[0] == "all") {
    subjects = model.fit.subject_ids;
  }
  for (const auto& id : subjects) emit(id, "existing", model.predict_subject(id, t_eval));

  std::cout << "predictions written to " << out_path << "\n";
  return 0;
}

int cmd_fpca(const std::string& predictors, const std::string& config_path,
             const std::string& out_path) {
  KeyValueConfig cfg =
      config_path.empty() ? KeyValueConfig{} : KeyValueConfig::parse_file(config_path);
  cfg.require_known({"pve", "mean_basis", "cov_basis", "desk_scale"});
  PipelineConfig pipeline = pipeline_from_config(cfg);

  LongitudinalFunctionalDataset data = ingest_predictor_file(predictors);
  FpcaConfig fc;
  fc.pve = pipeline.pve;
  fc.mean_smoother = pipeline.mean_smoother;
  fc.cov_smoother = pipeline.cov_smoother;
  MarginalFpca fpca = fit_marginal_fpca(data, fc);

  std::ofstream out(out_path);
  if (!out) fail(ErrorKind::io, "cannot write " + out_path);
  out << std::setprecision(17) << "{\"magic\":\"ldfr-fpca\",\"version\":1,\"K\":" << fpca.K
      << ",\"pve\":" << fpca.pve << ",\"sigma2_white\":" << fpca.sigma2_white
      << ",\"lambda\":[";
  for (int k = 0; k < fpca.K; ++k) out << (k ? "," : "") << fpca.lambda[k];
  out << "],\"s_grid\":[";
  for (Eigen::Index r = 0; r < fpca.s_grid.size(); ++r)
    out << (r ? "," : "") << fpca.s_grid[r];
  out << "],\"phi\":[";
  for (int k = 0; k < fpca.K; ++k) {
    out << (k ? ",[" : "[");
    for (Eigen::Index r = 0; r < fpca.phi.rows(); ++r)
      out << (r ? "," : "") << fpca.phi(r, k);
    out << "]";
  }
  out << "]}\n";

  std::cout << "K = " << fpca.K << ", eigenvalues:";
  for (int k = 0; k < fpca.K; ++k) std::cout << ' ' << fpca.lambda[k];
  std::cout << "\nwhite-noise variance = " << fpca.sigma2_white << "\n";
  return 0;
}

int cmd_report(const std::string& bundle) {
  std::map<std::string, std::string> meta;
  LdfrModel model = load_model(bundle, &meta);
  std::cout << "fit bundle: " << bundle << "\n";
  for (const auto& [k, v] : meta) std::cout << "  " << k << " = " << v << "\n";
  std::cout << "subjects: " << model.fit.num_subjects << "\n"
            << "pve: " << model.fpca.pve << "  K: " << model.fpca.K << "\n"
            << "eigenvalues:";
  for (int k = 0; k < model.fpca.K; ++k) std::cout << ' ' << model.fpca.lambda[k];
  std::cout << "\nwhite-noise variance: " << model.fpca.sigma2_white << "\n";
  for (const auto& p : model.processes) {
    std::cout << "component " << p.component + 1 << ": L = " << p.L()
              << "  score noise = " << p.sigma2 << "  eta:";
    for (int l = 0; l < p.L(); ++l) std::cout << ' ' << p.eta[l];
    std::cout << "\n";
  }
  std::cout << "lambda0: " << model.fit.lambda0 << "  lambda: " << model.fit.lambda
            << "  sigma2_e: " << model.fit.sigma2_e << "\n";
  if (model.fit.D.rows() > 0) std::cout << "D:\n" << model.fit.D << "\n";
  if (model.fit.spec.has_group())
    std::cout << "group variance: " << model.fit.sigma2_group << "\n";
  std::cout << "edf: " << model.fit.edf << "\n"
            << "aic: " << model.fit.aic
            << (model.fit.aic_is_working_approx ? " (working-model approximation)" : "")
            << "\n"
            << "converged: " << (model.fit.converged ? "yes" : "no")
            << "  outer iterations: " << model.fit.outer_iterations << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"longitudinal dynamic functional regression"};
  app.require_subcommand(1);

  std::string config_path, out_path = ".", predictors, responses, bundle, new_predictors,
              times_csv;
  std::vector<std::string> subjects;
  std::uint64_t seed = 0;
  int replicates = 0, threads = 0, grid_size = 41;
  double level = 0.95;

  auto* sim = app.add_subcommand("simulate", "run a scenario study");
  sim->add_option("--config", config_path, "scenario config file")->required();
  sim->add_option("--seed", seed, "override the config seed");
  sim->add_option("--replicates", replicates, "override the replicate count");
  sim->add_option("--threads", threads, "worker threads (default: all cores)");
  sim->add_option("--out", out_path, "output directory")->required();

  auto* fit = app.add_subcommand("fit", "fit a model to CSV data");
  fit->add_option("--predictors", predictors, "long-format predictor CSV")->required();
  fit->add_option("--responses", responses, "response CSV")->required();
  fit->add_option("--config", config_path, "model config file");
  fit->add_option("--out", out_path, "output bundle path")->required();

  auto* pred = app.add_subcommand("predict", "predict trajectories from a bundle");
  pred->add_option("--bundle", bundle, "fit bundle")->required();
  pred->add_option("--subject", subjects, "training subject id ('all' for every subject)");
  pred->add_option("--new-predictors", new_predictors, "predictor CSV for unseen subjects");
  pred->add_option("--grid", grid_size, "evaluation grid size");
  pred->add_option("--times", times_csv, "comma-separated evaluation times");
  pred->add_option("--level", level, "band level");
  pred->add_option("--out", out_path, "output CSV")->required();

  auto* fpca = app.add_subcommand("fpca", "covariate preprocessing only");
  fpca->add_option("--predictors", predictors, "long-format predictor CSV")->required();
  fpca->add_option("--config", config_path, "config file");
  fpca->add_option("--out", out_path, "output JSON")->required();

  auto* rep = app.add_subcommand("report", "summarize a fit bundle");
  rep->add_option("--bundle", bundle, "fit bundle")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(config_path, seed, replicates, threads, out_path);
    if (fit->parsed()) return cmd_fit(predictors, responses, config_path, out_path);
    if (pred->parsed())
      return cmd_predict(bundle, subjects, new_predictors, grid_size, times_csv, level,
                         out_path);
    if (fpca->parsed()) return cmd_fpca(predictors, config_path, out_path);
    if (rep->parsed()) return cmd_report(bundle);
  } catch (const ldfr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  }
  return 0;
}
