#include "ldfr/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

namespace ldfr {

RandomStructure structure_for(ResponseFamily family) {
  switch (family) {
    case ResponseFamily::gaussian_iid: return RandomStructure::none;
    case ResponseFamily::gaussian_cs: return RandomStructure::subject_intercept;
    case ResponseFamily::gaussian_rem: return RandomStructure::subject_intercept_slope;
    case ResponseFamily::binary: return RandomStructure::subject_intercept;
  }
  return RandomStructure::subject_intercept;
}

std::string design_name(Design d) { return d == Design::sparse ? "sparse" : "moderate"; }
std::string noise_name(NoiseLevel n) { return n == NoiseLevel::high ? "high" : "low"; }
std::string response_name(ResponseFamily f) {
  switch (f) {
    case ResponseFamily::gaussian_iid: return "gaussian_iid";
    case ResponseFamily::gaussian_cs: return "gaussian_cs";
    case ResponseFamily::gaussian_rem: return "gaussian_rem";
    case ResponseFamily::binary: return "binary";
  }
  return "?";
}
std::string effect_name(EffectShape e) {
  return e == EffectShape::trig_exp ? "trig_exp" : "polynomial";
}

namespace {

struct BandAccumulator {
  double cover = 0.0, length = 0.0;
  long points = 0;
  void add(const PredictionBand& band, const Vector& truth) {
    for (Eigen::Index j = 0; j < truth.size(); ++j) {
      cover += (truth[j] >= band.lower[j] && truth[j] <= band.upper[j]) ? 1.0 : 0.0;
      length += band.upper[j] - band.lower[j];
      ++points;
    }
  }
  double coverage() const { return points ? cover / points : std::nan(""); }
  double mean_length() const { return points ? length / points : std::nan(""); }
};

void split_metrics_pass(const ScenarioConfig& cfg, const HarnessOptions& options,
                        const PipelineConfig& pipeline,
                        const GeneratedPredictors& pred, const GeneratedResponses& resp,
                        const LongitudinalFunctionalDataset& data, ReplicateResult& result) {
  Rng rng_split(Rng::substream(cfg.seed, 3));
  SplitSpec split_spec;
  TrainTestSplit split = train_test_split(data, split_spec, rng_split);
  LongitudinalFunctionalDataset train = subset_visits(data, split.train_by_subject);
  LdfrModel model = fit_ldfr(train, pipeline);

  const bool binary = cfg.response == ResponseFamily::binary;
  const int I = data.num_subjects();
  std::vector<Vector> truth_in(I), truth_out(I), pred_in(I), pred_out(I);
  std::vector<Vector> cls_in(I), cls_out(I), cls_hat_in(I), cls_hat_out(I);

  for (int i = 0; i < I; ++i) {
    const Subject& subj = data.subjects[i];
    Vector times = Eigen::Map<const Vector>(subj.times.data(),
                                            static_cast<Eigen::Index>(subj.times.size()));
    TrajectoryPrediction tp = model.predict_subject(subj.id, times);
    auto fill = [&](const std::vector<int>& idx, Vector& truth, Vector& predicted,
                    Vector& cls, Vector& cls_hat) {
      truth = Vector(static_cast<Eigen::Index>(idx.size()));
      predicted = Vector(static_cast<Eigen::Index>(idx.size()));
      cls = Vector(static_cast<Eigen::Index>(idx.size()));
      cls_hat = Vector(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const int v = idx[j];
        if (binary) {
          truth[static_cast<Eigen::Index>(j)] = resp.omega_full(i, pred.obs_idx[i][v]);
          predicted[static_cast<Eigen::Index>(j)] = tp.linear[v];
        } else {
          truth[static_cast<Eigen::Index>(j)] = subj.responses[v];
          predicted[static_cast<Eigen::Index>(j)] = tp.mean[v];
        }
        cls[static_cast<Eigen::Index>(j)] = subj.responses[v];
        cls_hat[static_cast<Eigen::Index>(j)] = tp.response[v];
      }
    };
    fill(split.train_by_subject[i], truth_in[i], pred_in[i], cls_in[i], cls_hat_in[i]);
    fill(split.test_by_subject[i], truth_out[i], pred_out[i], cls_out[i], cls_hat_out[i]);
  }
  result.in_pe = prediction_error(truth_in, pred_in);
  result.out_pe = prediction_error(truth_out, pred_out);
  if (binary) {
    result.tpr_in = true_positive_rate(cls_in, cls_hat_in);
    result.tpr_out = true_positive_rate(cls_out, cls_hat_out);
  }
  (void)options;
}

void trajectory_metrics_pass(const ScenarioConfig& cfg, const PipelineConfig& pipeline,
                             const GeneratedPredictors& pred, const GeneratedResponses& resp,
                             const LongitudinalFunctionalDataset& data,
                             ReplicateResult& result) {
  LdfrModel model = fit_ldfr(data, pipeline);
  const Vector& grid = pred.t_grid;
  const int I = data.num_subjects();
  const bool bands = cfg.response != ResponseFamily::binary;

  std::vector<Vector> truth(I), predicted(I);
  BandAccumulator b95, b90;
  for (int i = 0; i < I; ++i) {
    TrajectoryPrediction tp = model.predict_subject(data.subjects[i].id, grid);
    truth[i] = resp.y_full.row(i).transpose();
    predicted[i] = tp.response;
    if (bands) {
      b95.add(prediction_band(model.fit, tp, 0.95), truth[i]);
      b90.add(prediction_band(model.fit, tp, 0.90), truth[i]);
    }
  }
  result.rmpe_existing = prediction_error(truth, predicted);
  if (bands) {
    result.cov95_existing = b95.coverage();
    result.len95_existing = b95.mean_length();
    result.cov90_existing = b90.coverage();
    result.len90_existing = b90.mean_length();
  }

  if (cfg.new_subjects > 0) {
    ScenarioConfig fresh = cfg;
    fresh.subjects = cfg.new_subjects;
    Rng rp(Rng::substream(cfg.seed, 4));
    Rng rr(Rng::substream(cfg.seed, 5));
    GeneratedPredictors npred = generate_predictors(fresh, rp);
    GeneratedResponses nresp = generate_responses(fresh, npred, rr);

    std::vector<Vector> ntruth(fresh.subjects), npredicted(fresh.subjects);
    BandAccumulator n95, n90;
    for (int i = 0; i < fresh.subjects; ++i) {
      Vector times(static_cast<Eigen::Index>(npred.obs_idx[i].size()));
      for (std::size_t j = 0; j < npred.obs_idx[i].size(); ++j)
        times[static_cast<Eigen::Index>(j)] = npred.t_grid[npred.obs_idx[i][j]];
      TrajectoryPrediction tp =
          model.predict_new_subject(npred.w_observed[i], times, grid);
      ntruth[i] = nresp.y_full.row(i).transpose();
      npredicted[i] = tp.response;
      if (bands) {
        n95.add(prediction_band(model.fit, tp, 0.95), ntruth[i]);
        n90.add(prediction_band(model.fit, tp, 0.90), ntruth[i]);
      }
    }
    result.rmpe_new = prediction_error(ntruth, npredicted);
    if (bands) {
      result.cov95_new = n95.coverage();
      result.len95_new = n95.mean_length();
      result.cov90_new = n90.coverage();
      result.len90_new = n90.mean_length();
    }
  }
}

}  // namespace

ReplicateResult run_replicate(const ScenarioConfig& scenario, const HarnessOptions& options) {
  ReplicateResult result;
  result.seed = scenario.seed;
  result.delta = scenario.delta;
  result.subjects = scenario.subjects;
  result.design = design_name(scenario.design);
  result.noise = noise_name(scenario.noise);
  result.response = response_name(scenario.response);
  result.effect = effect_name(scenario.effect);

  const auto t0 = std::chrono::steady_clock::now();
  try {
    PipelineConfig pipeline = options.pipeline;
    if (options.auto_structure) pipeline.structure = structure_for(scenario.response);
    pipeline.link =
        scenario.response == ResponseFamily::binary ? Link::logit : Link::identity;

    Rng rp(Rng::substream(scenario.seed, 1));
    Rng rr(Rng::substream(scenario.seed, 2));
    GeneratedPredictors pred = generate_predictors(scenario, rp);
    GeneratedResponses resp = generate_responses(scenario, pred, rr);
    LongitudinalFunctionalDataset data = observed_dataset(pred, resp);

    if (options.split_metrics)
      split_metrics_pass(scenario, options, pipeline, pred, resp, data, result);
    if (options.trajectory_metrics)
      trajectory_metrics_pass(scenario, pipeline, pred, resp, data, result);
    result.ok = true;
  } catch (const std::exception& e) {
    result.ok = false;
    result.error = e.what();
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::vector<ReplicateResult> run_simulation(const SimulationPlan& plan, std::ostream* log) {
  const int jobs = static_cast<int>(plan.deltas.size()) * plan.replicates;
  std::vector<ReplicateResult> results(jobs);
  int threads = plan.threads > 0 ? plan.threads
                                 : static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  threads = std::min(threads, jobs);

  std::atomic<int> next{0};
  std::mutex log_mutex;
  auto worker = [&]() {
    for (;;) {
      const int job = next.fetch_add(1);
      if (job >= jobs) return;
      const int d = job / plan.replicates;
      ScenarioConfig cfg = plan.scenario;
      cfg.delta = plan.deltas[d];
      cfg.seed = Rng::substream(plan.scenario.seed, static_cast<std::uint64_t>(job) + 1);
      results[job] = run_replicate(cfg, plan.options);
      if (log) {
        std::lock_guard<std::mutex> guard(log_mutex);
        *log << "replicate " << job + 1 << "/" << jobs << " delta=" << cfg.delta
             << (results[job].ok ? "" : " FAILED: " + results[job].error) << "\n";
      }
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return results;
}

SummaryStat summarize(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return !std::isfinite(v); }),
               values.end());
  SummaryStat s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    double pos = q * (values.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    double frac = pos - static_cast<double>(lo);
    return lo + 1 < values.size() ? values[lo] * (1.0 - frac) + values[lo + 1] * frac
                                  : values[lo];
  };
  s.median = quantile(0.5);
  s.iqr = quantile(0.75) - quantile(0.25);
  return s;
}

}  // namespace ldfr
