#pragma once

#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "ldfr/model.hpp"
#include "ldfr/simulation.hpp"

namespace ldfr {

struct ReplicateResult {
  std::uint64_t seed = 0;
  double delta = 0.0;
  int subjects = 0;
  std::string design, noise, response, effect;

  double in_pe = std::numeric_limits<double>::quiet_NaN();
  double out_pe = std::numeric_limits<double>::quiet_NaN();
  double tpr_in = std::numeric_limits<double>::quiet_NaN();
  double tpr_out = std::numeric_limits<double>::quiet_NaN();
  double rmpe_existing = std::numeric_limits<double>::quiet_NaN();
  double rmpe_new = std::numeric_limits<double>::quiet_NaN();
  double cov95_existing = std::numeric_limits<double>::quiet_NaN();
  double len95_existing = std::numeric_limits<double>::quiet_NaN();
  double cov95_new = std::numeric_limits<double>::quiet_NaN();
  double len95_new = std::numeric_limits<double>::quiet_NaN();
  double cov90_existing = std::numeric_limits<double>::quiet_NaN();
  double len90_existing = std::numeric_limits<double>::quiet_NaN();
  double cov90_new = std::numeric_limits<double>::quiet_NaN();
  double len90_new = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  bool ok = false;
  std::string error;
};

struct HarnessOptions {
  bool split_metrics = true;       // holdout split, in/out-of-sample errors
  bool trajectory_metrics = false; // full-data refit, grid errors + bands
  bool auto_structure = true;      // random-effect structure from the family
  PipelineConfig pipeline = PipelineConfig::desk_scale();
};

// Random-effect structure the harness fits for each generating family. The
// binary family is fitted with a subject intercept only.
RandomStructure structure_for(ResponseFamily family);

ReplicateResult run_replicate(const ScenarioConfig& scenario, const HarnessOptions& options);

struct SimulationPlan {
  ScenarioConfig scenario;        // delta and seed overridden per replicate
  std::vector<double> deltas{0.0};
  int replicates = 1;
  int threads = 0;                // 0: hardware concurrency
  HarnessOptions options;
};

// Runs deltas x replicates jobs, each on its own seed substream; failures are
// recorded in place and do not stop the run.
std::vector<ReplicateResult> run_simulation(const SimulationPlan& plan,
                                            std::ostream* log = nullptr);

struct SummaryStat {
  double median = std::numeric_limits<double>::quiet_NaN();
  double iqr = std::numeric_limits<double>::quiet_NaN();
  int count = 0;
};

// Median and interquartile range over the finite entries.
SummaryStat summarize(std::vector<double> values);

std::string design_name(Design d);
std::string noise_name(NoiseLevel n);
std::string response_name(ResponseFamily f);
std::string effect_name(EffectShape e);

}  // namespace ldfr
