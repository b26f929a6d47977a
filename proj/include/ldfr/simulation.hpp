#pragma once

#include <cstdint>
#include <random>

#include "ldfr/dataset.hpp"
#include "ldfr/types.hpp"

namespace ldfr {

// Deterministic random source. The engine is the standard 64-bit Mersenne
// twister; the uniform and normal transforms live here so that a seed gives
// the same stream on every platform. Substreams decorrelate parallel
// replicates.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  double normal() {  // Box-Muller
    double u1 = uniform(), u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  int uniform_int(int n) {  // 0..n-1, rejection sampling
    const std::uint64_t bound = UINT64_MAX - UINT64_MAX % static_cast<std::uint64_t>(n);
    std::uint64_t v;
    do { v = gen_(); } while (v >= bound);
    return static_cast<int>(v % static_cast<std::uint64_t>(n));
  }
  // First `count` elements of a random permutation of 0..n-1, sorted.
  std::vector<int> sample_without_replacement(int n, int count);

  static std::uint64_t substream(std::uint64_t base, std::uint64_t index);

private:
  std::mt19937_64 gen_;
};

enum class Design { sparse, moderate };
enum class NoiseLevel { high, low };  // white-noise variance 9 or 1
enum class ResponseFamily { gaussian_iid, gaussian_cs, gaussian_rem, binary };
enum class EffectShape { trig_exp, polynomial };

struct ScenarioConfig {
  int subjects = 100;
  Design design = Design::sparse;
  NoiseLevel noise = NoiseLevel::high;
  ResponseFamily response = ResponseFamily::gaussian_cs;
  EffectShape effect = EffectShape::trig_exp;
  double delta = 0.0;
  std::uint64_t seed = 1;
  int s_points = 101;
  int t_points = 41;
  int new_subjects = 100;

  double sigma2_white() const { return noise == NoiseLevel::high ? 9.0 : 1.0; }
  int visits_lo() const { return design == Design::sparse ? 6 : 16; }
  int visits_hi() const { return design == Design::sparse ? 10 : 20; }
};

// Latent predictor surfaces on the full grid plus noisy curves at the
// sampled visit times.
struct GeneratedPredictors {
  Vector s_grid;
  Vector t_grid;
  std::vector<std::vector<int>> obs_idx;  // grid indices of the visits
  std::vector<Matrix> x_latent;           // per subject: t_points x s_points
  std::vector<Matrix> w_observed;         // per subject: n_i x s_points
};

GeneratedPredictors generate_predictors(const ScenarioConfig& config, Rng& rng);

double true_gamma(EffectShape effect, double delta, double s, double t);

// Responses at every grid time (so trajectory error and band coverage can be
// evaluated anywhere); the observed dataset keeps only the visit subset.
struct GeneratedResponses {
  Matrix y_full;      // subjects x t_points
  Matrix omega_full;  // linear predictors, binary family
  Matrix mu_full;     // noise-free mean part
};

GeneratedResponses generate_responses(const ScenarioConfig& config,
                                      const GeneratedPredictors& predictors, Rng& rng);

LongitudinalFunctionalDataset observed_dataset(const GeneratedPredictors& predictors,
                                               const GeneratedResponses& responses);

// Grouped generator driven by externally supplied surface components:
// mean, eigenfunctions, per-component score covariances, intercept function,
// regression surface, and the variance parameters of the noise structure
// b_group + b_0 + b_1 t + e.
struct GroupedComponents {
  Vector s_grid;
  Vector t_grid;
  Matrix tau;                      // s x t
  Matrix phi;                      // s x K
  std::vector<Matrix> score_cov;   // per component: t x t
  Vector alpha;                    // intercept on the t grid
  Matrix gamma;                    // s x t
  double sigma2_group = 0.0;
  double sigma2_b0 = 0.0;
  double sigma2_b1 = 0.0;
  double sigma2_e = 0.0;
  double sigma2_white = 0.0;
  Matrix smooth_error_cov;         // s x s, optional (size 0 to skip)
};

struct GroupedConfig {
  int groups = 21;
  int subjects = 475;
  int visits_lo = 7;
  int visits_hi = 21;
};

LongitudinalFunctionalDataset generate_grouped(const GroupedConfig& config,
                                               const GroupedComponents& components,
                                               Rng& rng);

enum class SplitMode { holdout_per_subject, last_days, random_fraction };

struct SplitSpec {
  SplitMode mode = SplitMode::holdout_per_subject;
  int holdout = 5;
  int last_k = 10;
  int subject_count = -1;  // last_days: how many subjects move data to test
  double fraction = 0.2;
};

struct TrainTestSplit {
  std::vector<std::vector<int>> test_by_subject;  // visit indices, sorted
  std::vector<std::vector<int>> train_by_subject;
};

TrainTestSplit train_test_split(const LongitudinalFunctionalDataset& data,
                                const SplitSpec& spec, Rng& rng);

LongitudinalFunctionalDataset subset_visits(const LongitudinalFunctionalDataset& data,
                                            const std::vector<std::vector<int>>& keep);

// Root-mean prediction error with per-subject averaging before the subject
// average: sqrt( mean_i mean_j (y_ij - yhat_ij)^2 ).
double prediction_error(const std::vector<Vector>& truth, const std::vector<Vector>& predicted);

double true_positive_rate(const std::vector<Vector>& truth, const std::vector<Vector>& predicted);

}  // namespace ldfr
