#pragma once

#include <map>
#include <string>
#include <vector>

#include "ldfr/harness.hpp"
#include "ldfr/model.hpp"

namespace ldfr {

// Flat key = value configuration with '#' comments. Readers declare the keys
// they understand; anything else is rejected.
struct KeyValueConfig {
  std::map<std::string, std::string> entries;

  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_text(const std::string& text);

  bool has(const std::string& key) const { return entries.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const;
  void require_known(const std::vector<std::string>& known) const;
};

// Simulation plan from a config file (documented in the README).
SimulationPlan plan_from_config(const KeyValueConfig& config);

// Pipeline options shared by the fit/fpca commands.
PipelineConfig pipeline_from_config(const KeyValueConfig& config);

struct DatasetFiles {
  std::string predictors;  // subject_id, [group_id,] t, s, w
  std::string responses;   // subject_id, t, y, extra columns become covariates
};

// Long-format CSV ingestion with schema validation; per-curve missing grid
// points up to 20% are linearly interpolated (count reported via warn).
LongitudinalFunctionalDataset ingest(const DatasetFiles& files);

// Predictor-only ingestion (prediction for subjects outside the training set).
struct NewSubjectCurves {
  std::string id;
  Vector times;
  Matrix curves;
};
std::vector<NewSubjectCurves> ingest_predictors_only(const std::string& path,
                                                     const Vector& expected_grid);

// Predictor file as a dataset with zero responses (preprocessing-only runs).
LongitudinalFunctionalDataset ingest_predictor_file(const std::string& path);

// Versioned fit container (JSON); round-trips exactly.
void save_model(const LdfrModel& model, const std::string& path,
                const std::map<std::string, std::string>& metadata = {});
LdfrModel load_model(const std::string& path,
                     std::map<std::string, std::string>* metadata = nullptr);

void write_results_csv(const std::string& path, const std::vector<ReplicateResult>& results,
                       const std::map<std::string, std::string>& header);
std::vector<ReplicateResult> read_results_csv(const std::string& path);

// Median (IQR) block per delta, resembling a report table.
std::string format_summary(const std::vector<ReplicateResult>& results);

}  // namespace ldfr
