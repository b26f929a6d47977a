#pragma once

#include <string>
#include <vector>

#include "ldfr/types.hpp"

namespace ldfr {

// One study participant: repeated visits at times t_ij, a noisy predictor
// curve per visit on the shared s-grid, and a scalar response per visit.
struct Subject {
  std::string id;
  std::string group;      // empty when the design has no grouping
  std::vector<double> times;
  Matrix curves;          // n_i x R, one row per visit
  Vector responses;       // n_i
  Matrix covariates;      // n_i x c, c may be 0
};

struct LongitudinalFunctionalDataset {
  Vector s_grid;
  Interval t_domain;
  std::vector<Subject> subjects;
  std::vector<std::string> covariate_names;

  int num_subjects() const { return static_cast<int>(subjects.size()); }
  int grid_size() const { return static_cast<int>(s_grid.size()); }
  int total_observations() const;
  int num_covariates() const { return static_cast<int>(covariate_names.size()); }

  int subject_index(const std::string& id) const;  // lookup error if absent
  std::vector<std::string> group_labels() const;   // distinct, in first-seen order

  // Consistency checks: nonempty, curve widths match the grid, responses
  // aligned with times. Throws on violation.
  void validate() const;

  // t_domain from the observed times (used when no domain is declared).
  static Interval infer_t_domain(const std::vector<Subject>& subjects);
};

}  // namespace ldfr
