#include "ldfr/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace ldfr {

int LongitudinalFunctionalDataset::total_observations() const {
  int n = 0;
  for (const auto& s : subjects) n += static_cast<int>(s.times.size());
  return n;
}

int LongitudinalFunctionalDataset::subject_index(const std::string& id) const {
  for (std::size_t i = 0; i < subjects.size(); ++i)
    if (subjects[i].id == id) return static_cast<int>(i);
  fail(ErrorKind::lookup, "unknown subject id: " + id);
}

std::vector<std::string> LongitudinalFunctionalDataset::group_labels() const {
  std::vector<std::string> labels;
  for (const auto& s : subjects) {
    if (s.group.empty()) continue;
    if (std::find(labels.begin(), labels.end(), s.group) == labels.end())
      labels.push_back(s.group);
  }
  return labels;
}

void LongitudinalFunctionalDataset::validate() const {
  if (subjects.empty()) fail(ErrorKind::data, "dataset has no subjects");
  if (s_grid.size() < 2) fail(ErrorKind::data, "dataset s-grid has fewer than two points");
  for (Eigen::Index r = 1; r < s_grid.size(); ++r)
    if (!(s_grid[r] > s_grid[r - 1])) fail(ErrorKind::data, "s-grid must be increasing");
  for (const auto& s : subjects) {
    const auto n = static_cast<Eigen::Index>(s.times.size());
    if (n == 0) fail(ErrorKind::data, "subject " + s.id + " has no visits");
    if (s.curves.rows() != n || s.curves.cols() != s_grid.size())
      fail(ErrorKind::dimension, "subject " + s.id + " curve matrix does not match grid");
    if (s.responses.size() != n)
      fail(ErrorKind::dimension, "subject " + s.id + " responses do not match visits");
    if (s.covariates.size() > 0 && s.covariates.rows() != n)
      fail(ErrorKind::dimension, "subject " + s.id + " covariates do not match visits");
    for (double t : s.times)
      if (!t_domain.contains(t))
        fail(ErrorKind::domain, "subject " + s.id + " visit time outside declared domain");
    if (!s.curves.allFinite())
      fail(ErrorKind::data, "subject " + s.id + " has non-finite predictor values");
  }
}

Interval LongitudinalFunctionalDataset::infer_t_domain(const std::vector<Subject>& subjects) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& s : subjects)
    for (double t : s.times) {
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
  if (!(hi > lo)) hi = lo + 1.0;
  return Interval{lo, hi};
}

}  // namespace ldfr
