#include "ldfr/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace ldfr {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::schema, "cannot parse " + what + " from '" + s + "'");
  }
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_text(const std::string& text) {
  KeyValueConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::schema, "config line " + std::to_string(lineno) + " is not key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(ErrorKind::schema, "empty config key on line " + std::to_string(lineno));
    if (cfg.entries.count(key))
      fail(ErrorKind::schema, "duplicate config key '" + key + "'");
    cfg.entries[key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_text(buffer.str());
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = entries.find(key);
  return it == entries.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = entries.find(key);
  return it == entries.end() ? fallback : parse_double(it->second, key);
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  return static_cast<int>(get_double(key, fallback));
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = entries.find(key);
  if (it == entries.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    fail(ErrorKind::schema, "cannot parse " + key + " from '" + it->second + "'");
  }
}

std::vector<double> KeyValueConfig::get_list(const std::string& key,
                                             std::vector<double> fallback) const {
  auto it = entries.find(key);
  if (it == entries.end()) return fallback;
  std::vector<double> out;
  std::stringstream ss(it->second);
  std::string tok;
  while (ss >> tok) out.push_back(parse_double(tok, key));
  if (out.empty()) fail(ErrorKind::schema, "empty list for key '" + key + "'");
  return out;
}

void KeyValueConfig::require_known(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : entries) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      fail(ErrorKind::schema, "unknown config key '" + key + "'");
  }
}

namespace {

const std::vector<std::string> kPipelineKeys = {
    "pve", "mean_basis", "cov_basis", "score_basis", "score_grid",
    "knots", "degree", "link", "structure", "desk_scale"};

const std::vector<std::string> kPlanKeys = [] {
  std::vector<std::string> keys = kPipelineKeys;
  for (const char* k : {"subjects", "design", "noise", "response", "effect", "delta",
                        "seed", "replicates", "threads", "new_subjects",
                        "split_metrics", "trajectory_metrics"})
    keys.push_back(k);
  return keys;
}();

RandomStructure parse_structure(const std::string& s) {
  if (s == "none") return RandomStructure::none;
  if (s == "intercept") return RandomStructure::subject_intercept;
  if (s == "intercept_slope") return RandomStructure::subject_intercept_slope;
  if (s == "group") return RandomStructure::group_and_subject;
  fail(ErrorKind::schema, "unknown structure '" + s + "'");
}

}  // namespace

PipelineConfig pipeline_from_config(const KeyValueConfig& config) {
  PipelineConfig cfg = config.get_int("desk_scale", 1) ? PipelineConfig::desk_scale()
                                                       : PipelineConfig();
  cfg.pve = config.get_double("pve", cfg.pve);
  int mb = config.get_int("mean_basis", cfg.mean_smoother.num_basis_s);
  cfg.mean_smoother.num_basis_s = mb;
  cfg.mean_smoother.num_basis_t = mb;
  int cb = config.get_int("cov_basis", cfg.cov_smoother.num_basis_s);
  cfg.cov_smoother.num_basis_s = cb;
  cfg.cov_smoother.num_basis_t = cb;
  int sb = config.get_int("score_basis", cfg.score.smoother.num_basis_s);
  cfg.score.smoother.num_basis_s = sb;
  cfg.score.smoother.num_basis_t = sb;
  cfg.score.grid_size = config.get_int("score_grid", cfg.score.grid_size);
  cfg.num_knots = config.get_int("knots", cfg.num_knots);
  cfg.degree = config.get_int("degree", cfg.degree);
  std::string link = config.get("link", "identity");
  if (link == "identity") cfg.link = Link::identity;
  else if (link == "logit") cfg.link = Link::logit;
  else fail(ErrorKind::schema, "unknown link '" + link + "'");
  if (config.has("structure")) cfg.structure = parse_structure(config.get("structure", ""));
  return cfg;
}

SimulationPlan plan_from_config(const KeyValueConfig& config) {
  config.require_known(kPlanKeys);
  SimulationPlan plan;
  plan.scenario.subjects = config.get_int("subjects", 100);

  std::string design = config.get("design", "sparse");
  if (design == "sparse") plan.scenario.design = Design::sparse;
  else if (design == "moderate") plan.scenario.design = Design::moderate;
  else fail(ErrorKind::schema, "unknown design '" + design + "'");

  std::string noise = config.get("noise", "high");
  if (noise == "high") plan.scenario.noise = NoiseLevel::high;
  else if (noise == "low") plan.scenario.noise = NoiseLevel::low;
  else fail(ErrorKind::schema, "unknown noise level '" + noise + "'");

  std::string response = config.get("response", "gaussian_cs");
  if (response == "gaussian_iid") plan.scenario.response = ResponseFamily::gaussian_iid;
  else if (response == "gaussian_cs") plan.scenario.response = ResponseFamily::gaussian_cs;
  else if (response == "gaussian_rem") plan.scenario.response = ResponseFamily::gaussian_rem;
  else if (response == "binary") plan.scenario.response = ResponseFamily::binary;
  else fail(ErrorKind::schema, "unknown response family '" + response + "'");

  std::string effect = config.get("effect", "trig_exp");
  if (effect == "trig_exp") plan.scenario.effect = EffectShape::trig_exp;
  else if (effect == "polynomial") plan.scenario.effect = EffectShape::polynomial;
  else fail(ErrorKind::schema, "unknown effect shape '" + effect + "'");

  plan.scenario.seed = config.get_u64("seed", 1);
  plan.scenario.new_subjects = config.get_int("new_subjects", 100);
  plan.deltas = config.get_list("delta", {0.0});
  plan.replicates = config.get_int("replicates", 1);
  plan.threads = config.get_int("threads", 0);
  plan.options.split_metrics = config.get_int("split_metrics", 1) != 0;
  plan.options.trajectory_metrics = config.get_int("trajectory_metrics", 0) != 0;
  plan.options.pipeline = pipeline_from_config(config);
  plan.options.auto_structure = !config.has("structure");
  if (plan.replicates < 1) fail(ErrorKind::schema, "replicates must be >= 1");
  return plan;
}

namespace {

struct CurveRecord {
  std::string subject;
  std::string group;
  std::string t_key;
  double t = 0.0;
  std::map<double, double> values;  // s -> w
};

int column_index(const std::vector<std::string>& header, const std::string& name,
                 bool required) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    if (required) fail(ErrorKind::schema, "missing required column '" + name + "'");
    return -1;
  }
  return static_cast<int>(it - header.begin());
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.size() < 2) fail(ErrorKind::schema, path + " has no data rows");
  return rows;
}

// Parse the predictor file into per-(subject, t) curves, in first-appearance
// order of subjects and time order of visits.
std::vector<CurveRecord> parse_curves(const std::string& path, std::vector<std::string>* order,
                                      std::map<std::string, std::string>* groups) {
  auto rows = read_csv(path);
  const auto& header = rows.front();
  const int c_subj = column_index(header, "subject_id", true);
  const int c_group = column_index(header, "group_id", false);
  const int c_t = column_index(header, "t", true);
  const int c_s = column_index(header, "s", true);
  const int c_w = column_index(header, "w", true);

  std::map<std::pair<std::string, std::string>, CurveRecord> curves;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (static_cast<int>(row.size()) <= std::max({c_subj, c_t, c_s, c_w}))
      fail(ErrorKind::schema, "short row " + std::to_string(r + 1) + " in " + path);
    std::string subj = row[c_subj];
    std::string t_key = row[c_t];
    double s = parse_double(row[c_s], "s");
    double w = parse_double(row[c_w], "w");
    auto key = std::make_pair(subj, t_key);
    auto [it, inserted] = curves.try_emplace(key);
    if (inserted) {
      it->second.subject = subj;
      it->second.t_key = t_key;
      it->second.t = parse_double(t_key, "t");
      if (c_group >= 0) it->second.group = row[c_group];
      if (std::find(order->begin(), order->end(), subj) == order->end())
        order->push_back(subj);
      if (c_group >= 0) {
        auto [git, ginserted] = groups->try_emplace(subj, it->second.group);
        if (!ginserted && git->second != it->second.group)
          fail(ErrorKind::schema, "subject " + subj + " has conflicting group labels");
      }
    }
    if (!it->second.values.emplace(s, w).second)
      fail(ErrorKind::schema, "duplicate predictor row for (subject=" + subj +
                                  ", t=" + t_key + ", s=" + row[c_s] + ")");
  }
  std::vector<CurveRecord> out;
  out.reserve(curves.size());
  for (auto& [key, rec] : curves) out.push_back(std::move(rec));
  return out;
}

// Fill a curve onto the master grid, linearly interpolating missing points.
Vector curve_on_grid(const CurveRecord& rec, const Vector& grid, int* imputed) {
  Vector out(grid.size());
  std::vector<double> xs, ys;
  xs.reserve(rec.values.size());
  for (const auto& [s, w] : rec.values) {
    xs.push_back(s);
    ys.push_back(w);
  }
  for (Eigen::Index r = 0; r < grid.size(); ++r) {
    const double s = grid[r];
    auto it = rec.values.find(s);
    if (it != rec.values.end()) {
      out[r] = it->second;
      continue;
    }
    ++*imputed;
    auto hi = std::lower_bound(xs.begin(), xs.end(), s);
    if (hi == xs.begin()) out[r] = ys.front();
    else if (hi == xs.end()) out[r] = ys.back();
    else {
      auto h = static_cast<std::size_t>(hi - xs.begin());
      double w = (s - xs[h - 1]) / (xs[h] - xs[h - 1]);
      out[r] = (1.0 - w) * ys[h - 1] + w * ys[h];
    }
  }
  return out;
}

}  // namespace

LongitudinalFunctionalDataset ingest(const DatasetFiles& files) {
  std::vector<std::string> subject_order;
  std::map<std::string, std::string> group_of;
  std::vector<CurveRecord> curves = parse_curves(files.predictors, &subject_order, &group_of);

  // master grid: union of observed s values
  std::vector<double> grid_values;
  for (const auto& rec : curves)
    for (const auto& [s, w] : rec.values) {
      (void)w;
      grid_values.push_back(s);
    }
  std::sort(grid_values.begin(), grid_values.end());
  grid_values.erase(std::unique(grid_values.begin(), grid_values.end()), grid_values.end());
  if (grid_values.size() < 2) fail(ErrorKind::schema, "predictor grid has fewer than two points");
  Vector grid = Eigen::Map<Vector>(grid_values.data(), static_cast<Eigen::Index>(grid_values.size()));

  // responses keyed by the exact (subject, t) strings
  auto rows = read_csv(files.responses);
  const auto& header = rows.front();
  const int c_subj = column_index(header, "subject_id", true);
  const int c_t = column_index(header, "t", true);
  const int c_y = column_index(header, "y", true);
  std::vector<std::string> covariate_names;
  std::vector<int> covariate_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const int ci = static_cast<int>(c);
    if (ci == c_subj || ci == c_t || ci == c_y) continue;
    covariate_names.push_back(header[c]);
    covariate_cols.push_back(ci);
  }
  std::map<std::pair<std::string, std::string>, std::pair<double, std::vector<double>>> responses;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (static_cast<int>(row.size()) < static_cast<int>(header.size()))
      fail(ErrorKind::schema, "short row " + std::to_string(r + 1) + " in " + files.responses);
    auto key = std::make_pair(row[c_subj], row[c_t]);
    std::vector<double> covs;
    for (int ci : covariate_cols) covs.push_back(parse_double(row[ci], header[ci]));
    if (!responses.emplace(key, std::make_pair(parse_double(row[c_y], "y"), covs)).second)
      fail(ErrorKind::schema, "duplicate response row for (subject=" + key.first +
                                  ", t=" + key.second + ")");
  }

  // assemble subjects in first-appearance order, visits in time order
  LongitudinalFunctionalDataset data;
  data.s_grid = grid;
  data.covariate_names = covariate_names;
  int imputed = 0;
  std::size_t matched = 0;
  for (const auto& id : subject_order) {
    std::vector<const CurveRecord*> visits;
    for (const auto& rec : curves)
      if (rec.subject == id) visits.push_back(&rec);
    std::sort(visits.begin(), visits.end(),
              [](const CurveRecord* a, const CurveRecord* b) { return a->t < b->t; });

    Subject subj;
    subj.id = id;
    if (auto it = group_of.find(id); it != group_of.end()) subj.group = it->second;
    subj.curves = Matrix(static_cast<Eigen::Index>(visits.size()), grid.size());
    subj.responses = Vector(static_cast<Eigen::Index>(visits.size()));
    subj.covariates = Matrix(static_cast<Eigen::Index>(visits.size()),
                             static_cast<Eigen::Index>(covariate_names.size()));
    for (std::size_t j = 0; j < visits.size(); ++j) {
      const CurveRecord& rec = *visits[j];
      const double missing_frac =
          1.0 - static_cast<double>(rec.values.size()) / static_cast<double>(grid.size());
      if (missing_frac > 0.20)
        fail(ErrorKind::schema, "curve (subject=" + rec.subject + ", t=" + rec.t_key +
                                    ") is missing more than 20% of the grid");
      subj.curves.row(static_cast<Eigen::Index>(j)) =
          curve_on_grid(rec, grid, &imputed).transpose();
      auto it = responses.find(std::make_pair(rec.subject, rec.t_key));
      if (it == responses.end())
        fail(ErrorKind::schema, "no response for (subject=" + rec.subject +
                                    ", t=" + rec.t_key + ")");
      subj.times.push_back(rec.t);
      subj.responses[static_cast<Eigen::Index>(j)] = it->second.first;
      for (std::size_t c = 0; c < it->second.second.size(); ++c)
        subj.covariates(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) =
            it->second.second[c];
      ++matched;
    }
    data.subjects.push_back(std::move(subj));
  }
  if (matched != responses.size())
    fail(ErrorKind::schema, "response rows without matching predictor curves");
  if (imputed > 0)
    warn(std::to_string(imputed) + " missing grid points imputed by interpolation");
  data.t_domain = LongitudinalFunctionalDataset::infer_t_domain(data.subjects);
  data.validate();
  return data;
}

std::vector<NewSubjectCurves> ingest_predictors_only(const std::string& path,
                                                     const Vector& expected_grid) {
  std::vector<std::string> order;
  std::map<std::string, std::string> groups;
  std::vector<CurveRecord> curves = parse_curves(path, &order, &groups);
  std::vector<NewSubjectCurves> out;
  int imputed = 0;
  for (const auto& id : order) {
    std::vector<const CurveRecord*> visits;
    for (const auto& rec : curves)
      if (rec.subject == id) visits.push_back(&rec);
    std::sort(visits.begin(), visits.end(),
              [](const CurveRecord* a, const CurveRecord* b) { return a->t < b->t; });
    NewSubjectCurves n;
    n.id = id;
    n.times = Vector(static_cast<Eigen::Index>(visits.size()));
    n.curves = Matrix(static_cast<Eigen::Index>(visits.size()), expected_grid.size());
    for (std::size_t j = 0; j < visits.size(); ++j) {
      const double missing =
          1.0 - static_cast<double>(visits[j]->values.size()) /
                    static_cast<double>(expected_grid.size());
      if (missing > 0.20)
        fail(ErrorKind::schema, "curve (subject=" + id + ", t=" + visits[j]->t_key +
                                    ") is missing more than 20% of the grid");
      n.times[static_cast<Eigen::Index>(j)] = visits[j]->t;
      n.curves.row(static_cast<Eigen::Index>(j)) =
          curve_on_grid(*visits[j], expected_grid, &imputed).transpose();
    }
    out.push_back(std::move(n));
  }
  if (imputed > 0)
    warn(std::to_string(imputed) + " missing grid points imputed by interpolation");
  return out;
}

LongitudinalFunctionalDataset ingest_predictor_file(const std::string& path) {
  std::vector<std::string> order;
  std::map<std::string, std::string> groups;
  std::vector<CurveRecord> curves = parse_curves(path, &order, &groups);
  std::vector<double> grid_values;
  for (const auto& rec : curves)
    for (const auto& [s, w] : rec.values) {
      (void)w;
      grid_values.push_back(s);
    }
  std::sort(grid_values.begin(), grid_values.end());
  grid_values.erase(std::unique(grid_values.begin(), grid_values.end()), grid_values.end());
  if (grid_values.size() < 2) fail(ErrorKind::schema, "predictor grid has fewer than two points");
  Vector grid = Eigen::Map<Vector>(grid_values.data(), static_cast<Eigen::Index>(grid_values.size()));

  std::vector<NewSubjectCurves> parsed = ingest_predictors_only(path, grid);
  LongitudinalFunctionalDataset data;
  data.s_grid = grid;
  for (auto& n : parsed) {
    Subject subj;
    subj.id = n.id;
    if (auto it = groups.find(n.id); it != groups.end()) subj.group = it->second;
    subj.times.assign(n.times.data(), n.times.data() + n.times.size());
    subj.curves = std::move(n.curves);
    subj.responses = Vector::Zero(n.times.size());
    data.subjects.push_back(std::move(subj));
  }
  data.t_domain = LongitudinalFunctionalDataset::infer_t_domain(data.subjects);
  data.validate();
  return data;
}

namespace {

json vec_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  a = json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", a}};
  return a;
}

Vector vec_from(const json& a) {
  Vector v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

Matrix mat_from(const json& j) {
  Matrix m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const json& data = j.at("data");
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = data[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  return m;
}

json basis_json(const SplineBasisSpec& b) {
  return json{{"kind", b.kind == SplineKind::bspline ? "bspline" : "truncated"},
              {"degree", b.degree},
              {"knots", b.knots},
              {"lo", b.domain.lo},
              {"hi", b.domain.hi}};
}

SplineBasisSpec basis_from(const json& j) {
  SplineBasisSpec b;
  b.kind = j.at("kind").get<std::string>() == "bspline" ? SplineKind::bspline
                                                        : SplineKind::truncated_polynomial;
  b.degree = j.at("degree").get<int>();
  b.knots = j.at("knots").get<std::vector<double>>();
  b.domain = Interval{j.at("lo").get<double>(), j.at("hi").get<double>()};
  return b;
}

json surface_json(const SmoothSurface& s) {
  return json{{"basis_s", basis_json(s.basis_s)},
              {"basis_t", basis_json(s.basis_t)},
              {"coef", mat_json(s.coef)},
              {"lambda_s", s.lambda_s},
              {"lambda_t", s.lambda_t}};
}

SmoothSurface surface_from(const json& j) {
  SmoothSurface s;
  s.basis_s = basis_from(j.at("basis_s"));
  s.basis_t = basis_from(j.at("basis_t"));
  s.coef = mat_from(j.at("coef"));
  s.lambda_s = j.at("lambda_s").get<double>();
  s.lambda_t = j.at("lambda_t").get<double>();
  return s;
}

constexpr const char* kMagic = "ldfr-fit";
constexpr int kVersion = 1;

}  // namespace

void save_model(const LdfrModel& model, const std::string& path,
                const std::map<std::string, std::string>& metadata) {
  json j;
  j["magic"] = kMagic;
  j["version"] = kVersion;
  j["meta"] = metadata;

  const MarginalFpca& f = model.fpca;
  j["fpca"] = json{{"tau", surface_json(f.tau)}, {"s_grid", vec_json(f.s_grid)},
                   {"phi", mat_json(f.phi)},     {"lambda", vec_json(f.lambda)},
                   {"K", f.K},                   {"pve", f.pve},
                   {"sigma2_white", f.sigma2_white}};

  json procs = json::array();
  for (const auto& p : model.processes)
    procs.push_back(json{{"component", p.component},
                         {"t_grid", vec_json(p.t_grid)},
                         {"psi", mat_json(p.psi)},
                         {"eta", vec_json(p.eta)},
                         {"sigma2", p.sigma2},
                         {"g_hat", mat_json(p.g_hat)},
                         {"zeta", mat_json(p.zeta)}});
  j["processes"] = procs;

  const LdfrFit& ft = model.fit;
  j["fit"] = json{{"link", ft.spec.link == Link::logit ? "logit" : "identity"},
                  {"degree", ft.spec.degree},
                  {"knots", ft.spec.knots},
                  {"t_lo", ft.spec.t_domain.lo},
                  {"t_hi", ft.spec.t_domain.hi},
                  {"K", ft.spec.K},
                  {"structure", static_cast<int>(ft.spec.structure)},
                  {"covariate_names", ft.spec.covariate_names},
                  {"beta", vec_json(ft.beta)},
                  {"u", mat_json(ft.u)},
                  {"lambda0", ft.lambda0},
                  {"lambda", ft.lambda},
                  {"D", mat_json(ft.D)},
                  {"sigma2_group", ft.sigma2_group},
                  {"sigma2_e", ft.sigma2_e},
                  {"b", mat_json(ft.b)},
                  {"b_group", vec_json(ft.b_group)},
                  {"eta", vec_json(ft.eta)},
                  {"fitted", vec_json(ft.fitted)},
                  {"edf", ft.edf},
                  {"reml", ft.reml},
                  {"minus2loglik", ft.minus2loglik},
                  {"aic", ft.aic},
                  {"num_variance_params", ft.num_variance_params},
                  {"aic_is_working_approx", ft.aic_is_working_approx},
                  {"converged", ft.converged},
                  {"outer_iterations", ft.outer_iterations},
                  {"gradient_norm", ft.gradient_norm},
                  {"posterior_cov", mat_json(ft.posterior_cov)},
                  {"v_cols", ft.v_cols},
                  {"z_cols", ft.z_cols},
                  {"zb_cols", ft.zb_cols},
                  {"num_subjects", ft.num_subjects},
                  {"num_groups", ft.num_groups},
                  {"subject_ids", ft.subject_ids},
                  {"group_ids", ft.group_ids},
                  {"group_of_subject", ft.group_of_subject}};

  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out << j.dump();
  if (!out) fail(ErrorKind::io, "failed writing " + path);
}

LdfrModel load_model(const std::string& path, std::map<std::string, std::string>* metadata) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(ErrorKind::schema, "corrupt fit container: " + std::string(e.what()));
  }
  try {
    if (!j.contains("magic") || j.at("magic").get<std::string>() != kMagic)
      fail(ErrorKind::schema, "not a fit container: " + path);
    if (j.at("version").get<int>() != kVersion)
      fail(ErrorKind::version, "fit container version " +
                                   std::to_string(j.at("version").get<int>()) +
                                   " is not supported");
    if (metadata) *metadata = j.value("meta", std::map<std::string, std::string>{});

    LdfrModel model;
    const json& f = j.at("fpca");
    model.fpca.tau = surface_from(f.at("tau"));
    model.fpca.s_grid = vec_from(f.at("s_grid"));
    model.fpca.quad = QuadratureRule::trapezoid(model.fpca.s_grid);
    model.fpca.phi = mat_from(f.at("phi"));
    model.fpca.lambda = vec_from(f.at("lambda"));
    model.fpca.K = f.at("K").get<int>();
    model.fpca.pve = f.at("pve").get<double>();
    model.fpca.sigma2_white = f.at("sigma2_white").get<double>();

    for (const json& pj : j.at("processes")) {
      ScoreProcess p;
      p.component = pj.at("component").get<int>();
      p.t_grid = vec_from(pj.at("t_grid"));
      p.quad = QuadratureRule::trapezoid(p.t_grid);
      p.psi = mat_from(pj.at("psi"));
      p.eta = vec_from(pj.at("eta"));
      p.sigma2 = pj.at("sigma2").get<double>();
      p.g_hat = mat_from(pj.at("g_hat"));
      p.zeta = mat_from(pj.at("zeta"));
      model.processes.push_back(std::move(p));
    }

    const json& ft = j.at("fit");
    LdfrFit fit;
    fit.spec.link = ft.at("link").get<std::string>() == "logit" ? Link::logit : Link::identity;
    fit.spec.degree = ft.at("degree").get<int>();
    fit.spec.knots = ft.at("knots").get<std::vector<double>>();
    fit.spec.t_domain = Interval{ft.at("t_lo").get<double>(), ft.at("t_hi").get<double>()};
    fit.spec.K = ft.at("K").get<int>();
    fit.spec.structure = static_cast<RandomStructure>(ft.at("structure").get<int>());
    fit.spec.covariate_names = ft.at("covariate_names").get<std::vector<std::string>>();
    fit.beta = vec_from(ft.at("beta"));
    fit.u = mat_from(ft.at("u"));
    fit.lambda0 = ft.at("lambda0").get<double>();
    fit.lambda = ft.at("lambda").get<double>();
    fit.D = mat_from(ft.at("D"));
    fit.sigma2_group = ft.at("sigma2_group").get<double>();
    fit.sigma2_e = ft.at("sigma2_e").get<double>();
    fit.b = mat_from(ft.at("b"));
    fit.b_group = vec_from(ft.at("b_group"));
    fit.eta = vec_from(ft.at("eta"));
    fit.fitted = vec_from(ft.at("fitted"));
    fit.edf = ft.at("edf").get<double>();
    fit.reml = ft.at("reml").get<double>();
    fit.minus2loglik = ft.at("minus2loglik").get<double>();
    fit.aic = ft.at("aic").get<double>();
    fit.num_variance_params = ft.at("num_variance_params").get<int>();
    fit.aic_is_working_approx = ft.at("aic_is_working_approx").get<bool>();
    fit.converged = ft.at("converged").get<bool>();
    fit.outer_iterations = ft.at("outer_iterations").get<int>();
    fit.gradient_norm = ft.at("gradient_norm").get<double>();
    fit.posterior_cov = mat_from(ft.at("posterior_cov"));
    fit.v_cols = ft.at("v_cols").get<int>();
    fit.z_cols = ft.at("z_cols").get<int>();
    fit.zb_cols = ft.at("zb_cols").get<int>();
    fit.num_subjects = ft.at("num_subjects").get<int>();
    fit.num_groups = ft.at("num_groups").get<int>();
    fit.subject_ids = ft.at("subject_ids").get<std::vector<std::string>>();
    fit.group_ids = ft.at("group_ids").get<std::vector<std::string>>();
    fit.group_of_subject = ft.at("group_of_subject").get<std::vector<int>>();
    model.fit = std::move(fit);
    model.surface = estimate_coefficient_surface(model.fit, model.fpca);
    return model;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorKind::schema, "corrupt fit container: " + std::string(e.what()));
  }
}

void write_results_csv(const std::string& path, const std::vector<ReplicateResult>& results,
                       const std::map<std::string, std::string>& header) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  for (const auto& [k, v] : header) out << "# " << k << " = " << v << "\n";
  out << "seed,delta,subjects,design,noise,response,effect,in_pe,out_pe,tpr_in,tpr_out,"
         "rmpe_existing,rmpe_new,cov95_existing,len95_existing,cov95_new,len95_new,"
         "cov90_existing,len90_existing,cov90_new,len90_new,seconds,ok,error\n";
  for (const auto& r : results) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    out << r.seed << ',' << fmt(r.delta) << ',' << r.subjects << ',' << r.design << ','
        << r.noise << ',' << r.response << ',' << r.effect << ',' << fmt(r.in_pe) << ','
        << fmt(r.out_pe) << ',' << fmt(r.tpr_in) << ',' << fmt(r.tpr_out) << ','
        << fmt(r.rmpe_existing) << ',' << fmt(r.rmpe_new) << ',' << fmt(r.cov95_existing)
        << ',' << fmt(r.len95_existing) << ',' << fmt(r.cov95_new) << ','
        << fmt(r.len95_new) << ',' << fmt(r.cov90_existing) << ',' << fmt(r.len90_existing)
        << ',' << fmt(r.cov90_new) << ',' << fmt(r.len90_new) << ',' << fmt(r.seconds)
        << ',' << (r.ok ? 1 : 0) << ',' << err << "\n";
  }
  if (!out) fail(ErrorKind::io, "failed writing " + path);
}

std::vector<ReplicateResult> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  std::vector<ReplicateResult> out;
  std::string line;
  bool header_seen = false;
  auto num = [](const std::string& s) {
    return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {  // column names
      header_seen = true;
      continue;
    }
    auto f = split_csv_line(line);
    if (f.size() < 23) fail(ErrorKind::schema, "short results row in " + path);
    ReplicateResult r;
    r.seed = std::stoull(f[0]);
    r.delta = num(f[1]);
    r.subjects = static_cast<int>(num(f[2]));
    r.design = f[3];
    r.noise = f[4];
    r.response = f[5];
    r.effect = f[6];
    r.in_pe = num(f[7]);
    r.out_pe = num(f[8]);
    r.tpr_in = num(f[9]);
    r.tpr_out = num(f[10]);
    r.rmpe_existing = num(f[11]);
    r.rmpe_new = num(f[12]);
    r.cov95_existing = num(f[13]);
    r.len95_existing = num(f[14]);
    r.cov95_new = num(f[15]);
    r.len95_new = num(f[16]);
    r.cov90_existing = num(f[17]);
    r.len90_existing = num(f[18]);
    r.cov90_new = num(f[19]);
    r.len90_new = num(f[20]);
    r.seconds = num(f[21]);
    r.ok = f[22] == "1";
    if (f.size() > 23) r.error = f[23];
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_summary(const std::vector<ReplicateResult>& results) {
  std::vector<double> deltas;
  for (const auto& r : results)
    if (std::find(deltas.begin(), deltas.end(), r.delta) == deltas.end())
      deltas.push_back(r.delta);
  std::sort(deltas.begin(), deltas.end());

  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  auto line = [&](const std::string& name, const SummaryStat& s) {
    if (s.count == 0) return;
    os << "  " << std::left << std::setw(16) << name << std::right << std::setw(8)
       << s.median << " (" << s.iqr << ")  n=" << s.count << "\n";
  };
  for (double d : deltas) {
    std::vector<const ReplicateResult*> rows;
    for (const auto& r : results)
      if (r.delta == d && r.ok) rows.push_back(&r);
    int failures = 0;
    for (const auto& r : results)
      if (r.delta == d && !r.ok) ++failures;
    os << "delta = " << d << "  (replicates ok: " << rows.size()
       << ", failed: " << failures << ")\n";
    auto col = [&](auto getter) {
      std::vector<double> v;
      for (const auto* r : rows) v.push_back(getter(*r));
      return summarize(v);
    };
    line("in_pe", col([](const ReplicateResult& r) { return r.in_pe; }));
    line("out_pe", col([](const ReplicateResult& r) { return r.out_pe; }));
    line("tpr_in", col([](const ReplicateResult& r) { return r.tpr_in; }));
    line("tpr_out", col([](const ReplicateResult& r) { return r.tpr_out; }));
    line("rmpe_existing", col([](const ReplicateResult& r) { return r.rmpe_existing; }));
    line("rmpe_new", col([](const ReplicateResult& r) { return r.rmpe_new; }));
    line("cov95_existing", col([](const ReplicateResult& r) { return r.cov95_existing; }));
    line("len95_existing", col([](const ReplicateResult& r) { return r.len95_existing; }));
    line("cov95_new", col([](const ReplicateResult& r) { return r.cov95_new; }));
    line("len95_new", col([](const ReplicateResult& r) { return r.len95_new; }));
    line("cov90_existing", col([](const ReplicateResult& r) { return r.cov90_existing; }));
    line("len90_existing", col([](const ReplicateResult& r) { return r.len90_existing; }));
    line("cov90_new", col([](const ReplicateResult& r) { return r.cov90_new; }));
    line("len90_new", col([](const ReplicateResult& r) { return r.len90_new; }));
    line("seconds", col([](const ReplicateResult& r) { return r.seconds; }));
    os << "\n";
  }
  return os.str();
}

}  // namespace ldfr
