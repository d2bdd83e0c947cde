#include "pftransport/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "pftransport/basis.hpp"
#include "pftransport/grid.hpp"
#include "pftransport/io.hpp"
#include "pftransport/lifted_model.hpp"
#include "pftransport/svg.hpp"

namespace pft::experiment {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// JSON field helpers. Every failure names the dotted field path.

[[noreturn]] void fail(const std::string& field, const std::string& msg) { throw ConfigError(field + ": " + msg); }

const json& at(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) fail(path + "." + key, "missing");
  return j.at(key);
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "must be finite");
  return v;
}

double number_field(const json& j, const std::string& key, const std::string& path) {
  return get_number(at(j, key, path), path + "." + key);
}

int int_field(const json& j, const std::string& key, const std::string& path) {
  const json& v = at(j, key, path);
  if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
  return v.get<int>();
}

std::uint64_t seed_field(const json& j, const std::string& key, const std::string& path) {
  const json& v = at(j, key, path);
  if (!v.is_number_integer() || v.get<long long>() < 0) fail(path + "." + key, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

bool bool_field(const json& j, const std::string& key, const std::string& path) {
  const json& v = at(j, key, path);
  if (!v.is_boolean()) fail(path + "." + key, "expected true or false");
  return v.get<bool>();
}

std::string string_field(const json& j, const std::string& key, const std::string& path) {
  const json& v = at(j, key, path);
  if (!v.is_string()) fail(path + "." + key, "expected a string");
  return v.get<std::string>();
}

Vector vector_value(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of numbers");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = get_number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

Vector vector_field(const json& j, const std::string& key, const std::string& path) {
  return vector_value(at(j, key, path), path + "." + key);
}

Matrix matrix_field(const json& j, const std::string& key, const std::string& path) {
  const json& v = at(j, key, path);
  const std::string p = path + "." + key;
  if (!v.is_array() || v.empty()) fail(p, "expected an array of rows");
  const std::size_t rows = v.size();
  Matrix m(rows, rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Vector row = vector_value(v[r], p + "[" + std::to_string(r) + "]");
    if (static_cast<std::size_t>(row.size()) != rows) fail(p, "expected a square matrix");
    m.row(r) = row.transpose();
  }
  return m;
}

// Number -> constant, array -> as given, {"m1": .., "m2": ..} -> per block.
Vector weight_field(const json& j, const std::string& key, const std::string& path, int n, int d = 0) {
  const json& v = at(j, key, path);
  const std::string p = path + "." + key;
  Vector w;
  if (v.is_number()) {
    w = Vector::Constant(n, get_number(v, p));
  } else if (v.is_array()) {
    w = vector_value(v, p);
    if (w.size() != n) fail(p, "expected " + std::to_string(n) + " entries");
  } else if (v.is_object() && d > 0) {
    w.resize(n);
    const int n2 = second_moment_count(d);
    auto block = [&](const std::string& name, int len) -> Vector {
      const json& b = at(v, name, p);
      if (b.is_number()) return Vector::Constant(len, get_number(b, p + "." + name));
      Vector out = vector_value(b, p + "." + name);
      if (out.size() != len) fail(p + "." + name, "expected " + std::to_string(len) + " entries");
      return out;
    };
    w << block("m1", d), block("m2", n2);
  } else {
    fail(p, d > 0 ? "expected a number, an array or {\"m1\", \"m2\"}" : "expected a number or an array");
  }
  if ((w.array() < 0.0).any()) fail(p, "weights must be non-negative");
  return w;
}

json to_json_vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json_mat(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json_vec(m.row(r).transpose()));
  return rows;
}

GeneratorDifference parse_difference(const std::string& s, const std::string& path) {
  if (s == "forward") return GeneratorDifference::kForward;
  if (s == "central") return GeneratorDifference::kCentral;
  fail(path, "expected \"forward\" or \"central\"");
}

const char* difference_name(GeneratorDifference d) {
  return d == GeneratorDifference::kCentral ? "central" : "forward";
}

GridSpec parse_grid(const json& j, const std::string& path, int d) {
  GridSpec g;
  g.lower = vector_field(j, "lower", path);
  g.upper = vector_field(j, "upper", path);
  g.n_per_dim = int_field(j, "n_per_dim", path);
  if (g.lower.size() != d || g.upper.size() != d) fail(path, "bounds must have " + std::to_string(d) + " entries");
  if ((g.lower.array() >= g.upper.array()).any()) fail(path, "lower must be below upper on every axis");
  if (g.n_per_dim < 2) fail(path + ".n_per_dim", "must be at least 2");
  return g;
}

json grid_json(const GridSpec& g) {
  return {{"lower", to_json_vec(g.lower)}, {"upper", to_json_vec(g.upper)}, {"n_per_dim", g.n_per_dim}};
}

json moments_json(const Vector& y, int d) {
  Vector mean;
  Matrix cov;
  mean_cov_from_moments(y, d, mean, cov);
  return {{"mean", to_json_vec(mean)}, {"cov", to_json_mat(cov)}, {"raw", to_json_vec(y)}};
}

json error_json(const MomentError& e) {
  return {{"m1_max", e.m1_max_all},
          {"m2_max", e.m2_max_all},
          {"m1_max_per_component", to_json_vec(e.m1_max)},
          {"m2_max_per_component", to_json_vec(e.m2_max)},
          {"m1_rms", e.m1_rms},
          {"m2_rms", e.m2_rms}};
}

Vector series_row(const MomentSeries& s, int t) {
  Vector y(s.m1.cols() + s.m2.cols());
  y << s.m1.row(t).transpose(), s.m2.row(t).transpose();
  return y;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const char* kComponentColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

// ---------------------------------------------------------------------------

double DictionaryConfig::resolved_width() const {
  if (width) return *width;
  return width_factor * (upper[0] - lower[0]) / static_cast<double>(n_per_dim - 1);
}

RowMatrix SignalConfig::sample(int horizon, double dt, int control_dim) const {
  RowMatrix u = RowMatrix::Zero(horizon, control_dim);
  if (type == "zero") return u;
  if (type == "file") {
    RowMatrix f = io::read_controls_csv(file);
    require(f.cols() == control_dim, "signal file has " + std::to_string(f.cols()) + " control columns, expected " +
                                         std::to_string(control_dim));
    require(f.rows() >= horizon, "signal file is shorter than the horizon");
    return f.topRows(horizon);
  }
  for (int t = 0; t < horizon; ++t) {
    for (int i = 0; i < control_dim; ++i) {
      const double a = amplitude.size() == 1 ? amplitude[0] : amplitude[i];
      u(t, i) = type == "constant" ? a : a * std::sin(2.0 * M_PI * frequency * t * dt + phase);
    }
  }
  return u;
}

int ExperimentConfig::control_dim() const {
  if (system.type == "rotlet") return system.rotors.count();
  return 1;
}

int ExperimentConfig::steps() const {
  const double ratio = task.horizon / estimation.dt;
  return static_cast<int>(std::lround(ratio));
}

ControlAffineSystem ExperimentConfig::make_system() const {
  if (system.type == "duffing") return make_duffing_system();
  if (system.type == "rotlet") return make_rotlet_system(system.rotors);
  ControlAffineSystem sys = make_linear_system(Matrix::Zero(state_dim(), state_dim()), Matrix::Zero(state_dim(), 1));
  sys.name = "zero";
  return sys;
}

Vector ExperimentConfig::target_moments() const {
  const int d = state_dim();
  return moments_from_mean_cov(task.control.target_mean, task.control.target_variance * Matrix::Identity(d, d));
}

json default_config_json() {
  return json::parse(R"({
    "name": "duffing_openloop",
    "system": {
      "type": "duffing",
      "rotors": {"positions": [[-1.0, 0.0], [1.0, 0.0]], "exclusion_radius": 0.05}
    },
    "dictionary": {
      "lower": [-2.5, -2.5], "upper": [2.5, 2.5], "n_per_dim": 30, "width_factor": 1.0
    },
    "estimation": {
      "ic_grid": {"lower": [-2.5, -2.5], "upper": [2.5, 2.5], "n_per_dim": 50},
      "dt": 0.005,
      "regularization": 1e-10,
      "substeps": 1,
      "drop_singular": false,
      "control_difference": "forward"
    },
    "initial_density": {"mean": [-0.5, 1.0], "cov": [[0.05, 0.0], [0.0, 0.05]]},
    "task": {
      "type": "predict",
      "horizon": 3.0,
      "signal": {"type": "sine", "amplitude": [1.0], "frequency": 2.0, "phase": 0.0},
      "control": {
        "target_mean": [1.0, 0.0],
        "target_variance": 0.0,
        "stage_weight": 1.0,
        "terminal_weight": 1000.0,
        "control_weight": 1.0,
        "ddp": {"max_iter": 200, "tol": 1e-8, "reg_init": 1e-10, "reg_min": 1e-10, "reg_max": 1e10}
      }
    },
    "validation": {"n_samples": 1000, "seed": 1, "max_excluded_fraction": 0.01, "linearization_order": 2},
    "baseline": {
      "enabled": false, "n_samples": 500, "seed": 2,
      "stage_weight": 1.0, "terminal_weight": 1000.0, "control_weight": 1.0
    },
    "output_dir": "out"
  })");
}

ExperimentConfig parse_config(const json& patch, const std::filesystem::path& base_dir) {
  if (!patch.is_object()) fail("config", "expected a JSON object");
  json j = default_config_json();
  j.merge_patch(patch);

  ExperimentConfig c;
  c.name = string_field(j, "name", "config");

  const json& sys = at(j, "system", "config");
  c.system.type = string_field(sys, "type", "system");
  if (c.system.type != "duffing" && c.system.type != "rotlet" && c.system.type != "zero")
    fail("system.type", "expected \"duffing\", \"rotlet\" or \"zero\"");
  const json& rot = at(sys, "rotors", "system");
  const json& pos = at(rot, "positions", "system.rotors");
  if (!pos.is_array() || pos.empty()) fail("system.rotors.positions", "expected a non-empty array of [x, y]");
  c.system.rotors.positions.clear();
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const std::string p = "system.rotors.positions[" + std::to_string(i) + "]";
    const Vector v = vector_value(pos[i], p);
    if (v.size() != 2) fail(p, "expected [x, y]");
    c.system.rotors.positions.emplace_back(v[0], v[1]);
  }
  c.system.rotors.exclusion_radius = number_field(rot, "exclusion_radius", "system.rotors");
  try {
    c.system.rotors.validate();
  } catch (const InvalidArgument& e) {
    fail("system.rotors", e.what());
  }

  const json& init = at(j, "initial_density", "config");
  c.initial_density.mean = vector_field(init, "mean", "initial_density");
  c.initial_density.cov = matrix_field(init, "cov", "initial_density");
  const int d = c.state_dim();
  if (d != 2) fail("initial_density.mean", "only planar systems are supported (2 entries)");
  if (c.initial_density.cov.rows() != d) fail("initial_density.cov", "must be 2 x 2");
  if (!(c.initial_density.cov - c.initial_density.cov.transpose()).isZero(1e-14))
    fail("initial_density.cov", "must be symmetric");
  if (Eigen::SelfAdjointEigenSolver<Matrix>(c.initial_density.cov).eigenvalues().minCoeff() <= 0.0)
    fail("initial_density.cov", "must be positive definite");

  const json& dict = at(j, "dictionary", "config");
  c.dictionary.lower = vector_field(dict, "lower", "dictionary");
  c.dictionary.upper = vector_field(dict, "upper", "dictionary");
  c.dictionary.n_per_dim = int_field(dict, "n_per_dim", "dictionary");
  if (c.dictionary.lower.size() != d || c.dictionary.upper.size() != d)
    fail("dictionary", "bounds must have 2 entries");
  if ((c.dictionary.lower.array() >= c.dictionary.upper.array()).any())
    fail("dictionary", "lower must be below upper on every axis");
  if (c.dictionary.n_per_dim < 2) fail("dictionary.n_per_dim", "must be at least 2");
  if (dict.contains("width") && !dict.at("width").is_null()) {
    c.dictionary.width = number_field(dict, "width", "dictionary");
    if (*c.dictionary.width <= 0.0) fail("dictionary.width", "must be positive");
  }
  c.dictionary.width_factor = number_field(dict, "width_factor", "dictionary");
  if (c.dictionary.width_factor <= 0.0) fail("dictionary.width_factor", "must be positive");

  const json& est = at(j, "estimation", "config");
  c.estimation.ic_grid = parse_grid(at(est, "ic_grid", "estimation"), "estimation.ic_grid", d);
  c.estimation.dt = number_field(est, "dt", "estimation");
  if (c.estimation.dt <= 0.0) fail("estimation.dt", "must be positive");
  c.estimation.regularization = number_field(est, "regularization", "estimation");
  if (c.estimation.regularization < 0.0) fail("estimation.regularization", "must be non-negative");
  c.estimation.substeps = int_field(est, "substeps", "estimation");
  if (c.estimation.substeps < 1) fail("estimation.substeps", "must be at least 1");
  c.estimation.drop_singular = bool_field(est, "drop_singular", "estimation");
  c.estimation.control_difference =
      parse_difference(string_field(est, "control_difference", "estimation"), "estimation.control_difference");

  const json& task = at(j, "task", "config");
  c.task.type = string_field(task, "type", "task");
  if (c.task.type != "predict" && c.task.type != "control") fail("task.type", "expected \"predict\" or \"control\"");
  c.task.horizon = number_field(task, "horizon", "task");
  if (c.task.horizon <= 0.0) fail("task.horizon", "must be positive");
  const double ratio = c.task.horizon / c.estimation.dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio))
    fail("task.horizon", "horizon / estimation.dt must be an integer step count");

  const int nc = c.control_dim();
  const json& sig = at(task, "signal", "task");
  c.task.signal.type = string_field(sig, "type", "task.signal");
  const std::string& st = c.task.signal.type;
  if (st != "zero" && st != "constant" && st != "sine" && st != "file")
    fail("task.signal.type", "expected \"zero\", \"constant\", \"sine\" or \"file\"");
  if (st == "constant" || st == "sine") {
    c.task.signal.amplitude = vector_field(sig, "amplitude", "task.signal");
    if (c.task.signal.amplitude.size() != 1 && c.task.signal.amplitude.size() != nc)
      fail("task.signal.amplitude", "expected 1 or " + std::to_string(nc) + " entries");
  }
  if (st == "sine") {
    c.task.signal.frequency = number_field(sig, "frequency", "task.signal");
    c.task.signal.phase = number_field(sig, "phase", "task.signal");
  }
  if (st == "file") {
    std::filesystem::path f = string_field(sig, "file", "task.signal");
    c.task.signal.file = f.is_relative() ? base_dir / f : f;
  }

  const json& ctl = at(task, "control", "task");
  const int p = moment_output_size(d);
  c.task.control.target_mean = vector_field(ctl, "target_mean", "task.control");
  if (c.task.control.target_mean.size() != d) fail("task.control.target_mean", "expected 2 entries");
  c.task.control.target_variance = number_field(ctl, "target_variance", "task.control");
  if (c.task.control.target_variance < 0.0) fail("task.control.target_variance", "must be non-negative");
  c.task.control.stage_weight = weight_field(ctl, "stage_weight", "task.control", p, d);
  c.task.control.terminal_weight = weight_field(ctl, "terminal_weight", "task.control", p, d);
  c.task.control.control_weight = weight_field(ctl, "control_weight", "task.control", nc);
  if ((c.task.control.control_weight.array() <= 0.0).any())
    fail("task.control.control_weight", "must be positive");
  const json& ddp = at(ctl, "ddp", "task.control");
  c.task.control.ddp.max_iter = int_field(ddp, "max_iter", "task.control.ddp");
  c.task.control.ddp.tol = number_field(ddp, "tol", "task.control.ddp");
  c.task.control.ddp.reg_init = number_field(ddp, "reg_init", "task.control.ddp");
  c.task.control.ddp.reg_min = number_field(ddp, "reg_min", "task.control.ddp");
  c.task.control.ddp.reg_max = number_field(ddp, "reg_max", "task.control.ddp");
  if (c.task.control.ddp.max_iter < 0) fail("task.control.ddp.max_iter", "must be non-negative");
  if (c.task.control.ddp.tol <= 0.0) fail("task.control.ddp.tol", "must be positive");

  const json& val = at(j, "validation", "config");
  c.validation.n_samples = int_field(val, "n_samples", "validation");
  if (c.validation.n_samples < 2) fail("validation.n_samples", "must be at least 2");
  c.validation.seed = seed_field(val, "seed", "validation");
  c.validation.max_excluded_fraction = number_field(val, "max_excluded_fraction", "validation");
  c.validation.linearization_order = int_field(val, "linearization_order", "validation");
  if (c.validation.linearization_order < 1) fail("validation.linearization_order", "must be at least 1");

  const json& base = at(j, "baseline", "config");
  c.baseline.enabled = bool_field(base, "enabled", "baseline");
  c.baseline.n_samples = int_field(base, "n_samples", "baseline");
  if (c.baseline.n_samples < 2) fail("baseline.n_samples", "must be at least 2");
  c.baseline.seed = seed_field(base, "seed", "baseline");
  c.baseline.stage_weight = weight_field(base, "stage_weight", "baseline", d);
  c.baseline.terminal_weight = weight_field(base, "terminal_weight", "baseline", d);
  c.baseline.control_weight = weight_field(base, "control_weight", "baseline", nc);
  if ((c.baseline.control_weight.array() <= 0.0).any()) fail("baseline.control_weight", "must be positive");

  c.output_dir = string_field(j, "output_dir", "config");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingPrerequisite("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON (" + e.what() + ")");
  }
  return parse_config(j, path.parent_path());
}

json ExperimentConfig::to_json() const {
  json rotors = json::array();
  for (const auto& r : system.rotors.positions) rotors.push_back({r.x(), r.y()});
  json dict = {{"lower", to_json_vec(dictionary.lower)},
               {"upper", to_json_vec(dictionary.upper)},
               {"n_per_dim", dictionary.n_per_dim},
               {"width_factor", dictionary.width_factor},
               {"width_resolved", dictionary.resolved_width()}};
  if (dictionary.width) dict["width"] = *dictionary.width;
  json signal = {{"type", task.signal.type}};
  if (task.signal.amplitude.size() > 0) signal["amplitude"] = to_json_vec(task.signal.amplitude);
  if (task.signal.type == "sine") {
    signal["frequency"] = task.signal.frequency;
    signal["phase"] = task.signal.phase;
  }
  if (task.signal.type == "file") signal["file"] = task.signal.file.string();
  return {{"name", name},
          {"system", {{"type", system.type},
                      {"rotors", {{"positions", rotors}, {"exclusion_radius", system.rotors.exclusion_radius}}}}},
          {"dictionary", dict},
          {"estimation", {{"ic_grid", grid_json(estimation.ic_grid)},
                          {"dt", estimation.dt},
                          {"regularization", estimation.regularization},
                          {"substeps", estimation.substeps},
                          {"drop_singular", estimation.drop_singular},
                          {"control_difference", difference_name(estimation.control_difference)}}},
          {"initial_density", {{"mean", to_json_vec(initial_density.mean)}, {"cov", to_json_mat(initial_density.cov)}}},
          {"task", {{"type", task.type},
                    {"horizon", task.horizon},
                    {"steps", steps()},
                    {"signal", signal},
                    {"control", {{"target_mean", to_json_vec(task.control.target_mean)},
                                 {"target_variance", task.control.target_variance},
                                 {"stage_weight", to_json_vec(task.control.stage_weight)},
                                 {"terminal_weight", to_json_vec(task.control.terminal_weight)},
                                 {"control_weight", to_json_vec(task.control.control_weight)},
                                 {"ddp", {{"max_iter", task.control.ddp.max_iter},
                                          {"tol", task.control.ddp.tol},
                                          {"reg_init", task.control.ddp.reg_init},
                                          {"reg_min", task.control.ddp.reg_min},
                                          {"reg_max", task.control.ddp.reg_max}}}}}}},
          {"validation", {{"n_samples", validation.n_samples},
                          {"seed", validation.seed},
                          {"max_excluded_fraction", validation.max_excluded_fraction},
                          {"linearization_order", validation.linearization_order}}},
          {"baseline", {{"enabled", baseline.enabled},
                        {"n_samples", baseline.n_samples},
                        {"seed", baseline.seed},
                        {"stage_weight", to_json_vec(baseline.stage_weight)},
                        {"terminal_weight", to_json_vec(baseline.terminal_weight)},
                        {"control_weight", to_json_vec(baseline.control_weight)}}},
          {"output_dir", output_dir.string()}};
}

// ---------------------------------------------------------------------------

Runner::Runner(ExperimentConfig config, std::filesystem::path out_dir)
    : config_(std::move(config)), out_(std::move(out_dir)) {
  std::filesystem::create_directories(out_);
  json resolved = config_.to_json();
  resolved["output_dir"] = out_.string();
  io::write_json(resolved, out_ / Artifacts::kResolvedConfig);
}

json Runner::summary() const {
  const auto path = out_ / Artifacts::kSummary;
  if (!std::filesystem::exists(path)) return json::object();
  return io::read_json(path);
}

void Runner::merge_summary(const std::string& section, const json& value) const {
  json s = summary();
  s["schema_version"] = 1;
  s["name"] = config_.name;
  s[section] = value;
  io::write_json(s, out_ / Artifacts::kSummary);
}

void Runner::record_timing(const std::string& stage, double seconds) const {
  const auto path = out_ / Artifacts::kTimings;
  json t = std::filesystem::exists(path) ? io::read_json(path) : json::object();
  t[stage] = seconds;
  io::write_json(t, path);
}

std::shared_ptr<const GeneratorModel> Runner::load_model() const {
  const auto path = out_ / Artifacts::kModel;
  if (!std::filesystem::exists(path))
    throw MissingPrerequisite("model file " + path.string() + " not found; run `estimate` first");
  auto model = std::make_shared<const GeneratorModel>(io::load_model(path));
  const Dictionary expected = build_rbf_grid(config_.dictionary.lower, config_.dictionary.upper,
                                             config_.dictionary.n_per_dim, config_.dictionary.resolved_width());
  if (!(*model->dictionary == expected) || model->control_dim() != config_.control_dim())
    throw MissingPrerequisite("model file " + path.string() + " does not match the configured dictionary; rerun `estimate`");
  return model;
}

RowMatrix Runner::stage_controls() const {
  const int h = config_.steps();
  if (config_.task.type == "predict") {
    try {
      return config_.task.signal.sample(h, config_.estimation.dt, config_.control_dim());
    } catch (const InvalidArgument& e) {
      throw MissingPrerequisite(std::string("task.signal: ") + e.what());
    }
  }
  const auto path = out_ / Artifacts::kControls;
  if (!std::filesystem::exists(path))
    throw MissingPrerequisite("controls file " + path.string() + " not found; run `control` first");
  RowMatrix u = io::read_controls_csv(path);
  if (u.rows() != h || u.cols() != config_.control_dim())
    throw MissingPrerequisite("controls file " + path.string() + " does not match the configured horizon");
  return u;
}

void Runner::write_plots(const MomentSeries& predicted, const MomentSeries* sample,
                         const MomentSeries* linearized, const std::string& stem) const {
  const int d = predicted.dim();
  const bool control = config_.task.type == "control";
  const Vector target = config_.target_moments();
  const auto names = io::moment_column_names(d);
  for (int block = 0; block < 2; ++block) {
    svg::Chart chart;
    chart.title = config_.name + (block == 0 ? ": first moments" : ": second raw moments");
    chart.y_label = block == 0 ? "m1" : "m2";
    const int cols = block == 0 ? d : second_moment_count(d);
    for (int j = 0; j < cols; ++j) {
      const std::string color = kComponentColors[j % 6];
      const std::string& name = names[block == 0 ? j : d + j];
      auto col = [&](const MomentSeries& s) -> Vector { return block == 0 ? Vector(s.m1.col(j)) : Vector(s.m2.col(j)); };
      chart.series.push_back({name + " predicted", predicted.times, col(predicted), color, "", false});
      if (sample) chart.series.push_back({name + " sample", sample->times, col(*sample), color, "7,4", false});
      if (linearized) chart.series.push_back({name + " linearized", linearized->times, col(*linearized), color, "2,3", false});
      if (control) chart.references.push_back({target[block == 0 ? j : d + j], name + " target", color});
    }
    svg::write(chart, out_ / (stem + (block == 0 ? "_m1.svg" : "_m2.svg")));
  }
}

StageStatus Runner::estimate() {
  const auto t0 = Clock::now();
  const auto dict = std::make_shared<const Dictionary>(build_rbf_grid(config_.dictionary.lower, config_.dictionary.upper,
                                                                       config_.dictionary.n_per_dim,
                                                                       config_.dictionary.resolved_width()));
  ModelBuildOptions opts;
  opts.edmd.regularization = config_.estimation.regularization;
  opts.snapshots.substeps = config_.estimation.substeps;
  opts.snapshots.drop_singular = config_.estimation.drop_singular;
  opts.control_difference = config_.estimation.control_difference;
  const GeneratorModel model =
      build_generator_model(config_.make_system(), dict, config_.estimation.ic_grid, config_.estimation.dt, opts);
  io::save_model(model, out_ / Artifacts::kModel);

  const EdmdEstimator gram(dict, grid_points(config_.estimation.ic_grid), opts.edmd);
  json b_norms = json::array();
  for (const auto& b : model.b) b_norms.push_back(b.cwiseAbs().maxCoeff());
  merge_summary("estimate", {{"model_file", Artifacts::kModel},
                             {"system", config_.system.type},
                             {"dictionary_size", model.lifted_dim()},
                             {"rbf_width", dict->width()},
                             {"dt", config_.estimation.dt},
                             {"data_points", config_.estimation.ic_grid.point_count()},
                             {"regularization", config_.estimation.regularization},
                             {"control_difference", difference_name(config_.estimation.control_difference)},
                             {"substeps", config_.estimation.substeps},
                             {"gram_condition_estimate", gram.diagnostics().condition},
                             {"rank_deficient", gram.diagnostics().rank_deficient},
                             {"l0_max_abs", model.l0.cwiseAbs().maxCoeff()},
                             {"b_max_abs", b_norms}});
  record_timing("estimate", seconds_since(t0));
  return StageStatus::kOk;
}

StageStatus Runner::predict() {
  const auto t0 = Clock::now();
  const auto model = load_model();
  const RowMatrix u = stage_controls();
  const double dt = config_.estimation.dt;
  const ProjectionResult proj = project_gaussian(model->dictionary, config_.initial_density.mean, config_.initial_density.cov);
  const Trajectory traj = rollout(*model, proj.coefficients.coeffs, u, dt);
  const MomentSeries pred = MomentSeries::from_outputs(traj.outputs, config_.state_dim(), dt);

  io::write_moment_comparison_csv({{"pred", &pred}}, out_ / Artifacts::kMoments);
  if (config_.task.type == "predict") io::write_controls_csv(u, dt, out_ / Artifacts::kControls);
  write_plots(pred, nullptr, nullptr, "predict");
  merge_summary("predict", {{"steps", config_.steps()},
                            {"projection", {{"max_abs_error", proj.max_abs_error},
                                            {"peak_density", proj.peak_density},
                                            {"most_negative", proj.most_negative},
                                            {"mass", proj.mass}}},
                            {"initial", moments_json(series_row(pred, 0), config_.state_dim())},
                            {"final", moments_json(series_row(pred, pred.length() - 1), config_.state_dim())}});
  record_timing("predict", seconds_since(t0));
  return StageStatus::kOk;
}

StageStatus Runner::control() {
  const auto t0 = Clock::now();
  const auto model = load_model();
  const int d = config_.state_dim();
  const int h = config_.steps();
  const double dt = config_.estimation.dt;
  const ControlTaskConfig& ct = config_.task.control;
  const ProjectionResult proj = project_gaussian(model->dictionary, config_.initial_density.mean, config_.initial_density.cov);

  OcpSpec spec;
  spec.horizon = h;
  spec.dt = dt;
  spec.s = ct.stage_weight.asDiagonal();
  spec.s_terminal = ct.terminal_weight.asDiagonal();
  spec.r = ct.control_weight.asDiagonal();
  spec.y_ref = constant_reference(config_.target_moments(), h);
  const SolveReport rep = solve_lifted(model, proj.coefficients.coeffs, spec, ct.ddp);

  const MomentSeries pred = MomentSeries::from_outputs(rep.trajectory.outputs, d, dt);
  io::write_controls_csv(rep.controls, dt, out_ / Artifacts::kControls);
  io::write_cost_history_csv(rep.cost_history, out_ / Artifacts::kCostHistory);
  io::write_moment_comparison_csv({{"pred", &pred}}, out_ / Artifacts::kMoments);
  write_plots(pred, nullptr, nullptr, "control");

  svg::Chart controls;
  controls.title = config_.name + ": controls";
  controls.y_label = "u";
  const Vector tu = Vector::LinSpaced(h, 0.0, dt * (h - 1));
  for (int i = 0; i < rep.controls.cols(); ++i)
    controls.series.push_back({"u" + std::to_string(i + 1), tu, rep.controls.col(i), kComponentColors[i % 6], "", false});
  svg::write(controls, out_ / "controls.svg");

  Vector final_mean;
  Matrix final_cov;
  pred.mean_cov(pred.length() - 1, final_mean, final_cov);
  json ddp = io::solve_report_summary(rep);
  bool monotone = true;
  for (std::size_t i = 1; i < rep.cost_history.size(); ++i) monotone = monotone && rep.cost_history[i] <= rep.cost_history[i - 1];
  ddp["cost_non_increasing"] = monotone;
  merge_summary("control", {{"ddp", ddp},
                            {"target_mean", to_json_vec(ct.target_mean)},
                            {"target_moments", to_json_vec(config_.target_moments())},
                            {"predicted_final", moments_json(series_row(pred, pred.length() - 1), d)},
                            {"predicted_final_mean_distance", (final_mean - ct.target_mean).norm()},
                            {"max_abs_control", rep.controls.size() ? rep.controls.cwiseAbs().maxCoeff() : 0.0}});
  record_timing("control", seconds_since(t0));
  return rep.converged ? StageStatus::kOk : StageStatus::kNotConverged;
}

StageStatus Runner::validate() {
  const auto t0 = Clock::now();
  const auto model = load_model();
  const RowMatrix u = stage_controls();
  const int d = config_.state_dim();
  const double dt = config_.estimation.dt;
  const ControlAffineSystem sys = config_.make_system();

  const ProjectionResult proj = project_gaussian(model->dictionary, config_.initial_density.mean, config_.initial_density.cov);
  const MomentSeries pred =
      MomentSeries::from_outputs(rollout(*model, proj.coefficients.coeffs, u, dt).outputs, d, dt);
  const SampleEnsemble ens = sample_gaussian(config_.initial_density.mean, config_.initial_density.cov,
                                             config_.validation.n_samples, config_.validation.seed);
  MonteCarloOptions mco;
  mco.max_excluded_fraction = config_.validation.max_excluded_fraction;
  const MonteCarloResult mc = monte_carlo_moments(sys, ens, u, dt, mco);
  LinearizationOptions lo;
  lo.covariance_order = config_.validation.linearization_order;
  json lin_json;
  std::optional<MomentSeries> lin;
  try {
    lin = linearized_moment_prediction(sys, config_.initial_density.mean, config_.initial_density.cov, u, dt, lo);
  } catch (const std::runtime_error& e) {
    lin_json = {{"failed", e.what()}};
  }

  if (lin) {
    io::write_moment_comparison_csv({{"pred", &pred}, {"sample", &mc.series}, {"lin", &*lin}}, out_ / Artifacts::kMoments);
  } else {
    io::write_moment_comparison_csv({{"pred", &pred}, {"sample", &mc.series}}, out_ / Artifacts::kMoments);
  }
  {
    std::ofstream f(out_ / Artifacts::kFinalSamples);
    f << "x1,x2\n";
    for (Eigen::Index i = 0; i < mc.final_samples.rows(); ++i)
      f << io::format_double(mc.final_samples(i, 0)) << ',' << io::format_double(mc.final_samples(i, 1)) << '\n';
  }
  write_plots(pred, &mc.series, lin ? &*lin : nullptr, "validate");

  const int last = pred.length() - 1;
  json out = {{"n_samples", config_.validation.n_samples},
              {"seed", config_.validation.seed},
              {"rng", SampleEnsemble::kGenerator},
              {"excluded", mc.excluded},
              {"valid", mc.valid},
              {"error_predicted_vs_sample", error_json(moment_error(pred, mc.series))},
              {"predicted_final", moments_json(series_row(pred, last), d)},
              {"sample_final", moments_json(series_row(mc.series, last), d)}};
  if (lin) {
    out["error_linearized_vs_sample"] = error_json(moment_error(*lin, mc.series));
    out["linearized_final"] = moments_json(series_row(*lin, last), d);
  } else {
    out["error_linearized_vs_sample"] = lin_json;
  }
  if (config_.task.type == "control") {
    const Vector target = config_.task.control.target_mean;
    out["sample_final_mean_distance"] = (mc.series.m1.row(last).transpose() - target).norm();
    out["predicted_final_mean_distance"] = (pred.m1.row(last).transpose() - target).norm();
  }
  merge_summary("validate", out);
  record_timing("validate", seconds_since(t0));
  return StageStatus::kOk;
}

StageStatus Runner::compare_baselines() {
  const auto t0 = Clock::now();
  if (config_.task.type != "control") throw ConfigError("task.type: compare-baselines needs a control task");
  const RowMatrix u_pf = stage_controls();
  const int d = config_.state_dim();
  const int h = config_.steps();
  const double dt = config_.estimation.dt;
  const ControlAffineSystem sys = config_.make_system();
  const BaselineConfig& bc = config_.baseline;

  OcpSpec spec;
  spec.horizon = h;
  spec.dt = dt;
  spec.s = bc.stage_weight.asDiagonal();
  spec.s_terminal = bc.terminal_weight.asDiagonal();
  spec.r = bc.control_weight.asDiagonal();
  spec.y_ref = constant_reference(config_.task.control.target_mean, h);
  const SolveReport rep = solve_state_ddp(sys, config_.initial_density.mean, spec, config_.task.control.ddp);
  io::write_controls_csv(rep.controls, dt, out_ / Artifacts::kBaselineControls);

  const SampleEnsemble ens = sample_gaussian(config_.initial_density.mean, config_.initial_density.cov, bc.n_samples, bc.seed);
  MonteCarloOptions mco;
  mco.max_excluded_fraction = config_.validation.max_excluded_fraction;
  const MonteCarloResult pf = monte_carlo_moments(sys, ens, u_pf, dt, mco);
  const MonteCarloResult st = monte_carlo_moments(sys, ens, rep.controls, dt, mco);
  io::write_moment_comparison_csv({{"pf_ddp", &pf.series}, {"state_ddp", &st.series}}, out_ / Artifacts::kBaselineMoments);

  const Vector target = config_.task.control.target_mean;
  auto describe = [&](const MonteCarloResult& r) {
    Vector mean;
    Matrix cov;
    r.series.mean_cov(h, mean, cov);
    const Vector sd = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    return json{{"final_mean", to_json_vec(mean)},
                {"final_std", to_json_vec(sd)},
                {"final_mean_distance", (mean - target).norm()},
                {"excluded", r.excluded},
                {"valid", r.valid}};
  };
  json a = describe(pf), b = describe(st);
  const Vector sd_a = vector_value(a["final_std"], "pf"), sd_b = vector_value(b["final_std"], "state");
  const double std_rel = ((sd_a - sd_b).cwiseAbs().array() / sd_b.array().max(1e-300)).maxCoeff();
  b["ddp"] = io::solve_report_summary(rep);

  // Mean +- one standard deviation per state component.
  for (int j = 0; j < d; ++j) {
    svg::Chart chart;
    chart.title = config_.name + ": PF-DDP vs state DDP, x" + std::to_string(j + 1);
    chart.y_label = "x" + std::to_string(j + 1);
    auto band = [&](const MonteCarloResult& r, const std::string& label, const std::string& color) {
      Vector mean(h + 1), sd(h + 1);
      for (int t = 0; t <= h; ++t) {
        Vector m;
        Matrix c;
        r.series.mean_cov(t, m, c);
        mean[t] = m[j];
        sd[t] = std::sqrt(std::max(c(j, j), 0.0));
      }
      chart.series.push_back({label + " mean", r.series.times, mean, color, "", false});
      chart.series.push_back({label + " +1 sd", r.series.times, mean + sd, color, "4,3", false});
      chart.series.push_back({"", r.series.times, mean - sd, color, "4,3", false});
    };
    band(pf, "PF-DDP", "#1f77b4");
    band(st, "state DDP", "#d62728");
    chart.references.push_back({target[j], "target", "#2ca02c"});
    svg::write(chart, out_ / ("baseline_x" + std::to_string(j + 1) + ".svg"));
  }

  merge_summary("compare_baselines", {{"n_samples", bc.n_samples},
                                      {"seed", bc.seed},
                                      {"rng", SampleEnsemble::kGenerator},
                                      {"pf_ddp", a},
                                      {"state_ddp", b},
                                      {"pf_closer_to_target", a["final_mean_distance"].get<double>() <
                                                                  b["final_mean_distance"].get<double>()},
                                      {"final_std_max_relative_difference", std_rel}});
  record_timing("compare_baselines", seconds_since(t0));
  return rep.converged ? StageStatus::kOk : StageStatus::kNotConverged;
}

StageStatus Runner::run() {
  StageStatus status = estimate();
  auto worst = [&](StageStatus s) {
    if (s == StageStatus::kNotConverged) status = s;
  };
  if (config_.task.type == "predict") {
    worst(predict());
    worst(validate());
  } else {
    worst(control());
    worst(validate());
    if (config_.baseline.enabled) worst(compare_baselines());
  }
  return status;
}

}  // namespace pft::experiment
