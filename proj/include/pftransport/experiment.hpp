#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "pftransport/ddp.hpp"
#include "pftransport/edmd.hpp"
#include "pftransport/validation.hpp"

namespace pft::experiment {

/// Invalid configuration. The message names the offending field.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// A stage was asked to run before the artifact it needs exists.
class MissingPrerequisite : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct SystemConfig {
  std::string type = "duffing";  // duffing | rotlet | zero
  RotorConfig rotors = RotorConfig::default_pair();
};

struct DictionaryConfig {
  Vector lower, upper;
  int n_per_dim = 30;
  /// Absolute width; when unset, width_factor times the grid spacing.
  std::optional<double> width;
  double width_factor = 1.0;

  double resolved_width() const;
};

struct EstimationConfig {
  GridSpec ic_grid;
  double dt = 0.005;
  double regularization = 1e-10;
  int substeps = 1;
  bool drop_singular = false;
  GeneratorDifference control_difference = GeneratorDifference::kForward;
};

struct DensityConfig {
  Vector mean;
  Matrix cov;
};

/// Open-loop control signal for prediction runs.
struct SignalConfig {
  std::string type = "sine";  // zero | constant | sine | file
  Vector amplitude;           // per control channel (sine) or value (constant)
  double frequency = 2.0;     // Hz
  double phase = 0.0;         // rad
  std::filesystem::path file; // controls CSV for type "file"

  /// H x n_c signal sampled at the left end of each step.
  RowMatrix sample(int horizon, double dt, int control_dim) const;
};

struct ControlTaskConfig {
  Vector target_mean;
  double target_variance = 0.0;
  Vector stage_weight;     // diagonal of S over [m1, m2]
  Vector terminal_weight;  // diagonal of S_H
  Vector control_weight;   // diagonal of R
  DdpOptions ddp;
};

struct TaskConfig {
  std::string type = "predict";  // predict | control
  double horizon = 3.0;          // seconds
  SignalConfig signal;
  ControlTaskConfig control;
};

struct ValidationConfig {
  int n_samples = 1000;
  std::uint64_t seed = 1;
  double max_excluded_fraction = 0.01;
  int linearization_order = 2;
};

struct BaselineConfig {
  bool enabled = false;
  int n_samples = 500;
  std::uint64_t seed = 2;
  Vector stage_weight;     // diagonal over the state
  Vector terminal_weight;
  Vector control_weight;
};

struct ExperimentConfig {
  std::string name = "experiment";
  SystemConfig system;
  DictionaryConfig dictionary;
  EstimationConfig estimation;
  DensityConfig initial_density;
  TaskConfig task;
  ValidationConfig validation;
  BaselineConfig baseline;
  std::filesystem::path output_dir = "out";

  int state_dim() const { return static_cast<int>(initial_density.mean.size()); }
  int control_dim() const;
  /// horizon / dt, required to be an integer.
  int steps() const;
  ControlAffineSystem make_system() const;
  /// Target output y_ref = [mean, mean mean^T + variance I] for control tasks.
  Vector target_moments() const;

  /// Fully resolved configuration (defaults filled in).
  nlohmann::json to_json() const;
};

/// Configuration carrying every default. Config files are merge patches
/// over this document.
nlohmann::json default_config_json();

/// Parses and validates a merged configuration. A relative signal file
/// resolves against `base_dir`; output_dir stays relative to the working
/// directory. Throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& patch, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Outcome of one stage.
enum class StageStatus { kOk, kNotConverged };

/// File names inside the output directory.
struct Artifacts {
  static constexpr const char* kModel = "model.pftm";
  static constexpr const char* kMoments = "moments.csv";
  static constexpr const char* kControls = "controls.csv";
  static constexpr const char* kCostHistory = "cost_history.csv";
  static constexpr const char* kBaselineControls = "baseline_controls.csv";
  static constexpr const char* kBaselineMoments = "baseline_moments.csv";
  static constexpr const char* kFinalSamples = "final_samples.csv";
  static constexpr const char* kSummary = "summary.json";
  static constexpr const char* kResolvedConfig = "config.resolved.json";
  static constexpr const char* kTimings = "timings.json";
};

/// Runs the pipeline stages against one output directory. Every stage
/// merges its section into summary.json and writes its own artifacts.
class Runner {
 public:
  Runner(ExperimentConfig config, std::filesystem::path out_dir);

  StageStatus estimate();
  /// Open-loop moment prediction under the configured signal (predict
  /// tasks) or the stored controls (control tasks).
  StageStatus predict();
  /// DDP on the lifted model. kNotConverged still writes all artifacts.
  StageStatus control();
  /// Monte Carlo and linearized comparison against the model prediction.
  StageStatus validate();
  /// PF-DDP controls versus DDP on the mean state, on one sampled ensemble.
  StageStatus compare_baselines();
  /// estimate, then predict + validate or control + validate (+ baselines).
  StageStatus run();

  const ExperimentConfig& config() const { return config_; }
  const std::filesystem::path& out_dir() const { return out_; }
  nlohmann::json summary() const;

 private:
  std::shared_ptr<const GeneratorModel> load_model() const;
  RowMatrix stage_controls() const;
  void merge_summary(const std::string& section, const nlohmann::json& value) const;
  void record_timing(const std::string& stage, double seconds) const;
  void write_plots(const MomentSeries& predicted, const MomentSeries* sample, const MomentSeries* linearized,
                   const std::string& stem) const;

  ExperimentConfig config_;
  std::filesystem::path out_;
};

}  // namespace pft::experiment
