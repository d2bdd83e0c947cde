// Acceptance runner. `pft_acceptance --criterion N` prints one PASS/FAIL line
// per check and exits non-zero if any check fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "pftransport/basis.hpp"
#include "pftransport/ddp.hpp"
#include "pftransport/edmd.hpp"
#include "pftransport/experiment.hpp"
#include "pftransport/lifted_model.hpp"

using namespace pft;
using namespace pft::testing;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Tolerances.
constexpr double kOpenLoopM1 = 0.15;
constexpr double kOpenLoopRuntime = 300.0;  // seconds
constexpr double kDuffingPredicted = 0.10;
constexpr double kDuffingValidated = 0.15;
constexpr double kBaselineStd = 0.25;
constexpr double kRotletPredicted = 0.20;
constexpr double kRotletValidated = 0.25;
constexpr double kZeroField = 1e-8;
constexpr double kAdditivity = 0.02;
constexpr double kAdjoint = 1e-6;
constexpr double kRiccati = 1e-8;
constexpr double kGradient = 1e-5;
constexpr double kQuadrature = 1e-8;
constexpr double kDiscretization = 1e-6;

constexpr double kDt = 0.005;

class Report {
 public:
  explicit Report(int criterion) : criterion_(criterion) {}

  void check(bool pass, const std::string& name, double value, const std::string& bound) {
    failed_ = failed_ || !pass;
    std::printf("%s criterion %d %s: %.6g (%s)\n", pass ? "PASS" : "FAIL", criterion_, name.c_str(), value,
                bound.c_str());
    std::fflush(stdout);
  }
  void at_most(const std::string& name, double value, double tol) {
    check(std::isfinite(value) && value <= tol, name, value, "<= " + fmt(tol));
  }
  void info(const std::string& text) {
    std::printf("INFO criterion %d %s\n", criterion_, text.c_str());
    std::fflush(stdout);
  }
  void fail(const std::string& name, const std::string& why) {
    failed_ = true;
    std::printf("FAIL criterion %d %s: %s\n", criterion_, name.c_str(), why.c_str());
    std::fflush(stdout);
  }
  bool failed() const { return failed_; }

  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
  }

 private:
  int criterion_;
  bool failed_ = false;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

experiment::Runner make_runner(const std::string& config_name, const std::string& work_name) {
  const fs::path work = fs::path(PFT_WORK_DIR) / work_name;
  fs::remove_all(work);
  return experiment::Runner(experiment::load_config(fs::path(PFT_CONFIG_DIR) / config_name), work);
}

double rel_norm(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

void open_loop(Report& r) {
  const auto t0 = Clock::now();
  auto runner = make_runner("duffing_openloop.json", "duffing_openloop");
  const auto& cfg = runner.config();
  r.info("horizon " + Report::fmt(cfg.task.horizon) + " s, " + std::to_string(cfg.validation.n_samples) +
         " samples, dictionary " + std::to_string(cfg.dictionary.n_per_dim) + "^2");
  runner.estimate();
  runner.predict();
  runner.validate();
  const double elapsed = seconds_since(t0);
  const json s = runner.summary();
  const json& err = s.at("validate").at("error_predicted_vs_sample");
  r.at_most("max |m1 predicted - m1 sample| over [0, 3] s", err.at("m1_max").get<double>(), kOpenLoopM1);
  r.info("m2 max error " + Report::fmt(err.at("m2_max").get<double>()) + ", excluded samples " +
         std::to_string(s.at("validate").at("excluded").get<long>()));
  r.at_most("wall time [s]", elapsed, kOpenLoopRuntime);
}

void duffing_control(Report& r) {
  auto runner = make_runner("duffing_control.json", "duffing_control");
  runner.estimate();
  const auto status = runner.control();
  runner.validate();
  const json s = runner.summary();
  const json& ddp = s.at("control").at("ddp");
  r.info("ddp iterations " + std::to_string(ddp.at("iterations").get<int>()) + ", converged " +
         (ddp.at("converged").get<bool>() ? "true" : "false") + ", cost " +
         Report::fmt(ddp.at("initial_cost").get<double>()) + " -> " + Report::fmt(ddp.at("final_cost").get<double>()));
  if (status != experiment::StageStatus::kOk) r.info("control stage did not converge");
  r.at_most("predicted final mean distance to (1,0)", s.at("control").at("predicted_final_mean_distance").get<double>(),
            kDuffingPredicted);
  r.at_most("validated 500-sample final mean distance to (1,0)",
            s.at("validate").at("sample_final_mean_distance").get<double>(), kDuffingValidated);
  r.check(ddp.at("cost_non_increasing").get<bool>(), "cost history non-increasing (1 = yes)",
          ddp.at("cost_non_increasing").get<bool>() ? 1.0 : 0.0, "== 1");
}

void baselines(Report& r) {
  auto runner = make_runner("duffing_control.json", "duffing_baselines");
  runner.estimate();
  runner.control();
  runner.compare_baselines();
  const json s = runner.summary().at("compare_baselines");
  const double pf = s.at("pf_ddp").at("final_mean_distance").get<double>();
  const double st = s.at("state_ddp").at("final_mean_distance").get<double>();
  r.info("final mean distance: pf-ddp " + Report::fmt(pf) + ", state ddp " + Report::fmt(st) + " over " +
         std::to_string(s.at("n_samples").get<int>()) + " samples");
  r.check(pf < st, "pf-ddp distance minus state ddp distance", pf - st, "< 0");
  r.at_most("max relative difference of final sample std", s.at("final_std_max_relative_difference").get<double>(),
            kBaselineStd);
}

void rotlet(Report& r) {
  auto runner = make_runner("rotlet_control.json", "rotlet_control");
  runner.estimate();
  const auto status = runner.control();
  runner.validate();
  const json s = runner.summary();
  const json& ddp = s.at("control").at("ddp");
  r.info("ddp iterations " + std::to_string(ddp.at("iterations").get<int>()) + ", converged " +
         (ddp.at("converged").get<bool>() ? "true" : "false"));
  if (status != experiment::StageStatus::kOk) r.info("control stage did not converge");
  r.info("excluded samples " + std::to_string(s.at("validate").at("excluded").get<long>()));
  r.at_most("predicted final mean distance to (-1,-1)",
            s.at("control").at("predicted_final_mean_distance").get<double>(), kRotletPredicted);
  r.at_most("validated 500-sample final mean distance to (-1,-1)",
            s.at("validate").at("sample_final_mean_distance").get<double>(), kRotletValidated);
}

std::shared_ptr<const Dictionary> reference_dictionary() {
  return std::make_shared<const Dictionary>(build_rbf_grid(v2(-2.5, -2.5), v2(2.5, 2.5), 30, 5.0 / 29.0));
}

std::shared_ptr<const Dictionary> coarse_dictionary() {
  return std::make_shared<const Dictionary>(build_rbf_grid(v2(-2.5, -2.5), v2(2.5, 2.5), 6, 1.0));
}

void zero_field(Report& r) {
  const GridSpec grid = box_grid(2, -2.5, 2.5, 50);
  const SnapshotSet s = collect_snapshots([](const Vector& x) -> Vector { return Vector::Zero(x.size()); }, grid, kDt);
  const Matrix p = estimate_pf_matrix(s, reference_dictionary());
  r.at_most("zero-field |P - I|_max (30x30 dictionary)", (p - Matrix::Identity(p.rows(), p.cols())).cwiseAbs().maxCoeff(),
            kZeroField);
}

double additivity(const std::shared_ptr<const Dictionary>& dict, const VectorField& f1, const VectorField& f2) {
  const GridSpec grid = box_grid(2, -2.5, 2.5, 50);
  auto sum = [&](const Vector& x) -> Vector { return f1(x) + f2(x); };
  const Matrix l1 = estimate_generator(f1, dict, grid, kDt);
  const Matrix l2 = estimate_generator(f2, dict, grid, kDt);
  const Matrix l12 = estimate_generator(sum, dict, grid, kDt);
  return rel_norm(l1 + l2, l12);
}

void additivity_checks(Report& r) {
  const ControlAffineSystem duffing = make_duffing_system();
  auto rotation = [](const Vector& x) -> Vector { return v2(-x[1], x[0]); };
  auto shift = [](const Vector&) -> Vector { return v2(0.5, -0.3); };
  r.at_most("additivity, duffing drift + control field (6x6 dictionary)",
            additivity(coarse_dictionary(), duffing.drift, duffing.control_fields[0]), kAdditivity);
  r.at_most("additivity, rotation + constant field (6x6 dictionary)", additivity(coarse_dictionary(), rotation, shift),
            kAdditivity);
  r.info("additivity on the 30x30 dictionary, duffing drift + control field: " +
         Report::fmt(additivity(reference_dictionary(), duffing.drift, duffing.control_fields[0])));
}

void adjointness(Report& r) {
  const SnapshotSet s = collect_snapshots(make_duffing_system().drift, box_grid(2, -2.5, 2.5, 50), kDt);
  EdmdOptions opts;
  opts.regularization = 0.0;
  for (const auto& [label, dict] : {std::pair{"6x6", coarse_dictionary()}, std::pair{"30x30", reference_dictionary()}}) {
    const EdmdEstimator est(dict, s.x, opts);
    const Matrix& g = est.gram();
    const Matrix lhs = est.pf_matrix(s.y).transpose() * g;
    const Matrix rhs = g * est.koopman_matrix(s.y);
    r.at_most(std::string("adjointness |P^T G - G K| / |G K| (") + label + " dictionary)", rel_norm(lhs, rhs), kAdjoint);
  }
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

void riccati(Report& r) {
  {
    const double dt = 0.1;
    const AffineLiftedInstance inst = affine_lifted_instance(6, 2, dt, 17);
    std::mt19937_64 rng(18);
    const OcpSpec spec = random_spec(8, 2, 2, dt, rng);
    const RiccatiSolution oracle = riccati_oracle(inst.a, inst.b, inst.model->c, spec, inst.x0);
    const SolveReport rep = solve_lifted(inst.model, inst.x0, spec);
    r.at_most("lifted DDP controls vs Riccati recursion (relative)",
              max_abs(rep.controls - oracle.u) / (1.0 + max_abs(oracle.u)), kRiccati);
    r.check(rep.converged && rep.iterations == 1, "lifted DDP iterations", rep.iterations, "== 1, converged");
  }
  {
    const double dt = 0.05;
    std::mt19937_64 rng(23);
    const Matrix am = random_matrix(3, 3, rng);
    const Matrix bm = random_matrix(3, 2, rng);
    Matrix a, b;
    rk4_discretize(am, bm, dt, a, b);
    const OcpSpec spec = random_spec(12, 3, 2, dt, rng);
    Vector x0(3);
    x0 << 0.5, -1.0, 0.25;
    const RiccatiSolution oracle = riccati_oracle(a, b, Matrix::Identity(3, 3), spec, x0);
    const SolveReport rep = solve_state_ddp(make_linear_system(am, bm), x0, spec);
    r.at_most("state-space DDP controls vs Riccati recursion (relative)",
              max_abs(rep.controls - oracle.u) / (1.0 + max_abs(oracle.u)), kRiccati);
    r.check(rep.converged && rep.iterations == 1, "state-space DDP iterations", rep.iterations, "== 1, converged");
  }
}

void gradient(Report& r) {
  double worst = 0.0;
  for (std::uint64_t seed : {101u, 202u, 303u, 404u, 505u}) {
    const auto model = std::make_shared<GeneratorModel>(random_model(9, 2, seed, 2.0));
    std::mt19937_64 rng(seed + 7);
    const double dt = 0.05;
    const OcpSpec spec = random_spec(5, 2, 2, dt, rng);
    const Vector rho0 = random_matrix(9, 1, rng);
    const RowMatrix u = random_matrix(5, 2, rng);
    const LiftedDynamics dyn(model, dt);
    const RowMatrix grad = cost_gradient(dyn, spec, simulate(dyn, rho0, u, dt));
    RowMatrix fd(5, 2);
    const double h = 1e-6;
    for (int t = 0; t < 5; ++t) {
      for (int i = 0; i < 2; ++i) {
        RowMatrix up = u, um = u;
        up(t, i) += h;
        um(t, i) -= h;
        fd(t, i) = (total_cost(spec, simulate(dyn, rho0, up, dt)) - total_cost(spec, simulate(dyn, rho0, um, dt))) /
                   (2.0 * h);
      }
    }
    worst = std::max(worst, (grad - fd).norm() / fd.norm());
  }
  r.at_most("DDP gradient vs central differences, k=9 H=5, 5 instances (worst relative)", worst, kGradient);
}

void quadrature(Report& r) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> center(-2.0, 2.0);
  std::uniform_real_distribution<double> width(0.15, 1.2);
  double worst = 0.0;
  for (int trial = 0; trial < 6; ++trial) {
    Matrix c(1, 2);
    c << center(rng), center(rng);
    const double w = width(rng);
    const Dictionary dict(c, w);
    const Vector analytic = moment_matrix(dict).col(0);
    const Vector numeric = quadrature_moment_column(c.row(0).transpose(), w);
    for (Eigen::Index i = 0; i < analytic.size(); ++i)
      worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / std::max(std::abs(numeric[i]), 1e-300));
  }
  r.at_most("moment integrals, analytic vs adaptive quadrature, 6 random centers (worst relative)", worst, kQuadrature);
}

void discretization(Report& r) {
  const auto dict = reference_dictionary();
  const GeneratorModel model =
      build_generator_model(make_duffing_system(), dict, box_grid(2, -2.5, 2.5, 50), kDt);
  const ProjectionResult proj = project_gaussian(dict, v2(-0.5, 1.0), 0.05 * Matrix::Identity(2, 2));
  const int h = 400;
  RowMatrix u(h, 1);
  for (int t = 0; t < h; ++t) u(t, 0) = std::sin(4.0 * std::numbers::pi * kDt * t);
  const LiftedTrajectory a = rollout(model, proj.coefficients.coeffs, u, kDt, StepScheme::kRk4);
  const LiftedTrajectory b = rollout(model, proj.coefficients.coeffs, u, kDt, StepScheme::kExpm);
  double worst = 0.0;
  for (int t = 0; t <= h; ++t)
    worst = std::max(worst, (a.outputs.row(t) - b.outputs.row(t)).norm() / b.outputs.row(t).norm());
  r.at_most("rk4 vs expm rollout outputs, Duffing 30x30 model, 400 steps (worst relative)", worst, kDiscretization);
}

void properties(Report& r) {
  const std::vector<std::pair<std::string, std::function<void(Report&)>>> parts = {
      {"zero field", zero_field}, {"additivity", additivity_checks}, {"adjointness", adjointness},
      {"riccati", riccati},       {"gradient", gradient},            {"quadrature", quadrature},
      {"discretization", discretization}};
  for (const auto& [name, fn] : parts) {
    try {
      fn(r);
    } catch (const std::exception& e) {
      r.fail(name, e.what());
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pftransport acceptance checks"};
  int criterion = 0;
  app.add_option("--criterion", criterion, "criterion number")->required()->check(CLI::Range(1, 5));
  CLI11_PARSE(app, argc, argv);

  Report report(criterion);
  const std::function<void(Report&)> runs[] = {open_loop, duffing_control, baselines, rotlet, properties};
  try {
    runs[criterion - 1](report);
  } catch (const std::exception& e) {
    report.fail("run", e.what());
  }
  return report.failed() ? 1 : 0;
}
