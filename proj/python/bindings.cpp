#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pftransport/basis.hpp"
#include "pftransport/ddp.hpp"
#include "pftransport/edmd.hpp"
#include "pftransport/experiment.hpp"
#include "pftransport/grid.hpp"
#include "pftransport/io.hpp"
#include "pftransport/lifted_model.hpp"
#include "pftransport/validation.hpp"

namespace py = pybind11;
using namespace pft;

namespace {

GridSpec make_grid(const Vector& lower, const Vector& upper, int n) { return GridSpec{lower, upper, n}; }

RotorConfig make_rotors(const std::vector<std::array<double, 2>>& positions, double exclusion_radius) {
  RotorConfig r;
  for (const auto& p : positions) r.positions.emplace_back(p[0], p[1]);
  r.exclusion_radius = exclusion_radius;
  r.validate();
  return r;
}

OcpSpec make_spec(int horizon, double dt, const Matrix& s, const Matrix& r, const Matrix& s_terminal,
                  const RowMatrix& y_ref, const std::optional<RowMatrix>& u_init) {
  OcpSpec spec;
  spec.horizon = horizon;
  spec.dt = dt;
  spec.s = s;
  spec.r = r;
  spec.s_terminal = s_terminal;
  spec.y_ref = y_ref;
  if (u_init) spec.u_init = *u_init;
  return spec;
}

py::dict report_dict(const SolveReport& rep) {
  py::dict d;
  d["controls"] = rep.controls;
  d["states"] = rep.trajectory.states;
  d["outputs"] = rep.trajectory.outputs;
  d["cost_history"] = rep.cost_history;
  d["converged"] = rep.converged;
  d["iterations"] = rep.iterations;
  d["regularization_final"] = rep.regularization_final;
  d["message"] = rep.message;
  return d;
}

DdpOptions ddp_options(int max_iter, double tol) {
  DdpOptions o;
  o.max_iter = max_iter;
  o.tol = tol;
  return o;
}

py::dict series_dict(const MomentSeries& s) {
  py::dict d;
  d["t"] = s.times;
  d["m1"] = s.m1;
  d["m2"] = s.m2;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Perron-Frobenius generator models for density transport and control";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<SingularityError>(m, "SingularityError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const DivergenceError& e) {
      PyErr_SetString(PyExc_FloatingPointError, e.what());
    }
  });

  // Systems.
  py::class_<ControlAffineSystem>(m, "ControlAffineSystem")
      .def_readonly("name", &ControlAffineSystem::name)
      .def_readonly("state_dim", &ControlAffineSystem::state_dim)
      .def_readonly("control_dim", &ControlAffineSystem::control_dim)
      .def("evaluate", &ControlAffineSystem::evaluate, py::arg("x"), py::arg("u"))
      .def("field_jacobian", &ControlAffineSystem::field_jacobian, py::arg("x"), py::arg("u"))
      .def("control_matrix", &ControlAffineSystem::control_matrix, py::arg("x"));
  m.def("duffing_system", &make_duffing_system);
  m.def("rotlet_system",
        [](const std::vector<std::array<double, 2>>& positions, double exclusion_radius) {
          return make_rotlet_system(make_rotors(positions, exclusion_radius));
        },
        py::arg("positions") = std::vector<std::array<double, 2>>{{-1.0, 0.0}, {1.0, 0.0}},
        py::arg("exclusion_radius") = 0.05);
  m.def("linear_system", &make_linear_system, py::arg("a"), py::arg("b"));
  m.def("duffing_field", &duffing_field, py::arg("x"), py::arg("u"));
  m.def("integrate", &integrate, py::arg("system"), py::arg("x0"), py::arg("controls"), py::arg("dt"),
        py::arg("steps"));

  // Dictionary and projection.
  py::class_<Dictionary, std::shared_ptr<Dictionary>>(m, "Dictionary")
      .def(py::init<Matrix, double>(), py::arg("centers"), py::arg("width"))
      .def_property_readonly("size", &Dictionary::size)
      .def_property_readonly("dim", &Dictionary::dim)
      .def_property_readonly("centers", &Dictionary::centers)
      .def_property_readonly("width", &Dictionary::width)
      .def("evaluate", &Dictionary::evaluate, py::arg("x"))
      .def("evaluate_columns", &Dictionary::evaluate_columns, py::arg("points"))
      .def("moment_matrix", [](const Dictionary& d) { return moment_matrix(d); })
      .def("mass_vector", [](const Dictionary& d) { return mass_vector(d); });
  m.def("rbf_grid",
        [](const Vector& lower, const Vector& upper, int n, double width) {
          return std::make_shared<Dictionary>(build_rbf_grid(lower, upper, n, width));
        },
        py::arg("lower"), py::arg("upper"), py::arg("n_per_dim"), py::arg("width"));
  m.def("project_gaussian",
        [](std::shared_ptr<Dictionary> dict, const Vector& mean, const Matrix& cov) {
          const ProjectionResult r = project_gaussian(dict, mean, cov);
          py::dict d;
          d["coefficients"] = r.coefficients.coeffs;
          d["max_abs_error"] = r.max_abs_error;
          d["peak_density"] = r.peak_density;
          d["most_negative"] = r.most_negative;
          d["mass"] = r.mass;
          return d;
        },
        py::arg("dictionary"), py::arg("mean"), py::arg("cov"));
  m.def("moments_from_mean_cov", &moments_from_mean_cov, py::arg("mean"), py::arg("cov"));
  m.def("mean_cov_from_moments",
        [](const Vector& y, int dim) {
          Vector mean;
          Matrix cov;
          mean_cov_from_moments(y, dim, mean, cov);
          return py::make_tuple(mean, cov);
        },
        py::arg("y"), py::arg("dim"));

  // Generator estimation.
  m.def("estimate_pf_matrix",
        [](std::shared_ptr<Dictionary> dict, const Matrix& x, const Matrix& y, double regularization) {
          EdmdOptions o;
          o.regularization = regularization;
          return EdmdEstimator(dict, x, o).pf_matrix(y);
        },
        py::arg("dictionary"), py::arg("x"), py::arg("y"), py::arg("regularization") = 1e-10);
  py::class_<GeneratorModel, std::shared_ptr<GeneratorModel>>(m, "GeneratorModel")
      .def_property_readonly("dictionary", [](const GeneratorModel& g) { return std::const_pointer_cast<Dictionary>(g.dictionary); })
      .def_readonly("l0", &GeneratorModel::l0)
      .def_readonly("b", &GeneratorModel::b)
      .def_readonly("c", &GeneratorModel::c)
      .def_readonly("dt_data", &GeneratorModel::dt_data)
      .def_property_readonly("lifted_dim", &GeneratorModel::lifted_dim)
      .def_property_readonly("control_dim", &GeneratorModel::control_dim)
      .def("save", [](const GeneratorModel& g, const std::filesystem::path& p) { io::save_model(g, p); }, py::arg("path"));
  m.def("load_model", [](const std::filesystem::path& p) { return std::make_shared<GeneratorModel>(io::load_model(p)); },
        py::arg("path"));
  m.def("build_generator_model",
        [](const ControlAffineSystem& sys, std::shared_ptr<Dictionary> dict, const Vector& lower, const Vector& upper,
           int n_per_dim, double dt, double regularization, int substeps, bool drop_singular, bool central) {
          ModelBuildOptions o;
          o.edmd.regularization = regularization;
          o.snapshots.substeps = substeps;
          o.snapshots.drop_singular = drop_singular;
          o.control_difference = central ? GeneratorDifference::kCentral : GeneratorDifference::kForward;
          return std::make_shared<GeneratorModel>(
              build_generator_model(sys, dict, make_grid(lower, upper, n_per_dim), dt, o));
        },
        py::arg("system"), py::arg("dictionary"), py::arg("lower"), py::arg("upper"), py::arg("n_per_dim"),
        py::arg("dt"), py::arg("regularization") = 1e-10, py::arg("substeps") = 1, py::arg("drop_singular") = false,
        py::arg("central_control_difference") = false);

  // Lifted model.
  m.def("rollout",
        [](const GeneratorModel& g, const Vector& rho0, const RowMatrix& controls, double dt, bool expm) {
          const Trajectory t = rollout(g, rho0, controls, dt, expm ? StepScheme::kExpm : StepScheme::kRk4);
          return py::make_tuple(t.states, t.outputs);
        },
        py::arg("model"), py::arg("rho0"), py::arg("controls"), py::arg("dt"), py::arg("expm") = false);

  // DDP.
  m.def("solve_lifted",
        [](std::shared_ptr<GeneratorModel> g, const Vector& rho0, int horizon, double dt, const Matrix& s,
           const Matrix& r, const Matrix& s_terminal, const RowMatrix& y_ref, std::optional<RowMatrix> u_init,
           int max_iter, double tol) {
          const OcpSpec spec = make_spec(horizon, dt, s, r, s_terminal, y_ref, u_init);
          py::gil_scoped_release release;
          return solve_lifted(g, rho0, spec, ddp_options(max_iter, tol));
        },
        py::arg("model"), py::arg("rho0"), py::arg("horizon"), py::arg("dt"), py::arg("s"), py::arg("r"),
        py::arg("s_terminal"), py::arg("y_ref"), py::arg("u_init") = py::none(), py::arg("max_iter") = 200,
        py::arg("tol") = 1e-8);
  m.def("solve_state_ddp",
        [](const ControlAffineSystem& sys, const Vector& x0, int horizon, double dt, const Matrix& s, const Matrix& r,
           const Matrix& s_terminal, const RowMatrix& y_ref, std::optional<RowMatrix> u_init, int max_iter,
           double tol) {
          return solve_state_ddp(sys, x0, make_spec(horizon, dt, s, r, s_terminal, y_ref, u_init),
                                 ddp_options(max_iter, tol));
        },
        py::arg("system"), py::arg("x0"), py::arg("horizon"), py::arg("dt"), py::arg("s"), py::arg("r"),
        py::arg("s_terminal"), py::arg("y_ref"), py::arg("u_init") = py::none(), py::arg("max_iter") = 200,
        py::arg("tol") = 1e-8);
  py::class_<SolveReport>(m, "SolveReport")
      .def("as_dict", &report_dict)
      .def_readonly("controls", &SolveReport::controls)
      .def_readonly("cost_history", &SolveReport::cost_history)
      .def_readonly("converged", &SolveReport::converged)
      .def_readonly("iterations", &SolveReport::iterations)
      .def_readonly("message", &SolveReport::message)
      .def_property_readonly("outputs", [](const SolveReport& r) { return r.trajectory.outputs; })
      .def_property_readonly("states", [](const SolveReport& r) { return r.trajectory.states; });

  // Validation.
  m.def("sample_gaussian",
        [](const Vector& mean, const Matrix& cov, int n, std::uint64_t seed) {
          return sample_gaussian(mean, cov, n, seed).samples;
        },
        py::arg("mean"), py::arg("cov"), py::arg("n"), py::arg("seed"));
  m.def("monte_carlo_moments",
        [](const ControlAffineSystem& sys, const RowMatrix& samples, const RowMatrix& controls, double dt) {
          SampleEnsemble ens;
          ens.samples = samples;
          const MonteCarloResult r = monte_carlo_moments(sys, ens, controls, dt);
          py::dict d = series_dict(r.series);
          d["excluded"] = r.excluded;
          d["valid"] = r.valid;
          d["final_samples"] = r.final_samples;
          return d;
        },
        py::arg("system"), py::arg("samples"), py::arg("controls"), py::arg("dt"));
  m.def("linearized_moment_prediction",
        [](const ControlAffineSystem& sys, const Vector& mean, const Matrix& cov, const RowMatrix& controls, double dt,
           int order) {
          LinearizationOptions o;
          o.covariance_order = order;
          return series_dict(linearized_moment_prediction(sys, mean, cov, controls, dt, o));
        },
        py::arg("system"), py::arg("mean"), py::arg("cov"), py::arg("controls"), py::arg("dt"),
        py::arg("covariance_order") = 2);

  // Experiments.
  py::register_exception<experiment::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<experiment::MissingPrerequisite>(m, "MissingPrerequisite", PyExc_FileNotFoundError);
  py::enum_<experiment::StageStatus>(m, "StageStatus")
      .value("OK", experiment::StageStatus::kOk)
      .value("NOT_CONVERGED", experiment::StageStatus::kNotConverged);
  py::class_<experiment::Runner>(m, "Runner")
      .def(py::init([](const std::filesystem::path& config, std::optional<std::filesystem::path> out,
                       std::optional<std::uint64_t> seed) {
             experiment::ExperimentConfig c = experiment::load_config(config);
             if (seed) c.validation.seed = c.baseline.seed = *seed;
             return experiment::Runner(c, out ? *out : c.output_dir);
           }),
           py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none())
      .def("estimate", &experiment::Runner::estimate, py::call_guard<py::gil_scoped_release>())
      .def("predict", &experiment::Runner::predict, py::call_guard<py::gil_scoped_release>())
      .def("control", &experiment::Runner::control, py::call_guard<py::gil_scoped_release>())
      .def("validate", &experiment::Runner::validate, py::call_guard<py::gil_scoped_release>())
      .def("compare_baselines", &experiment::Runner::compare_baselines, py::call_guard<py::gil_scoped_release>())
      .def("run", &experiment::Runner::run, py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("out_dir", &experiment::Runner::out_dir)
      .def("summary_json", [](const experiment::Runner& r) { return r.summary().dump(); });
}
