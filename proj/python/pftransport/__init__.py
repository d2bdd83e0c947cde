"""Perron-Frobenius generator models for density transport and control."""

import json as _json
from pkgutil import extend_path as _extend_path

# Let a freshly built extension in the build tree sit next to these sources.
__path__ = _extend_path(__path__, __name__)

from ._core import (  # noqa: E402
    ConfigError,
    ControlAffineSystem,
    Dictionary,
    GeneratorModel,
    InvalidArgument,
    MissingPrerequisite,
    NumericalError,
    Runner,
    SingularityError,
    SolveReport,
    StageStatus,
    build_generator_model,
    duffing_field,
    duffing_system,
    estimate_pf_matrix,
    integrate,
    linear_system,
    linearized_moment_prediction,
    load_model,
    mean_cov_from_moments,
    moments_from_mean_cov,
    monte_carlo_moments,
    project_gaussian,
    rbf_grid,
    rollout,
    rotlet_system,
    sample_gaussian,
    solve_lifted,
    solve_state_ddp,
)

__version__ = "0.1.0"


def summary(runner):
    """summary.json of a Runner as a dict."""
    return _json.loads(runner.summary_json())
