"""Square-root second-order extended Kalman filtering for dynamic factor
models with random-walk time-varying parameters."""

from .errors import TvpDfmError
from .filtering import (
    FilterRun,
    Smoothed,
    filter_pass,
    initial_conditions,
    log_likelihood,
    rts_smooth,
    sekf_filter_pass,
)
from .linalg import SqrtFactor, block_qr_update, cholesky_factor, qr_triangularize
from .model import Cell, ModelSpec, ParamVector, assemble, load_spec, stack_params, unstack_params
from .montecarlo import McReport, emit_tables, relative_bias, run_condition, sd_estimates
from .simulate import ScenarioConfig, fitted_spec, gen_dataset, gen_tvp_path, loess_smooth
from .tuning import TuneConfig, TuneResult, classify_tvp, fit_time_invariant, seed_tvp_start, tune

__all__ = [
    "Cell", "FilterRun", "McReport", "ModelSpec", "ParamVector", "ScenarioConfig", "Smoothed",
    "SqrtFactor", "TuneConfig", "TuneResult", "TvpDfmError", "assemble", "block_qr_update",
    "cholesky_factor", "classify_tvp", "emit_tables", "filter_pass", "fit_time_invariant",
    "fitted_spec", "gen_dataset", "gen_tvp_path", "initial_conditions", "load_spec",
    "loess_smooth", "log_likelihood", "qr_triangularize", "relative_bias", "rts_smooth",
    "run_condition", "sd_estimates", "seed_tvp_start", "sekf_filter_pass", "stack_params",
    "tune", "unstack_params",
]
