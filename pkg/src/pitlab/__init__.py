"""pitlab: a desk-scale laboratory for parallel-in-time integration.

Runs SDC and PFASST on test problems with real multi-worker time
parallelism, records instrumented event traces of every sweep and
message, analyzes the traces for wait states and efficiency metrics,
and automates parameter sweeps.
"""

from .analysis import PopReport, WaitState, detect_late_receiver, ideal_replay, pop_metrics
from .collocation import CollocationTable, make_radau_table
from .controller import (
    RunConfig,
    RunResult,
    allen_cahn_config,
    dahlquist_config,
    format_summary,
    run,
    run_sdc_serial,
)
from .problems import AllenCahnProblem, DahlquistProblem, Field2D, ac_initial_condition, measure_radius
from .sweeper import LevelState, collocation_solve_direct, imex_sweep, residual
from .trace import Trace, Tracer, build_profile, read_trace, write_trace
from .transfer import LevelPair, SpectralResampler, compute_fas_tau

__version__ = "0.1.0"

__all__ = [
    "AllenCahnProblem",
    "CollocationTable",
    "DahlquistProblem",
    "Field2D",
    "LevelPair",
    "LevelState",
    "PopReport",
    "RunConfig",
    "RunResult",
    "SpectralResampler",
    "Trace",
    "Tracer",
    "WaitState",
    "ac_initial_condition",
    "allen_cahn_config",
    "build_profile",
    "collocation_solve_direct",
    "compute_fas_tau",
    "dahlquist_config",
    "detect_late_receiver",
    "format_summary",
    "ideal_replay",
    "imex_sweep",
    "make_radau_table",
    "measure_radius",
    "pop_metrics",
    "read_trace",
    "residual",
    "run",
    "run_sdc_serial",
    "write_trace",
]
