"""Cumulative robustness for signal temporal logic.

Monitoring, smooth gradient-based policy synthesis, receding-horizon control
and Bayesian statistical model checking over discrete-time plants.
"""

from .lang import (Formula, ParseError, format_formula, horizon, parse, to_nnf)
from .semantics import (Trajectory, Verdict, cumulative, dwell_time, rho, rho_minus,
                        rho_minus_smooth, rho_plus, rho_plus_smooth, rho_smooth,
                        robustness_series, sat, smooth_max, smooth_min)
from .plant import (NoiseSpec, SystemModel, dubins_model, integrator_model, linear_model,
                    simulate)
from .synth import SynthConfig, SynthReport, StepSchedule, smooth_optimization
from .mpc import (LoopSearchConfig, MpcConfig, closed_loop_formula, loop_search,
                  mpc_synthesize, verify_loop)
from .smc import SmcConfig, SmcResult, bayesian_estimate, estimate_policy
from .scenario import Scenario, ScenarioError, load as load_scenario
from .estimators import RobustnessTransformer

__version__ = "0.1.0"

__all__ = [
    "Formula", "ParseError", "format_formula", "horizon", "parse", "to_nnf",
    "Trajectory", "Verdict", "cumulative", "dwell_time", "rho", "rho_minus",
    "rho_minus_smooth", "rho_plus", "rho_plus_smooth", "rho_smooth", "robustness_series",
    "sat", "smooth_max", "smooth_min",
    "NoiseSpec", "SystemModel", "dubins_model", "integrator_model", "linear_model", "simulate",
    "SynthConfig", "SynthReport", "StepSchedule", "smooth_optimization",
    "LoopSearchConfig", "MpcConfig", "closed_loop_formula", "loop_search", "mpc_synthesize",
    "verify_loop",
    "SmcConfig", "SmcResult", "bayesian_estimate", "estimate_policy",
    "Scenario", "ScenarioError", "load_scenario",
    "RobustnessTransformer",
]
