"""Simulator for the unidirectional porous-medium equation with a blow-up source.

Solves ``d/dt beta(u) = (lam Lap u + gamma(u))_+`` on a 1D Neumann interval
by a constrained variational time discretisation with regularisation
``mu``, and provides ODE envelopes, life-span estimates and checks of the
comparison and weak-solution inequalities.
"""
from .model import ModelParams, validate_assumptions
from .grid import Grid1D
from .energy import StepProblem, Variant
from .optimizer import SolveSettings, StepResult, minimize_step
from .stepper import Mode, RunConfig, Trajectory, mu_continuation, run_trajectory
from .ode_ref import blowup_time, solve_ode_limit, solve_ode_regularized
from .diagnostics import CheckReport

__all__ = [
    "ModelParams", "validate_assumptions", "Grid1D", "StepProblem", "Variant", "SolveSettings",
    "StepResult", "minimize_step", "Mode", "RunConfig", "Trajectory", "mu_continuation",
    "run_trajectory", "blowup_time", "solve_ode_limit", "solve_ode_regularized", "CheckReport",
]

__version__ = "0.1.0"
