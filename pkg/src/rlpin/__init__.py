"""Perturbed learning automata for dynamic thread-to-CPU pinning."""

from .errors import ConfigurationError, GameTooLargeError, MeasurementError, ScenarioError
from .game import GameSpec, Platform, ThreadSpec, objective_value, speeds, utilities, validate_game
from .learner import LearnerConfig, StrategyState, init_state, rm_step, select_actions, update_nominal
from .oracle import EquilibriumReport, enumerate_pure_nash, expected_payoff_vector, is_stationary, mean_field_drift
from .sim import BaselinePolicy, Scenario, Trace, completion_stats, run, run_baseline, time_fraction_near
from .simplex import perturb, project_to_simplex, sample_index, vertex_distance

__version__ = "0.1.0"
