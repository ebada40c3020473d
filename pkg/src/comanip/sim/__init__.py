"""Closed-loop simulation: scenarios, episodes, benchmark, streaming."""

from .bench import BenchOptions, BenchResult, default_arm, environment, run_bench, table1_grid
from .episode import (
    EpisodeLog,
    Stepper,
    commission,
    episode_to_demo,
    generate_demos,
    replay_belief,
    run_episode,
)
from .human import synthetic_human
from .scenario import (
    DemoParams,
    GpParams,
    HumanParams,
    ModeSpec,
    Rates,
    Scenario,
    builtin_scenario,
    load_scenario,
    resolve_scenario,
    save_scenario,
    scenario_from_dict,
)
from .server import create_app, serve

__all__ = [
    "BenchOptions",
    "BenchResult",
    "DemoParams",
    "EpisodeLog",
    "GpParams",
    "HumanParams",
    "ModeSpec",
    "Rates",
    "Scenario",
    "Stepper",
    "builtin_scenario",
    "commission",
    "create_app",
    "default_arm",
    "environment",
    "episode_to_demo",
    "generate_demos",
    "load_scenario",
    "replay_belief",
    "resolve_scenario",
    "run_bench",
    "run_episode",
    "save_scenario",
    "scenario_from_dict",
    "serve",
    "synthetic_human",
    "table1_grid",
]
