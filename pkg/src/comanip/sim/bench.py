"""Benchmark harness: re-solve the planner over recorded episode data.

Replaying the same logged states and beliefs under each problem-option
row gives repeatable cost comparisons across the option matrix (GP
covariance handling, state covariance, training-set size, objective,
impedance and arm variables). Reported per row: cold solve time, mean
and worst warm solve time.
"""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, replace

import numpy as np

from ..arm import ArmModel
from ..dynamics import State
from ..geometry import Pose
from ..gp import fit
from ..inference import Belief
from ..mpc import MpcEngine, Variants
from .episode import EpisodeLog
from .scenario import Scenario


@dataclass(frozen=True)
class BenchOptions:
    """One row of the option matrix."""

    full_gp_cov: bool = False
    state_cov: bool = True
    gp_points: int = 50
    objective: str = "expected"
    impedance: bool = False
    arm: bool = False

    def label(self) -> str:
        return "cov=%s state=%s pts=%d J=%s imp=%s arm=%s" % (
            "full" if self.full_gp_cov else "simpl",
            "yes" if self.state_cov else "no",
            self.gp_points,
            "risk" if self.objective == "risk_sensitive" else "exp",
            "yes" if self.impedance else "no",
            "yes" if self.arm else "no",
        )


def table1_grid() -> list:
    """The published comparison rows, in order."""
    return [
        BenchOptions(full_gp_cov=True),
        BenchOptions(),
        BenchOptions(state_cov=False),
        BenchOptions(gp_points=35),
        BenchOptions(impedance=True),
        BenchOptions(arm=True),
        BenchOptions(objective="risk_sensitive"),
    ]


@dataclass
class BenchResult:
    options: BenchOptions
    cold_s: float
    avg_warm_s: float
    worst_warm_s: float
    n_solves: int
    n_converged: int
    solutions: np.ndarray  # (n_solves, 6) first-step commands

    def row(self) -> dict:
        return {
            "options": self.options.label(),
            "cold_s": round(self.cold_s, 4),
            "avg_warm_s": round(self.avg_warm_s, 4),
            "worst_warm_s": round(self.worst_warm_s, 4),
            "n_solves": self.n_solves,
            "n_converged": self.n_converged,
        }


def default_arm() -> ArmModel:
    # shoulder set back and above the desk workspace; both goals are
    # well inside reach and away from the straight-arm singularity
    return ArmModel(l1=0.30, l2=0.28, x_sh=np.array([-0.15, 0.0, 0.25]), grasp=Pose())


def control_points(log: EpisodeLog):
    """(state, belief) at each logged control tick."""
    bp = max(
        1,
        round(log.metadata["rates"]["base_hz"] / log.metadata["rates"]["control_hz"]),
    )
    pts = []
    for rec in log.records:
        if rec["k"] % bp == 0:
            pts.append(
                (
                    State.from12(np.asarray(rec["xi"], dtype=float)),
                    Belief(np.asarray(rec["belief"], dtype=float)),
                )
            )
    return pts


def run_bench(
    scenario: Scenario, log: EpisodeLog, demos, options_list=None, max_solves=None
) -> list:
    """Time every option row over the same recorded control ticks."""
    rows = list(options_list) if options_list is not None else table1_grid()
    pts = control_points(log)
    if max_solves is not None:
        pts = pts[:max_solves]
    if not pts:
        raise ValueError("log contains no control ticks to replay")

    model_cache = {}
    results = []
    for opt in rows:
        if opt.gp_points not in model_cache:
            model_cache[opt.gp_points] = [
                fit(md, cap=opt.gp_points, lin=scenario.gp.lin, rot=scenario.gp.rot, mode_id=i)
                for i, md in enumerate(demos)
            ]
        models = model_cache[opt.gp_points]
        weights = replace(scenario.weights, objective=opt.objective)
        variants = Variants(
            full_gp_cov=opt.full_gp_cov,
            state_cov=opt.state_cov,
            impedance=opt.impedance,
            arm=opt.arm,
        )
        engine = MpcEngine(
            models,
            scenario.admittance,
            weights,
            scenario.solver,
            variants,
            arm=default_arm() if opt.arm else None,
        )
        times, sols, n_conv = [], [], 0
        for state, belief in pts:
            t0 = time.perf_counter()
            fR, sol = engine.mpc_step(state, belief)
            times.append(time.perf_counter() - t0)
            sols.append(fR.as6())
            n_conv += int(sol.stats.converged)
        warm = times[1:] if len(times) > 1 else times
        results.append(
            BenchResult(
                options=opt,
                cold_s=times[0],
                avg_warm_s=float(np.mean(warm)),
                worst_warm_s=float(np.max(warm)),
                n_solves=len(times),
                n_converged=n_conv,
                solutions=np.array(sols),
            )
        )
    return results


def environment() -> dict:
    cpu = platform.processor() or ""
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.lower().startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return {
        "cpu": cpu,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
