"""Closed-loop episode stepping and demonstration collection.

One logical clock at the base rate drives everything: belief updates
and control solves run as scheduled sub-loops (every k-th tick), the
planned wrench is zero-order-held between control ticks, and records
are appended before the dynamics step so a log replays exactly. With a
fixed seed the whole episode is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import inference
from ..dynamics import State, discretize, step_mean
from ..geometry import Pose, Wrench
from ..gp import Demonstration
from .human import synthetic_human
from .scenario import Scenario


@dataclass
class EpisodeLog:
    """Per-tick records plus reproducibility metadata."""

    metadata: dict
    records: list = field(default_factory=list)

    def times(self) -> np.ndarray:
        return np.array([r["t"] for r in self.records])

    def belief_trace(self) -> np.ndarray:
        return np.array([r["belief"] for r in self.records])

    def state_trace(self) -> np.ndarray:
        return np.array([r["xi"] for r in self.records])

    def wrench_trace(self) -> np.ndarray:
        return np.array([r["fh"] for r in self.records])

    def command_trace(self) -> np.ndarray:
        return np.array([r["fr"] for r in self.records])

    @property
    def final_state(self) -> State:
        return State.from12(np.asarray(self.metadata["final_state"], dtype=float))


def _solver_record(stats) -> dict:
    # wall time is deliberately left out: logs must be byte-stable
    return {
        "converged": bool(stats.converged),
        "fallback": bool(stats.fallback),
        "iterations": int(stats.iterations),
        "outer_iterations": int(stats.outer_iterations),
        "max_violation": float(stats.max_violation)
        if np.isfinite(stats.max_violation)
        else None,
    }


def _plan_record(sol, H: int) -> dict:
    poses = [r.mu[:, :6].tolist() for r in sol.rollouts]
    return {"fr": sol.u.fR.tolist(), "poses": poses}


class Stepper:
    """One-base-tick-at-a-time simulation core.

    Batch episodes and the live streaming session share this loop body,
    so control-hold and update ordering cannot drift between them.
    """

    def __init__(self, scenario: Scenario, engine, models, intent_schedule=None):
        self.scenario = scenario
        self.engine = engine
        self.models = models
        self.schedule = list(
            intent_schedule if intent_schedule is not None else scenario.intent_schedule
        )
        self.dt = scenario.rates.base_dt
        self.dyn = discretize(scenario.admittance, self.dt)
        self.reset()

    def reset(self):
        self.rng = np.random.default_rng([self.scenario.seed, 7])
        self.state = State(self.scenario.start.copy(), np.zeros(6))
        self.belief = inference.Belief.uniform(self.scenario.n_modes)
        self.fR = Wrench()
        self.k = 0
        self.last_plan = None
        self.last_solver_ms = 0.0
        if self.engine is not None:
            self.engine.reset()

    @property
    def t(self) -> float:
        return self.k * self.dt

    def active_mode(self) -> int:
        mode = self.schedule[0][1]
        for when, m in self.schedule:
            if self.t >= when - 1e-12:
                mode = int(m)
        return mode

    def tick(self, override: Wrench | None = None, extra: np.ndarray | None = None) -> dict:
        """Advance one base tick; returns the record taken at the tick."""
        sc = self.scenario
        rates = sc.rates
        if override is not None:
            fH = override
        else:
            fH = synthetic_human(
                sc.goal_of(self.active_mode()), self.state.x, sc.human, self.rng
            )
        if extra is not None:
            fH = Wrench.from6(fH.as6() + np.asarray(extra, dtype=float))

        if self.k % rates.belief_period == 0 and sc.n_modes > 1:
            self.belief = inference.step(
                self.belief, self.models, self.state.x, fH, sc.inference
            )

        record = {
            "k": self.k,
            "t": self.t,
            "xi": self.state.as12().tolist(),
            "fh": fH.as6().tolist(),
            "belief": self.belief.b.tolist(),
        }
        if self.engine is not None and self.k % rates.control_period == 0:
            self.fR, sol = self.engine.mpc_step(self.state, self.belief)
            self.last_solver_ms = 1e3 * sol.stats.wall_time_s
            record["solver"] = _solver_record(sol.stats)
            if sol.u is not None:
                self.last_plan = _plan_record(sol, sc.solver.H)
                record["plan"] = self.last_plan
        record["fr"] = self.fR.as6().tolist()

        nxt = step_mean(self.dyn, self.state.as12(), fH, self.fR)
        nxt[6:] = np.clip(nxt[6:], -sc.solver.vel_limit, sc.solver.vel_limit)
        self.state = State.from12(nxt)
        self.k += 1
        return record


def run_episode(
    scenario: Scenario,
    engine,
    models,
    intent_schedule=None,
    force_source=None,
    disturbances=(),
) -> EpisodeLog:
    """Simulate one episode and return its complete log.

    ``force_source(t, state, rng)`` overrides the synthetic human when it
    returns a Wrench (returning None falls back to synthetic for that
    tick). ``disturbances`` are (t_on, t_off, wrench6) pulses added on
    top. Solver failures are logged and fall back to zero virtual force.
    """
    rates = scenario.rates
    n_ticks = int(round(scenario.duration_s * rates.base_hz))
    stepper = Stepper(scenario, engine, models, intent_schedule)

    log = EpisodeLog(
        metadata={
            "scenario": scenario.name,
            "scenario_hash": scenario.content_hash(),
            "seed": int(scenario.seed),
            "n_modes": scenario.n_modes,
            "rates": {
                "base_hz": rates.base_hz,
                "belief_hz": rates.belief_hz,
                "control_hz": rates.control_hz,
            },
            "duration_s": float(scenario.duration_s),
            "horizon": int(scenario.solver.H),
        }
    )

    for _ in range(n_ticks):
        override = None
        if force_source is not None:
            override = force_source(stepper.t, stepper.state, stepper.rng)
        extra = None
        for t_on, t_off, w6 in disturbances:
            if t_on <= stepper.t < t_off:
                w6 = np.asarray(w6, dtype=float)
                extra = w6 if extra is None else extra + w6
        log.records.append(stepper.tick(override, extra))

    log.metadata["final_state"] = stepper.state.as12().tolist()
    return log


def generate_demos(scenario: Scenario, n_demos: int | None = None):
    """Collect passive-admittance demonstrations per mode.

    The synthetic human guides the unpowered admittance from each
    configured start pose to the mode goal; samples are recorded at the
    demo rate. Returns (demos per mode, timeout flags per mode).
    """
    n = n_demos if n_demos is not None else scenario.demos.per_mode
    if n < 1:
        raise ValueError("need at least one demonstration per mode")
    rates = scenario.rates
    dt = rates.base_dt
    dyn = discretize(scenario.admittance, dt)
    record_every = max(1, round(rates.base_hz / scenario.demos.record_hz))
    max_ticks = int(round(scenario.demos.timeout_s * rates.base_hz))

    demos, flags = [], []
    for mode_i, mode in enumerate(scenario.modes):
        mode_demos, mode_flags = [], []
        for d in range(n):
            rng = np.random.default_rng([scenario.seed, 101 + mode_i, d])
            if d < len(mode.demo_starts):
                start = mode.demo_starts[d].copy()
            else:
                start = Pose(scenario.start.p + rng.uniform(-0.1, 0.1, 3))
            state = State(start, np.zeros(6))
            ts, poses, wrenches = [], [], []
            timed_out = True
            for k in range(max_ticks):
                fH = synthetic_human(mode.goal, state.x, scenario.human, rng)
                if k % record_every == 0:
                    ts.append(k * dt)
                    poses.append(state.x.as6())
                    wrenches.append(fH.as6())
                err = np.linalg.norm(mode.goal.p - state.x.p)
                if err < scenario.human.deadband_pos:
                    timed_out = False
                    break
                nxt = step_mean(dyn, state.as12(), fH, np.zeros(6))
                nxt[6:] = np.clip(
                    nxt[6:], -scenario.solver.vel_limit, scenario.solver.vel_limit
                )
                state = State.from12(nxt)
            mode_demos.append(
                Demonstration(np.array(ts), np.array(poses), np.array(wrenches))
            )
            mode_flags.append(timed_out)
        demos.append(mode_demos)
        flags.append(mode_flags)
    return demos, flags


def commission(scenario: Scenario):
    """Demos -> per-mode models, optionally compressed: the offline phase."""
    from ..gp import fit, sparsify

    demos, flags = generate_demos(scenario)
    models = []
    for mode_i, mode_demos in enumerate(demos):
        model = fit(
            mode_demos,
            cap=scenario.gp.cap,
            lin=scenario.gp.lin,
            rot=scenario.gp.rot,
            mode_id=mode_i,
        )
        if scenario.gp.inducing is not None and scenario.gp.inducing < len(model.X):
            model = sparsify(model, scenario.gp.inducing)
        models.append(model)
    return models, demos, flags


def replay_belief(log: EpisodeLog, models, cfg) -> np.ndarray:
    """Re-run inference over a log's (state, wrench) stream.

    Returns the belief at every record; bit-identical to the live run
    for logs produced by run_episode with the same models and config.
    """
    bp = max(1, round(log.metadata["rates"]["base_hz"] / log.metadata["rates"]["belief_hz"]))
    n_modes = log.metadata["n_modes"]
    belief = inference.Belief.uniform(n_modes)
    out = np.zeros((len(log.records), n_modes))
    for i, rec in enumerate(log.records):
        if rec["k"] % bp == 0 and n_modes > 1:
            x = Pose.from6(np.asarray(rec["xi"][:6], dtype=float))
            fH = Wrench.from6(np.asarray(rec["fh"], dtype=float))
            belief = inference.step(belief, models, x, fH, cfg)
        out[i] = belief.b
    return out


def episode_to_demo(log: EpisodeLog, every: int = 2) -> Demonstration:
    """Downsample a log's state/wrench stream to the demonstration format."""
    recs = log.records[::every]
    return Demonstration(
        np.array([r["t"] for r in recs]),
        np.array([r["xi"][:6] for r in recs]),
        np.array([r["fh"] for r in recs]),
    )
