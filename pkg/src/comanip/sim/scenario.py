"""Scenario definition: modes, gains, rates, and policies for one task.

A scenario fully determines an episode together with its seed; the YAML
form round-trips through ``to_dict``/``from_dict`` and two built-ins
(``two_goal``, ``single_goal``) cover the common cases.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import yaml

from ..arm import ArmModel
from ..dynamics import AdmittanceParams
from ..geometry import Pose
from ..gp import LINEAR_DEFAULTS, ROTATIONAL_DEFAULTS, Hyperparams
from ..inference import InferenceConfig
from ..mpc import SolverConfig, Variants, Weights


@dataclass
class HumanParams:
    """Synthetic demonstrator: goal-seeking spring with cap and noise."""

    K_h: float = 120.0
    K_rot: float = 8.0
    f_cap: float = 25.0
    m_cap: float = 3.0
    noise_std: float = 2.0
    noise_std_rot: float = 0.2
    deadband_pos: float = 0.01
    deadband_rot: float = np.deg2rad(2.0)
    pin_contact: bool = False
    pin_gain: float = 15.0
    pin_radius: float = 0.03


@dataclass
class Rates:
    base_hz: float = 100.0
    belief_hz: float = 50.0
    control_hz: float = 15.0

    @property
    def base_dt(self) -> float:
        return 1.0 / self.base_hz

    @property
    def belief_period(self) -> int:
        return max(1, round(self.base_hz / self.belief_hz))

    @property
    def control_period(self) -> int:
        return max(1, round(self.base_hz / self.control_hz))


@dataclass
class ModeSpec:
    goal: Pose
    demo_starts: list = field(default_factory=list)  # list[Pose]


@dataclass
class DemoParams:
    per_mode: int = 3
    timeout_s: float = 15.0
    record_hz: float = 50.0


@dataclass
class GpParams:
    cap: int = 50
    inducing: int | None = None
    lin: Hyperparams = LINEAR_DEFAULTS
    rot: Hyperparams = ROTATIONAL_DEFAULTS


@dataclass
class Scenario:
    name: str
    modes: list  # list[ModeSpec]
    admittance: AdmittanceParams = field(default_factory=AdmittanceParams)
    weights: Weights = field(default_factory=Weights.experiment)
    solver: SolverConfig = field(default_factory=SolverConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    variants: Variants = field(default_factory=Variants)
    arm: ArmModel | None = None
    human: HumanParams = field(default_factory=HumanParams)
    rates: Rates = field(default_factory=Rates)
    demos: DemoParams = field(default_factory=DemoParams)
    gp: GpParams = field(default_factory=GpParams)
    duration_s: float = 8.0
    seed: int = 0
    start: Pose = field(default_factory=Pose)
    intent_schedule: list = field(default_factory=lambda: [(0.0, 0)])

    def __post_init__(self):
        if len(self.modes) < 1:
            raise ValueError("scenario needs at least one mode")
        if len(self.modes) > 1:
            for i in range(len(self.modes)):
                for j in range(i + 1, len(self.modes)):
                    d = np.linalg.norm(self.modes[i].goal.p - self.modes[j].goal.p)
                    if d < 1e-3:
                        raise ValueError("mode goals must be distinct")

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def goal_of(self, mode: int) -> Pose:
        return self.modes[mode].goal

    def active_mode(self, t: float) -> int:
        mode = self.intent_schedule[0][1]
        for when, m in self.intent_schedule:
            if t >= when - 1e-12:
                mode = m
        return int(mode)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": int(self.seed),
            "duration_s": float(self.duration_s),
            "start": self.start.as6().tolist(),
            "intent_schedule": [[float(t), int(m)] for t, m in self.intent_schedule],
            "modes": [
                {
                    "goal": m.goal.as6().tolist(),
                    "demo_starts": [s.as6().tolist() for s in m.demo_starts],
                }
                for m in self.modes
            ],
            "admittance": {
                "M": self.admittance.M.tolist(),
                "D": self.admittance.D.tolist(),
                "K": self.admittance.K.tolist(),
                "x0": self.admittance.x0.as6().tolist(),
            },
            "weights": {
                "Q_mu": self.weights.Q_mu.tolist(),
                "Q_Sigma": self.weights.Q_Sigma.tolist(),
                "Q_H": self.weights.Q_H.tolist(),
                "Q_SigmaH": self.weights.Q_SigmaH.tolist(),
                "Q_J": self.weights.Q_J.tolist(),
                "Q_u": self.weights.Q_u.tolist(),
                "alpha": float(self.weights.alpha),
                "objective": self.weights.objective,
                "robust_force_variant": bool(self.weights.robust_force_variant),
            },
            "solver": {
                "H": int(self.solver.H),
                "Ts": float(self.solver.Ts),
                "rho": float(self.solver.rho),
                "max_outer": int(self.solver.max_outer),
                "inner_maxiter": int(self.solver.inner_maxiter),
                "warm_start": bool(self.solver.warm_start),
            },
            "inference": {
                "floor": float(self.inference.floor),
                "beta": float(self.inference.beta),
                "likelihood": self.inference.likelihood,
                "deadband": float(self.inference.deadband),
                "transition": None
                if self.inference.transition is None
                else np.asarray(self.inference.transition).tolist(),
            },
            "variants": asdict(self.variants),
            "arm": None
            if self.arm is None
            else {
                "l1": self.arm.l1,
                "l2": self.arm.l2,
                "x_sh": self.arm.x_sh.tolist(),
                "grasp": self.arm.grasp.as6().tolist(),
            },
            "human": asdict(self.human),
            "rates": asdict(self.rates),
            "demos": asdict(self.demos),
            "gp": {
                "cap": int(self.gp.cap),
                "inducing": None if self.gp.inducing is None else int(self.gp.inducing),
                "lin": list(self.gp.lin.as_array()),
                "rot": list(self.gp.rot.as_array()),
            },
        }

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def scenario_from_dict(d: dict) -> Scenario:
    modes = [
        ModeSpec(
            goal=Pose.from6(np.asarray(m["goal"], dtype=float)),
            demo_starts=[Pose.from6(np.asarray(s, dtype=float)) for s in m.get("demo_starts", [])],
        )
        for m in d["modes"]
    ]
    adm = d.get("admittance", {})
    admittance = AdmittanceParams(
        M=adm.get("M", AdmittanceParams().M),
        D=adm.get("D", AdmittanceParams().D),
        K=adm.get("K", np.zeros(6)),
        x0=Pose.from6(np.asarray(adm.get("x0", np.zeros(6)), dtype=float)),
    )
    wd = d.get("weights", {})
    base = Weights.experiment()

    def wvec(key, size, default):
        v = wd.get(key, default)
        arr = np.asarray(v, dtype=float)
        return np.full(size, float(arr)) if arr.ndim == 0 else arr.reshape(size)

    weights = Weights(
        Q_mu=wvec("Q_mu", 12, base.Q_mu),
        Q_Sigma=wvec("Q_Sigma", 12, base.Q_Sigma),
        Q_H=wvec("Q_H", 6, base.Q_H),
        Q_SigmaH=wvec("Q_SigmaH", 6, base.Q_SigmaH),
        Q_J=wvec("Q_J", 4, base.Q_J),
        Q_u=wvec("Q_u", 6, base.Q_u),
        alpha=float(wd.get("alpha", 1.0)),
        objective=wd.get("objective", "expected"),
        robust_force_variant=bool(wd.get("robust_force_variant", False)),
    )
    sd = d.get("solver", {})
    solver = SolverConfig(
        H=int(sd.get("H", 6)),
        Ts=float(sd.get("Ts", 0.10)),
        rho=float(sd.get("rho", 1e-5)),
        max_outer=int(sd.get("max_outer", 12)),
        inner_maxiter=int(sd.get("inner_maxiter", 80)),
        warm_start=bool(sd.get("warm_start", True)),
    )
    idn = d.get("inference", {})
    inference = InferenceConfig(
        floor=float(idn.get("floor", 1e-6)),
        beta=float(idn.get("beta", 0.05)),
        likelihood=idn.get("likelihood", "gaussian"),
        deadband=float(idn.get("deadband", 3.0)),
        transition=None
        if idn.get("transition") is None
        else np.asarray(idn["transition"], dtype=float),
    )
    variants = Variants(**d.get("variants", {}))
    arm = None
    if d.get("arm"):
        ad = d["arm"]
        arm = ArmModel(
            l1=float(ad.get("l1", 0.30)),
            l2=float(ad.get("l2", 0.28)),
            x_sh=np.asarray(ad.get("x_sh", np.zeros(3)), dtype=float),
            grasp=Pose.from6(np.asarray(ad.get("grasp", np.zeros(6)), dtype=float)),
        )
    gd = d.get("gp", {})
    gpp = GpParams(
        cap=int(gd.get("cap", 50)),
        inducing=None if gd.get("inducing") is None else int(gd["inducing"]),
        lin=Hyperparams(*gd["lin"]) if "lin" in gd else LINEAR_DEFAULTS,
        rot=Hyperparams(*gd["rot"]) if "rot" in gd else ROTATIONAL_DEFAULTS,
    )
    return Scenario(
        name=d.get("name", "scenario"),
        modes=modes,
        admittance=admittance,
        weights=weights,
        solver=solver,
        inference=inference,
        variants=variants,
        arm=arm,
        human=HumanParams(**d.get("human", {})),
        rates=Rates(**d.get("rates", {})),
        demos=DemoParams(**d.get("demos", {})),
        gp=gpp,
        duration_s=float(d.get("duration_s", 8.0)),
        seed=int(d.get("seed", 0)),
        start=Pose.from6(np.asarray(d.get("start", np.zeros(6)), dtype=float)),
        intent_schedule=[(float(t), int(m)) for t, m in d.get("intent_schedule", [(0.0, 0)])],
    )


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(yaml.safe_load(fh))


def save_scenario(scenario: Scenario, path):
    with open(path, "w") as fh:
        yaml.safe_dump(scenario.to_dict(), fh, sort_keys=True)


def builtin_scenario(name: str, seed: int = 0) -> Scenario:
    """Built-in tasks: a symmetric two-goal handoff and a single goal."""
    # lighter virtual damping than the hardware defaults so the spring
    # human settles demos well inside the timeout at desk-scale travel
    admittance = AdmittanceParams(D=np.array([150.0] * 3 + [30.0] * 3))
    if name == "two_goal":
        goals = [Pose([0.16, 0.10, 0.0]), Pose([0.16, -0.10, 0.0])]
        modes = []
        for sgn, goal in zip((1.0, -1.0), goals):
            starts = [
                Pose([0.0, 0.0, 0.0]),
                Pose([0.03, -sgn * 0.05, 0.02]),
                Pose([-0.04, sgn * 0.03, -0.01]),
            ]
            modes.append(ModeSpec(goal=goal, demo_starts=starts))
        return Scenario(name="two_goal", modes=modes, admittance=admittance, seed=seed)
    if name == "single_goal":
        mode = ModeSpec(
            goal=Pose([0.14, 0.08, -0.03]),
            demo_starts=[
                Pose([0.0, 0.0, 0.0]),
                Pose([-0.04, 0.05, 0.0]),
                Pose([0.05, -0.04, 0.02]),
            ],
        )
        return Scenario(
            name="single_goal",
            modes=[mode],
            admittance=admittance,
            duration_s=6.0,
            seed=seed,
        )
    raise KeyError(f"unknown builtin scenario {name!r}")


def resolve_scenario(spec: str, seed: int | None = None) -> Scenario:
    """Builtin name, or path to a YAML scenario file."""
    if Path(spec).exists():
        sc = load_scenario(spec)
    else:
        try:
            sc = builtin_scenario(spec)
        except KeyError:
            raise FileNotFoundError(f"no scenario file or builtin named {spec!r}")
    if seed is not None:
        sc.seed = int(seed)
    return sc
