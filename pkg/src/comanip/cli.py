"""Command line entry point: commissioning, replay, benchmark, service.

All outputs are reproducible from (scenario, seed). Result tables are
delimited files; report paths also render figure files next to them.
"""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import logio, report
from .gp import elbo, fit, log_marginal_likelihood, sparsify
from .mpc import MpcEngine, Variants
from .sim import (
    BenchOptions,
    commission,
    create_app,
    default_arm,
    environment,
    generate_demos,
    replay_belief,
    resolve_scenario,
    run_bench,
    run_episode,
    table1_grid,
)
from .sim import serve as serve_session


def _scenario(spec: str, seed):
    try:
        return resolve_scenario(spec, seed)
    except FileNotFoundError as e:
        raise click.UsageError(str(e))


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _variant_options(full_gp_cov, state_cov, gp_points, objective, impedance_vars, arm_vars):
    return BenchOptions(
        full_gp_cov=full_gp_cov,
        state_cov=state_cov,
        gp_points=gp_points,
        objective="risk_sensitive" if objective == "risk" else "expected",
        impedance=impedance_vars,
        arm=arm_vars,
    )


def _engine_for(sc, models, opt: BenchOptions) -> MpcEngine:
    weights = replace(sc.weights, objective=opt.objective)
    variants = Variants(
        full_gp_cov=opt.full_gp_cov,
        state_cov=opt.state_cov,
        impedance=opt.impedance,
        arm=opt.arm,
    )
    return MpcEngine(
        models,
        sc.admittance,
        weights,
        sc.solver,
        variants,
        arm=default_arm() if opt.arm else None,
    )


def _write_csv(path, header: list, rows: np.ndarray):
    np.savetxt(path, np.asarray(rows), delimiter=",", header=",".join(header), comments="")


def _episode_csv(log, out: Path):
    t = log.times()
    st = log.state_trace()
    fh = log.wrench_trace()
    fr = log.command_trace()
    bel = log.belief_trace()
    header = (
        ["t"]
        + [f"x{i}" for i in range(12)]
        + [f"fh{i}" for i in range(6)]
        + [f"fr{i}" for i in range(6)]
        + [f"b{i}" for i in range(bel.shape[1])]
    )
    _write_csv(out / "traces.csv", header, np.column_stack([t, st, fh, fr, bel]))


scenario_opt = click.option("--scenario", default="two_goal", show_default=True,
                            help="builtin name or YAML path")
seed_opt = click.option("--seed", type=int, default=None, help="override scenario seed")
out_opt = click.option("--out", default="out", show_default=True, help="output directory")


@click.group()
def main():
    """Shared-manipulation research stack: GP models, belief, MPC, sim."""


@main.command("fit")
@scenario_opt
@seed_opt
@out_opt
@click.option("--gp-points", type=int, default=None, help="training-set cap per mode")
def fit_cmd(scenario, seed, out, gp_points):
    """Generate demonstrations and fit one force model per mode."""
    sc = _scenario(scenario, seed)
    if gp_points is not None:
        sc.gp.cap = gp_points
    outdir = _outdir(out)
    demos, flags = generate_demos(sc)
    for mi, mode_demos in enumerate(demos):
        for di, demo in enumerate(mode_demos):
            logio.write_demo_csv(demo, outdir / f"demo_m{mi}_{di}.csv")
        model = fit(mode_demos, cap=sc.gp.cap, lin=sc.gp.lin, rot=sc.gp.rot, mode_id=mi)
        logio.save_model(model, outdir / f"model_m{mi}.json")
        lml = log_marginal_likelihood(model)
        click.echo(
            f"mode {mi}: {len(model.X)} points, lml {lml:.3f}, "
            f"timeouts {sum(flags[mi])}/{len(flags[mi])}"
        )
    click.echo(f"wrote models and demos to {outdir}")


@main.command("sparsify")
@click.option("--model", "model_path", required=True, help="fitted model JSON")
@click.option("--inducing", type=int, required=True, help="inducing-point budget")
@click.option("--out", default=None, help="output path (default: alongside input)")
def sparsify_cmd(model_path, inducing, out):
    """Compress a fitted model to an inducing-point predictor."""
    if not Path(model_path).exists():
        raise click.UsageError(f"no model file at {model_path!r}")
    model = logio.load_model(model_path)
    lml = log_marginal_likelihood(model)
    sparse = sparsify(model, inducing)
    bound = elbo(sparse, sparse.Z)
    dest = Path(out) if out else Path(model_path).with_suffix(f".z{inducing}.json")
    logio.save_model(sparse, dest)
    click.echo(f"lml {lml:.4f}  elbo {bound:.4f}  gap {lml - bound:.4f}")
    click.echo(f"wrote {dest}")


@main.command("infer")
@click.option("--log", "log_path", required=True, help="episode log to replay")
@scenario_opt
@seed_opt
@out_opt
def infer_cmd(log_path, scenario, seed, out):
    """Replay belief inference over a logged episode."""
    if not Path(log_path).exists():
        raise click.UsageError(f"no episode log at {log_path!r}")
    sc = _scenario(scenario, seed)
    outdir = _outdir(out)
    log = logio.read_episode(log_path)
    models, _, _ = commission(sc)
    bel = replay_belief(log, models, sc.inference)
    header = ["t"] + [f"b{i}" for i in range(bel.shape[1])]
    _write_csv(outdir / "belief_replay.csv", header, np.column_stack([log.times(), bel]))
    diff = float(np.abs(bel - log.belief_trace()).max())
    report.fig_traces(log, sc, outdir / "traces.png")
    click.echo(f"replayed {len(log.records)} records, max belief deviation {diff:.3e}")
    click.echo(f"wrote belief_replay.csv and traces.png to {outdir}")


@main.command("sim")
@scenario_opt
@seed_opt
@out_opt
@click.option("--duration", type=float, default=None, help="override episode length [s]")
@click.option("--passive", is_flag=True, help="no planner, admittance only")
@click.option("--full-gp-cov", is_flag=True, help="full GP covariance cost term")
@click.option("--state-cov", is_flag=True, help="propagate state covariance")
@click.option("--gp-points", type=int, default=50, show_default=True)
@click.option("--objective", type=click.Choice(["expected", "risk"]), default="expected",
              show_default=True)
@click.option("--impedance-vars", is_flag=True, help="optimize impedance deltas")
@click.option("--arm-vars", is_flag=True, help="include arm attach and joint variables")
def sim_cmd(scenario, seed, out, duration, passive, full_gp_cov, state_cov, gp_points,
            objective, impedance_vars, arm_vars):
    """Run one closed-loop episode headless and write its log."""
    sc = _scenario(scenario, seed)
    if duration is not None:
        sc.duration_s = float(duration)
    sc.gp.cap = gp_points
    outdir = _outdir(out)
    models, _, _ = commission(sc)
    engine = None
    if not passive:
        opt = _variant_options(full_gp_cov, state_cov, gp_points, objective,
                               impedance_vars, arm_vars)
        engine = _engine_for(sc, models, opt)
    log = run_episode(sc, engine, models)
    logio.write_episode(log, outdir / "episode.ndjson")
    _episode_csv(log, outdir)
    report.fig_traces(log, sc, outdir / "traces.png")
    report.fig_topdown(log, sc, outdir / "topdown.png")
    goal = sc.goal_of(sc.active_mode(sc.duration_s))
    dist = float(np.linalg.norm(log.final_state.x.p - goal.p))
    click.echo(f"{len(log.records)} ticks, final goal distance {dist * 100:.1f} cm")
    click.echo(f"wrote episode.ndjson, traces.csv, traces.png, topdown.png to {outdir}")


@main.command("mpc-bench")
@scenario_opt
@seed_opt
@out_opt
@click.option("--grid", type=click.Choice(["table1", "single"]), default="table1",
              show_default=True)
@click.option("--max-solves", type=int, default=None, help="cap replayed control ticks")
@click.option("--full-gp-cov", is_flag=True)
@click.option("--state-cov", is_flag=True)
@click.option("--gp-points", type=int, default=50, show_default=True)
@click.option("--objective", type=click.Choice(["expected", "risk"]), default="expected",
              show_default=True)
@click.option("--impedance-vars", is_flag=True)
@click.option("--arm-vars", is_flag=True)
def bench_cmd(scenario, seed, out, grid, max_solves, full_gp_cov, state_cov, gp_points,
              objective, impedance_vars, arm_vars):
    """Re-solve the planner over a recorded episode per option row."""
    sc = _scenario(scenario, seed)
    outdir = _outdir(out)
    models, demos, _ = commission(sc)
    engine = _engine_for(sc, models, BenchOptions())
    log = run_episode(sc, engine, models)
    if grid == "table1":
        rows = table1_grid()
    else:
        rows = [_variant_options(full_gp_cov, state_cov, gp_points, objective,
                                 impedance_vars, arm_vars)]
    results = run_bench(sc, log, demos, rows, max_solves=max_solves)
    with open(outdir / "bench.csv", "w") as fh:
        fh.write("full_gp_cov,state_cov,gp_points,objective,impedance,arm,"
                 "cold_s,avg_warm_s,worst_warm_s,n_solves,n_converged\n")
        for r in results:
            o = r.options
            fh.write(f"{o.full_gp_cov},{o.state_cov},{o.gp_points},{o.objective},"
                     f"{o.impedance},{o.arm},{r.cold_s:.4f},{r.avg_warm_s:.4f},"
                     f"{r.worst_warm_s:.4f},{r.n_solves},{r.n_converged}\n")
    with open(outdir / "bench_env.json", "w") as fh:
        json.dump(environment(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    report.fig_bench(results, outdir / "bench.png")
    click.echo(f"{'options':>44}  {'cold':>7} {'avg':>7} {'worst':>7}")
    for r in results:
        click.echo(f"{r.options.label():>44}  {r.cold_s:7.3f} {r.avg_warm_s:7.3f} "
                   f"{r.worst_warm_s:7.3f}")
    click.echo(f"wrote bench.csv, bench_env.json, bench.png to {outdir}")


@main.command("serve")
@scenario_opt
@seed_opt
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8710, show_default=True)
@click.option("--passive", is_flag=True, help="no planner, admittance only")
def serve_cmd(scenario, seed, host, port, passive):
    """Stream the live simulation for the browser cockpit."""
    sc = _scenario(scenario, seed)
    models, _, _ = commission(sc)
    engine = None if passive else _engine_for(sc, models, BenchOptions(state_cov=False))
    click.echo(f"serving {sc.name} on ws://{host}:{port}/ws")
    serve_session(sc, models, engine, host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
