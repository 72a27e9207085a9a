"""Command-line front end.

    hydroilqr run SCENARIO --out DIR [--v-des V] [--horizon N] [--max-iterations N] [--seed-perturbation S]
    hydroilqr check-gradients SCENARIO [--samples N]
    hydroilqr playback RUN_DIR [--perturbation S] [--seed N]
    hydroilqr validate SCENARIO [SCENARIO ...]

SCENARIO is a YAML path or the name of a shipped scenario. Set
``HYDROILQR_LOG_LEVEL`` (e.g. ``INFO``) for progress logging on stderr.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ilqr
from .contact import active_contacts
from .diff import finite_difference_oracle, jacobian_errors, linearize_step, near_nonsmooth_point
from .multibody import GeneralizedState, IntegrationDiverged, forward_kinematics
from .scenarios import BUILTIN, ConfigError, ScenarioConfig, load_config, save_config, shipped_path

EXIT_OK = 0
EXIT_MAX_ITERATIONS = 1
EXIT_STALLED = 2
EXIT_DIVERGED = 3
EXIT_USAGE = 64
EXIT_CONFIG = 65

GRADIENT_LIMIT = 1e-4

log = logging.getLogger("hydroilqr")


def fmt(x) -> str:
    """Shortest repr that round-trips, so a run directory can be replayed exactly."""
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in row])


@dataclass
class RunReport:
    scenario: str
    status: str
    final_cost: float
    iterations: int
    stats_rows: list = field(default_factory=list)
    files: dict = field(default_factory=dict)
    wall_time_s: float = 0.0

    def text(self) -> str:
        lines = [
            f"scenario: {self.scenario}",
            f"status: {self.status}",
            f"final_cost: {fmt(self.final_cost)}",
            f"iterations: {self.iterations}",
            f"wall_time_s: {self.wall_time_s:.3f}",
        ]
        lines += [f"file.{k}: {v}" for k, v in self.files.items()]
        return "\n".join(lines) + "\n"


# -- helpers -------------------------------------------------------------------


def resolve_scenario(ref: str) -> tuple[ScenarioConfig, Path]:
    path = Path(ref)
    if not path.exists() and ref in BUILTIN:
        path = shipped_path(ref)
    if not path.exists():
        raise ConfigError(f"{ref}: no such scenario file or shipped scenario (shipped: {', '.join(BUILTIN)})")
    return load_config(path), path.parent


def perturbation(n_q: int, scale: float, seed: int | None) -> np.ndarray:
    """``+scale`` on every position, or random signs when ``seed`` is given."""
    if seed is None:
        return np.full(n_q, scale)
    return scale * np.random.default_rng(seed).choice([-1.0, 1.0], n_q)


def contact_columns(model):
    cols = []
    for pair in model.contact_pairs:
        a, b = pair.names
        cols += [f"fn:{a}/{b}", f"ft:{a}/{b}", f"slip:{a}/{b}"]
    return cols


def contact_values(model, x):
    n = model.n_q
    kin = forward_kinematics(model, x[:n].tolist())
    found = {t.pair.names: t for t in active_contacts(model, kin, x[n:].tolist())}
    out = []
    for pair in model.contact_pairs:
        t = found.get(pair.names)
        out += [0.0, 0.0, 0.0] if t is None else [t.normal_force, t.friction, t.slip_speed]
    return out


def trajectory_rows(model, traj: ilqr.Trajectory):
    n = model.n_q
    h = model.timestep
    rows = []
    for k, x in enumerate(traj.states):
        u = traj.inputs[k].tolist() if k < traj.horizon else [""] * model.n_u
        rows.append([k * h, *x[:n], *x[n:], *u, traj.stage_costs[k], *contact_values(model, x)])
    return rows


def trajectory_header(model):
    names = model.coord_names
    acts = [names[i] for i in model.actuated]
    return (["t"] + [f"q:{c}" for c in names] + [f"v:{c}" for c in names] + [f"u:{c}" for c in acts]
            + ["stage_cost"] + contact_columns(model))


def write_trajectory(path: Path, model, traj: ilqr.Trajectory) -> None:
    _write_csv(path, trajectory_header(model), trajectory_rows(model, traj))


def write_policy(path: Path, model, traj: ilqr.Trajectory) -> None:
    names = model.coord_names
    xs = [f"q:{c}" for c in names] + [f"v:{c}" for c in names]
    acts = [names[i] for i in model.actuated]
    header = ["k"] + [f"kappa:{a}" for a in acts] + [f"K:{a}:{x}" for a in acts for x in xs]
    rows = [[k, *traj.kappa[k], *traj.K[k].ravel()] for k in range(traj.horizon)]
    _write_csv(path, header, rows)


def read_run(run_dir: Path):
    """Scenario, nominal trajectory and feedback policy saved by ``run``."""
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "scenario.yaml")
    model = cfg.model
    n, m = model.n_x, model.n_u
    try:
        with open(run_dir / "trajectory.csv", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        with open(run_dir / "policy.csv", encoding="utf-8") as fh:
            prow = list(csv.reader(fh))
        if rows[0] != trajectory_header(model):
            raise ValueError("trajectory.csv header does not match the scenario")
        states = np.array([[float(c) for c in r[1 : 1 + n]] for r in rows[1:]])
        inputs = np.array([[float(c) for c in r[1 + n : 1 + n + m]] for r in rows[1:-1]]).reshape(-1, m)
        pol = np.array([[float(c) for c in r] for r in prow[1:]])
        kappa = pol[:, 1 : 1 + m]
        K = pol[:, 1 + m :].reshape(-1, m, n)
        if len(states) != len(inputs) + 1 or len(K) != len(inputs):
            raise ValueError("trajectory and policy lengths disagree")
    except (OSError, ValueError, IndexError) as err:
        raise ConfigError(f"{run_dir}: malformed run output: {err}") from None
    cost = cfg.cost_spec()
    total, stages = ilqr.trajectory_cost(cost, states, inputs)
    return cfg, ilqr.Trajectory(states, inputs, K, kappa, total, stages)


# -- commands ------------------------------------------------------------------


def _aggregate(statuses) -> str:
    if ilqr.STALLED in statuses:
        return ilqr.STALLED
    if ilqr.MAX_ITERATIONS in statuses:
        return ilqr.MAX_ITERATIONS
    return ilqr.CONVERGED


def cmd_run(args) -> int:
    cfg, base_dir = resolve_scenario(args.scenario)
    cfg = cfg.with_overrides(v_des=args.v_des, horizon=args.horizon, max_iterations=args.max_iterations,
                             resolves=args.resolves)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = cfg.model
    x0 = cfg.x0()
    if args.seed_perturbation:
        x0[: model.n_q] += perturbation(model.n_q, args.seed_perturbation, args.seed)
    cost = cfg.cost_spec()
    guess = cfg.initial_inputs(base_dir)
    t0 = time.perf_counter()
    report = RunReport(cfg.name, ilqr.STALLED, float("nan"), 0)
    save_config(cfg, out / "scenario.yaml")
    try:
        if cfg.receding is None:
            traj, stats = ilqr.solve(model, x0, guess, cost, cfg.solver)
            stats_list = [stats]
        else:
            r = cfg.receding

            def progress(i, window, st):
                log.info("resolve %d/%d: %s after %d iterations, cost %.6g", i + 1, r.resolves, st.status,
                         st.iterations, window.cost)

            traj, stats_list = ilqr.receding_horizon_solve(model, x0, guess, cost, cfg.solver, r.window, r.shift,
                                                           r.resolves, progress)
    except IntegrationDiverged as err:
        report.status = "diverged"
        report.wall_time_s = time.perf_counter() - t0
        (out / "report.txt").write_text(report.text() + f"error: {err}\n", encoding="utf-8")
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED

    report.wall_time_s = time.perf_counter() - t0
    report.status = _aggregate([s.status for s in stats_list])
    report.final_cost = traj.cost
    report.iterations = sum(s.iterations for s in stats_list)
    stats_rows, timing_rows = [], []
    for w, s in enumerate(stats_list):
        stats_rows.append([str(w), "0", s.initial_cost, "", "", s.status])
        timing_rows.append([str(w), "0", s.total_time_s])
        for rec in s.records:
            stats_rows.append([str(w), str(rec.iteration), rec.cost, rec.eps, rec.rho, ""])
            timing_rows.append([str(w), str(rec.iteration), rec.time_s])
    report.stats_rows = stats_rows
    files = {
        "scenario": out / "scenario.yaml",
        "trajectory": out / "trajectory.csv",
        "policy": out / "policy.csv",
        "stats": out / "stats.csv",
        "timing": out / "timing.csv",
        "report": out / "report.txt",
    }
    write_trajectory(files["trajectory"], model, traj)
    write_policy(files["policy"], model, traj)
    _write_csv(files["stats"], ["window", "iter", "cost", "eps", "rho", "status"], stats_rows)
    # wall-clock timings live apart from stats.csv so that file stays reproducible
    _write_csv(files["timing"], ["window", "iter", "time_s"], timing_rows)
    report.files = {k: str(v) for k, v in files.items()}
    (out / "report.txt").write_text(report.text(), encoding="utf-8")
    print(report.text(), end="")
    return {ilqr.CONVERGED: EXIT_OK, ilqr.MAX_ITERATIONS: EXIT_MAX_ITERATIONS}.get(report.status, EXIT_STALLED)


def gradient_table(cfg: ScenarioConfig, samples: int, base_dir=None, step_size: float = 1e-7):
    """Rows of (k, t, n_contacts, nonsmooth, worst, per-column errors) along the warm-start rollout."""
    model = cfg.model
    guess = cfg.initial_inputs(base_dir)
    traj = ilqr.rollout(model, cfg.x0(), guess, cfg.cost_spec())
    N = traj.horizon
    ks = [0] if samples == 1 else sorted({int(round(i * (N - 1) / (samples - 1))) for i in range(samples)})
    rows = []
    for k in ks:
        xs = GeneralizedState.from_vector(traj.states[k])
        u = traj.inputs[k]
        errs = jacobian_errors(linearize_step(model, xs, u), finite_difference_oracle(model, xs, u, step_size))
        n_contacts = len(active_contacts(model, forward_kinematics(model, xs.q.tolist()), xs.v.tolist()))
        nonsmooth = near_nonsmooth_point(model, traj.states[k])
        rows.append((k, k * model.timestep, n_contacts, nonsmooth, float(errs.max()), errs))
    return rows


def cmd_check_gradients(args) -> int:
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    cfg, base_dir = resolve_scenario(args.scenario)
    model = cfg.model
    names = model.coord_names
    cols = [f"q:{c}" for c in names] + [f"v:{c}" for c in names] + [f"u:{names[i]}" for i in model.actuated]
    rows = gradient_table(cfg, args.samples, base_dir)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["k", "t", "contacts", "nonsmooth", "worst"] + cols)
    worst = 0.0
    for k, t, nc, kink, mx, errs in rows:
        w.writerow([k, fmt(t), nc, int(kink), fmt(mx)] + [format(e, ".3e") for e in errs])
        if not kink:
            worst = max(worst, mx)
    print(f"# worst relative error away from contact onset and the dissipation clamp: {worst:.3e} "
          f"(limit {GRADIENT_LIMIT:g})",
          file=sys.stderr)
    return EXIT_OK if worst <= GRADIENT_LIMIT else 1


def cmd_playback(args) -> int:
    path = Path(args.run)
    run_dir = path.parent if path.is_file() else path
    cfg, traj = read_run(run_dir)
    model = cfg.model
    cost = cfg.cost_spec()
    x0 = traj.states[0].copy()
    x0[: model.n_q] += perturbation(model.n_q, args.perturbation, args.seed)
    results = {}
    status = EXIT_OK
    for label, feedback in (("closed_loop", True), ("open_loop", False)):
        try:
            replay = ilqr.playback(model, traj, x0, cost, feedback)
        except IntegrationDiverged as err:
            results[label] = (None, f"diverged at step {err.step_index}")
            status = EXIT_DIVERGED
            continue
        write_trajectory(run_dir / f"playback_{label}.csv", model, replay)
        results[label] = (replay, "ok")
    header = ["replay", "status", "terminal_cost", "total_cost", "terminal_state_error", "max_state_error"]
    rows = [["nominal", "ok", traj.stage_costs[-1], traj.cost, 0.0, 0.0]]
    for label, (replay, st) in results.items():
        if replay is None:
            rows.append([label, st, "", "", "", ""])
            continue
        err = np.abs(replay.states - traj.states)
        rows.append([label, st, replay.stage_costs[-1], replay.cost, float(np.max(err[-1])), float(np.max(err))])
    _write_csv(run_dir / "playback_summary.csv", header, rows)
    for r in rows:
        print(",".join(c if isinstance(c, str) else fmt(c) for c in r))
    return status


def cmd_validate(args) -> int:
    status = EXIT_OK
    for ref in args.scenarios:
        try:
            cfg, _ = resolve_scenario(ref)
        except ConfigError as err:
            print(f"error: {err}", file=sys.stderr)
            status = EXIT_CONFIG
            continue
        print(f"{ref}: ok ({cfg.name}, n_x={cfg.model.n_x}, n_u={cfg.model.n_u})")
    return status


# -- entry point ---------------------------------------------------------------


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hydroilqr", description="Contact-implicit trajectory optimization with iLQR.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="optimize a scenario and write CSV outputs")
    run.add_argument("scenario")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--v-des", type=float, help="override the advancing target speed (m/s)")
    run.add_argument("--horizon", type=int, help="override the horizon (window length for receding runs)")
    run.add_argument("--max-iterations", type=int)
    run.add_argument("--resolves", type=int, help="override the number of receding-horizon resolves")
    run.add_argument("--seed-perturbation", type=float, default=0.0, metavar="SCALE",
                     help="perturb initial positions by SCALE before solving")
    run.add_argument("--seed", type=int, help="random sign pattern for the perturbation (default: all +)")
    run.set_defaults(func=cmd_run)

    grad = sub.add_parser("check-gradients", help="compare dual-number and finite-difference Jacobians")
    grad.add_argument("scenario")
    grad.add_argument("--samples", type=int, default=10)
    grad.set_defaults(func=cmd_check_gradients)

    play = sub.add_parser("playback", help="replay a run's policy from a perturbed start")
    play.add_argument("run", help="run directory (or its trajectory.csv)")
    play.add_argument("--perturbation", type=float, default=1e-3)
    play.add_argument("--seed", type=int)
    play.set_defaults(func=cmd_playback)

    val = sub.add_parser("validate", help="lint scenario files")
    val.add_argument("scenarios", nargs="+")
    val.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HYDROILQR_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
