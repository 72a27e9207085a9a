"""Acceptance criteria, one check per criterion.

Each ``criterion_n`` returns ``(passed, detail)``. Under pytest every check
is a test and the summary prints one PASS/FAIL line per criterion; running
this file directly prints the same lines without pytest.
"""
import contextlib
import csv
import functools
import io
import math
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from helpers import disc_on_ground, double_integrator
from hydroilqr import cli, ilqr
from hydroilqr.contact import (
    DISC,
    HALF_PLANE,
    ContactPair,
    PressureFieldGeom,
    active_contacts,
    detect_overlap,
    elastic_force,
    normal_force_magnitude,
    total_contact_forces,
)
from hydroilqr.diff import finite_difference_oracle, jacobian_errors, linearize_step, near_nonsmooth_point
from hydroilqr.multibody import GeneralizedState, IntegrationDiverged, forward_kinematics, site_kinematics, step
from hydroilqr.scenarios import load_config, shipped_path

SAMPLES = 100
SLIP_THRESHOLD = 1e-2


# -- shared runs ---------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _workdir() -> Path:
    return Path(tempfile.mkdtemp(prefix="hydroilqr-acceptance-"))


@functools.lru_cache(maxsize=None)
def cli_run(name: str, tag: str = "a"):
    """Run the CLI on a shipped scenario; returns (exit code, wall time, run dir)."""
    out = _workdir() / f"{name}-{tag}"
    t0 = time.perf_counter()
    with contextlib.redirect_stdout(io.StringIO()):
        code = cli.main(["run", name, "--out", str(out)])
    return code, time.perf_counter() - t0, out


@functools.lru_cache(maxsize=None)
def walker_run():
    """Receding-horizon walker solve; returns (traj or None, stats list, wall time, error)."""
    cfg = load_config(shipped_path("walker"))
    r = cfg.receding
    t0 = time.perf_counter()
    try:
        traj, stats = ilqr.receding_horizon_solve(cfg.model, cfg.x0(), cfg.initial_inputs(), cfg.cost_spec(),
                                                  cfg.solver, r.window, r.shift, r.resolves)
    except IntegrationDiverged as err:
        return None, [], time.perf_counter() - t0, str(err)
    return traj, stats, time.perf_counter() - t0, None


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


# -- criteria ------------------------------------------------------------------

def _sample_states(cfg, rng, want_contact: bool, count: int):
    """States near the warm-start rollout, with or without active contact."""
    model = cfg.model
    n = model.n_q
    base = ilqr.rollout(model, cfg.x0(), cfg.initial_inputs(), cfg.cost_spec())
    found = []
    tries = 0
    while len(found) < count and tries < 50 * count:
        tries += 1
        k = int(rng.integers(base.horizon))
        x = base.states[k].copy()
        x[:n] += rng.normal(0, 1e-3, n)
        x[n:] += rng.normal(0, 1e-2, n)
        if not want_contact:
            # lift every free body clear of the ground and swing the actuated joints
            for i, name in enumerate(model.coord_names):
                if name.endswith("_y"):
                    x[i] += 1.0
                elif i in model.actuated:
                    x[i] += rng.uniform(-0.5, 0.5)
        kin = forward_kinematics(model, x[:n].tolist())
        in_contact = bool(active_contacts(model, kin, x[n:].tolist()))
        if in_contact != want_contact or near_nonsmooth_point(model, x):
            continue
        found.append((x, base.inputs[k]))
    return found


def criterion_1():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in ("ball_push_forward", "walker"):
        cfg = load_config(shipped_path(name))
        # smaller FD step in contact (stiff, curved force law), larger where roundoff dominates
        for want, limit, label, h in ((True, 1e-4, "contact", 1e-7), (False, 1e-7, "free", 1e-6)):
            samples = _sample_states(cfg, rng, want, SAMPLES)
            worst = 0.0
            for x, u in samples:
                xs = GeneralizedState.from_vector(x)
                errs = jacobian_errors(linearize_step(cfg.model, xs, u), finite_difference_oracle(cfg.model, xs, u, h))
                worst = max(worst, float(errs.max()))
            ok &= len(samples) >= SAMPLES and worst < limit
            parts.append(f"{name}/{label} n={len(samples)} worst={worst:.1e}<{limit:g}")
    runtime = time.perf_counter() - t0
    ok &= runtime < 60
    return ok, "; ".join(parts) + f"; {runtime:.1f} s"


def _lqr_problem(seed, N=30):
    rng = np.random.default_rng(seed)
    model = double_integrator(timestep=0.05)
    target = np.concatenate([rng.uniform(-1, 1, 2), np.zeros(2)])
    cost = ilqr.CostSpec(rng.uniform(0.1, 2, 4), rng.uniform(0.01, 1, 2), rng.uniform(1, 10, 4), target)
    x0 = rng.uniform(-1, 1, 4)
    return model, cost, x0, N


def criterion_2():
    worst_rel, worst_iters = 0.0, 0
    for seed in range(10):
        model, cost, x0, N = _lqr_problem(seed)
        lin = linearize_step(model, GeneralizedState.from_vector(x0), np.zeros(2))
        A, B = lin.A, lin.B
        Q, R, P = np.diag(cost.Q), np.diag(cost.R), np.diag(cost.Qf)
        for _ in range(N):
            K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
            P = Q + A.T @ P @ (A - B @ K)
        e0 = x0 - cost.x_nom
        optimum = e0 @ P @ e0
        traj, stats = ilqr.solve(model, x0, np.zeros((N, 2)), cost)
        worst_rel = max(worst_rel, abs(traj.cost - optimum) / optimum)
        worst_iters = max(worst_iters, stats.iterations)
    return worst_rel < 1e-8 and worst_iters <= 2, f"10 seeds: worst rel cost error {worst_rel:.1e}, max iterations {worst_iters}"


def _strictly_decreasing(stats) -> bool:
    costs = [stats.initial_cost] + stats.costs
    return all(b < a for a, b in zip(costs, costs[1:]))


def criterion_3():
    parts, ok = [], True
    for name in ("ball_push_forward", "ball_push_lift"):
        cfg = load_config(shipped_path(name))
        _, stats = ilqr.solve(cfg.model, cfg.x0(), cfg.initial_inputs(), cfg.cost_spec(), cfg.solver)
        good = _strictly_decreasing(stats)
        ok &= good
        parts.append(f"{name} {stats.iterations} iterations {'decreasing' if good else 'NOT decreasing'}")
    traj, stats_list, _, err = walker_run()
    if err is not None:
        ok = False
        parts.append(f"walker diverged: {err}")
    else:
        bad = sum(not _strictly_decreasing(s) for s in stats_list)
        ok &= bad == 0
        parts.append(f"walker {len(stats_list)} windows, {bad} non-decreasing")
    return ok, "; ".join(parts)


def criterion_4():
    # (a) onset sweep on a disc against a rigid half-plane
    disc = PressureFieldGeom("d", DISC, 5e6, 0.0, 0.6, 0.5, radius=0.1)
    ground = PressureFieldGeom("g", HALF_PLANE, math.inf, 0.0, 0.6, 0.5)
    pair = ContactPair(disc, ground)
    f_max = elastic_force(pair, 1e-3)
    forces = []
    for depth in np.linspace(-1e-3, 1e-3, 2001):
        found = detect_overlap(disc, (0.0, 0.1 - depth), ground, None)
        forces.append(0.0 if found is None else normal_force_magnitude(pair, found, 0.0))
    forces = np.array(forces)
    onset = bool(np.all(forces[:1001] == 0.0) and np.all(forces <= f_max * (1 + 1e-12))
                 and elastic_force(pair, 0.0) == 0.0 and np.all(np.diff(forces) >= 0))
    # (b) dropped damped disc
    model = disc_on_ground(dissipation=5.0, timestep=1e-3)
    x = GeneralizedState(np.array([0.0, 0.2, 0.0]), np.zeros(3))
    ys = [x.q[1]]
    for _ in range(2000):
        x = step(model, x, np.zeros(0))
        ys.append(x.q[1])
    vy = np.diff(ys)
    apex = [ys[k] for k in range(1, len(vy)) if vy[k - 1] > 0 >= vy[k]]
    bounce = len(apex) >= 2 and all(b < a for a, b in zip(apex, apex[1:])) and apex[0] < 0.2
    # (c) static rest
    x = GeneralizedState(np.array([0.0, 0.1, 0.0]), np.zeros(3))
    for _ in range(3000):
        x = step(model, x, np.zeros(0))
    (w,), _ = total_contact_forces(model, x.q, x.v)
    residual = math.hypot(w.force[0], w.force[1] - 0.258 * 9.81)
    rest = residual < 1e-3
    detail = (f"(a) onset {'ok' if onset else 'BAD'}, f(0)=0, max {forces.max():.3g} N; "
              f"(b) apexes {', '.join(f'{a:.6f}' for a in apex[:4])}; (c) residual {residual:.1e} N")
    return onset and bounce and rest, detail


def _ball_slip(model, states):
    n = model.n_q
    names = model.coord_names
    r = model.geometry("ball").radius
    vx = states[:, n + names.index("ball_x")]
    w = states[:, n + names.index("ball_theta")]
    return vx + w * r, vx


def criterion_5():
    code, wall, out = cli_run("ball_push_forward")
    stats = read_rows(out / "stats.csv")
    iterations = sum(1 for r in stats if r["iter"] != "0")
    cfg, traj = cli.read_run(out)
    model = cfg.model
    ix = model.coord_names.index("ball_x")
    final_x = traj.states[-1, ix]
    target = cfg.nominal.targets["ball_x"]
    slip, vx = _ball_slip(model, traj.states)
    rolling = (np.abs(slip) < SLIP_THRESHOLD) & (np.abs(vx) > SLIP_THRESHOLD)
    sliding = np.abs(slip) >= SLIP_THRESHOLD
    switches = [k for k in range(len(slip) - 1) if rolling[k] and sliding[k + 1]]
    ok = code == cli.EXIT_OK and iterations <= 50 and abs(final_x - target) <= 0.05 and bool(switches) and wall < 600
    return ok, (f"exit {code}, {iterations} iterations, final ball x {final_x:.4f} (target {target}), "
                f"rolling->sliding at steps {switches}, {wall:.1f} s")


def _foot_contacts(cfg, states, foot):
    model = cfg.model
    n = model.n_q
    radius = model.geometry(foot).radius
    return np.array([site_kinematics(model, s[:n], s[n:], foot)[0][1] - radius < 0.0 for s in states])


def criterion_6():
    traj, _, wall, err = walker_run()
    if err is not None:
        return False, f"diverged: {err}"
    cfg = load_config(shipped_path("walker"))
    model = cfg.model
    n = model.n_q
    ivx = n + model.coord_names.index("base_x")
    iy = model.coord_names.index("base_y")
    last = int(round(1.0 / model.timestep))
    mean_vx = float(traj.states[-last:, ivx].mean())
    target = cfg.nominal.advance_speed
    cycles = {}
    for foot in ("right_foot", "left_foot"):
        c = _foot_contacts(cfg, traj.states, foot)
        breaks = np.where(c[:-1] & ~c[1:])[0]
        makes = np.where(~c[:-1] & c[1:])[0]
        cycles[foot] = sum(1 for b in breaks if np.any(makes > b))
    duration = traj.horizon * model.timestep
    ok = abs(mean_vx - target) <= 0.3 * target and all(v >= 1 for v in cycles.values()) and wall < 3600
    return ok, (f"{duration:.2f} s trajectory, mean vx over final 1 s {mean_vx:.3f} (target {target}), "
                f"break/remake {cycles}, final base height {traj.states[-1, iy]:.3f} "
                f"(start {traj.states[0, iy]:.3f}), {wall:.0f} s")


def criterion_7():
    _, _, out = cli_run("ball_push_forward")
    cfg, traj = cli.read_run(out)
    model, cost = cfg.model, cfg.cost_spec()
    x0 = traj.states[0].copy()
    x0[: model.n_q] += cli.perturbation(model.n_q, 1e-3, None)
    N = traj.horizon
    nominal = ilqr.terminal_cost(cost, traj.states[-1], N)
    try:
        closed = ilqr.terminal_cost(cost, ilqr.playback(model, traj, x0, cost, True).states[-1], N)
    except IntegrationDiverged as err:
        return False, f"closed loop diverged: {err}"
    try:
        opened = ilqr.terminal_cost(cost, ilqr.playback(model, traj, x0, cost, False).states[-1], N)
    except IntegrationDiverged:
        opened = math.inf
    ok = closed <= opened and closed <= 1.1 * nominal
    # not part of the criterion: how the same policy fares at other perturbation sizes
    others = []
    for scale in (1e-4, 3e-4, 3e-3):
        xs = traj.states[0].copy()
        xs[: model.n_q] += scale
        try:
            others.append(f"{scale:g}: {ilqr.terminal_cost(cost, ilqr.playback(model, traj, xs, cost).states[-1], N):.3g}")
        except IntegrationDiverged:
            others.append(f"{scale:g}: diverged")
    return ok, (f"terminal cost closed {closed:.4f}, open {opened:.4f}, nominal {nominal:.4f} "
                f"(bound {1.1 * nominal:.4f}); closed loop at other sizes {', '.join(others)}")


def criterion_8():
    _, _, a = cli_run("ball_push_forward")
    _, _, b = cli_run("ball_push_forward", "b")
    same = {f: (a / f).read_bytes() == (b / f).read_bytes() for f in ("trajectory.csv", "stats.csv")}
    return all(same.values()), ", ".join(f"{f} {'identical' if s else 'DIFFERENT'}" for f, s in same.items())


def criterion_9():
    _, _, out = cli_run("ball_push_forward")
    rows = [r for r in read_rows(out / "timing.csv") if r["iter"] != "0"]
    times = np.array([float(r["time_s"]) for r in rows])
    if times.size == 0:
        return False, "no iterations timed"
    ok = float(times.mean()) < 1.0
    return ok, (f"{times.size} iterations, mean {times.mean():.3f} s, median {np.median(times):.3f} s, "
                f"max {times.max():.3f} s; per-iteration CSV {out / 'timing.csv'}")


CRITERIA = {
    1: ("gradient fidelity", criterion_1),
    2: ("LQR equivalence", criterion_2),
    3: ("monotone descent", criterion_3),
    4: ("contact physics", criterion_4),
    5: ("ball push", criterion_5),
    6: ("walker", criterion_6),
    7: ("feedback value", criterion_7),
    8: ("determinism", criterion_8),
    9: ("performance", criterion_9),
}


def evaluate(n: int) -> tuple[bool, str]:
    title, check = CRITERIA[n]
    passed, detail = check()
    return passed, f"CRITERION {n}: {'PASS' if passed else 'FAIL'} {title}: {detail}"


@pytest.mark.slow
@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, capsys):
    from conftest import ACCEPTANCE_LINES

    passed, line = evaluate(n)
    ACCEPTANCE_LINES[n] = line
    with capsys.disabled():
        print("\n" + line)
    assert passed, line


if __name__ == "__main__":
    import sys

    results = []
    for n in sorted(CRITERIA):
        passed, line = evaluate(n)
        print(line, flush=True)
        results.append(passed)
    sys.exit(0 if all(results) else 1)
