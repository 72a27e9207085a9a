"""Receding-horizon walker run with a gait summary.

Writes the stitched trajectory, per-window solver statistics, per-foot
contact flags and a summary of forward speed and contact events.
"""
import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from _common import parse_into, save_settings
from hydroilqr import cli, ilqr
from hydroilqr.multibody import site_kinematics
from hydroilqr.scenarios import build_walker

FEET = ("right_foot", "left_foot")


@dataclass
class Experiment:
    v_des: float = 0.5
    window: int = 40
    shift: int = 4
    resolves: int = 100
    max_iterations: int = 100
    out: str = "results/walker"


def foot_contacts(model, states):
    n = model.n_q
    flags = {}
    for foot in FEET:
        r = model.geometry(foot).radius
        flags[foot] = np.array([site_kinematics(model, s[:n], s[n:], foot)[0][1] < r for s in states])
    return flags


def break_and_remake(flags):
    breaks = np.where(flags[:-1] & ~flags[1:])[0]
    makes = np.where(~flags[:-1] & flags[1:])[0]
    return sum(1 for b in breaks if np.any(makes > b))


def main(exp: Experiment):
    out = Path(exp.out)
    save_settings(exp, out)
    cfg = build_walker(exp.v_des)
    model = cfg.model
    options = ilqr.SolverOptions(**{**cfg.solver.__dict__, "max_iterations": exp.max_iterations})
    guess = np.tile(cfg.initial_inputs()[0], (exp.window, 1))
    t0 = time.perf_counter()

    def progress(r, traj, stats):
        if (r + 1) % 10 == 0:
            x = traj.states[exp.shift]
            print(f"resolve {r + 1}/{exp.resolves}: x {x[0]:.3f} vx {x[model.n_q]:.3f} y {x[1]:.3f} "
                  f"pitch {x[2]:.3f}, {stats.iterations} iterations, {time.perf_counter() - t0:.0f} s", flush=True)

    traj, stats = ilqr.receding_horizon_solve(model, cfg.x0(), guess, cfg.cost_spec(), options,
                                              exp.window, exp.shift, exp.resolves, progress)
    cli.write_trajectory(out / "trajectory.csv", model, traj)
    with open(out / "windows.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["window", "status", "iterations", "initial_cost", "final_cost", "time_s"])
        for i, s in enumerate(stats):
            w.writerow([i, s.status, s.iterations, s.initial_cost, s.costs[-1] if s.costs else s.initial_cost,
                        s.total_time_s])
    flags = foot_contacts(model, traj.states)
    with open(out / "contacts.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "vx"] + list(FEET))
        for k, s in enumerate(traj.states):
            w.writerow([k * model.timestep, s[model.n_q]] + [int(flags[ft][k]) for ft in FEET])
    last = min(len(traj.states), int(round(1.0 / model.timestep)))
    mean_vx = traj.states[-last:, model.n_q].mean()
    print(f"mean forward speed over the final {last * model.timestep:.2f} s: {mean_vx:.3f} (target {exp.v_des})")
    for ft in FEET:
        print(f"{ft}: {break_and_remake(flags[ft])} break-and-remake events, in contact {flags[ft].mean():.0%}")
    print(f"wrote {out} in {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main(parse_into(Experiment, __doc__))
