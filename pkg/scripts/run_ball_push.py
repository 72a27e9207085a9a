"""Solve a ball-push task, then replay the policy from perturbed starts.

Writes the solve history, the nominal trajectory, and terminal costs of
closed- and open-loop playback for a range of perturbation sizes.
"""
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from _common import parse_into, save_settings
from hydroilqr import cli, ilqr
from hydroilqr.multibody import IntegrationDiverged
from hydroilqr.scenarios import build_ball_push


@dataclass
class Experiment:
    variant: str = "forward"
    out: str = "results/ball_push"
    max_iterations: int = 100
    perturbations: str = "1e-4,3e-4,1e-3,3e-3,1e-2"


def terminal_or_inf(model, traj, x0, cost, feedback):
    try:
        replay = ilqr.playback(model, traj, x0, cost, feedback)
    except IntegrationDiverged:
        return float("inf")
    return ilqr.terminal_cost(cost, replay.states[-1], traj.horizon)


def main(exp: Experiment):
    out = Path(exp.out)
    save_settings(exp, out)
    cfg = build_ball_push(exp.variant)
    model, cost = cfg.model, cfg.cost_spec()
    options = ilqr.SolverOptions(**{**cfg.solver.__dict__, "max_iterations": exp.max_iterations})
    traj, stats = ilqr.solve(model, cfg.x0(), cfg.initial_inputs(), cost, options)
    print(f"{cfg.name}: {stats.status} after {stats.iterations} iterations, cost {traj.cost:.6g}, "
          f"{stats.total_time_s:.1f} s")
    cli.write_trajectory(out / "trajectory.csv", model, traj)
    with open(out / "history.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "cost", "eps", "rho", "time_s"])
        for r in stats.records:
            w.writerow([r.iteration, r.cost, r.eps, r.rho, r.time_s])

    nominal = ilqr.terminal_cost(cost, traj.states[-1], traj.horizon)
    with open(out / "playback.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["perturbation", "nominal", "closed_loop", "open_loop"])
        for scale in (float(s) for s in exp.perturbations.split(",")):
            x0 = traj.states[0].copy()
            x0[: model.n_q] += scale
            closed = terminal_or_inf(model, traj, x0, cost, True)
            opened = terminal_or_inf(model, traj, x0, cost, False)
            w.writerow([scale, nominal, closed, opened])
            print(f"perturbation {scale:g}: terminal cost closed {closed:.4g}, open {opened:.4g}, "
                  f"nominal {nominal:.4g}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main(parse_into(Experiment, __doc__))
