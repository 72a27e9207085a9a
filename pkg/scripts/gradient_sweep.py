"""Dual-number Jacobians against central differences over a range of FD steps.

For states sampled along each scenario's warm-start rollout, records the
relative Jacobian error at every FD step. Smooth states give the usual V shape
(truncation error on the right, roundoff on the left); shallow contacts push
the valley toward smaller steps.
"""
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from _common import parse_into, save_settings
from hydroilqr import ilqr
from hydroilqr.contact import active_contacts
from hydroilqr.diff import finite_difference_oracle, jacobian_errors, linearize_step, near_nonsmooth_point
from hydroilqr.multibody import GeneralizedState, forward_kinematics
from hydroilqr.scenarios import BUILTIN

STEPS = tuple(10.0 ** -k for k in range(3, 11))


@dataclass
class Experiment:
    samples: int = 20
    out: str = "results/gradients"


def main(exp: Experiment):
    out = Path(exp.out)
    save_settings(exp, out)
    with open(out / "errors.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["scenario", "k", "contacts", "min_depth", "nonsmooth"] + [f"h={h:g}" for h in STEPS])
        for name, build in BUILTIN.items():
            cfg = build()
            model = cfg.model
            traj = ilqr.rollout(model, cfg.x0(), cfg.initial_inputs(), cfg.cost_spec())
            best = []
            for k in np.linspace(0, traj.horizon - 1, exp.samples).round().astype(int):
                x = traj.states[k]
                xs = GeneralizedState.from_vector(x)
                u = traj.inputs[k]
                ad = linearize_step(model, xs, u)
                errs = [float(jacobian_errors(ad, finite_difference_oracle(model, xs, u, h)).max()) for h in STEPS]
                terms = active_contacts(model, forward_kinematics(model, xs.q.tolist()), xs.v.tolist())
                depth = min((float(t.overlap.depth) for t in terms), default=float("nan"))
                w.writerow([name, k, len(terms), depth, int(near_nonsmooth_point(model, x))] + errs)
                best.append(min(errs))
            print(f"{name}: best-step error median {np.median(best):.1e}, worst {max(best):.1e}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main(parse_into(Experiment, __doc__))
