"""Per-iteration solve time for the ball-push task as the arm's disc count grows.

Writes every iteration time and a histogram per disc count, so the spread of
iteration times can be plotted.
"""
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from _common import parse_into, save_settings
from hydroilqr import ilqr
from hydroilqr.scenarios import build_ball_push


@dataclass
class Experiment:
    discs: str = "1,2,4"
    repeats: int = 1
    bins: int = 20
    out: str = "results/timing"


def main(exp: Experiment):
    out = Path(exp.out)
    save_settings(exp, out)
    rows = []
    for n in (int(s) for s in exp.discs.split(",")):
        cfg = build_ball_push(discs_per_link=n)
        times = []
        for _ in range(exp.repeats):
            _, stats = ilqr.solve(cfg.model, cfg.x0(), cfg.initial_inputs(), cfg.cost_spec(), cfg.solver)
            times += [r.time_s for r in stats.records]
        rows += [(n, i, t) for i, t in enumerate(times)]
        t = np.array(times)
        print(f"{n} discs per link: {t.size} iterations, mean {t.mean():.3f} s, "
              f"median {np.median(t):.3f} s, p95 {np.percentile(t, 95):.3f} s")
    with open(out / "iterations.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["discs_per_link", "iteration", "time_s"])
        w.writerows(rows)
    all_t = np.array([r[2] for r in rows])
    edges = np.linspace(0.0, all_t.max() * 1.001, exp.bins + 1)
    with open(out / "histogram.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["discs_per_link", "bin_low", "bin_high", "count"])
        for n in sorted({r[0] for r in rows}):
            counts, _ = np.histogram([r[2] for r in rows if r[0] == n], edges)
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([n, lo, hi, c])
    print(f"wrote {out}")


if __name__ == "__main__":
    main(parse_into(Experiment, __doc__))
