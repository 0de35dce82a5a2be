"""Porous medium flow from source-type data, compared with the exact profile.

Runs m = 2 in one dimension on three grids, prints the l-infinity error at the
final time against cell averages of the exact solution, the observed order,
and the tracked front against the closed-form free boundary.
"""
import math

import numpy as np

from degdiff import Grid, InitialDataSpec, ProblemSpec, SourceSpec, StepperConfig, run
from degdiff.diagnostics import front_tracker
from degdiff.model import cell_average
from degdiff.special import SelfSimilarProfile

M, MASS, T0, T = 2.0, 1.0, 0.1, 0.4
prof = SelfSimilarProfile(M, 1, MASS, T0)
spec = ProblemSpec(
    M, 2.0, 1, 4.0, T, SourceSpec("zero"),
    InitialDataSpec("barenblatt", {"m": M, "mass": MASS, "t0": T0}, sampling="cell_average"),
    gradient_source=False,
)

prev = None
print(f"{'cells':>6} {'linf error':>12} {'order':>7} {'front':>8} {'exact':>8}")
for cells in (64, 128, 256):
    g = Grid(1, cells, 4.0)
    traj = run(spec, 1e9, g, StepperConfig(scheme="semi_implicit"))
    exact = cell_average(lambda c: prof.evaluate(c, T), g)
    err = float(np.max(np.abs(traj.final.values - exact)))
    order = "" if prev is None else f"{math.log(prev / err) / math.log(2):.3f}"
    print(f"{cells:>6} {err:>12.4e} {order:>7} {front_tracker(traj)[-1]:>8.4f} {prof.radius(T):>8.4f}")
    prev = err
