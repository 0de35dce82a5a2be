"""Elliptic-parabolic runs driven by a mollified Dirac mass.

For each regularization index the script fits the log-log slope of the
space-time survival measure of the solution and of its gradient, and prints
the conserved mass. Slopes steepen towards the limiting exponents as the
mollifier sharpens, which is why verdicts are taken on the finest index.
"""
import numpy as np

from degdiff.diagnostics import mass_series, marcinkiewicz_tails
from degdiff.grid import Grid
from degdiff.model import Nonlinearity
from degdiff.solver import run
from degdiff.suites import frozen_config

cfg = frozen_config("dirac_tails")
p = cfg.problem
grid = Grid(p.dim, cfg.grids[0], p.domain_half_width)
nl = Nonlinearity(1.0 / p.m, 1, p.dim)
print(f"targets: value {-(p.dim + 2 * nl.a1) / p.dim:.3f}, gradient {-(p.dim + 2 * nl.a1) / (p.dim + nl.a1):.3f}")
print(f"{'n':>4} {'value slope':>12} {'grad slope':>11} {'final mass':>11}")
for n in cfg.schedule:
    traj = run(p, n, grid, cfg.stepper)
    rep = marcinkiewicz_tails(traj, nl.a1, p.dim)
    mass = mass_series(traj, nl)[-1]
    print(f"{n:>4g} {rep.value_slope:>12.3f} {rep.gradient_slope:>11.3f} {mass:>11.6f}")
