"""Fast diffusion (m = 1/2) with the quadratic gradient source: finite extinction.

Prints a coarse history of the monitored functional xi(t) and of its power
xi^((a-1)/a), which decays at least linearly until the solution vanishes.
"""
import numpy as np

from degdiff.diagnostics import extinction_monitor
from degdiff.grid import Grid
from degdiff.solver import run
from degdiff.suites import frozen_config

cfg = frozen_config("extinction")
p = cfg.problem
traj = run(p, cfg.schedule[0], Grid(p.dim, cfg.grids[0], p.domain_half_width), cfg.stepper)
rep = extinction_monitor(traj, p.m, cfg.diagnostics.theta)
g = rep.xi ** ((rep.a - 1) / rep.a)
print(f"a = {rep.a}, epsilon = {rep.epsilon:.3f}")
print(f"{'t':>6} {'sup u':>10} {'xi':>11} {'xi^((a-1)/a)':>13}")
for i in np.linspace(0, len(rep.times) - 1, 12).astype(int):
    print(f"{rep.times[i]:>6.3f} {traj.snapshots[i].values.max():>10.3e} {rep.xi[i]:>11.4e} {g[i]:>13.4e}")
print(f"extinction time: {rep.t_extinct}")
