"""Backward-Euler time stepping for the regularized problems.

Two formulations are integrated:

* the primal problem ``u_t - D div(m (u + 1/n)^(m-1) grad u) = S_n(|grad u|) + T_n(f)``
  with the gradient source treated explicitly, and
* the elliptic-parabolic problem ``b(v)_t - Lap v = h_n`` with mollified
  measure data, solved by Newton's method.
"""
from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .grid import Field, Grid, LinearSolveError, flux_matrix, gradient_values, laplacian_matrix, linear_solve
from .grid import read_field_csv, write_field_csv
from .model import Nonlinearity, ProblemSpec, SourceSpec, diffusivity, potential, truncated_source

log = logging.getLogger(__name__)

SCHEMES = ("semi_implicit", "newton_implicit")


class SolverError(RuntimeError):
    """A time step failed; ``time`` is attached by :func:`run`."""

    def __init__(self, message: str, residual: float | None = None, time: float | None = None):
        super().__init__(message)
        self.residual = residual
        self.time = time


class NewtonConvergenceError(SolverError):
    pass


@dataclass(frozen=True)
class Regularization:
    n: float
    schedule: tuple = ()

    def __post_init__(self):
        if not self.n >= 1:
            raise ValueError("regularization index must be >= 1")
        sched = tuple(self.schedule)
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError("regularization schedule must be strictly increasing")
        object.__setattr__(self, "schedule", sched)


@dataclass(frozen=True)
class StepperConfig:
    dt: float | None = None
    scheme: str = "semi_implicit"
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    source_treatment: str = "explicit"
    stride: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.newton_tol > 0 and self.newton_max_iter > 0):
            raise ValueError("Newton tolerances must be positive")
        if self.source_treatment != "explicit":
            raise ValueError("only the explicit source treatment is implemented")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass
class StepInfo:
    t: float
    dt: float
    newton_iterations: int
    clipped_mass: float


@dataclass
class Trajectory:
    """Stored snapshots of one run; ``kind`` is ``"u"`` (primal) or ``"v"``."""

    grid: Grid
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    kind: str = "u"
    reg_index: float = 1.0
    horizon: float = 0.0

    def append(self, t: float, u: Field):
        self.times.append(float(t))
        self.snapshots.append(u)

    @property
    def final(self) -> Field:
        return self.snapshots[-1]

    @property
    def values(self) -> np.ndarray:
        return np.stack([s.values for s in self.snapshots])

    @property
    def clipped_mass(self) -> float:
        return float(sum(s.clipped_mass for s in self.steps))


def _index(reg) -> float:
    return float(getattr(reg, "n", reg))


def _clip(values: np.ndarray, cell_volume: float):
    neg = np.minimum(values, 0.0)
    return np.maximum(values, 0.0), float(-np.sum(neg) * cell_volume)


# ---------------------------------------------------------------------------
# primal problem
# ---------------------------------------------------------------------------


def source_term(u: np.ndarray, spec: ProblemSpec, n: float, grid: Grid, t: float) -> np.ndarray:
    """Explicit right-hand side: truncated gradient source plus ``T_n(f)``."""
    s = np.zeros(grid.shape)
    if spec.gradient_source:
        s += truncated_source(spec.q, n, gradient_values(u, grid.h))
    if spec.source.kind == "function":
        s += np.minimum(spec.source.evaluate(grid.coords(), t), n)
    return s


def _primal_newton(u, rhs, spec, n, grid, dt, cfg):
    coef = spec.diffusion_coefficient
    L = laplacian_matrix(grid)
    eye = sp.identity(grid.size, format="csr")
    w = u.ravel().copy()
    rhs = rhs.ravel()

    def resid(w):
        return w - rhs - dt * coef * (L @ potential(spec.m, n, w))

    r = resid(w)
    for it in range(1, cfg.newton_max_iter + 1):
        d = diffusivity(spec.m, n, w)
        J = eye - dt * coef * (L @ sp.diags(d))
        if grid.dim == 2:
            # D J is symmetric positive definite for D = diag(phi')
            D = sp.diags(d)
            delta = linear_solve(grid, D @ J, d * r)
        else:
            delta = linear_solve(grid, J, r)
        step = 1.0
        while True:
            cand = w - step * delta
            rc = resid(cand)
            if np.max(np.abs(rc)) <= np.max(np.abs(r)) or step < 1e-4:
                break
            step *= 0.5
        w, r = cand, rc
        if np.max(np.abs(r)) <= cfg.newton_tol:
            return w.reshape(grid.shape), it
    raise NewtonConvergenceError(
        f"Newton did not converge in {cfg.newton_max_iter} iterations", residual=float(np.max(np.abs(r)))
    )


def advance_primal(u: np.ndarray, spec: ProblemSpec, n: float, grid: Grid, cfg: StepperConfig, dt: float, t: float):
    """One backward-Euler step on raw arrays.

    Returns ``(u_new, iterations, clipped_mass, bound_ok)`` where ``bound_ok``
    reports the explicit-source bound ``dt max S <= max(u)/2 + 1``.
    """
    s = source_term(u, spec, n, grid, t)
    bound_ok = dt * float(np.max(s)) <= 0.5 * float(np.max(u)) + 1.0
    rhs = u + dt * s
    if cfg.scheme == "semi_implicit":
        a = spec.diffusion_coefficient * diffusivity(spec.m, n, u)
        a_wall = spec.diffusion_coefficient * float(diffusivity(spec.m, n, 0.0))
        A = sp.identity(grid.size, format="csr") - dt * flux_matrix(grid, a, a_wall)
        new = linear_solve(grid, A, rhs).reshape(grid.shape)
        iters = 0
    else:
        new, iters = _primal_newton(u, rhs, spec, n, grid, dt, cfg)
    new, clipped = _clip(new, grid.cell_volume)
    return new, iters, clipped, bound_ok


def step_primal(u: Field, spec: ProblemSpec, reg, cfg: StepperConfig, t: float = 0.0, dt: float | None = None) -> Field:
    """Advance ``u`` by one step of the regularized primal problem."""
    dt = cfg.dt if dt is None else dt
    if dt is None:
        raise ValueError("step_primal needs an explicit dt")
    new, _, _, ok = advance_primal(u.values, spec, _index(reg), u.grid, cfg, dt, t)
    if not ok:
        log.warning("explicit source stability bound violated at t=%.6g", t)
    return Field(u.grid, new)


def default_dt(u: np.ndarray, spec: ProblemSpec, n: float, grid: Grid, scheme: str) -> float:
    amax = spec.diffusion_coefficient * float(np.max(diffusivity(spec.m, n, u)))
    dt = 0.25 * grid.h**2 / amax
    return 10.0 * dt if scheme == "newton_implicit" else dt


# ---------------------------------------------------------------------------
# elliptic-parabolic problem
# ---------------------------------------------------------------------------


def advance_elliptic_parabolic(v: np.ndarray, nl, h_source: np.ndarray, grid: Grid, cfg: StepperConfig, dt: float):
    """Newton solve of ``b(w) - dt Lap w = b(v) + dt h``; returns ``(w, iterations, clipped)``."""
    L = laplacian_matrix(grid)
    rhs = (nl.b(v) + dt * h_source).ravel()
    w = v.ravel().copy()

    def resid(w):
        return nl.b(w) - dt * (L @ w) - rhs

    r = resid(w)
    if np.max(np.abs(r)) <= cfg.newton_tol:
        new, clipped = _clip(w.reshape(grid.shape), grid.cell_volume)
        return new, 0, clipped
    for it in range(1, cfg.newton_max_iter + 1):
        J = sp.diags(nl.db(w)) - dt * L
        delta = linear_solve(grid, J, r)
        step = 1.0
        while True:
            cand = w - step * delta
            rc = resid(cand)
            if np.max(np.abs(rc)) <= np.max(np.abs(r)) or step < 1e-4:
                break
            step *= 0.5
        w, r = cand, rc
        if np.max(np.abs(r)) <= cfg.newton_tol:
            new, clipped = _clip(w.reshape(grid.shape), grid.cell_volume)
            return new, it, clipped
    raise NewtonConvergenceError(
        f"Newton did not converge in {cfg.newton_max_iter} iterations", residual=float(np.max(np.abs(r)))
    )


def step_elliptic_parabolic(v: Field, nl, h_source: Field, cfg: StepperConfig, dt: float | None = None) -> Field:
    """One backward-Euler step of ``b(v)_t - Lap v = h``."""
    dt = cfg.dt if dt is None else dt
    if dt is None:
        raise ValueError("step_elliptic_parabolic needs an explicit dt")
    new, _, _ = advance_elliptic_parabolic(v.values, nl, h_source.values, v.grid, cfg, dt)
    return Field(v.grid, new)


# ---------------------------------------------------------------------------
# measure data
# ---------------------------------------------------------------------------


def _triangle_cdf(x):
    """Antiderivative of the unit triangle ``(1 - |x|)_+`` starting at -1."""
    x = np.clip(x, -1.0, 1.0)
    return np.where(x < 0, 0.5 * (1 + x) ** 2, 1.0 - 0.5 * (1 - x) ** 2)


@dataclass
class MollifiedMeasure:
    """Space-time mollification ``mass * eta(x - x0) * tau(t - t0)`` on a fixed step grid.

    ``rate(j)`` is the constant source density over step ``j`` (time ``[t_j, t_j + dt]``).
    """

    grid: Grid
    spatial: np.ndarray
    time_weights: np.ndarray
    dt: float
    mass: float
    radius_x: float
    radius_t: float

    @property
    def steps(self) -> int:
        return self.time_weights.size

    def rate(self, j: int) -> Field:
        w = self.time_weights[j] if j < self.steps else 0.0
        return Field(self.grid, self.mass * self.spatial * w / self.dt)

    def rate_values(self, j: int) -> np.ndarray:
        w = self.time_weights[j] if j < self.steps else 0.0
        return self.mass * self.spatial * (w / self.dt)

    def total(self) -> float:
        return float(sum(np.sum(self.rate_values(j)) * self.grid.cell_volume * self.dt for j in range(self.steps)))

    def action(self, phi) -> float:
        """``int int h_n phi`` for ``phi(coords, t)``, midpoint in time per step."""
        coords = self.grid.coords()
        tot = 0.0
        for j in range(self.steps):
            if self.time_weights[j] == 0:
                continue
            tm = (j + 0.5) * self.dt
            tot += float(np.sum(self.rate_values(j) * phi(coords, tm))) * self.grid.cell_volume * self.dt
        return tot


def mollify_measure(measure: SourceSpec, grid: Grid, n: float, dt: float, horizon: float) -> MollifiedMeasure:
    """Triangular space-time mollifier with radii ``max(4h, L/n)`` and ``max(4dt, T/n)``.

    A measure at ``t0 = 0`` gets the one-sided half of the time bump.  Both
    factors are renormalized on the grid so the discrete total equals the mass.
    """
    if measure.kind != "measure":
        raise ValueError("mollify_measure needs a measure source")
    L = grid.half_width
    rx = max(4 * grid.h, L / n)
    rt = max(4 * dt, horizon / n)
    x0 = np.broadcast_to(np.asarray(measure.location if len(measure.location) else [0.0], float), (grid.dim,))
    if np.any(np.abs(x0) + rx > L):
        raise ValueError(f"spatial bump of radius {rx:.4g} leaves the domain")
    t0 = float(measure.time)
    if t0 < 0 or t0 + rt > horizon or (t0 > 0 and t0 - rt < 0):
        raise ValueError(f"time bump of radius {rt:.4g} around t0={t0} leaves [0, {horizon}]")
    eta = np.ones(grid.shape)
    for c, c0 in zip(grid.coords(), x0):
        eta = eta * np.maximum(1.0 - np.abs(c - c0) / rx, 0.0)
    eta /= np.sum(eta) * grid.cell_volume
    steps = int(round(horizon / dt))
    edges = np.arange(steps + 1) * dt
    cdf = _triangle_cdf((edges - t0) / rt)
    weights = np.diff(cdf)
    weights /= weights.sum()
    return MollifiedMeasure(grid, eta, weights, dt, float(measure.mass), rx, rt)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def initial_values(spec: ProblemSpec, grid: Grid, n: float) -> np.ndarray:
    u0 = np.asarray(spec.initial.sample(grid), dtype=float).reshape(grid.shape)
    if np.any(u0 < 0):
        raise ValueError("initial data must be nonnegative")
    return np.minimum(u0, n)


def _check_grid(spec: ProblemSpec, grid: Grid):
    if grid.dim != spec.dim or abs(grid.half_width - spec.domain_half_width) > 1e-12 * spec.domain_half_width:
        raise ValueError("grid does not match the problem domain")


def run(spec: ProblemSpec, reg_index, grid: Grid, cfg: StepperConfig) -> Trajectory:
    """Integrate from 0 to ``spec.horizon`` and record snapshots every ``cfg.stride`` steps.

    Measure data is routed to the elliptic-parabolic formulation with
    ``b = b_n`` (``sigma = 1/m``); the trajectory then holds ``v ~ u^m``.
    """
    _check_grid(spec, grid)
    n = _index(reg_index)
    if spec.source.kind == "measure":
        return _run_elliptic_parabolic(spec, n, grid, cfg)
    if cfg.dt is not None and cfg.dt > spec.horizon and spec.horizon > 0:
        raise ValueError("dt exceeds the horizon")
    u = initial_values(spec, grid, n)
    traj = Trajectory(grid, kind="u", reg_index=n, horizon=spec.horizon)
    traj.append(0.0, Field(grid, u))
    t, k, violations = 0.0, 0, 0
    dt = cfg.dt
    while t < spec.horizon * (1 - 1e-12):
        if cfg.dt is None and k % 16 == 0:
            dt = default_dt(u, spec, n, grid, cfg.scheme)
        step = min(dt, spec.horizon - t)
        try:
            u, iters, clipped, ok = advance_primal(u, spec, n, grid, cfg, step, t)
        except (SolverError, LinearSolveError) as exc:
            raise SolverError(f"step failed at t={t:.6g}: {exc}", getattr(exc, "residual", None), t) from exc
        t += step
        k += 1
        violations += not ok
        traj.steps.append(StepInfo(t, step, iters, clipped))
        if k % cfg.stride == 0 or t >= spec.horizon * (1 - 1e-12):
            traj.append(t, Field(grid, u))
    if violations:
        log.warning("explicit source stability bound violated in %d of %d steps", violations, k)
    return traj


def _run_elliptic_parabolic(spec: ProblemSpec, n: float, grid: Grid, cfg: StepperConfig) -> Trajectory:
    nl = Nonlinearity(1.0 / spec.m, n, spec.dim)
    v = nl.b_inverse(initial_values(spec, grid, n))
    traj = Trajectory(grid, kind="v", reg_index=n, horizon=spec.horizon)
    traj.append(0.0, Field(grid, v))
    if spec.horizon == 0:
        return traj
    dt = cfg.dt
    if dt is None:
        u_like = nl.b(v)
        dt = min(default_dt(u_like, spec, n, grid, "newton_implicit"), spec.horizon / 16)
    steps = int(round(spec.horizon / dt))
    if abs(steps * dt - spec.horizon) > 1e-9 * spec.horizon:
        raise ValueError("measure runs need dt dividing the horizon")
    meas = mollify_measure(spec.source, grid, n, dt, spec.horizon)
    for j in range(steps):
        t = j * dt
        try:
            v, iters, clipped = advance_elliptic_parabolic(v, nl, meas.rate_values(j), grid, cfg, dt)
        except (SolverError, LinearSolveError) as exc:
            raise SolverError(f"step failed at t={t:.6g}: {exc}", getattr(exc, "residual", None), t) from exc
        traj.steps.append(StepInfo(t + dt, dt, iters, clipped))
        if (j + 1) % cfg.stride == 0 or j + 1 == steps:
            traj.append((j + 1) * dt, Field(grid, v))
    return traj


def run_schedule(
    spec: ProblemSpec, schedule: Sequence, grid: Grid, cfg: StepperConfig, threads: int = 1
) -> list[Trajectory]:
    """Independent runs over a regularization schedule, optionally in a thread pool."""
    if threads <= 1:
        return [run(spec, n, grid, cfg) for n in schedule]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda n: run(spec, n, grid, cfg), schedule))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def save_trajectory(traj: Trajectory, directory, cfg_hash: str = "") -> Path:
    """One CSV per snapshot plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for i, snap in enumerate(traj.snapshots):
        name = f"snapshot_{i:05d}.csv"
        write_field_csv(snap, d / name)
        files.append(name)
    manifest = {
        "kind": traj.kind,
        "grid": {"dim": traj.grid.dim, "cells": traj.grid.cells, "half_width": traj.grid.half_width},
        "reg_index": traj.reg_index,
        "horizon": traj.horizon,
        "config_hash": cfg_hash,
        "times": traj.times,
        "snapshots": files,
        "steps": [asdict(s) for s in traj.steps],
    }
    path = d / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_trajectory(directory) -> Trajectory:
    d = Path(directory)
    man = json.loads((d / "manifest.json").read_text())
    grid = Grid(**man["grid"])
    traj = Trajectory(grid, kind=man["kind"], reg_index=man["reg_index"], horizon=man["horizon"])
    for t, name in zip(man["times"], man["snapshots"]):
        traj.append(t, Field(grid, read_field_csv(d / name).values))
    traj.steps = [StepInfo(**s) for s in man["steps"]]
    return traj
