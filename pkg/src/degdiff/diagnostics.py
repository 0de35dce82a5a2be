"""Monitored functionals over trajectories and pass/fail verdicts.

The a priori bounds come with unknown constants, so verdicts test what can be
falsified numerically: boundedness uniformly in the regularization index
(bounded ratios across a schedule) and power-law tail exponents (log-log
slopes against a fixed tolerance).

Time integrals use the left-endpoint rule over the stored snapshots.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import Field, dirichlet_energy_density, gradient_values, torsion_weight
from .model import Nonlinearity, PsiTable, truncate_Tk

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"
SLOPE_TOLERANCE = 0.25


@dataclass
class Verdict:
    name: str
    status: str
    measured: float | None = None
    target: float | None = None
    tolerance: float | None = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_json(self) -> dict:
        out = asdict(self)
        for key in ("measured", "target", "tolerance"):
            v = out[key]
            if v is not None and not math.isfinite(v):
                out[key] = None
        return out


def _weights(traj) -> np.ndarray:
    """Left-endpoint quadrature weights, one per snapshot (the last gets 0)."""
    t = np.asarray(traj.times, dtype=float)
    w = np.zeros_like(t)
    w[:-1] = np.diff(t)
    return w


def _time_integral(traj, density) -> float:
    return float(sum(w * density(s.values) for w, s in zip(_weights(traj), traj.snapshots) if w > 0))


def _cumulative(traj, density) -> np.ndarray:
    w = _weights(traj)
    vals = np.array([density(s.values) if wi > 0 else 0.0 for wi, s in zip(w, traj.snapshots)])
    out = np.zeros(len(w))
    out[1:] = np.cumsum(w[:-1] * vals[:-1])
    return out


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------


def truncated_energy(traj, k: float) -> float:
    """``int_0^T int |grad T_k(v)|^2`` (face differences of the truncated field)."""
    if not k > 0:
        raise ValueError("truncation level must be positive")
    h = traj.grid.h
    return _time_integral(traj, lambda v: dirichlet_energy_density(truncate_Tk(v, k), h))


def truncated_energy_series(traj, k: float) -> np.ndarray:
    h = traj.grid.h
    return _cumulative(traj, lambda v: dirichlet_energy_density(truncate_Tk(v, k), h))


def _loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def truncated_energy_verdict(traj, levels: Sequence[float] = tuple(2.0**np.arange(7)), lo=0.5, hi=1.5) -> Verdict:
    """Least-squares log-log slope of ``E_k`` against ``k``; passes inside ``[lo, hi]``."""
    energies = [truncated_energy(traj, k) for k in levels]
    slope = _loglog_slope(levels, energies)
    if not math.isfinite(slope):
        return Verdict("truncated_energy_linearity", INCONCLUSIVE, detail="energies vanish")
    status = PASS if lo <= slope <= hi else FAIL
    return Verdict("truncated_energy_linearity", status, slope, 1.0, 0.5, detail=f"E_k={energies}")


def _weighted_density(h, alpha):
    def weight(left, right):
        vf = 0.5 * (np.maximum(left, 0) + np.maximum(right, 0))
        return (1.0 + vf) ** (-(alpha + 1.0))

    return lambda v: dirichlet_energy_density(v, h, weight)


def weighted_energy(traj, alpha: float) -> float:
    """``int_0^T int |grad v|^2 / (1 + v)^(alpha + 1)``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return _time_integral(traj, _weighted_density(traj.grid.h, alpha))


def weighted_energy_series(traj, alpha: float) -> np.ndarray:
    return _cumulative(traj, _weighted_density(traj.grid.h, alpha))


def weighted_energy_uniformity(runs: Sequence, alpha: float, factor: float = 1.2) -> Verdict:
    """Max over the schedule of ``W_alpha`` against ``factor`` times the median."""
    vals = np.array([weighted_energy(r, alpha) for r in runs])
    med = float(np.median(vals))
    if med == 0:
        return Verdict("weighted_energy_uniformity", PASS, 1.0, 1.0, factor - 1.0, detail="all zero")
    ratio = float(vals.max() / med)
    return Verdict("weighted_energy_uniformity", PASS if ratio <= factor else FAIL, ratio, 1.0, factor - 1.0)


def torsion_weighted_energy(traj, k: float, rho: Field | None = None) -> float:
    """``int_0^T int |grad T_k(u)|^2 rho`` with the torsion function ``rho``."""
    rho = torsion_weight(traj.grid) if rho is None else rho
    h = traj.grid.h
    r = rho.values

    def density(v):
        tk = truncate_Tk(v, k)
        total = 0.0
        for ax in range(v.ndim):
            rv = np.moveaxis(r, ax, 0)
            zero = np.zeros((1,) + rv.shape[1:])
            ext = np.concatenate([zero, rv, zero])
            face_rho = 0.5 * (ext[:-1] + ext[1:])
            total += _axis_energy(tk, ax, h, face_rho)
        return total

    return _time_integral(traj, density)


def _axis_energy(u, ax, h, face_weight):
    v = np.moveaxis(u, ax, 0)
    zero = np.zeros((1,) + v.shape[1:])
    ext = np.concatenate([zero, v, zero])
    dist = np.full(ext.shape[0] - 1, h)
    dist[0] = dist[-1] = 0.5 * h
    dist = dist.reshape((-1,) + (1,) * (v.ndim - 1))
    grad = (ext[1:] - ext[:-1]) / dist
    return float(np.sum(grad**2 * dist * face_weight)) * h ** (u.ndim - 1)


def singular_weighted_energy(traj, delta: float = 0.5, rho: Field | None = None) -> float:
    """``int_0^T int |grad v|^2 rho / (v + 1/n)^(1 + delta)``; reported, not asserted."""
    rho = torsion_weight(traj.grid) if rho is None else rho
    h, eps = traj.grid.h, 1.0 / traj.reg_index
    r = rho.values

    def density(v):
        total = 0.0
        for ax in range(v.ndim):
            rv = np.moveaxis(r, ax, 0)
            vv = np.moveaxis(v, ax, 0)
            zero = np.zeros((1,) + rv.shape[1:])
            rext = np.concatenate([zero, rv, zero])
            vext = np.concatenate([zero, vv, zero])
            vf = 0.5 * (vext[:-1] + vext[1:])
            wf = 0.5 * (rext[:-1] + rext[1:]) / (vf + eps) ** (1 + delta)
            total += _axis_energy(v, ax, h, wf)
        return total

    return _time_integral(traj, density)


# ---------------------------------------------------------------------------
# mass
# ---------------------------------------------------------------------------


def mass_series(traj, nl: Nonlinearity | None = None) -> np.ndarray:
    """``int b(v)`` per snapshot for ``v``-trajectories, ``int u`` otherwise."""
    vol = traj.grid.cell_volume
    if traj.kind == "v":
        if nl is None:
            raise ValueError("a v-trajectory needs its nonlinearity for the mass")
        b = nl.with_index(traj.reg_index) if isinstance(nl, Nonlinearity) else nl
        return np.array([float(np.sum(b.b(s.values))) * vol for s in traj.snapshots])
    return np.array([float(np.sum(s.values)) * vol for s in traj.snapshots])


def mass_uniformity(runs: Sequence, nl: Nonlinearity | None = None, factor: float = 1.2) -> Verdict:
    """``sup_t int b(v_n)`` per run; passes when max over runs <= ``factor`` * min."""
    if len(runs) < 2:
        raise ValueError("mass_uniformity needs at least two runs")
    sups = np.array([mass_series(r, nl).max() for r in runs])
    if sups.max() == 0:
        return Verdict("mass_uniformity", PASS, 1.0, 1.0, factor - 1.0, detail="all masses zero")
    if sups.min() == 0:
        return Verdict("mass_uniformity", FAIL, float("inf"), 1.0, factor - 1.0)
    ratio = float(sups.max() / sups.min())
    return Verdict(
        "mass_uniformity", PASS if ratio <= factor else FAIL, ratio, 1.0, factor - 1.0, detail=f"sup masses={sups.tolist()}"
    )


# ---------------------------------------------------------------------------
# tails
# ---------------------------------------------------------------------------


def survival_measure(traj, thresholds, quantity: str = "value") -> np.ndarray:
    """Space-time measure of ``{v >= k}`` (or ``{|grad v| >= k}``) per threshold."""
    w = _weights(traj)
    vol = traj.grid.cell_volume
    thr = np.asarray(thresholds, dtype=float)
    out = np.zeros(thr.size)
    for wi, s in zip(w, traj.snapshots):
        if wi == 0:
            continue
        vals = s.values if quantity == "value" else gradient_values(s.values, traj.grid.h)
        srt = np.sort(vals.ravel())
        count = srt.size - np.searchsorted(srt, thr, side="left")
        out += wi * vol * count
    return out


@dataclass
class TailFit:
    thresholds: np.ndarray
    measures: np.ndarray
    slope: float
    window: tuple
    points: int


def fit_tail(thresholds, measures, per_decade: int | None = None) -> TailFit:
    """Log-log slope over the central decade of the tail range.

    The tail range runs from the knee (first threshold where the measure has
    halved from its low-threshold value) up to the largest threshold with a
    positive measure; the window is one decade centred geometrically on it.
    """
    k = np.asarray(thresholds, float)
    s = np.asarray(measures, float)
    pos = s > 0
    if pos.sum() < 2:
        return TailFit(k, s, float("nan"), (float("nan"),) * 2, 0)
    k_hi = k[pos].max()
    knee_idx = np.nonzero(s <= 0.5 * s[0])[0]
    k_knee = k[knee_idx[0]] if knee_idx.size else k_hi
    centre = math.sqrt(k_knee * k_hi)
    lo, hi = centre / math.sqrt(10.0), centre * math.sqrt(10.0)
    sel = pos & (k >= lo) & (k <= hi)
    if sel.sum() < 4:
        return TailFit(k, s, float("nan"), (lo, hi), int(sel.sum()))
    slope = float(np.polyfit(np.log(k[sel]), np.log(s[sel]), 1)[0])
    return TailFit(k, s, slope, (lo, hi), int(sel.sum()))


def _threshold_grid(vmax: float, per_decade: int = 16, decades: float = 6.0) -> np.ndarray:
    top = math.log10(vmax)
    return np.logspace(top - decades, top, int(per_decade * decades) + 1)


@dataclass
class TailReport:
    value_fit: TailFit | None
    gradient_fit: TailFit | None
    value_target: float
    gradient_target: float
    verdicts: list

    @property
    def value_slope(self) -> float:
        return self.value_fit.slope if self.value_fit else float("nan")

    @property
    def gradient_slope(self) -> float:
        return self.gradient_fit.slope if self.gradient_fit else float("nan")


def tail_targets(a1: float, dim: int) -> tuple[float, float]:
    """Theoretical log-slopes ``-(N + 2 a1)/N`` and ``-(N + 2 a1)/(N + a1)``."""
    return -(dim + 2.0 * a1) / dim, -(dim + 2.0 * a1) / (dim + a1)


def marcinkiewicz_tails(traj, a1: float, dim: int, tolerance: float = SLOPE_TOLERANCE) -> TailReport:
    """Fit space-time survival measures of ``v`` and ``|grad v|`` and compare slopes."""
    vt, gt = tail_targets(a1, dim)
    vmax = max(float(np.max(s.values)) for s in traj.snapshots[:-1]) if len(traj.snapshots) > 1 else 0.0
    gmax = (
        max(float(np.max(gradient_values(s.values, traj.grid.h))) for s in traj.snapshots[:-1])
        if len(traj.snapshots) > 1
        else 0.0
    )
    verdicts, fits = [], []
    for name, top, quantity, target in (("value_tail", vmax, "value", vt), ("gradient_tail", gmax, "gradient", gt)):
        if top <= 0:
            fits.append(None)
            verdicts.append(Verdict(name, INCONCLUSIVE, None, target, tolerance, detail="no positive values"))
            continue
        thr = _threshold_grid(top)
        fit = fit_tail(thr, survival_measure(traj, thr, quantity))
        fits.append(fit)
        if not math.isfinite(fit.slope):
            verdicts.append(Verdict(name, INCONCLUSIVE, None, target, tolerance, detail=f"{fit.points} usable points"))
        else:
            status = PASS if fit.slope <= target + tolerance else FAIL
            verdicts.append(Verdict(name, status, fit.slope, target, tolerance, detail=f"window={fit.window}"))
    return TailReport(fits[0], fits[1], vt, gt, verdicts)


# ---------------------------------------------------------------------------
# extinction
# ---------------------------------------------------------------------------


def decay_exponent(dim: int) -> float:
    """Midpoint of the admissible ``(1, 2*/2)``; ``2*/2`` is capped at 2 for ``N <= 2``."""
    upper = dim / (dim - 2.0) if dim > 2 else 2.0
    return 0.5 * (1.0 + upper)


@dataclass
class ExtinctionReport:
    times: np.ndarray
    xi: np.ndarray
    t_extinct: float | None
    a: float
    epsilon: float
    decay_rate: float
    verdict: Verdict
    nonincreasing: bool


def extinction_monitor(traj, m: float, theta: float = 1.0, a: float | None = None, threshold: float = 1e-8):
    """``xi(t) = int Psi(H(u^m))`` and the decay of ``xi^((a-1)/a)``.

    ``a`` defaults to :func:`decay_exponent`; the matching ``epsilon`` solves
    ``a (theta + 1) = theta + 1 + epsilon (1/m - 1)``.
    """
    if not 0 < m < 1:
        raise ValueError("extinction monitoring needs 0 < m < 1")
    a = decay_exponent(traj.grid.dim) if a is None else a
    eps = (a - 1.0) * (theta + 1.0) / (1.0 / m - 1.0)
    vals = traj.values
    times = np.asarray(traj.times, dtype=float)
    w_max = float(np.max(vals)) ** m if vals.size else 0.0
    if w_max > 0:
        table = PsiTable(m, theta, w_max)
        xi = np.array([float(np.sum(table(np.power(v, m)))) * traj.grid.cell_volume for v in vals])
    else:
        xi = np.zeros(times.size)
    linf = vals.reshape(vals.shape[0], -1).max(axis=1)
    hit = np.nonzero(linf <= threshold)[0]
    t_ext = float(times[hit[0]]) if hit.size else None

    g = xi ** ((a - 1.0) / a)
    live = xi > 1e-6 * xi[0] if xi[0] > 0 else np.zeros_like(xi, bool)
    idx = np.nonzero(live)[0]
    pairs = [(i, i + 1) for i in idx if i + 1 < len(g)]
    diffs = np.array([(g[j] - g[i]) / (times[j] - times[i]) for i, j in pairs])
    nonincreasing = bool(np.all([g[j] <= g[i] * (1 + 1e-12) for i, j in pairs]))
    rate = float(-diffs.max()) if diffs.size else 0.0
    if xi[0] == 0:
        verdict = Verdict("extinction_decay", PASS, 0.0, 0.0, 0.0, detail="zero data")
    elif not diffs.size:
        verdict = Verdict("extinction_decay", INCONCLUSIVE, detail="no recorded decay steps")
    else:
        status = PASS if nonincreasing and rate > 0 else FAIL
        verdict = Verdict("extinction_decay", status, rate, 0.0, None, detail=f"a={a}, epsilon={eps}")
    return ExtinctionReport(times, xi, t_ext, a, eps, rate, verdict, nonincreasing)


# ---------------------------------------------------------------------------
# fronts and regularization
# ---------------------------------------------------------------------------


def support_radius(u: Field, threshold: float = 1e-8) -> float:
    mask = u.values > threshold
    if not np.any(mask):
        return 0.0
    pts = [c[mask] for c in u.grid.coords()]
    centre = [p.mean() for p in pts]
    return float(np.max(np.sqrt(sum((p - c) ** 2 for p, c in zip(pts, centre)))))


def front_tracker(traj, threshold: float = 1e-8) -> np.ndarray:
    """Largest distance from the support centroid to a node above ``threshold``, per snapshot."""
    return np.array([support_radius(s, threshold) for s in traj.snapshots])


def front_monotone_verdict(traj, threshold: float = 1e-8) -> Verdict:
    r = front_tracker(traj, threshold)
    drops = np.diff(r)
    ok = bool(np.all(drops >= -1e-12))
    return Verdict("front_monotone", PASS if ok else FAIL, float(drops.min()) if drops.size else 0.0, 0.0, 0.0)


def regularization_distances(runs: Sequence) -> np.ndarray:
    """``l1`` distance at the final time between consecutive runs of a schedule."""
    out = []
    for a, b in zip(runs, runs[1:]):
        out.append(float(np.sum(np.abs(a.final.values - b.final.values))) * a.grid.cell_volume)
    return np.array(out)


def cauchy_verdict(distances, max_violations: int = 1, slack: float = 0.10) -> Verdict:
    """Distances must be nonincreasing, allowing ``max_violations`` rises of at most ``slack``."""
    d = np.asarray(distances, float)
    rises = [(d[i + 1] / d[i] - 1.0) if d[i] > 0 else (math.inf if d[i + 1] > 0 else 0.0) for i in range(d.size - 1)]
    bad = [r for r in rises if r > 0]
    ok = len(bad) <= max_violations and all(r <= slack for r in bad)
    worst = max(bad) if bad else 0.0
    return Verdict("regularization_cauchy", PASS if ok else FAIL, worst, 0.0, slack, detail=f"distances={d.tolist()}")


def positivity_verdict(traj, rel: float = 1e-6, reference_mass: float | None = None) -> Verdict:
    """Clipped mass against ``rel`` times the initial ``l1`` mass (or ``reference_mass``)."""
    m0 = float(np.sum(traj.snapshots[0].values)) * traj.grid.cell_volume
    if reference_mass is not None:
        m0 = max(m0, reference_mass)
    clipped = traj.clipped_mass
    bound = rel * m0
    return Verdict("positivity", PASS if clipped <= bound else FAIL, clipped, 0.0, bound)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class DiagnosticsReport:
    times: np.ndarray
    series: dict = field(default_factory=dict)
    tails: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)

    def check(self) -> None:
        for name, vals in self.series.items():
            arr = np.asarray(vals, float)
            if not (np.all(np.isfinite(arr)) and np.all(arr >= -1e-14)):
                raise ValueError(f"report series {name!r} is not finite and nonnegative")

    @property
    def status(self) -> str:
        states = {v.status for v in self.verdicts}
        if FAIL in states:
            return FAIL
        if INCONCLUSIVE in states:
            return INCONCLUSIVE
        return PASS


REPORT_COLUMNS = ("t", "mass", "linf")


def build_report(
    traj,
    nl: Nonlinearity | None = None,
    k_levels: Sequence[float] = (),
    alpha: float | None = None,
    m: float | None = None,
    theta: float = 1.0,
    front: bool = False,
) -> DiagnosticsReport:
    """Time series of the configured functionals for one trajectory."""
    times = np.asarray(traj.times, float)
    rep = DiagnosticsReport(times)
    rep.series["mass"] = mass_series(traj, nl)
    rep.series["linf"] = np.array([float(np.max(s.values)) for s in traj.snapshots])
    for k in k_levels:
        rep.series[f"E_{k:g}"] = truncated_energy_series(traj, k)
    if len(k_levels) > 1:
        series = [rep.series[f"E_{k:g}"][-1] for k in sorted(k_levels)]
        if any(b < a - 1e-12 * max(abs(a), 1.0) for a, b in zip(series, series[1:])):
            raise AssertionError("truncated energy must be nondecreasing in k")
    if alpha is not None:
        rep.series["W_alpha"] = weighted_energy_series(traj, alpha)
    if m is not None and 0 < m < 1:
        ext = extinction_monitor(traj, m, theta)
        rep.series["xi"] = ext.xi
        rep.verdicts.append(ext.verdict)
    if front:
        radius = front_tracker(traj)
        if np.any(radius > traj.grid.half_width * math.sqrt(traj.grid.dim) + 1e-12):
            raise AssertionError("front radius exceeds the domain")
        rep.series["front_radius"] = radius
        rep.verdicts.append(front_monotone_verdict(traj))
    rep.check()
    return rep


def write_report_csv(rep: DiagnosticsReport, path) -> None:
    """Columns ``t, mass, linf, E_k..., W_alpha, xi, front_radius``; absent ones left blank."""
    e_cols = [c for c in rep.series if c.startswith("E_")]
    cols = ["t", "mass", "linf", *e_cols, "W_alpha", "xi", "front_radius"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i, t in enumerate(rep.times):
            row = [format(float(t), ".17g")]
            for c in cols[1:]:
                row.append(format(float(rep.series[c][i]), ".17g") if c in rep.series else "")
            w.writerow(row)


def write_verdicts_json(verdicts: Sequence[Verdict], path) -> None:
    Path(path).write_text(json.dumps([v.to_json() for v in verdicts], indent=2) + "\n")
