"""Canned acceptance scenarios driven by the frozen configs in ``configs/``."""
from __future__ import annotations

import csv
import itertools
import math
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import RunConfig, config_from_dict, parse_json
from .grid import Grid
from .model import RegimeTag, cell_average, classify_regime, conjugate_exponent
from .scenario import exit_code, run_scenario_full
from .solver import StepperConfig, run
from .special import (
    PME_COEFFICIENT,
    PME_EXPONENT,
    SelfSimilarProfile,
    check_domain_margin,
    dominating_profile,
    to_pme_variables_array,
    transformed_pme_spec,
)

SUITES = ("barenblatt", "change_of_variables", "extinction", "dirac_tails", "regularization_cauchy", "regime_table")


@dataclass
class SuiteResult:
    name: str
    verdicts: list
    table: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return exit_code(self.verdicts, self.errors)


def list_suites() -> tuple:
    return SUITES


def frozen_config(name: str) -> RunConfig:
    text = resources.files("degdiff").joinpath("configs", f"{name}.json").read_text(encoding="utf-8")
    return config_from_dict(parse_json(text))


def _write_table(rows, path):
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (format(v, ".17g") if isinstance(v, float) else v) for k, v in r.items()})


def _orders(h, err):
    return [math.log(err[i] / err[i + 1]) / math.log(h[i] / h[i + 1]) for i in range(len(err) - 1)]


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def barenblatt_suite(out: Path, threads: int = 1) -> SuiteResult:
    """Grid refinement against the exact source-type solution (cell averages)."""
    cfg = frozen_config("barenblatt")
    p = cfg.problem
    ip = p.initial.params
    prof = SelfSimilarProfile(p.m, p.dim, ip["mass"], ip["t0"], p.diffusion_coefficient)
    check_domain_margin(prof, p.domain_half_width, 2 * p.domain_half_width / min(cfg.grids), p.horizon)
    start = time.perf_counter()
    res = run_scenario_full(cfg, out, threads)
    elapsed = time.perf_counter() - start
    rows, hs, errs = [], [], []
    verdicts = list(res.verdicts)
    for cells in cfg.grids:
        traj = res.trajectories[(cells, cfg.schedule[0])]
        g = traj.grid
        exact = cell_average(lambda c: prof.evaluate(c, p.horizon), g)
        err = float(np.max(np.abs(traj.final.values - exact)))
        m0, mT = (float(np.sum(s.values)) * g.cell_volume for s in (traj.snapshots[0], traj.final))
        verdicts.append(
            dg.Verdict(f"mass_nonincrease[cells={cells}]", dg.PASS if mT <= m0 * (1 + 1e-12) else dg.FAIL, mT, m0, 0.0)
        )
        hs.append(g.h)
        errs.append(err)
        rows.append({"cells": cells, "h": g.h, "linf_error": err, "order": float("nan")})
    orders = _orders(hs, errs)
    for r, o in zip(rows[1:], orders):
        r["order"] = o
    worst = min(orders)
    verdicts.append(dg.Verdict("barenblatt_order", dg.PASS if worst >= 1.0 else dg.FAIL, worst, 1.0, 0.0))
    verdicts.append(dg.Verdict("barenblatt_runtime", dg.PASS if elapsed < 30.0 else dg.FAIL, elapsed, 30.0, 0.0))
    _write_table(rows, out / "refinement.csv")
    return SuiteResult("barenblatt", verdicts, rows, {"orders": orders, "seconds": elapsed}, res.errors)


def change_of_variables_suite(out: Path, threads: int = 1) -> SuiteResult:
    """Direct m = q = 2 solve mapped to PME variables against the transformed PME(5/3) solve,
    followed by the finite-speed check on indicator-box data."""
    cfg = frozen_config("change_of_variables")
    base = cfg.problem
    pme = transformed_pme_spec(base)
    n = cfg.schedule[0]
    grid = Grid(base.dim, cfg.grids[0], base.domain_half_width)
    rows, dists = [], []
    for dt in cfg.dt_refinement:
        sc = replace(cfg.stepper, dt=dt)
        direct = run(base, n, grid, sc)
        trans = run(pme, n, grid, sc)
        d = float(np.max(np.abs(to_pme_variables_array(direct.final.values) - trans.final.values)))
        dists.append(d)
        rows.append({"dt": dt, "linf_distance": d, "ratio": float("nan")})
    ratios = [b / a for a, b in zip(dists, dists[1:])]
    for r, q in zip(rows[1:], ratios):
        r["ratio"] = q
    verdicts = [
        dg.Verdict("pme_equivalence_finest", dg.PASS if dists[-1] <= 5e-3 else dg.FAIL, dists[-1], 0.0, 5e-3),
    ]
    for dt, q in zip(cfg.dt_refinement[1:], ratios):
        ok = abs(q - 0.5) <= 0.15
        verdicts.append(dg.Verdict(f"pme_equivalence_halving[dt={dt:g}]", dg.PASS if ok else dg.FAIL, q, 0.5, 0.15))
    _write_table(rows, out / "equivalence.csv")
    fs = finite_speed_check(out)
    return SuiteResult("change_of_variables", verdicts + fs.verdicts, rows, {"ratios": ratios, **fs.extra})


def finite_speed_check(out: Path) -> SuiteResult:
    """Transformed PME(5/3) from indicator-box data stays inside a Barenblatt dominator."""
    cfg = frozen_config("finite_speed")
    base = cfg.problem
    spec = transformed_pme_spec(base)
    grid = Grid(spec.dim, cfg.grids[0], spec.domain_half_width)
    ip = base.initial.params
    amp = float(to_pme_variables_array(ip["amplitude"]))
    dom = dominating_profile(PME_EXPONENT, spec.dim, amp, ip["half_width"], PME_COEFFICIENT)
    check_domain_margin(dom, spec.domain_half_width, grid.h, spec.horizon)
    traj = run(spec, cfg.schedule[0], grid, replace(cfg.stepper, stride=cfg.stride))
    radius = dg.front_tracker(traj)
    bound = dom.radius(spec.horizon)
    r2 = sum(c**2 for c in grid.coords())
    outside = traj.final.values[r2 > bound**2]
    leak = float(outside.max()) if outside.size else 0.0
    verdicts = [
        dg.Verdict("front_radius", dg.PASS if radius[-1] <= bound + 3 * grid.h else dg.FAIL, radius[-1], bound, 3 * grid.h),
        dg.Verdict("outside_dominator", dg.PASS if leak <= 1e-8 else dg.FAIL, leak, 0.0, 1e-8),
        dg.front_monotone_verdict(traj),
    ]
    rep = dg.build_report(traj, front=True)
    dg.write_report_csv(rep, out / "finite_speed_report.csv")
    return SuiteResult("finite_speed", verdicts, extra={"front_radius": float(radius[-1]), "dominator_radius": bound})


def extinction_suite(out: Path, threads: int = 1) -> SuiteResult:
    cfg = frozen_config("extinction")
    res = run_scenario_full(cfg, out, threads)
    traj = next(iter(res.trajectories.values()))
    ext = dg.extinction_monitor(traj, cfg.problem.m, cfg.diagnostics.theta)
    rows = [{"t": float(t), "xi": float(x)} for t, x in zip(ext.times, ext.xi)]
    _write_table(rows, out / "xi.csv")
    return SuiteResult("extinction", res.verdicts, rows, {"t_extinct": ext.t_extinct}, res.errors)


def dirac_tails_suite(out: Path, threads: int = 1) -> SuiteResult:
    cfg = frozen_config("dirac_tails")
    res = run_scenario_full(cfg, out, threads)
    rows = []
    a1 = 1.0 / cfg.problem.m
    for (cells, n), traj in sorted(res.trajectories.items()):
        tails = dg.marcinkiewicz_tails(traj, a1, cfg.problem.dim)
        lin = dg.truncated_energy_verdict(traj)
        rows.append(
            {
                "cells": cells,
                "n": n,
                "value_slope": tails.value_slope,
                "gradient_slope": tails.gradient_slope,
                "energy_slope": lin.measured,
            }
        )
    _write_table(rows, out / "tails.csv")
    return SuiteResult("dirac_tails", res.verdicts, rows, errors=res.errors)


def regularization_cauchy_suite(out: Path, threads: int = 1) -> SuiteResult:
    cfg = frozen_config("regularization_cauchy")
    res = run_scenario_full(cfg, out, threads)
    cells = cfg.grids[0]
    runs = [res.trajectories[(cells, n)] for n in cfg.schedule]
    dist = dg.regularization_distances(runs)
    rows = [{"n": n, "two_n": 2 * n, "l1_distance": float(d)} for n, d in zip(cfg.schedule, dist)]
    _write_table(rows, out / "cauchy.csv")
    return SuiteResult("regularization_cauchy", res.verdicts, rows, errors=res.errors)


# ---------------------------------------------------------------------------
# regime table
# ---------------------------------------------------------------------------

QUOTED_REGIMES = (
    (1.8, 1.2, RegimeTag.POWER_DATA),
    (1.2, 2.0, RegimeTag.EXPONENTIAL_DATA),
    (2.5, 1.5, RegimeTag.L_ONE_DATA),
    (0.5, 2.0, RegimeTag.FAST_DIFFUSION),
)


def regime_predicates(m: float, q: float) -> dict:
    """Independent restatement of the existence conditions, one predicate per tag."""
    qp = conjugate_exponent(q)
    mid = 1.0 <= m <= 2.0
    return {
        RegimeTag.POWER_DATA: mid and m > 1 and qp * (m - 1.0) > 2.0,
        RegimeTag.SUBCRITICAL_Q: (mid and m > 1 and qp * (m - 1.0) <= 2.0 and q < m) or m == 1.0,
        RegimeTag.EXPONENTIAL_DATA: mid and qp * (m - 1.0) <= 2.0 and m <= q <= 2.0 and m > 1,
        RegimeTag.L_ONE_DATA: m > 2.0,
        RegimeTag.FAST_DIFFUSION: 0.0 < m < 1.0,
    }


def regime_lattice(size: int = 20):
    ms = 0.1 + 2.9 * np.arange(1, size + 1) / size
    qs = 1.0 + np.arange(1, size + 1) / size
    return ms, qs


def regime_table_suite(out: Path, threads: int = 1, verbose: bool = True) -> SuiteResult:
    ms, qs = regime_lattice()
    rows, bad = [], []
    for m, q in itertools.product(ms, qs):
        tag = classify_regime(float(m), float(q)).tag
        hits = [t for t, ok in regime_predicates(float(m), float(q)).items() if ok]
        if hits != [tag]:
            bad.append((float(m), float(q), tag.value, [h.value for h in hits]))
        rows.append({"m": float(m), "q": float(q), "regime": tag.value})
    verdicts = [dg.Verdict("regime_partition", dg.PASS if not bad else dg.FAIL, float(len(bad)), 0.0, 0.0, detail=str(bad[:5]))]
    wrong = [(m, q) for m, q, t in QUOTED_REGIMES if classify_regime(m, q).tag != t]
    verdicts.append(dg.Verdict("quoted_regimes", dg.PASS if not wrong else dg.FAIL, float(len(wrong)), 0.0, 0.0))
    if verbose:
        abbrev = {t: t.value[:3] for t in RegimeTag}
        print("q \\ m  " + " ".join(f"{m:5.2f}" for m in ms))
        for q in qs[::-1]:
            print(f"{q:5.2f}  " + " ".join(f"{abbrev[classify_regime(float(m), float(q)).tag]:>5}" for m in ms))
    _write_table(rows, out / "regime_table.csv")
    counts = {t.value: sum(r["regime"] == t.value for r in rows) for t in RegimeTag}
    return SuiteResult("regime_table", verdicts, rows, {"counts": counts})


_RUNNERS = {
    "barenblatt": barenblatt_suite,
    "change_of_variables": change_of_variables_suite,
    "extinction": extinction_suite,
    "dirac_tails": dirac_tails_suite,
    "regularization_cauchy": regularization_cauchy_suite,
    "regime_table": regime_table_suite,
}


def run_suite(name: str, output_dir=".", threads: int = 1) -> SuiteResult:
    if name not in _RUNNERS:
        raise KeyError(f"unknown suite {name!r}; valid names: {', '.join(SUITES)}")
    out = Path(output_dir) / name
    out.mkdir(parents=True, exist_ok=True)
    result = _RUNNERS[name](out, threads)
    dg.write_verdicts_json(result.verdicts, out / "suite_verdicts.json")
    return result
