"""Run every (grid, n) combination of a configuration and aggregate verdicts."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import RunConfig
from .grid import Grid
from .model import Nonlinearity, classify_regime, regime_summary
from .solver import SolverError, config_hash, run, save_trajectory

log = logging.getLogger(__name__)

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2
DEFAULT_K_LEVELS = tuple(2.0**np.arange(7))


def exit_code(verdicts, errors=()) -> int:
    """0 when everything passes, 1 on any failure or error, otherwise 2 if anything is inconclusive."""
    if errors or any(v.status == dg.FAIL for v in verdicts):
        return EXIT_FAIL
    if any(v.status == dg.INCONCLUSIVE for v in verdicts):
        return EXIT_INCONCLUSIVE
    return EXIT_PASS


def _tag(cells, n) -> str:
    return f"cells={cells},n={n:g}"


def combo_dir(root: Path, cells: int, n: float) -> Path:
    return root / f"grid_{cells}" / f"n_{n:g}"


@dataclass
class ScenarioResult:
    exit_code: int
    verdicts: list
    errors: dict = field(default_factory=dict)
    trajectories: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)


def _nonlinearity(cfg: RunConfig):
    p = cfg.problem
    return Nonlinearity(1.0 / p.m, 1, p.dim) if p.source.kind == "measure" else None


def _combo(cfg: RunConfig, cells: int, n: float, root: Path, chash: str):
    grid = Grid(cfg.problem.dim, cells, cfg.problem.domain_half_width)
    traj = run(cfg.problem, n, grid, replace(cfg.stepper, stride=cfg.stride))
    d = cfg.diagnostics
    nl = _nonlinearity(cfg)
    k_levels = d.k_levels or (DEFAULT_K_LEVELS if d.energy_linearity else ())
    rep = dg.build_report(
        traj,
        nl,
        k_levels=k_levels,
        alpha=d.alpha,
        m=cfg.problem.m if d.extinction else None,
        theta=d.theta,
        front=d.front,
    )
    if d.positivity:
        ref = cfg.problem.source.mass if cfg.problem.source.kind == "measure" else None
        rep.verdicts.append(dg.positivity_verdict(traj, reference_mass=ref))
    if d.energy_linearity:
        rep.verdicts.append(dg.truncated_energy_verdict(traj, k_levels))
    if d.extinction:
        ext = dg.extinction_monitor(traj, cfg.problem.m, d.theta)
        ok = ext.t_extinct is not None and ext.t_extinct < cfg.problem.horizon
        rep.verdicts.append(
            dg.Verdict("extinction_time", dg.PASS if ok else dg.FAIL, ext.t_extinct, cfg.problem.horizon, None)
        )
    tails = None
    if d.tails:
        a1 = (nl or Nonlinearity(1.0 / cfg.problem.m, 1, cfg.problem.dim)).a1
        tails = dg.marcinkiewicz_tails(traj, a1, cfg.problem.dim)
    out = combo_dir(root, cells, n)
    save_trajectory(traj, out, chash)
    dg.write_report_csv(rep, out / "report.csv")
    dg.write_verdicts_json(rep.verdicts + (tails.verdicts if tails else []), out / "verdicts.json")
    return traj, rep, tails


def run_scenario_full(cfg: RunConfig, output_dir=None, threads: int = 1) -> ScenarioResult:
    root = Path(output_dir or cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg.raw)
    combos = [(c, n) for c in cfg.grids for n in cfg.schedule]

    def work(combo):
        cells, n = combo
        try:
            return combo, _combo(cfg, cells, n, root, chash), None
        except (SolverError, ValueError, ArithmeticError) as exc:
            log.error("combination %s failed: %s", _tag(cells, n), exc)
            return combo, None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, combos))
    else:
        results = [work(c) for c in combos]

    res = ScenarioResult(EXIT_PASS, [])
    for (cells, n), out, err in results:
        if err:
            res.errors[_tag(cells, n)] = err
            continue
        traj, rep, tails = out
        res.trajectories[(cells, n)] = traj
        res.reports[(cells, n)] = rep
        for v in rep.verdicts:
            res.verdicts.append(replace(v, name=f"{v.name}[{_tag(cells, n)}]"))
        # tail exponents are limit statements: judged on the finest index only
        if tails and n == cfg.schedule[-1]:
            for v in tails.verdicts:
                res.verdicts.append(replace(v, name=f"{v.name}[{_tag(cells, n)}]"))

    d = cfg.diagnostics
    nl = _nonlinearity(cfg)
    for cells in cfg.grids:
        runs = [res.trajectories.get((cells, n)) for n in cfg.schedule]
        if any(r is None for r in runs):
            continue
        tag = f"[cells={cells}]"
        if d.mass_uniformity:
            res.verdicts.append(replace(dg.mass_uniformity(runs, nl), name="mass_uniformity" + tag))
        if d.weighted_uniformity:
            if d.alpha is None:
                res.errors["weighted_uniformity" + tag] = "needs diagnostics.alpha"
            else:
                res.verdicts.append(replace(dg.weighted_energy_uniformity(runs, d.alpha), name="weighted_energy_uniformity" + tag))
        if d.cauchy:
            dist = dg.regularization_distances(runs)
            res.verdicts.append(replace(dg.cauchy_verdict(dist), name="regularization_cauchy" + tag))

    res.exit_code = exit_code(res.verdicts, res.errors)
    dg.write_verdicts_json(res.verdicts, root / "verdicts.json")
    manifest = {
        "name": cfg.name,
        "config_hash": chash,
        "regime": regime_summary(classify_regime(cfg.problem.m, cfg.problem.q)),
        "combinations": [
            {"cells": c, "n": n, "directory": str(combo_dir(Path("."), c, n)), "error": res.errors.get(_tag(c, n))}
            for c, n in combos
        ],
        "errors": res.errors,
        "exit_code": res.exit_code,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return res


def run_scenario(cfg: RunConfig, output_dir=None, threads: int = 1) -> int:
    """Execute all combinations, write outputs and return the 0/1/2 exit code."""
    return run_scenario_full(cfg, output_dir, threads).exit_code
