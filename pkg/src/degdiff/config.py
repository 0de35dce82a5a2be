"""Strict JSON run configurations.

Physical parameters have no defaults; only numerical-method knobs do.
Unknown keys are rejected by name, parse errors carry line and column.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .model import CATALOG, InitialDataSpec, ProblemSpec, SourceSpec, classify_regime
from .solver import SCHEMES, StepperConfig


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


# required / optional parameters of each catalog id
CATALOG_PARAMS = {
    "constant": ({"value"}, set()),
    "gaussian_bump": ({"amplitude", "width"}, {"center"}),
    "cosine_bump": ({"amplitude", "radius"}, {"center"}),
    "indicator_box": ({"amplitude", "half_width"}, {"center"}),
    "barenblatt": ({"m", "mass", "t0"}, {"coefficient"}),
}

PROBLEM_REQUIRED = {"m", "q", "dim", "domain_half_width", "horizon", "source", "initial", "gradient_source"}
PROBLEM_OPTIONAL = {"diffusion_coefficient"}
TOP_REQUIRED = {"problem", "grids", "schedule"}
TOP_OPTIONAL = {"name", "stepper", "diagnostics", "output_dir", "stride", "refinement"}
STEPPER_KEYS = {"dt", "scheme", "newton_tol", "newton_max_iter", "source_treatment"}
DIAGNOSTIC_KEYS = {
    "k_levels",
    "alpha",
    "extinction",
    "theta",
    "front",
    "tails",
    "energy_linearity",
    "mass_uniformity",
    "weighted_uniformity",
    "cauchy",
    "positivity",
    "delta",
}


@dataclass
class Diagnostics:
    k_levels: tuple = ()
    alpha: float | None = None
    extinction: bool = False
    theta: float = 1.0
    front: bool = False
    tails: bool = False
    energy_linearity: bool = False
    mass_uniformity: bool = False
    weighted_uniformity: bool = False
    cauchy: bool = False
    positivity: bool = True
    delta: float = 0.5


@dataclass
class RunConfig:
    problem: ProblemSpec
    grids: tuple
    schedule: tuple
    stepper: StepperConfig
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    output_dir: str = "output"
    stride: int = 1
    name: str = "scenario"
    dt_refinement: tuple = ()
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def regime(self):
        return self.problem.regime


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigError(k, "duplicate key")
        out[k] = v
    return out


def _reject_constant(name):
    raise ConfigError(name, "non-finite numbers are not valid JSON here")


def parse_json(text: str) -> dict:
    try:
        obj = json.loads(text, object_pairs_hook=_no_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("<json>", "top level must be an object")
    return obj


def _keys(obj, where: str, required: set, optional: set = frozenset()):
    if not isinstance(obj, dict):
        raise ConfigError(where, "must be an object")
    unknown = sorted(set(obj) - required - set(optional))
    if unknown:
        raise ConfigError(where, f"unknown keys {unknown}")
    missing = sorted(required - set(obj))
    if missing:
        raise ConfigError(where, f"missing required keys {missing}")


def _number(obj, key, where, positive=False, integer=False):
    val = obj[key]
    name = f"{where}.{key}" if where else key
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(name, "must be a number")
    if integer and (not float(val).is_integer()):
        raise ConfigError(name, "must be an integer")
    if not math.isfinite(val):
        raise ConfigError(name, "must be finite")
    if positive and not val > 0:
        raise ConfigError(name, "must be positive")
    return int(val) if integer else float(val)


def _bool(obj, key, where):
    if not isinstance(obj[key], bool):
        raise ConfigError(f"{where}.{key}", "must be true or false")
    return obj[key]


def _catalog_params(kind, params, where):
    if kind not in CATALOG_PARAMS:
        raise ConfigError(where, f"unknown closed-form id {kind!r}; expected one of {list(CATALOG)}")
    req, opt = CATALOG_PARAMS[kind]
    _keys(params, f"{where}.params", req, opt)
    out = {}
    for k, v in params.items():
        if k == "center":
            if not isinstance(v, list) or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v):
                raise ConfigError(f"{where}.params.center", "must be a list of numbers")
            out[k] = [float(c) for c in v]
        else:
            out[k] = _number(params, k, f"{where}.params")
    return out


def _initial(obj) -> InitialDataSpec:
    _keys(obj, "problem.initial", {"kind"}, {"params", "sampling"})
    kind = obj["kind"]
    params = _catalog_params(kind, obj.get("params", {}), "problem.initial")
    sampling = obj.get("sampling", "point")
    if sampling not in ("point", "cell_average"):
        raise ConfigError("problem.initial.sampling", "must be 'point' or 'cell_average'")
    return InitialDataSpec(kind, params, sampling)


def _source(obj, dim) -> SourceSpec:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError("problem.source", "must be an object with a 'kind'")
    kind = obj["kind"]
    if kind == "zero":
        _keys(obj, "problem.source", {"kind"})
        return SourceSpec("zero")
    if kind == "function":
        _keys(obj, "problem.source", {"kind", "function_id"}, {"params"})
        params = _catalog_params(obj["function_id"], obj.get("params", {}), "problem.source")
        return SourceSpec("function", obj["function_id"], params)
    if kind == "measure":
        _keys(obj, "problem.source", {"kind", "location", "time", "mass"})
        loc = obj["location"]
        if not isinstance(loc, list) or len(loc) != dim:
            raise ConfigError("problem.source.location", f"must be a list of {dim} numbers")
        return SourceSpec(
            "measure",
            location=tuple(float(x) for x in loc),
            time=_number(obj, "time", "problem.source"),
            mass=_number(obj, "mass", "problem.source", positive=True),
        )
    raise ConfigError("problem.source.kind", f"must be zero, function or measure, got {kind!r}")


def problem_from_dict(obj) -> ProblemSpec:
    _keys(obj, "problem", PROBLEM_REQUIRED, PROBLEM_OPTIONAL)
    dim = _number(obj, "dim", "problem", integer=True)
    if dim not in (1, 2):
        raise ConfigError("problem.dim", "must be 1 or 2")
    m = _number(obj, "m", "problem", positive=True)
    q = _number(obj, "q", "problem")
    if not 1.0 < q <= 2.0:
        raise ConfigError("problem.q", f"must lie in (1, 2], got {q}")
    horizon = _number(obj, "horizon", "problem")
    if horizon < 0:
        raise ConfigError("problem.horizon", "must be nonnegative")
    source = _source(obj["source"], dim)
    grad = _bool(obj, "gradient_source", "problem")
    if source.kind == "measure" and grad:
        raise ConfigError(
            "problem.source",
            "measure data requires gradient_source=false (a measure source is only admitted "
            "on the elliptic-parabolic path without the gradient term)",
        )
    coef = _number(obj, "diffusion_coefficient", "problem", positive=True) if "diffusion_coefficient" in obj else 1.0
    try:
        return ProblemSpec(
            m=m,
            q=q,
            dim=dim,
            domain_half_width=_number(obj, "domain_half_width", "problem", positive=True),
            horizon=horizon,
            source=source,
            initial=_initial(obj["initial"]),
            gradient_source=grad,
            diffusion_coefficient=coef,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("problem", str(exc)) from exc


def _stepper(obj, horizon) -> StepperConfig:
    _keys(obj, "stepper", set(), STEPPER_KEYS)
    kw = {}
    if obj.get("dt") is not None:
        kw["dt"] = _number(obj, "dt", "stepper", positive=True)
        if horizon > 0 and kw["dt"] > horizon:
            raise ConfigError("stepper.dt", f"dt={kw['dt']} exceeds the horizon {horizon}")
    if "scheme" in obj:
        if obj["scheme"] not in SCHEMES:
            raise ConfigError("stepper.scheme", f"must be one of {list(SCHEMES)}")
        kw["scheme"] = obj["scheme"]
    if "newton_tol" in obj:
        kw["newton_tol"] = _number(obj, "newton_tol", "stepper", positive=True)
    if "newton_max_iter" in obj:
        kw["newton_max_iter"] = _number(obj, "newton_max_iter", "stepper", positive=True, integer=True)
    if "source_treatment" in obj:
        kw["source_treatment"] = obj["source_treatment"]
    try:
        return StepperConfig(**kw)
    except ValueError as exc:
        raise ConfigError("stepper", str(exc)) from exc


def _diagnostics(obj) -> Diagnostics:
    _keys(obj, "diagnostics", set(), DIAGNOSTIC_KEYS)
    d = Diagnostics()
    for key in obj:
        if key == "k_levels":
            lv = obj[key]
            if not isinstance(lv, list) or not lv:
                raise ConfigError("diagnostics.k_levels", "must be a nonempty list")
            d.k_levels = tuple(_number({"k": x}, "k", "diagnostics.k_levels", positive=True) for x in lv)
        elif key in ("alpha", "theta", "delta"):
            setattr(d, key, _number(obj, key, "diagnostics", positive=True))
        else:
            setattr(d, key, _bool(obj, key, "diagnostics"))
    return d


def config_from_dict(obj: dict) -> RunConfig:
    _keys(obj, "<config>", TOP_REQUIRED, TOP_OPTIONAL)
    problem = problem_from_dict(obj["problem"])
    grids, schedule = obj["grids"], obj["schedule"]
    if not isinstance(grids, list) or not grids:
        raise ConfigError("grids", "must be a nonempty list of cell counts")
    if not isinstance(schedule, list) or not schedule:
        raise ConfigError("schedule", "must be a nonempty list of regularization indices")
    grids = tuple(_number({"g": g}, "g", "grids", positive=True, integer=True) for g in grids)
    if min(grids) < 8:
        raise ConfigError("grids", "need at least 8 cells per axis")
    schedule = tuple(_number({"n": n}, "n", "schedule", positive=True) for n in schedule)
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ConfigError("schedule", "must be strictly increasing")
    stride = _number(obj, "stride", "", positive=True, integer=True) if "stride" in obj else 1
    diag = _diagnostics(obj.get("diagnostics", {}))
    if diag.extinction and not 0 < problem.m < 1:
        raise ConfigError("diagnostics.extinction", "extinction monitoring needs 0 < m < 1")
    if (diag.mass_uniformity or diag.weighted_uniformity or diag.cauchy) and len(schedule) < 2:
        raise ConfigError("schedule", "schedule-level diagnostics need at least two indices")
    dts = ()
    if "refinement" in obj:
        _keys(obj["refinement"], "refinement", {"dt"})
        lst = obj["refinement"]["dt"]
        if not isinstance(lst, list) or not lst:
            raise ConfigError("refinement.dt", "must be a nonempty list")
        dts = tuple(_number({"dt": x}, "dt", "refinement", positive=True) for x in lst)
    out = obj.get("output_dir", "output")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir", "must be a nonempty string")
    return RunConfig(
        problem=problem,
        grids=grids,
        schedule=schedule,
        stepper=_stepper(obj.get("stepper", {}), problem.horizon),
        diagnostics=diag,
        output_dir=out,
        stride=stride,
        name=str(obj.get("name", "scenario")),
        dt_refinement=dts,
        raw=obj,
    )


def load_config(path) -> RunConfig:
    """Read and validate a JSON run configuration."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError("<path>", f"no such file {path}") from exc
    except UnicodeDecodeError as exc:
        raise ConfigError("<path>", f"{path} is not UTF-8") from exc
    return config_from_dict(parse_json(text))


def describe_regime(cfg: RunConfig) -> str:
    reg = classify_regime(cfg.problem.m, cfg.problem.q)
    return f"regime {reg.tag.value}: requires {reg.data_requirement}"
