"""Problem description, nonlinearities and the regime classifier.

The target equation is ``u_t - D * Lap(u^m) = |grad u|^q + f`` on the cube
``(-L, L)^dim`` with zero Dirichlet data.  Everything here is a pure function
of its inputs.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import integrate, optimize

_SNAP_TOL = 1e-12


def snap_exponent(p: float) -> float:
    """Round exponents that sit within 1e-12 of an integer onto that integer."""
    r = round(p)
    if abs(p - r) <= _SNAP_TOL:
        return float(r)
    return float(p)


def conjugate_exponent(q: float) -> float:
    if q <= 1.0:
        raise ValueError(f"q must exceed 1, got {q}")
    return q / (q - 1.0)


# ---------------------------------------------------------------------------
# closed-form data catalog
# ---------------------------------------------------------------------------

CATALOG = ("constant", "gaussian_bump", "cosine_bump", "barenblatt", "indicator_box")


def _radius(coords, center):
    center = np.broadcast_to(np.asarray(center, dtype=float), (len(coords),))
    r2 = sum((c - c0) ** 2 for c, c0 in zip(coords, center))
    return np.sqrt(r2)


def _catalog_eval(name: str, params: dict, coords, t: float) -> np.ndarray:
    shape = np.broadcast(*coords).shape
    center = params.get("center", [0.0] * len(coords))
    if name == "constant":
        return np.full(shape, float(params["value"]))
    if name == "gaussian_bump":
        r = _radius(coords, center)
        return params["amplitude"] * np.exp(-((r / params["width"]) ** 2))
    if name == "cosine_bump":
        r = _radius(coords, center)
        rad = params["radius"]
        out = params["amplitude"] * np.cos(0.5 * np.pi * np.minimum(r / rad, 1.0)) ** 2
        return np.where(r < rad, out, 0.0)
    if name == "indicator_box":
        c = np.broadcast_to(np.asarray(center, dtype=float), (len(coords),))
        dist = np.max(np.stack([np.abs(x - x0) * np.ones(shape) for x, x0 in zip(coords, c)]), axis=0)
        return np.where(dist <= params["half_width"], float(params["amplitude"]), 0.0)
    if name == "barenblatt":
        from .special import SelfSimilarProfile

        prof = SelfSimilarProfile(
            m=params["m"],
            dim=len(coords),
            total_mass=params["mass"],
            time_offset=params["t0"],
            coefficient=params.get("coefficient", 1.0),
        )
        return prof.evaluate(coords, t)
    raise ValueError(f"unknown closed-form id {name!r}; expected one of {CATALOG}")


@dataclass(frozen=True)
class InitialDataSpec:
    """Initial datum: a catalog id plus parameters.

    The extra kind ``"pme_variables"`` wraps another spec (``params["base"]``)
    and maps it through :func:`degdiff.special.to_pme_variables`.
    """

    kind: str
    params: dict = field(default_factory=dict)
    sampling: str = "point"

    def __post_init__(self):
        if self.kind != "pme_variables" and self.kind not in CATALOG:
            raise ValueError(f"unknown initial data id {self.kind!r}; expected one of {CATALOG}")
        if self.sampling not in ("point", "cell_average"):
            raise ValueError("sampling must be 'point' or 'cell_average'")

    def evaluate(self, coords) -> np.ndarray:
        if self.kind == "pme_variables":
            from .special import to_pme_variables_array

            return to_pme_variables_array(self.params["base"].evaluate(coords))
        return _catalog_eval(self.kind, self.params, coords, 0.0)

    def sample(self, grid) -> np.ndarray:
        """Node values on ``grid``: point values or midpoint-rule cell averages."""
        if self.sampling == "point":
            return self.evaluate(grid.coords())
        return cell_average(lambda c: self.evaluate(c), grid)


def cell_average(fun, grid, sub: int | None = None) -> np.ndarray:
    """Cell averages of ``fun(coords)`` by a ``sub``-point midpoint rule per axis."""
    sub = sub or (64 if grid.dim == 1 else 8)
    offsets = ((np.arange(sub) + 0.5) / sub - 0.5) * grid.h
    total = np.zeros(grid.shape)
    for shift in np.array(np.meshgrid(*([offsets] * grid.dim), indexing="ij")).reshape(grid.dim, -1).T:
        coords = tuple(c + d for c, d in zip(grid.coords(), shift))
        total += fun(coords)
    return total / sub**grid.dim


@dataclass(frozen=True)
class SourceSpec:
    """Forcing term: ``zero``, a closed-form ``function`` or a point ``measure``."""

    kind: str = "zero"
    function_id: str | None = None
    params: dict = field(default_factory=dict)
    location: tuple = ()
    time: float = 0.0
    mass: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "function", "measure"):
            raise ValueError(f"source kind must be zero/function/measure, got {self.kind!r}")
        if self.kind == "function" and self.function_id not in CATALOG:
            raise ValueError(f"unknown source function id {self.function_id!r}")
        if self.kind == "measure" and not self.mass > 0:
            raise ValueError("measure source needs mass > 0")

    def evaluate(self, coords, t: float) -> np.ndarray:
        shape = np.broadcast(*coords).shape
        if self.kind == "function":
            return _catalog_eval(self.function_id, self.params, coords, t)
        return np.zeros(shape)


@dataclass(frozen=True)
class ProblemSpec:
    m: float
    q: float
    dim: int
    domain_half_width: float
    horizon: float
    source: SourceSpec
    initial: InitialDataSpec
    gradient_source: bool = True
    diffusion_coefficient: float = 1.0

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"m must be positive, got {self.m}")
        if not 1.0 < self.q <= 2.0:
            raise ValueError(f"q must lie in (1, 2], got {self.q}")
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.domain_half_width > 0:
            raise ValueError("domain_half_width must be positive")
        if not self.horizon >= 0:
            raise ValueError("horizon must be nonnegative")
        if not self.diffusion_coefficient > 0:
            raise ValueError("diffusion_coefficient must be positive")
        if self.source.kind == "measure" and self.gradient_source:
            raise ValueError(
                "measure data is only admitted without the gradient source "
                "(set gradient_source to false)"
            )

    @property
    def regime(self) -> "Regime":
        return classify_regime(self.m, self.q)


# ---------------------------------------------------------------------------
# regimes
# ---------------------------------------------------------------------------


class RegimeTag(str, enum.Enum):
    POWER_DATA = "PowerData"
    SUBCRITICAL_Q = "SubcriticalQ"
    EXPONENTIAL_DATA = "ExponentialData"
    L_ONE_DATA = "LOneData"
    FAST_DIFFUSION = "FastDiffusion"


@dataclass(frozen=True)
class Regime:
    tag: RegimeTag
    theta: float | None = None
    alpha: float | None = None
    alpha_min: float | None = None
    data_requirement: str = ""


def _power_requirement(theta, m):
    return (
        f"u0 in L^(1+theta) and f in L^(1+2 theta/(m N))(0,T; L^((theta+m)N/(mN+2 theta))) "
        f"with theta={theta:.6g} >= 2-m={2 - m:.6g}"
    )


def classify_regime(m: float, q: float, theta: float | None = None, alpha: float | None = None) -> Regime:
    """Existence regime for ``(m, q)`` and the data class it asks for.

    ``theta`` and ``alpha`` are optional user choices; out-of-range values are
    rejected, missing ones get defaults inside the admissible range.
    """
    if not m > 0:
        raise ValueError(f"m must be positive, got {m}")
    if not 1.0 < q <= 2.0:
        raise ValueError(f"q must lie in (1, 2], got {q}")
    m = snap_exponent(m)
    q = 2.0 if abs(q - 2.0) <= _SNAP_TOL else q
    qc = conjugate_exponent(q)

    if m < 1.0:
        a_min = 2.0 / (m * (2.0 - m)) if q == 2.0 else 0.0
        if alpha is None:
            alpha = 1.1 * a_min if q == 2.0 else 1.0
        if not alpha > a_min:
            raise ValueError(f"alpha must exceed {a_min:.6g} for m={m}, q={q}")
        req = (
            f"exp(alpha u0^(2-m)) in L^1 with alpha={alpha:.6g} "
            + (f"(alpha m(2-m) > 2) " if q == 2.0 else "(any alpha > 0) ")
            + "and f in L^r(0,T; L^s) with s > N/2, 1/r + N/(2s) = 1"
        )
        return Regime(RegimeTag.FAST_DIFFUSION, alpha=alpha, alpha_min=a_min, data_requirement=req)
    if m > 2.0:
        return Regime(RegimeTag.L_ONE_DATA, data_requirement="u0 in L^1 and f in L^1")

    # 1 <= m <= 2; m == 1 is routed through the SubcriticalQ rules
    if m == 1.0 or qc * (m - 1.0) <= 2.0:
        if m == 1.0 or q < m:
            theta = (2.0 - m + 0.1) if theta is None else theta
            if theta < 2.0 - m:
                raise ValueError(f"theta must be >= 2-m = {2 - m}")
            return Regime(RegimeTag.SUBCRITICAL_Q, theta=theta, data_requirement=_power_requirement(theta, m))
        alpha = 1.0 if alpha is None else alpha
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        req = (
            f"exp(alpha u0) in L^1 with alpha={alpha:.6g} > 0 and "
            "f in L^r(0,T; L^s) with s > N/2, 1/r + N/(2s) = 1"
        )
        return Regime(RegimeTag.EXPONENTIAL_DATA, alpha=alpha, alpha_min=0.0, data_requirement=req)
    theta = (2.0 - m + 0.1) if theta is None else theta
    if theta < 2.0 - m:
        raise ValueError(f"theta must be >= 2-m = {2 - m}")
    return Regime(RegimeTag.POWER_DATA, theta=theta, data_requirement=_power_requirement(theta, m))


# ---------------------------------------------------------------------------
# regularized nonlinearities
# ---------------------------------------------------------------------------


def b_n(sigma: float, n: float, s):
    """``(s + 1/n)^sigma - (1/n)^sigma`` for ``s >= 0``; linear extension below 0."""
    s = np.asarray(s, dtype=float)
    eps = 1.0 / n
    pos = np.power(np.maximum(s, 0.0) + eps, sigma) - eps**sigma
    return np.where(s >= 0, pos, sigma * eps ** (sigma - 1.0) * s)


def db_n(sigma: float, n: float, s):
    s = np.asarray(s, dtype=float)
    eps = 1.0 / n
    return sigma * np.power(np.maximum(s, 0.0) + eps, sigma - 1.0)


def b_n_inverse(sigma: float, n: float, y):
    y = np.asarray(y, dtype=float)
    eps = 1.0 / n
    return np.power(np.maximum(y, 0.0) + eps**sigma, 1.0 / sigma) - eps


@dataclass(frozen=True)
class Nonlinearity:
    """The family ``b(s) = (s + 1/n)^sigma - (1/n)^sigma``."""

    sigma: float
    n: float = 1
    dim: int = 1

    def __post_init__(self):
        floor = max(self.dim - 2, 0) / self.dim
        if not self.sigma > floor:
            raise ValueError(f"sigma must exceed (N-2)_+/N = {floor}")
        if not self.n >= 1:
            raise ValueError("regularization index n must be >= 1")

    @property
    def a1(self) -> float:
        return self.sigma

    @property
    def a2(self) -> float:
        return 1.0 - self.sigma if self.sigma < 1.0 else 0.5

    @property
    def a3(self) -> float:
        lo = (self.dim - 1) / self.dim
        return 0.5 * (lo + 1.0)

    def b(self, s):
        return b_n(self.sigma, self.n, s)

    def db(self, s):
        return db_n(self.sigma, self.n, s)

    def b_inverse(self, y):
        return b_n_inverse(self.sigma, self.n, y)

    def with_index(self, n) -> "Nonlinearity":
        return Nonlinearity(self.sigma, n, self.dim)


@dataclass(frozen=True)
class BetaNonlinearity:
    """``b = beta`` built from ``H`` (second shipped family), for ``0 < m <= 2``."""

    m: float

    @property
    def n(self):
        return math.inf

    def b(self, s):
        return np.asarray(beta_of_array(self.m, np.maximum(np.asarray(s, float), 0.0)))

    def db(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 1e-300)
        w = H_inverse_array(self.m, s)
        return np.power(w, 1.0 / self.m - 1.0) / self.m


def check_b_hypotheses(b: Callable, db: Callable, a1: float, a2: float, a3: float, dim: int, eps: float = 1e-2) -> dict:
    """Sample-grid check of the growth conditions on ``b``.

    Returns the measured lower constant for the large-``s`` power bound, the
    small-``s`` derivative bound, and which of the two large-``s`` alternatives
    held.
    """
    big = np.logspace(1, 8, 200)
    small = np.logspace(-10, -2, 200)
    c1 = float(np.min(b(big) / big**a1))
    b2 = bool(np.all(np.abs(db(small)) <= small ** (-a2)))
    lhs1 = np.abs(db(big)) * np.power(b(big), 2 * a3 - 1)
    branch1 = bool(np.all(lhs1 <= big ** ((dim + 2 * a1) / dim - eps)))
    branch2 = bool(np.all(np.abs(db(big)) <= np.power(b(big), 2 - 2 * a3 - eps)))
    return {
        "B1": c1 > 0,
        "B1_constant": c1,
        "B2": b2,
        "B3": branch1 or branch2,
        "B3_branch": "derivative-product" if branch1 else ("derivative-power" if branch2 else None),
    }


def diffusivity(m: float, n: float, u):
    """Regularized diffusivity ``m (u + 1/n)^(m-1)``."""
    u = np.asarray(u, dtype=float)
    return m * np.power(np.maximum(u, 0.0) + 1.0 / n, snap_exponent(m - 1.0))


def potential(m: float, n: float, u):
    """``(u + 1/n)^m - (1/n)^m``, whose derivative is :func:`diffusivity`."""
    u = np.asarray(u, dtype=float)
    eps = 1.0 / n
    pos = np.power(np.maximum(u, 0.0) + eps, m) - eps**m
    return np.where(u >= 0, pos, m * eps ** (m - 1.0) * u)


def truncated_source(q: float, n: float, g):
    """Bounded gradient source ``g^q / (1 + g^q / n)``."""
    gq = np.power(np.asarray(g, dtype=float), q)
    return gq / (1.0 + gq / n)


def truncate_Tk(s, k: float):
    return np.minimum(s, k)


def remainder_Gk(s, k: float):
    return np.maximum(np.asarray(s, dtype=float) - k, 0.0)


# ---------------------------------------------------------------------------
# H, its inverse, beta and Psi
# ---------------------------------------------------------------------------


def _check_m(m):
    if not 0 < m <= 2:
        raise ValueError(f"H is defined for 0 < m < 2 (closed form at m = 2), got m={m}")


def _h_exponent(m):
    return snap_exponent((2.0 - m) / m), m * (2.0 - m)


def H_prime(m: float, s):
    """Derivative of ``H``: ``exp(s^((2-m)/m) / (m(2-m)))``, or ``s^(1/4)`` at m = 2."""
    _check_m(m)
    s = np.asarray(s, dtype=float)
    if m == 2:
        return np.power(s, 0.25)
    p, c = _h_exponent(m)
    return np.exp(np.power(s, p) / c)


def H_of(m: float, s: float) -> float:
    _check_m(m)
    if s < 0:
        raise ValueError("H is evaluated at nonnegative arguments only")
    if m == 2:
        return 0.8 * s**1.25
    if s == 0:
        return 0.0
    val, _ = integrate.quad(lambda t: float(H_prime(m, t)), 0.0, s, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def _cumulative(fun, points: np.ndarray) -> np.ndarray:
    """``int_0^p fun`` for each sorted point p by chained adaptive quadrature."""
    out = np.empty_like(points)
    acc, prev = 0.0, 0.0
    for i, p in enumerate(points):
        if p > prev:
            val, _ = integrate.quad(fun, prev, p, epsabs=0.0, epsrel=1e-12, limit=200)
            acc += val
            prev = p
        out[i] = acc
    return out


def _sorted_apply(s, per_sorted):
    s = np.asarray(s, dtype=float)
    flat = s.ravel()
    uniq, inv = np.unique(flat, return_inverse=True)
    return per_sorted(uniq)[inv].reshape(s.shape)


def H_of_array(m: float, s) -> np.ndarray:
    _check_m(m)
    if np.any(np.asarray(s) < 0):
        raise ValueError("H is evaluated at nonnegative arguments only")
    if m == 2:
        return 0.8 * np.power(np.asarray(s, float), 1.25)
    return _sorted_apply(s, lambda pts: _cumulative(lambda t: float(H_prime(m, t)), pts))


def H_inverse(m: float, y: float) -> float:
    """Inverse of ``H``: geometric bracket growth then Brent's method."""
    _check_m(m)
    if y < 0:
        raise ValueError("H_inverse needs y >= 0")
    if y == 0:
        return 0.0
    if m == 2:
        return (1.25 * y) ** 0.8
    lo, hi, factor = 0.0, 1.0, 2.0
    while H_of(m, hi) < y:
        cand = hi * factor
        with np.errstate(over="ignore"):
            probe = H_of(m, cand)
        if not np.isfinite(probe):
            factor = math.sqrt(factor)
            if factor - 1.0 < 1e-12:
                raise OverflowError(f"H overflows before reaching y={y}")
            continue
        lo, hi = hi, cand
    tol = 1e-12 * max(1.0, y)
    root = optimize.brentq(lambda s: H_of(m, s) - y, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    # one Newton polish against the analytic derivative
    root -= (H_of(m, root) - y) / float(H_prime(m, root))
    if abs(H_of(m, root) - y) > tol * 10:
        raise RuntimeError(f"H_inverse residual too large at y={y}")
    return root


def H_inverse_array(m: float, y) -> np.ndarray:
    return _sorted_apply(y, lambda pts: np.array([H_inverse(m, float(p)) for p in pts]))


def beta_of(m: float, s: float) -> float:
    """``(1/m) int_0^s H^{-1}(sigma)^(1/m - 1) dsigma``, via the substitution sigma = H(r)."""
    _check_m(m)
    if s < 0:
        raise ValueError("beta is evaluated at nonnegative arguments only")
    if s == 0:
        return 0.0
    if m == 2:
        return (5.0 / 6.0) * 0.8**0.4 * s**0.6
    w = H_inverse(m, s)
    p = 1.0 / m - 1.0
    val, _ = integrate.quad(lambda r: r**p * float(H_prime(m, r)), 0.0, w, epsabs=0.0, epsrel=1e-12, limit=200)
    return val / m


def beta_of_array(m: float, s) -> np.ndarray:
    return _sorted_apply(s, lambda pts: np.array([beta_of(m, float(p)) for p in pts]))


def psi_of(m: float, theta: float, s: float) -> float:
    """``Psi(s) = int_0^s sigma^theta H^{-1}(sigma)^(1/m - 1) dsigma`` by direct quadrature."""
    _check_m(m)
    if s <= 0:
        return 0.0
    p = 1.0 / m - 1.0
    val, _ = integrate.quad(lambda x: x**theta * H_inverse(m, x) ** p, 0.0, s, epsabs=0.0, epsrel=1e-10, limit=200)
    return val


def psi_of_potential(m: float, theta: float, w) -> np.ndarray:
    """``Psi(H(w))`` for arrays of ``w = u^m``.

    Uses ``Psi(H(w)) = int_0^w H(r)^theta r^(1/m - 1) H'(r) dr`` and integrates
    ``(H, Psi o H)`` together as an ODE in ``r``, so ``H`` is never inverted.
    """
    _check_m(m)
    p = 1.0 / m - 1.0
    w = np.maximum(np.asarray(w, dtype=float), 0.0)

    def rhs(r, y):
        hp = float(H_prime(m, r))
        return [hp, max(y[0], 0.0) ** theta * r**p * hp]

    def per_sorted(pts):
        out = np.zeros_like(pts)
        pos = pts > 0
        if not np.any(pos):
            return out
        targets = pts[pos]
        # start off the origin with the leading-order series H(r) ~ r
        r0 = min(1e-8, 0.5 * targets[0])
        e = theta + p + 1.0
        y0 = [r0, r0**e / e]
        if m == 2:
            y0 = [0.8 * r0**1.25, 0.8**theta * r0 ** (1.25 * theta + p + 1.25) / (1.25 * theta + p + 1.25)]
        sol = integrate.solve_ivp(
            rhs, (r0, targets[-1]), y0, method="DOP853", t_eval=targets, rtol=1e-12, atol=1e-300
        )
        if not sol.success:
            raise RuntimeError(sol.message)
        out[pos] = sol.y[1]
        return out

    return _sorted_apply(w, per_sorted)


class PsiTable:
    """Monotone interpolant of ``w -> Psi(H(w))`` on ``[0, w_max]``.

    Nodes are graded toward 0 where the integrand behaves like a power.
    """

    def __init__(self, m: float, theta: float, w_max: float, nodes: int = 400):
        from scipy.interpolate import PchipInterpolator

        self.m, self.theta, self.w_max = m, theta, w_max
        grid = w_max * np.linspace(0.0, 1.0, nodes) ** 3
        vals = psi_of_potential(m, theta, grid)
        self._interp = PchipInterpolator(grid, vals)

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        if np.any(w > self.w_max * (1 + 1e-12)):
            raise ValueError("PsiTable evaluated beyond its tabulated range")
        return np.maximum(self._interp(np.clip(w, 0.0, self.w_max)), 0.0)


def regime_summary(regime: Regime) -> dict[str, Any]:
    return {
        "tag": regime.tag.value,
        "theta": regime.theta,
        "alpha": regime.alpha,
        "data_requirement": regime.data_requirement,
    }
