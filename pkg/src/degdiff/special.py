"""Closed-form reference solutions.

Source-type (Barenblatt) profiles of ``u_t = D Lap(u^m)`` and the change of
variables that turns ``u_t - Lap(u^2) = |grad u|^2`` into a porous medium
equation with exponent 5/3.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, optimize

from .grid import Field
from .model import InitialDataSpec, ProblemSpec, SourceSpec

#: ``w = PME_SCALE * u^PME_POWER`` maps the m = q = 2 problem to PME(5/3).
PME_SCALE = 2.0 / 3.0
PME_POWER = 1.5
PME_EXPONENT = 5.0 / 3.0
PME_COEFFICIENT = 0.8 * 1.5 ** (5.0 / 3.0)


def _unit_ball_surface(dim: int) -> float:
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


@dataclass(frozen=True)
class SelfSimilarProfile:
    """Barenblatt profile ``tau^-alpha (C - kappa |x|^2 tau^(-2 beta))_+^(1/(m-1))``
    with ``tau = D (t + t0)``."""

    m: float
    dim: int
    total_mass: float
    time_offset: float
    coefficient: float = 1.0

    def __post_init__(self):
        if not self.m > 1:
            raise ValueError("Barenblatt profiles need m > 1")
        if not (self.total_mass > 0 and self.time_offset > 0 and self.coefficient > 0):
            raise ValueError("mass, time offset and coefficient must be positive")

    @property
    def alpha(self) -> float:
        return self.dim / (self.dim * (self.m - 1.0) + 2.0)

    @property
    def beta_exp(self) -> float:
        return self.alpha / self.dim

    @property
    def kappa(self) -> float:
        return self.alpha * (self.m - 1.0) / (2.0 * self.m * self.dim)

    def _mass_of(self, c: float) -> float:
        p = 1.0 / (self.m - 1.0)
        r_max = math.sqrt(c / self.kappa)
        val, _ = integrate.quad(
            lambda r: r ** (self.dim - 1) * max(c - self.kappa * r * r, 0.0) ** p,
            0.0,
            r_max,
            epsabs=0.0,
            epsrel=1e-13,
        )
        return _unit_ball_surface(self.dim) * val

    @cached_property
    def constant(self) -> float:
        """``C`` such that the spatial integral equals ``total_mass``."""
        lo = hi = 1.0
        while self._mass_of(hi) < self.total_mass:
            lo, hi = hi, 2.0 * hi
        while self._mass_of(lo) > self.total_mass:
            lo, hi = 0.5 * lo, lo
        return optimize.brentq(lambda c: self._mass_of(c) - self.total_mass, lo, hi, xtol=1e-300, rtol=1e-15)

    def tau(self, t):
        return self.coefficient * (np.asarray(t, dtype=float) + self.time_offset)

    def radius(self, t) -> float:
        """Free-boundary radius at time ``t``."""
        return math.sqrt(self.constant / self.kappa) * float(self.tau(t)) ** self.beta_exp

    def evaluate(self, coords, t: float) -> np.ndarray:
        tau = float(self.tau(t))
        if not tau > 0:
            raise ValueError("t + t0 must be positive")
        r2 = sum(np.asarray(c, dtype=float) ** 2 for c in coords)
        core = np.maximum(self.constant - self.kappa * r2 * tau ** (-2 * self.beta_exp), 0.0)
        return tau ** (-self.alpha) * core ** (1.0 / (self.m - 1.0))

    def field(self, grid, t: float) -> Field:
        return Field(grid, self.evaluate(grid.coords(), t))


def barenblatt_eval(p: SelfSimilarProfile, x, t: float) -> float:
    """Value of the profile at a single point ``x`` (scalar in 1D)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(p.evaluate(tuple(x), t))


def dominating_profile(
    m: float, dim: int, amplitude: float, half_width: float, coefficient: float = 1.0, spread: float = 2.0
) -> SelfSimilarProfile:
    """Barenblatt profile lying above ``amplitude`` on the box ``|x|_inf <= half_width``
    at ``t = 0``, with initial support radius ``spread`` times the box corner distance."""
    corner = half_width * math.sqrt(dim)
    r0 = spread * corner
    probe = SelfSimilarProfile(m, dim, 1.0, 1.0)
    kappa = probe.kappa
    # at tau0 the value at radius r is tau0^(-1/(m-1)) (kappa (r0^2 - r^2))^(1/(m-1))
    tau0 = kappa * (r0**2 - corner**2) / amplitude ** (m - 1.0)
    c = kappa * r0**2 * tau0 ** (-2 * probe.beta_exp)
    mass = SelfSimilarProfile(m, dim, 1.0, 1.0)._mass_of(c)
    return SelfSimilarProfile(m, dim, mass, tau0 / coefficient, coefficient)


# ---------------------------------------------------------------------------
# m = q = 2 change of variables
# ---------------------------------------------------------------------------


def to_pme_variables_array(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("change of variables needs u >= 0")
    return PME_SCALE * u**PME_POWER


def from_pme_variables_array(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("change of variables needs w >= 0")
    return (w / PME_SCALE) ** (1.0 / PME_POWER)


def to_pme_variables(u: Field) -> Field:
    """``w = (2/3) u^(3/2)``; turns the m = q = 2 problem into ``w_t = c Lap(w^(5/3))``."""
    return Field(u.grid, to_pme_variables_array(u.values))


def from_pme_variables(w: Field) -> Field:
    return Field(w.grid, from_pme_variables_array(w.values))


def transformed_pme_spec(base: ProblemSpec | None = None) -> ProblemSpec:
    """PME(5/3) problem with coefficient ``(4/5)(3/2)^(5/3)`` and no source.

    Domain, horizon and initial datum are taken from ``base`` (mapped through
    :func:`to_pme_variables`) when given; otherwise a unit 1D problem with zero
    data is returned.
    """
    if base is None:
        dim, half, horizon, initial = 1, 1.0, 1.0, InitialDataSpec("constant", {"value": 0.0})
    else:
        dim, half, horizon = base.dim, base.domain_half_width, base.horizon
        initial = InitialDataSpec("pme_variables", {"base": base.initial})
    return ProblemSpec(
        m=PME_EXPONENT,
        q=2.0,
        dim=dim,
        domain_half_width=half,
        horizon=horizon,
        source=SourceSpec("zero"),
        initial=initial,
        gradient_source=False,
        diffusion_coefficient=PME_COEFFICIENT,
    )


def check_domain_margin(profile: SelfSimilarProfile, half_width: float, h: float, horizon: float) -> None:
    """Raise if the free boundary comes within ``10 h`` of the wall before ``horizon``."""
    r = profile.radius(horizon)
    if half_width - r < 10 * h:
        raise ValueError(
            f"free boundary radius {r:.4g} at t={horizon} is closer than 10h to the wall at {half_width}"
        )
