"""Cell-centered Cartesian grids on ``(-L, L)^dim`` with zero Dirichlet data.

The Dirichlet value sits on the cell faces of the outer ring, so the
boundary-adjacent stencils see a wall at distance ``h/2``.  This is the same
as a reflected ghost value ``-u`` one cell outside.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded


class LinearSolveError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class Grid:
    dim: int
    cells: int
    half_width: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        if self.cells < 8:
            raise ValueError("cells_per_axis must be at least 8")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.cells

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells,) * self.dim

    @property
    def size(self) -> int:
        return self.cells**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def axis(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.cells) + 0.5) * self.h

    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates broadcast to ``shape`` (``ij`` indexing)."""
        return tuple(np.meshgrid(*([self.axis()] * self.dim), indexing="ij"))

    def field(self, values) -> "Field":
        return Field(self, values)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))


@dataclass(frozen=True, eq=False)
class Field:
    """Immutable snapshot of node values on ``grid``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __eq__(self, other):
        return isinstance(other, Field) and self.grid == other.grid and np.array_equal(self.values, other.values)

    def map(self, fun) -> "Field":
        return Field(self.grid, fun(self.values))


# ---------------------------------------------------------------------------
# stencils
# ---------------------------------------------------------------------------


def _second_difference(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    pad = [(0, 0)] * u.ndim
    pad[axis] = (1, 1)
    g = np.pad(u, pad)
    n = u.shape[axis]
    first = [slice(None)] * u.ndim
    last = [slice(None)] * u.ndim
    first[axis], last[axis] = 0, n + 1
    src_first = [slice(None)] * u.ndim
    src_last = [slice(None)] * u.ndim
    src_first[axis], src_last[axis] = 0, n - 1
    g[tuple(first)] = -u[tuple(src_first)]
    g[tuple(last)] = -u[tuple(src_last)]
    lo = np.take(g, range(0, n), axis=axis)
    mid = np.take(g, range(1, n + 1), axis=axis)
    hi = np.take(g, range(2, n + 2), axis=axis)
    return (lo - 2.0 * mid + hi) / h**2


def laplacian_values(u: np.ndarray, h: float) -> np.ndarray:
    return sum(_second_difference(u, ax, h) for ax in range(u.ndim))


def laplacian_of(phi: Field) -> Field:
    """Discrete Laplacian (3-point / 5-point) with zero Dirichlet data."""
    return Field(phi.grid, laplacian_values(phi.values, phi.grid.h))


def _axis_derivative(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    u = np.moveaxis(u, axis, 0)
    d = np.empty_like(u)
    d[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    d[0] = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * h)
    d[-1] = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h)
    return np.moveaxis(d, 0, axis)


def gradient_values(u: np.ndarray, h: float) -> np.ndarray:
    """Euclidean norm of the gradient: central differences inside, one-sided
    second-order differences on the boundary-adjacent nodes."""
    sq = sum(_axis_derivative(u, ax, h) ** 2 for ax in range(u.ndim))
    return np.sqrt(sq)


def gradient_magnitude(u: Field) -> Field:
    return Field(u.grid, gradient_values(u.values, u.grid.h))


def face_differences(u: np.ndarray, h: float):
    """Per-axis face gradients including the two wall faces.

    Yields ``(grad, left, right)`` per axis, where ``grad`` has one more entry
    than ``u`` along the axis, and ``left``/``right`` are the adjacent node
    values (0 standing in for the wall).  Wall faces are at distance ``h/2``.
    """
    out = []
    for ax in range(u.ndim):
        v = np.moveaxis(u, ax, 0)
        zero = np.zeros((1,) + v.shape[1:])
        ext = np.concatenate([zero, v, zero])
        dist = np.full(ext.shape[0] - 1, h)
        dist[0] = dist[-1] = 0.5 * h
        dist = dist.reshape((-1,) + (1,) * (v.ndim - 1))
        grad = (ext[1:] - ext[:-1]) / dist
        # face measure along the axis: interior faces weigh h, wall faces h/2
        weight = dist.copy()
        out.append((grad, ext[:-1], ext[1:], weight))
    return out


def dirichlet_energy_density(u: np.ndarray, h: float, weight=None) -> float:
    """``int |grad u|^2 w`` with face differences (the scheme's own H^1_0 seminorm).

    ``weight`` maps (left, right) face neighbours to a pointwise factor.
    """
    total = 0.0
    transverse = h ** (u.ndim - 1)
    for grad, left, right, span in face_differences(u, h):
        dens = grad**2 * span
        if weight is not None:
            dens = dens * weight(left, right)
        total += float(np.sum(dens)) * transverse
    return total


# ---------------------------------------------------------------------------
# assembled operators and linear solves
# ---------------------------------------------------------------------------


def flux_matrix(grid: Grid, a: np.ndarray, a_wall: float) -> sp.csr_matrix:
    """Sparse matrix of ``div(a grad .)`` in conservative flux form.

    Face coefficients are arithmetic means of the node values; wall faces use
    ``a_wall`` for the missing neighbour and the half-cell distance.
    """
    n, h2 = grid.cells, grid.h**2
    a = np.asarray(a, dtype=float).reshape(grid.shape)
    idx = np.arange(grid.size).reshape(grid.shape)
    diag = np.zeros(grid.shape)
    rows, cols, vals = [], [], []
    for ax in range(grid.dim):
        av = np.moveaxis(a, ax, 0)
        iv = np.moveaxis(idx, ax, 0)
        dv = np.moveaxis(diag, ax, 0)
        af = 0.5 * (av[:-1] + av[1:]) / h2
        rows += [iv[:-1].ravel(), iv[1:].ravel()]
        cols += [iv[1:].ravel(), iv[:-1].ravel()]
        vals += [af.ravel(), af.ravel()]
        dv[:-1] -= af
        dv[1:] -= af
        dv[0] -= (av[0] + a_wall) / h2
        dv[-1] -= (av[-1] + a_wall) / h2
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.size, grid.size)
    )


def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    return flux_matrix(grid, np.ones(grid.shape), 1.0)


def pcg(A, b: np.ndarray, rtol: float = 1e-12, max_iter: int | None = None, x0=None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients for SPD ``A``."""
    n = b.size
    max_iter = 10 * n if max_iter is None else max_iter
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        if np.linalg.norm(r) <= rtol * bnorm:
            return x
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(b - A @ x) / bnorm
    if res <= rtol:
        return x
    raise LinearSolveError("conjugate gradients hit the iteration cap", res)


def linear_solve(grid: Grid, A, b: np.ndarray) -> np.ndarray:
    """Tridiagonal direct solve in 1D, PCG in 2D (``A`` must then be SPD)."""
    b = np.asarray(b, dtype=float).ravel()
    if grid.dim == 1:
        A = sp.dia_matrix(A)
        ab = np.zeros((3, grid.size))
        ab[0, 1:] = A.diagonal(1)
        ab[1] = A.diagonal(0)
        ab[2, :-1] = A.diagonal(-1)
        try:
            x = solve_banded((1, 1), ab, b)
        except np.linalg.LinAlgError as exc:
            raise LinearSolveError(f"tridiagonal solve broke down: {exc}", float("nan")) from exc
        if not np.all(np.isfinite(x)):
            raise LinearSolveError("tridiagonal solve produced non-finite values", float("inf"))
        return x
    return pcg(sp.csr_matrix(A), b)


def torsion_weight(grid: Grid) -> Field:
    """Solve the discrete ``-Lap(rho) = 1`` with zero boundary data."""
    A = -laplacian_matrix(grid)
    rho = linear_solve(grid, A, np.ones(grid.size)).reshape(grid.shape)
    res = float(np.max(np.abs(1.0 + laplacian_values(rho, grid.h))))
    if res > 1e-10:
        raise LinearSolveError("torsion solve did not meet the residual bound", res)
    return Field(grid, rho)


# ---------------------------------------------------------------------------
# norms and I/O
# ---------------------------------------------------------------------------


def lp_norm(u: Field, p: float) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    if np.isinf(p):
        return float(np.max(np.abs(u.values)))
    return float((u.grid.cell_volume * np.sum(np.abs(u.values) ** p)) ** (1.0 / p))


def norms(u: Field, p: float = 2.0) -> dict:
    """Cell-volume weighted ``l1``, ``linf`` and ``lp`` norms."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return {
        "l1": float(u.grid.cell_volume * np.sum(np.abs(u.values))),
        "linf": float(np.max(np.abs(u.values))),
        "lp": lp_norm(u, p),
    }


def write_field_csv(u: Field, path) -> None:
    """Flat CSV ``x[,y],value`` in row-major node order, 17 significant digits."""
    g = u.grid
    coords = g.coords()
    header = ["x", "y"][: g.dim] + ["value"]
    cols = [c.ravel() for c in coords] + [u.values.ravel()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([format(v, ".17g") for v in row])


def read_field_csv(path) -> Field:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    dim = len(header) - 1
    xs = np.unique(body[:, 0])
    cells = xs.size
    h = xs[1] - xs[0]
    grid = Grid(dim, cells, float(xs[-1] + 0.5 * h))
    return Field(grid, body[:, -1].reshape(grid.shape))


def save_field(u: Field, directory, name: str) -> Path:
    path = Path(directory) / name
    write_field_csv(u, path)
    return path
