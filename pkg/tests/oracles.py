"""Independent reference computations used by the tests.

Nothing here imports the package: each oracle rebuilds its quantity from
first principles (dense matrices, brute-force quadrature, closed forms).
"""
import math

import numpy as np
from scipy.special import beta as beta_fn

# frozen high-precision values (mpmath, 40 digits)
B_THIRD_N10_S1 = 0.56812123209508926997  # (1.1)^(1/3) - (0.1)^(1/3)
DIFFUSIVITY_HALF_N2 = 0.70710678118654752440  # 0.5 * 0.5^(-1/2)
SOURCE_Q15_N100_G2 = 2.7506276268476682322  # 2^1.5 / (1 + 2^1.5/100)
H_M05_S1 = 1.5126378907800033482  # int_0^1 exp(t^3/0.75) dt
H_M15_S2 = 7.3975719262852310148  # int_0^2 exp(t^(1/3)/0.75) dt
PME_COEFFICIENT = 1.5724448365253379643  # (4/5)(3/2)^(5/3)
PRINTED_MAP_CONSTANT = 0.60974006923643512854  # (2/3)(4/5)^(2/5)
BARENBLATT_C_M2_N1 = 0.36056239257685209558
BARENBLATT_C_M3_N1 = 0.18377629847393068317
BARENBLATT_C_M2_N2 = 0.19947114020071633897


def cell_axis(cells, half_width):
    h = 2.0 * half_width / cells
    return -half_width + (np.arange(cells) + 0.5) * h, h


def dense_laplacian_1d(cells, half_width):
    """Dirichlet wall on the outer faces: the boundary row sees the wall at h/2."""
    _, h = cell_axis(cells, half_width)
    A = np.zeros((cells, cells))
    for i in range(cells):
        A[i, i] = -2.0
        if i > 0:
            A[i, i - 1] = 1.0
        if i < cells - 1:
            A[i, i + 1] = 1.0
    # wall at distance h/2: ghost value -u gives an extra -1 on the diagonal
    A[0, 0] -= 1.0
    A[-1, -1] -= 1.0
    return A / h**2


def dense_laplacian_2d(cells, half_width):
    L1 = dense_laplacian_1d(cells, half_width)
    eye = np.eye(cells)
    return np.kron(L1, eye) + np.kron(eye, L1)


def dense_flux_1d(a, a_wall, h):
    """``div(a grad .)`` with arithmetic-mean face coefficients, built densely."""
    n = a.size
    A = np.zeros((n, n))
    for i in range(n - 1):
        af = 0.5 * (a[i] + a[i + 1]) / h**2
        A[i, i + 1] += af
        A[i + 1, i] += af
        A[i, i] -= af
        A[i + 1, i + 1] -= af
    A[0, 0] -= (a[0] + a_wall) / h**2
    A[-1, -1] -= (a[-1] + a_wall) / h**2
    return A


def simpson(f, a, b, panels):
    """Composite Simpson rule with ``panels`` (even) subintervals."""
    if panels % 2:
        raise ValueError("panels must be even")
    x = np.linspace(a, b, panels + 1)
    y = f(x)
    h = (b - a) / panels
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def barenblatt_constant(m, dim, mass):
    """Closed form of the mass constant through the Beta function."""
    p = 1.0 / (m - 1.0)
    alpha = dim / (dim * (m - 1.0) + 2.0)
    kappa = alpha * (m - 1.0) / (2.0 * m * dim)
    # int_{R^N} (C - kappa r^2)_+^p = C^(p + N/2) kappa^(-N/2) * pi^(N/2) Gamma(p+1)/Gamma(p+1+N/2)
    factor = math.pi ** (dim / 2) * math.gamma(p + 1) / math.gamma(p + 1 + dim / 2) * kappa ** (-dim / 2)
    if dim == 1:
        assert abs(factor - kappa**-0.5 * beta_fn(0.5, p + 1)) < 1e-12 * factor
    return (mass / factor) ** (1.0 / (p + dim / 2))


def torsion_1d(x, half_width):
    return 0.5 * (half_width**2 - x**2)
