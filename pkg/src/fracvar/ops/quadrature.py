"""Physical-space discretisation of the singular integrals.

The integration variable ``z = y - x`` is split into

* an inner block ``[-m h, m h]^dim`` (``m h ~ quad_inner_radius``) where the
  integrand is replaced by a local Taylor model of ``u`` and integrated
  against the kernel analytically (moment integrals);
* the remaining cells of the cube ``[-P h, P h]^dim`` (``P h ~ quad_outer_radius``),
  where ``u`` is interpolated (piecewise) multilinearly between nodes and the
  kernel is integrated exactly against each hat function by Gauss-Legendre
  quadrature per cell.

The result is a fixed stencil ``W`` and each operator is a correlation of
``u`` (zero outside the box) with ``W`` plus the inner-block correction.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .. import _accel
from ..core import GridSpec, frac_constants, riesz_gamma

_GAUSS_ORDER = 8


def block_moment(dim: int, a: float, p: float) -> float:
    """``int_{[-a, a]^dim} |z|^p dz`` for ``p > -dim``."""
    if p <= -dim:
        raise ValueError("moment diverges")
    if dim == 1:
        return 2.0 * a ** (p + 1) / (p + 1)
    val, _ = quad(lambda th: (a / math.cos(th)) ** (p + 2), 0.0, math.pi / 4, epsabs=0, epsrel=1e-13)
    return 8.0 * val / (p + 2)


def cube_tail(dim: int, b: float, p: float) -> float:
    """``int_{R^dim minus [-b, b]^dim} |z|^p dz`` for ``p < -dim``."""
    if p >= -dim:
        raise ValueError("tail diverges")
    if dim == 1:
        return 2.0 * b ** (p + 1) / (-p - 1)
    val, _ = quad(lambda th: (b / math.cos(th)) ** (p + 2), 0.0, math.pi / 4, epsabs=0, epsrel=1e-13)
    return 8.0 * val / (-p - 2)


def stencil_extent(grid: GridSpec, r_in: float, r_out: float) -> tuple[int, int]:
    """Inner block half-width ``m`` and outer cube half-width ``P`` in nodes."""
    h = grid.spacing
    m = max(1, int(round(r_in / h)))
    P = int(math.floor(r_out / h + 1e-9))
    P = min(P, grid.points_per_axis - 1)
    if P <= m:
        raise ValueError("outer radius must exceed the inner block by at least one cell")
    return m, P


@lru_cache(maxsize=16)
def _stencil(grid: GridSpec, kind: str, power: float, m: int, P: int) -> np.ndarray:
    """Hat-function weights for kernel ``|z|^power`` (scalar) or ``z |z|^(power-1)`` (vector).

    ``kind`` is ``"even"`` or ``"odd"``; odd stencils carry one component per axis.
    """
    d, h = grid.dim, grid.spacing
    t, gw = np.polynomial.legendre.leggauss(_GAUSS_ORDER)
    t = (t + 1) / 2
    gw = gw / 2
    corners = np.arange(-P, P)
    cg = np.meshgrid(*([corners] * d), indexing="ij")
    in_block = np.ones(cg[0].shape, dtype=bool)
    for c in cg:
        in_block &= (c >= -m) & (c <= m - 1)
    keep = ~in_block
    ncomp = d if kind == "odd" else 1
    W = np.zeros((ncomp,) + (2 * P + 1,) * d)
    vol = h**d
    for q in np.ndindex(*([_GAUSS_ORDER] * d)):
        tq = [t[i] for i in q]
        wq = np.prod([gw[i] for i in q]) * vol
        z = [(c + tt) * h for c, tt in zip(cg, tq)]
        r = np.sqrt(sum(zz**2 for zz in z))
        r = np.where(keep, r, 1.0)
        if kind == "odd":
            radial = r ** (power - 1.0)
            vals = [zz * radial * keep for zz in z]
        else:
            vals = [r**power * keep]
        for corner in np.ndindex(*([2] * d)):
            basis = np.prod([tt if a else 1.0 - tt for a, tt in zip(corner, tq)])
            sl = tuple(slice(a, a + 2 * P) for a in corner)
            for comp, v in enumerate(vals):
                W[(comp,) + sl] += wq * basis * v
    W.setflags(write=False)
    return W


def _central_difference(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    pad = [(0, 0)] * u.ndim
    pad[axis] = (1, 1)
    up = np.pad(u, pad)
    n = u.shape[axis]
    fwd = np.take(up, np.arange(2, n + 2), axis=axis)
    bwd = np.take(up, np.arange(0, n), axis=axis)
    return (fwd - bwd) / (2.0 * h)


def _second_difference(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    pad = [(0, 0)] * u.ndim
    pad[axis] = (1, 1)
    up = np.pad(u, pad)
    n = u.shape[axis]
    return (np.take(up, np.arange(2, n + 2), axis=axis) - 2 * u + np.take(up, np.arange(0, n), axis=axis)) / h**2


def _scalar_gradient(u: np.ndarray, grid: GridSpec, alpha: float, m: int, P: int) -> np.ndarray:
    n, h = grid.dim, grid.spacing
    mu, _, _ = frac_constants(n, alpha)
    W = _stencil(grid, "odd", -n - alpha, m, P)
    c_in = block_moment(n, m * h, 1.0 - n - alpha) / n
    return np.stack(
        [mu * (_accel.stencil_correlate(u, W[a]) + c_in * _central_difference(u, a, h)) for a in range(n)]
    )


def frac_gradient(u: np.ndarray, grid: GridSpec, alpha: float, r_in: float, r_out: float) -> np.ndarray:
    m, P = stencil_extent(grid, r_in, r_out)
    if u.ndim == grid.dim:
        return _scalar_gradient(u, grid, alpha, m, P)
    return np.stack([_scalar_gradient(c, grid, alpha, m, P) for c in u])


def frac_divergence(p: np.ndarray, grid: GridSpec, alpha: float, r_in: float, r_out: float) -> np.ndarray:
    n, h = grid.dim, grid.spacing
    m, P = stencil_extent(grid, r_in, r_out)
    mu, _, _ = frac_constants(n, alpha)
    W = _stencil(grid, "odd", -n - alpha, m, P)
    c_in = block_moment(n, m * h, 1.0 - n - alpha) / n
    axis = p.ndim - n - 1

    def one(q):
        return mu * sum(
            _accel.stencil_correlate(q[a], W[a]) + c_in * _central_difference(q[a], a, h) for a in range(n)
        )

    if axis == 0:
        return one(p)
    return np.stack([one(q) for q in p])


def riesz_potential(u: np.ndarray, grid: GridSpec, order: float, r_in: float, r_out: float) -> np.ndarray:
    n, h = grid.dim, grid.spacing
    m, P = stencil_extent(grid, r_in, r_out)
    W = _stencil(grid, "even", order - n, m, P)[0]
    c0 = block_moment(n, m * h, order - n)
    return (_accel.stencil_correlate(u, W) + c0 * u) / riesz_gamma(n, order)


def frac_laplacian(u: np.ndarray, grid: GridSpec, s: float, r_in: float, r_out: float) -> np.ndarray:
    """``nu_{n,2s} * int (u(y) - u(x)) |y - x|^(-n-2s) dy`` (a positive operator since nu < 0).

    The far field beyond the cube is added analytically assuming ``u`` vanishes there.
    """
    n, h = grid.dim, grid.spacing
    m, P = stencil_extent(grid, r_in, r_out)
    _, _, nu = frac_constants(n, 2.0 * s)
    W = _stencil(grid, "even", -n - 2.0 * s, m, P)[0]
    c2 = block_moment(n, m * h, 2.0 - n - 2.0 * s) / n
    lap = sum(_second_difference(u, a, h) for a in range(n))
    tail = cube_tail(n, P * h, -n - 2.0 * s)
    return nu * (_accel.stencil_correlate(u, W) - u * W.sum() + 0.5 * c2 * lap - u * tail)


def leibniz_remainder(
    u: np.ndarray, psi: np.ndarray, grid: GridSpec, alpha: float, r_in: float, r_out: float
) -> np.ndarray:
    """Bilinear nonlocal remainder; the inner block drops out (its leading term is odd)."""
    n = grid.dim
    m, P = stencil_extent(grid, r_in, r_out)
    mu, _, _ = frac_constants(n, alpha)
    W = _stencil(grid, "odd", -n - alpha, m, P)
    return np.stack([mu * _accel.pair_remainder(u, psi, W[a]) for a in range(n)])
