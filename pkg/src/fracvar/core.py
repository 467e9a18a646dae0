"""Grids, masked domains, sampled fields and the Gamma-function constants.

The continuum operators live on all of R^n; here they are truncated to the
periodic box ``[-L, L)^dim`` sampled at ``N`` nodes per axis.  Node ``i``
along an axis sits at ``-L + i*h`` with ``h = 2L/N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

Rank = Literal["scalar", "vector", "matrix"]
Backend = Literal["spectral", "quadrature"]


class PoleError(ValueError):
    """Gamma function evaluated at a nonpositive integer."""


def gamma_fn(x: float) -> float:
    """Gamma function, raising :class:`PoleError` at the poles."""
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise PoleError(f"Gamma has a pole at {x}")
    return math.gamma(x)


def frac_constants(dim: int, alpha: float) -> tuple[float, float, float]:
    """Normalising constants ``(mu, gamma, nu)`` for dimension ``dim`` and order ``alpha``.

    ``mu`` scales the fractional gradient/divergence kernel, ``gamma`` is the
    Riesz potential normaliser and ``nu`` (negative for alpha in (0, 1))
    scales the fractional Laplacian kernel.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    n = dim
    mu = 2.0**alpha * math.pi ** (-n / 2) * gamma_fn((n + alpha + 1) / 2) / gamma_fn((1 - alpha) / 2)
    gam = riesz_gamma(n, alpha)
    nu = 2.0**alpha * math.pi ** (-n / 2) * gamma_fn((n + alpha) / 2) / gamma_fn(-alpha / 2)
    return mu, gam, nu


def riesz_gamma(dim: int, alpha: float) -> float:
    """``gamma_{n,alpha}``, valid for any alpha in (0, dim)."""
    if not 0.0 < alpha < dim:
        raise ValueError(f"Riesz order must lie in (0, {dim}), got {alpha}")
    return math.pi ** (dim / 2) * 2.0**alpha * gamma_fn(alpha / 2) / gamma_fn((dim - alpha) / 2)


@dataclass(frozen=True)
class GridSpec:
    """Periodic box ``[-L, L)^dim`` with ``points_per_axis`` nodes per axis."""

    dim: int
    points_per_axis: int
    box_halfwidth: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.points_per_axis < 4:
            raise ValueError("need at least 4 points per axis")
        if not self.box_halfwidth > 0:
            raise ValueError("box_halfwidth must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.box_halfwidth / self.points_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis, ``-L + i*h``."""
        return -self.box_halfwidth + self.spacing * np.arange(self.points_per_axis)

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(dim, *shape)``."""
        ax = self.axis()
        return np.stack(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    def node_coordinate(self, index: Sequence[int]) -> tuple[float, ...]:
        return tuple(-self.box_halfwidth + self.spacing * int(i) for i in index)

    def radius_from(self, center: Sequence[float]) -> np.ndarray:
        x = self.coords()
        c = np.asarray(center, dtype=float).reshape((self.dim,) + (1,) * self.dim)
        return np.sqrt(((x - c) ** 2).sum(axis=0))

    def refine(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.dim, self.points_per_axis * factor, self.box_halfwidth)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "n": self.points_per_axis, "box": self.box_halfwidth, "h": self.spacing}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Field:
    """Samples of a scalar, vector or matrix valued function on a grid.

    Components come first: a vector field has shape ``(dim, *grid.shape)``
    and a matrix field ``(m, dim, *grid.shape)``.
    """

    grid: GridSpec
    values: np.ndarray
    rank: Rank = "scalar"

    def __post_init__(self):
        vals = _frozen(self.values)
        object.__setattr__(self, "values", vals)
        g = self.grid
        expected = {"scalar": 0, "vector": 1, "matrix": 2}[self.rank]
        if vals.ndim != expected + g.dim or vals.shape[expected:] != g.shape:
            raise ValueError(f"{self.rank} field on {g.shape} grid cannot have shape {vals.shape}")
        if self.rank == "vector" and vals.shape[0] != g.dim:
            raise ValueError("vector field must have dim components")
        if self.rank == "matrix" and vals.shape[1] != g.dim:
            raise ValueError("matrix field must have dim columns")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")

    @property
    def component_shape(self) -> tuple[int, ...]:
        return self.values.shape[: self.values.ndim - self.grid.dim]

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def norm_l1(self, where: np.ndarray | None = None) -> float:
        return float(_pointwise_norm(self).sum(where=where if where is not None else True) * self.grid.cell_volume)

    def norm_l2(self) -> float:
        return float(np.sqrt((self.values**2).sum() * self.grid.cell_volume))

    def pointwise_norm(self) -> np.ndarray:
        return _pointwise_norm(self)

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values, self.rank)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values, self.rank)

    def scaled(self, c: float) -> "Field":
        return Field(self.grid, c * self.values, self.rank)


def _pointwise_norm(f: Field) -> np.ndarray:
    if f.rank == "scalar":
        return np.abs(f.values)
    k = f.values.ndim - f.grid.dim
    return np.sqrt((f.values**2).sum(axis=tuple(range(k))))


@dataclass(frozen=True)
class FracParams:
    alpha: float
    backend: Backend = "spectral"
    quad_inner_radius: float | None = None
    quad_outer_radius: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.backend not in ("spectral", "quadrature"):
            raise ValueError(f"unknown backend {self.backend!r}")
        for r in (self.quad_inner_radius, self.quad_outer_radius):
            if r is not None and not r > 0:
                raise ValueError("quadrature radii must be positive")

    def radii(self, grid: GridSpec) -> tuple[float, float]:
        """Resolved ``(inner, outer)`` radii, defaulting to ``(h, L)``."""
        r_in = grid.spacing if self.quad_inner_radius is None else self.quad_inner_radius
        r_out = grid.box_halfwidth if self.quad_outer_radius is None else self.quad_outer_radius
        if r_in < grid.spacing * (1 - 1e-12):
            raise ValueError("quad_inner_radius must be at least the grid spacing")
        if r_out > grid.box_halfwidth * (1 + 1e-12):
            raise ValueError("quad_outer_radius cannot exceed the box half-width")
        if r_out <= r_in:
            raise ValueError("quad_outer_radius must exceed quad_inner_radius")
        return r_in, r_out


@dataclass(frozen=True)
class DomainMask:
    """A ball (Euclidean) or cube (sup-norm) ``Omega`` and an enlarged ``Omega'``.

    Node masks are open sets: a node belongs to ``omega`` iff its distance
    from ``center`` is strictly below ``radius``.  The geometric description
    is kept so that point atoms can be classified exactly.
    """

    grid: GridSpec
    center: tuple[float, ...]
    radius: float
    prime_radius: float
    shape: Literal["ball", "cube"] = "ball"
    omega: np.ndarray = field(init=False, repr=False, compare=False)
    omega_prime: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        g = self.grid
        c = tuple(float(t) for t in self.center)
        if len(c) != g.dim:
            raise ValueError("center must have dim coordinates")
        object.__setattr__(self, "center", c)
        if not 0 < self.radius < self.prime_radius:
            raise ValueError("need 0 < radius < prime_radius")
        dist = self._distance(g.coords())
        om = dist < self.radius
        omp = dist < self.prime_radius
        reach = max(abs(ci) for ci in c) + self.prime_radius
        if reach >= g.box_halfwidth - g.spacing:
            raise ValueError("Omega' must stay a positive distance inside the box")
        if not om.any():
            raise ValueError("Omega contains no grid nodes")
        om.setflags(write=False)
        omp.setflags(write=False)
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "omega_prime", omp)

    def _distance(self, x: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center).reshape((-1,) + (1,) * (x.ndim - 1))
        d = np.abs(x - c)
        if self.shape == "cube":
            return d.max(axis=0)
        return np.sqrt((d**2).sum(axis=0))

    @property
    def exterior(self) -> np.ndarray:
        return ~self.omega

    def distances(self) -> np.ndarray:
        """Distance of every node from the centre (Euclidean or sup-norm)."""
        return self._distance(self.grid.coords())

    def distance(self, point: Sequence[float]) -> float:
        p = np.asarray(point, dtype=float).reshape(-1)
        return float(self._distance(p))

    def contains(self, point: Sequence[float], closed: bool = False, tol: float = 1e-12) -> bool:
        d = self.distance(point)
        return d <= self.radius + tol if closed else d < self.radius - tol

    def on_boundary(self, point: Sequence[float], tol: float = 1e-12) -> bool:
        return abs(self.distance(point) - self.radius) <= tol

    def volume(self) -> float:
        """Node-count volume of ``omega``."""
        return float(self.omega.sum() * self.grid.cell_volume)

    def region(self, name: str) -> np.ndarray:
        """Node mask for ``omega``, ``omega_bar``, ``omega_prime`` or ``box``."""
        if name in ("omega", "omega_bar"):
            return self.omega
        if name == "omega_prime":
            return self.omega_prime
        if name == "box":
            return np.ones(self.grid.shape, dtype=bool)
        raise ValueError(f"unknown region {name!r}")


def make_bump(grid: GridSpec, center: Sequence[float], radius: float, height: float = 1.0) -> Field:
    """Smooth bump ``exp(1 - 1/(1 - |x-c|^2/r^2))``, exactly zero off the ball."""
    c = np.asarray(center, dtype=float)
    if np.any(np.abs(c) + radius > grid.box_halfwidth):
        raise ValueError("bump ball does not fit inside the box")
    return Field(grid, height * bump_profile(grid.radius_from(c) / radius))


def bump_profile(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def bump_profile_derivative(r: np.ndarray) -> np.ndarray:
    """d/dr of :func:`bump_profile`."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    ri = r[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ri**2)) * (-2.0 * ri / (1.0 - ri**2) ** 2)
    return out


def smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)

    def psi(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    a, b = psi(t), psi(1.0 - t)
    return a / (a + b)


def smooth_cutoff(grid: GridSpec, center: Sequence[float], inner: float, outer: float) -> Field:
    """Cutoff equal to 1 on the ball of radius ``inner`` and exactly 0 beyond ``outer``."""
    if not 0 < inner < outer:
        raise ValueError("need 0 < inner < outer")
    r = grid.radius_from(center)
    return Field(grid, smooth_step((outer - r) / (outer - inner)))


def make_tent(grid: GridSpec, center: Sequence[float], radius: float, height: float = 1.0) -> Field:
    """Lipschitz tent ``height * max(0, 1 - |x-c|/radius)``."""
    r = grid.radius_from(center)
    return Field(grid, height * np.maximum(0.0, 1.0 - r / radius))


def make_indicator(grid: GridSpec, a: float, b: float) -> Field:
    """1-D indicator of ``[a, b]``; a node sitting exactly on a jump gets 1/2."""
    if grid.dim != 1:
        raise ValueError("make_indicator is one-dimensional")
    x = grid.axis()
    v = ((x > a) & (x < b)).astype(float)
    tol = 1e-9 * grid.spacing
    v[np.abs(x - a) <= tol] = 0.5
    v[np.abs(x - b) <= tol] = 0.5
    return Field(grid, v)
