"""Linear-growth integrands, recession functions, scalar envelopes and energies.

Integrands are evaluated in batches: ``x`` has shape ``(P, dim)`` and ``A``
has shape ``(P, m, dim)``; the result has shape ``(P,)``.  Fractional
gradients of scalar fields are treated as ``1 x dim`` matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _accel
from .core import DomainMask, Field, GridSpec
from .ops import OperatorBackend, frac_gradient

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]
Profile = Callable[[np.ndarray, np.ndarray], np.ndarray]

_ENVELOPE_CHUNK = 2048


def _zero_weight(x: np.ndarray) -> np.ndarray:
    return np.zeros(len(x))


@dataclass(frozen=True)
class Integrand:
    """``f(x, A)`` with the constants of the growth and coercivity bounds.

    Parameters
    ----------
    eval : callable
        Batched evaluation ``eval(x, A)``.
    growth_M, growth_a : float, callable
        Upper bound ``|f(x, A)| <= M |A| + a(x)``.
    coercivity_mu, coercivity_c : float
        Lower bound ``mu |A| - c <= f(x, A)``.
    known_recession, known_envelope : callable, optional
        Closed forms of ``f^inf`` and of the convex envelope in ``A``.
    is_convex_in_A : bool
        Declared convexity; convex integrands are their own envelope.
    profile : callable, optional
        For radial integrands ``f(x, A) = profile(x, |A|)``; ``profile`` takes
        ``x`` of shape ``(P, dim)`` and ``t`` of shape ``(P, S)``.
    """

    eval: Evaluator
    growth_M: float
    growth_a: Callable[[np.ndarray], np.ndarray] = _zero_weight
    coercivity_mu: float = 1.0
    coercivity_c: float = 0.0
    known_recession: Evaluator | None = None
    known_envelope: Evaluator | None = None
    is_convex_in_A: bool = False
    profile: Profile | None = None
    name: str = "custom"

    def __post_init__(self):
        if not self.growth_M > 0 or not self.coercivity_mu > 0 or self.coercivity_c < 0:
            raise ValueError("growth/coercivity constants must be positive")

    def __call__(self, x: np.ndarray, A: np.ndarray) -> np.ndarray:
        x, A = _batch(x, A)
        return np.asarray(self.eval(x, A), dtype=float)

    def audit(self, dim: int, rng: np.random.Generator, probes: int = 256, rows: int = 1, box: float = 1.0,
              scale: float = 10.0) -> dict:
        """Worst violations of the declared growth and coercivity bounds on random probes.

        Non-positive entries mean the bounds held on every probe.
        """
        x = rng.uniform(-box, box, size=(probes, dim))
        A = rng.standard_normal((probes, rows, dim)) * rng.exponential(scale, size=(probes, 1, 1))
        v = self(x, A)
        nA = _frob(A)
        growth = np.abs(v) - (self.growth_M * nA + self.growth_a(x))
        coerc = (self.coercivity_mu * nA - self.coercivity_c) - v
        return {"growth": float(growth.max()), "coercivity": float(coerc.max())}


def _batch(x, A) -> tuple[np.ndarray, np.ndarray]:
    A = np.asarray(A, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1, 1)
    elif A.ndim == 1:
        A = A.reshape(1, 1, -1)
    elif A.ndim == 2:
        A = A[None]
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] == 1 and A.shape[0] > 1:
        x = np.repeat(x, A.shape[0], axis=0)
    return x, A


def _frob(A: np.ndarray) -> np.ndarray:
    return np.sqrt((A**2).sum(axis=(-2, -1)))


def _radial(profile: Profile) -> Evaluator:
    def ev(x, A):
        return profile(x, _frob(A)[:, None])[:, 0]

    return ev


def _sampler(b) -> Callable[[np.ndarray], np.ndarray]:
    """Callable ``x -> b(x)`` from a callable, a constant, or a Field (nearest node)."""
    if isinstance(b, Field):
        g, vals = b.grid, b.values
        h, L, n = g.spacing, g.box_halfwidth, g.points_per_axis

        def at(x):
            idx = np.rint((np.asarray(x, dtype=float) + L) / h).astype(int)
            inside = np.all((idx >= 0) & (idx < n), axis=1)
            out = np.zeros(len(idx))
            out[inside] = vals[tuple(idx[inside].T)]
            return out

        return at
    if callable(b):
        return b
    const = float(b)
    return lambda x: np.full(len(x), const)


def area_integrand() -> Integrand:
    """``sqrt(1 + |A|^2) - 1``."""

    def prof(x, t):
        return np.sqrt(1.0 + t**2) - 1.0

    return Integrand(
        eval=_radial(prof),
        growth_M=1.0,
        coercivity_mu=1.0,
        coercivity_c=1.0,
        known_recession=lambda x, A: _frob(A),
        known_envelope=_radial(prof),
        is_convex_in_A=True,
        profile=prof,
        name="area",
    )


def abs_integrand() -> Integrand:
    """``|A|``."""

    def prof(x, t):
        return np.abs(t)

    return Integrand(
        eval=_radial(prof),
        growth_M=1.0,
        known_recession=lambda x, A: _frob(A),
        known_envelope=_radial(prof),
        is_convex_in_A=True,
        profile=prof,
        name="abs",
    )


def well_integrand(b, b_sup: float | None = None) -> Integrand:
    """Nonconvex ``||A| - b(x)|`` with ``b >= 0``; its envelope is ``(|A| - b(x))_+``.

    ``b`` may be a constant, a callable of ``x`` or a scalar Field.
    """
    bx = _sampler(b)
    if b_sup is None:
        b_sup = float(np.max(b.values)) if isinstance(b, Field) else (float(b) if not callable(b) else 1.0)

    def prof(x, t):
        return np.abs(np.abs(t) - bx(x)[:, None])

    def env(x, A):
        return np.maximum(_frob(A) - bx(x), 0.0)

    return Integrand(
        eval=_radial(prof),
        growth_M=1.0,
        growth_a=bx,
        coercivity_mu=1.0,
        coercivity_c=max(b_sup, 1e-300),
        known_recession=lambda x, A: _frob(A),
        known_envelope=env,
        is_convex_in_A=False,
        profile=prof,
        name="well",
    )


# -- recession ---------------------------------------------------------------


@dataclass(frozen=True)
class RecessionEstimate:
    value: float
    exists: bool
    oscillation: float
    quotients: tuple[float, ...] = ()

    def __float__(self) -> float:
        return self.value


def default_schedule() -> list[float]:
    return [10.0**k for k in np.arange(2.0, 6.5, 0.5)]


def recession_estimate(f, x, A, t_schedule: Sequence[float] | None = None, tol: float = 1e-6) -> RecessionEstimate:
    """Limit of ``f(x, tA)/t`` along ``t_schedule``.

    The increments ``(f(x, t_{j+1} A) - f(x, t_j A)) / (t_{j+1} - t_j)`` remove the
    ``O(1/t)`` term of the quotients; the last one is the estimate.  If the
    tail of the increments spreads more than ``tol`` (relative) the strong
    limit is flagged as non-existent and the limsup over the tail is returned.

    ``f`` may be an :class:`Integrand` or any callable with the same
    batched signature.
    """
    t = np.asarray(default_schedule() if t_schedule is None else t_schedule, dtype=float)
    if t.size < 3 or np.any(np.diff(t) <= 0):
        raise ValueError("t_schedule must be increasing with at least 3 entries")
    if t[-1] < 1e6:
        raise ValueError("t_schedule must reach 1e6")
    A = np.asarray(A, dtype=float)
    A = A.reshape((1,) * (2 - min(A.ndim, 2)) + A.shape) if A.ndim < 2 else A
    xs = np.repeat(np.atleast_2d(np.asarray(x, dtype=float)), len(t), axis=0)
    vals = np.asarray(f(xs, t[:, None, None] * A[None]), dtype=float)
    q = vals / t
    slopes = np.diff(vals) / np.diff(t)
    tail = slopes[len(slopes) // 2 :]
    scale = max(1.0, float(np.abs(tail).max()))
    spread = float(tail.max() - tail.min()) / scale
    exists = spread <= tol
    value = float(slopes[-1]) if exists else float(tail.max())
    return RecessionEstimate(value, bool(exists), spread, tuple(float(v) for v in q))


# -- convex envelope ----------------------------------------------------------


@dataclass(frozen=True)
class Envelope1D:
    """Lower convex envelope of sampled ``(t, f(t))``, extended linearly beyond the window."""

    knots: np.ndarray
    values: np.ndarray

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k, v = self.knots, self.values
        out = np.interp(t, k, v)
        if len(k) >= 2:
            lo, hi = t < k[0], t > k[-1]
            sl = (v[1] - v[0]) / (k[1] - k[0])
            sr = (v[-1] - v[-2]) / (k[-1] - k[-2])
            out = np.where(lo, v[0] + sl * (t - k[0]), out)
            out = np.where(hi, v[-1] + sr * (t - k[-1]), out)
        return out

    def slopes(self) -> tuple[float, float]:
        k, v = self.knots, self.values
        return (float((v[1] - v[0]) / (k[1] - k[0])), float((v[-1] - v[-2]) / (k[-1] - k[-2])))


def convex_envelope_1d(f, x, samples, direction=None) -> Envelope1D:
    """Convex envelope of ``t -> f(x, t E)`` from the lower hull of its samples.

    ``E`` is ``direction`` (a matrix, default the first unit matrix).  ``f``
    may be an Integrand, a batched callable, or a plain scalar function of ``t``.
    """
    t = np.asarray(samples, dtype=float)
    if t.ndim != 1 or t.size < 3:
        raise ValueError("need at least 3 samples")
    t = np.unique(t)
    if t.size < 3:
        raise ValueError("need at least 3 distinct samples")
    vals = _section(f, x, t, direction)
    idx = _accel.lower_hull(t, vals)
    return Envelope1D(t[idx].copy(), vals[idx].copy())


def _section(f, x, t: np.ndarray, direction) -> np.ndarray:
    if not isinstance(f, Integrand) and x is None:
        return np.asarray(f(t), dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    E = np.zeros((1, x.shape[1])) if direction is None else np.asarray(direction, dtype=float).reshape(-1, x.shape[1])
    if direction is None:
        E[0, 0] = 1.0
    return np.asarray(f(np.repeat(x, len(t), axis=0), t[:, None, None] * E[None]), dtype=float)


def envelope_at(f: Integrand, x: np.ndarray, A: np.ndarray, samples: int = 2049, window: float | None = None) -> np.ndarray:
    """Convex envelope ``f^c(x_i, A_i)`` for a batch, in the scalar (``m = 1``) case.

    Uses ``known_envelope`` when supplied, ``f`` itself when convex, and
    otherwise the lower hull of ``t -> profile(x, |t|)`` per node (radial
    integrands) or of ``t -> f(x, t)`` (``dim = 1``).
    """
    x, A = _batch(x, A)
    if f.known_envelope is not None:
        return np.asarray(f.known_envelope(x, A), dtype=float)
    if f.is_convex_in_A:
        return f(x, A)
    if A.shape[1] != 1 or (f.profile is None and A.shape[2] != 1):
        raise ValueError("envelope of a vectorial integrand needs known_envelope")
    if f.profile is not None:
        a = _frob(A)
        sec = f.profile
    else:
        a = A[:, 0, 0]

        def sec(xx, tt):
            P, S = tt.shape
            return f.eval(np.repeat(xx, S, axis=0), tt.reshape(-1, 1, 1)).reshape(P, S)

    T = window if window is not None else max(4.0, 2.0 * float(np.abs(a).max()))
    t = np.linspace(-T, T, samples)
    out = np.empty(len(a))
    for s in range(0, len(a), _ENVELOPE_CHUNK):
        sl = slice(s, s + _ENVELOPE_CHUNK)
        F = sec(x[sl], np.broadcast_to(t, (len(x[sl]), samples)).copy())
        env = _accel.lower_envelope_batch(t, F)
        # uniform knots: linear interpolation by index arithmetic
        pos = np.clip((a[sl] + T) / (2 * T) * (samples - 1), 0, samples - 1)
        i0 = np.minimum(pos.astype(int), samples - 2)
        w = pos - i0
        r = np.arange(len(i0))
        out[sl] = (1 - w) * env[r, i0] + w * env[r, i0 + 1]
    return out


def envelope_recession(f: Integrand, x, A, window: float = 1e3, samples: int = 4097) -> RecessionEstimate:
    """``(f^c)^#(x, A)`` by :func:`recession_estimate` applied to the envelope."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    A = np.asarray(A, dtype=float).reshape(1, -1, x.shape[1])
    if f.is_convex_in_A:
        if f.known_recession is not None:
            v = float(f.known_recession(x, A)[0])
            return RecessionEstimate(v, True, 0.0)
        return recession_estimate(f, x[0], A[0])
    nA = float(_frob(A)[0])
    if nA == 0.0:
        return RecessionEstimate(0.0, True, 0.0)
    if f.known_envelope is not None:
        return recession_estimate(lambda xx, AA: f.known_envelope(xx, AA), x[0], A[0])
    unit = A / nA
    env = convex_envelope_1d(f, x, np.linspace(-window, window, samples), direction=unit[0])
    est = recession_estimate(lambda xx, AA: env(_signed_len(AA, unit[0])), x[0], unit[0])
    return RecessionEstimate(est.value * nA, est.exists, est.oscillation, est.quotients)


def _signed_len(A: np.ndarray, unit: np.ndarray) -> np.ndarray:
    return (A * unit[None]).sum(axis=(-2, -1))


def recession_condition_gap(f: Integrand, x, A, radius: float = 1e-3, probes: int = 8, seed: int = 0) -> float:
    """Spread between the x-frozen ``(f^c)^#(x, A)`` and nearby values ``(f^c)^#(x', A)``.

    A small return value is the numerical evidence that the limsup over
    ``x' -> x`` agrees with the frozen limit at this probe.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float).reshape(-1)
    base = envelope_recession(f, x, A).value
    worst = 0.0
    for _ in range(probes):
        xp = x + rng.uniform(-radius, radius, size=x.shape)
        worst = max(worst, abs(envelope_recession(f, xp, A).value - base))
    return worst


# -- measures and energies ----------------------------------------------------


@dataclass(frozen=True)
class Atom:
    location: tuple[float, ...]
    weight: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "location", tuple(float(c) for c in np.atleast_1d(self.location)))
        w = np.atleast_1d(np.asarray(self.weight, dtype=float))
        w = w.reshape(-1, len(self.location)) if w.ndim < 2 else w
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)

    @property
    def mass(self) -> float:
        return float(np.sqrt((self.weight**2).sum()))


@dataclass(frozen=True)
class MeasureDecomp:
    """``density dx + sum_j weight_j delta_{location_j}``.

    ``density`` is a vector field (scalar ``u``) or matrix field; atom weights
    are ``m x dim`` matrices.
    """

    density: Field
    atoms: tuple[Atom, ...] = ()

    def __post_init__(self):
        if self.density.rank == "scalar":
            raise ValueError("density must be vector or matrix valued")
        atoms = tuple(a if isinstance(a, Atom) else Atom(*a) for a in self.atoms)
        object.__setattr__(self, "atoms", atoms)

    @property
    def grid(self) -> GridSpec:
        return self.density.grid

    def total_variation(self, where: np.ndarray | None = None) -> float:
        return self.density.norm_l1(where) + sum(a.mass for a in self.atoms)

    def check_support(self, mask: DomainMask) -> None:
        for a in self.atoms:
            if not mask.contains(a.location, closed=True):
                raise ValueError(f"atom at {a.location} lies outside the closure of Omega")

    def density_matrix(self) -> np.ndarray:
        """Density reshaped to ``(P, m, dim)`` over grid nodes (C order)."""
        return _as_matrix(self.density)


def _as_matrix(F: Field) -> np.ndarray:
    g = F.grid
    v = F.values
    if F.rank == "vector":
        v = v[None]
    m = v.shape[0]
    return np.moveaxis(v.reshape(m, g.dim, -1), -1, 0)


def _nodes(grid: GridSpec) -> np.ndarray:
    return grid.coords().reshape(grid.dim, -1).T


@dataclass
class EnergyReport:
    bulk_omega: float
    singular_omega_bar: float
    exterior: float
    total: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        parts = self.bulk_omega + self.singular_omega_bar + self.exterior
        if self.total is None:
            self.total = parts
        elif not np.isclose(self.total, parts, rtol=1e-12, atol=1e-14):
            raise ValueError("total must equal the sum of its parts")

    def to_dict(self) -> dict:
        return {
            "bulk_omega": self.bulk_omega,
            "singular_omega_bar": self.singular_omega_bar,
            "exterior": self.exterior,
            "total": self.total,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        from .io import dumps_json

        return dumps_json(self.to_dict())


def _split(values: np.ndarray, mask: DomainMask) -> tuple[float, float]:
    h = mask.grid.cell_volume
    om = mask.omega.reshape(-1)
    return float(np.sum(values[om]) * h), float(np.sum(values[~om]) * h)


def _meta(mask: DomainMask, backend: OperatorBackend | None, f: Integrand) -> dict:
    out = {"grid": mask.grid.to_dict(), "integrand": f.name}
    if backend is not None:
        out["alpha"] = backend.alpha
        out["backend"] = backend.to_dict()
    return out


def check_complementary(u: Field, g: Field, mask: DomainMask, tol: float = 1e-12) -> None:
    if u.grid != g.grid:
        raise ValueError("u and g live on different grids")
    ext = mask.exterior
    if ext.any():
        err = float(np.abs(u.values - g.values)[ext].max())
        if err > tol:
            raise ValueError(f"u differs from g on the exterior by {err:.3e}")


def energy_plain(u: Field, g: Field, mask: DomainMask, f: Integrand, backend: OperatorBackend) -> EnergyReport:
    """``int f(x, grad^a u) dx`` over the box, split into Omega and exterior."""
    check_complementary(u, g, mask)
    du = frac_gradient(u, backend)
    vals = f(_nodes(u.grid), _as_matrix(du))
    bulk, ext = _split(vals, mask)
    return EnergyReport(bulk, 0.0, ext, metadata=_meta(mask, backend, f))


def _atom_recession(f: Integrand, atom: Atom, relaxed: bool) -> float:
    if atom.mass == 0.0:
        return 0.0
    x = np.asarray(atom.location)[None]
    unit = atom.weight / atom.mass
    if relaxed:
        est = envelope_recession(f, x, unit)
    elif f.known_recession is not None:
        return float(f.known_recession(x, unit[None])[0]) * atom.mass
    else:
        est = recession_estimate(f, x[0], unit)
    if not est.exists:
        raise ValueError(f"recession function does not exist at atom {atom.location}")
    return est.value * atom.mass


def energy_extended(mu: MeasureDecomp, mask: DomainMask, f: Integrand) -> EnergyReport:
    """Bulk terms from the density plus ``f^inf`` integrated against the atoms."""
    mu.check_support(mask)
    vals = f(_nodes(mu.grid), mu.density_matrix())
    bulk, ext = _split(vals, mask)
    sing = sum(_atom_recession(f, a, relaxed=False) for a in mu.atoms)
    return EnergyReport(bulk, float(sing), ext, metadata=_meta(mask, None, f))


def energy_relaxed(u_density: Field, atoms: Sequence, g: Field | None, mask: DomainMask, f: Integrand,
                   backend: OperatorBackend | None = None) -> EnergyReport:
    """Envelope on Omega, recession of the envelope on the atoms, ``f`` outside.

    ``u_density`` is either the scalar field ``u`` (its fractional gradient is
    taken with ``backend`` after the exterior check against ``g``) or the
    density of ``D^a u`` itself (vector or matrix field).
    """
    if u_density.rank == "scalar":
        if backend is None or g is None:
            raise ValueError("a scalar u needs g and a backend")
        check_complementary(u_density, g, mask)
        dens = frac_gradient(u_density, backend)
    else:
        dens = u_density
    mu = MeasureDecomp(dens, tuple(atoms))
    mu.check_support(mask)
    x = _nodes(dens.grid)
    A = mu.density_matrix()
    om = mask.omega.reshape(-1)
    h = dens.grid.cell_volume
    bulk = float(np.sum(envelope_at(f, x[om], A[om])) * h) if om.any() else 0.0
    ext = float(np.sum(f(x[~om], A[~om])) * h) if (~om).any() else 0.0
    sing = sum(_atom_recession(f, a, relaxed=True) for a in mu.atoms)
    return EnergyReport(bulk, float(sing), ext, metadata=_meta(mask, backend, f))


def area_functional(mu: MeasureDecomp, mask: DomainMask, region: str = "omega_bar") -> float:
    """``int_U sqrt(1 + |density|^2) dx + |atoms|(U)`` for a named region ``U``.

    Nodes are assigned with the open mask for both ``omega`` and
    ``omega_bar``; atoms on the boundary count only for ``omega_bar``.
    """
    sel = mask.region(region).reshape(-1)
    dens = np.sqrt(1.0 + (mu.density_matrix() ** 2).sum(axis=(1, 2)))
    total = float(np.sum(dens[sel]) * mu.grid.cell_volume)
    for a in mu.atoms:
        if _atom_in(a, mask, region):
            total += a.mass
    return total


def _atom_in(a: Atom, mask: DomainMask, region: str) -> bool:
    if region == "omega":
        return mask.contains(a.location)
    if region == "omega_bar":
        return mask.contains(a.location, closed=True)
    if region == "omega_prime":
        return mask.distance(a.location) < mask.prime_radius
    if region == "box":
        L = mask.grid.box_halfwidth
        return all(-L <= c < L for c in a.location)
    raise ValueError(f"unknown region {region!r}")


def matrix_area(A: np.ndarray) -> np.ndarray:
    """``<A> = sqrt(1 + |A|^2)`` for a batch of matrices."""
    return np.sqrt(1.0 + _frob(np.asarray(A, dtype=float)) ** 2)
