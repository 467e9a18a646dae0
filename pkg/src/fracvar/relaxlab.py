"""Constructed experiments: BV lifts, laminates, mollified competitors and probes.

Every experiment that produces a sequence reports a :class:`SequenceDiagnostics`
with one entry per sequence element.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DomainMask, Field, GridSpec, bump_profile, bump_profile_derivative, smooth_cutoff
from .functionals import (
    Atom,
    MeasureDecomp,
    area_functional,
    area_integrand,
    energy_plain,
    energy_relaxed,
    well_integrand,
)
from .io import dumps_json
from .ops import OperatorBackend, frac_gradient, frac_laplacian, spectral


@dataclass
class SequenceDiagnostics:
    l1_distance_to_limit: list[float]
    energy_values: list[float]
    exterior_gradient_l1_error: list[float]
    area_functional_values: list[float]
    summary: dict = field(default_factory=dict)

    _COLUMNS = ("l1_distance_to_limit", "energy_values", "exterior_gradient_l1_error", "area_functional_values")

    def __post_init__(self):
        n = {len(getattr(self, c)) for c in self._COLUMNS}
        if len(n) != 1:
            raise ValueError("diagnostic lists must share one length")

    def __len__(self) -> int:
        return len(self.energy_values)

    def to_dict(self) -> dict:
        out = {c: [float(v) for v in getattr(self, c)] for c in self._COLUMNS}
        out["summary"] = self.summary
        return out

    def to_json(self) -> str:
        return dumps_json(self.to_dict())

    def write_csv(self, path: str | Path, index: Sequence | None = None, comment: str | None = None) -> None:
        """One row per sequence element; ``comment`` becomes a leading ``#`` line."""
        idx = list(range(len(self))) if index is None else list(index)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if comment:
                fh.write("# " + comment.replace("\n", " ") + "\n")
            w = csv.writer(fh)
            w.writerow(("index",) + self._COLUMNS)
            for i, row in enumerate(zip(*(getattr(self, c) for c in self._COLUMNS))):
                w.writerow([idx[i]] + [f"{v:.17g}" for v in row])


# -- BV functions with known derivative ---------------------------------------


@dataclass(frozen=True)
class ConstructedBV:
    """A sampled BV function together with its exact distributional gradient."""

    field: Field
    density: Field
    atoms: tuple[Atom, ...] = ()

    def measure(self) -> MeasureDecomp:
        return MeasureDecomp(self.density, self.atoms)


def zero_bv(grid: GridSpec) -> ConstructedBV:
    z = np.zeros(grid.shape)
    return ConstructedBV(Field(grid, z), Field(grid, np.zeros((grid.dim,) + grid.shape), "vector"))


def piecewise_linear_bv(grid: GridSpec, segments: Sequence[tuple[float, float, float, float]]) -> ConstructedBV:
    """1-D function equal to the linear interpolant ``va -> vb`` on each ``[a, b]`` and 0 elsewhere.

    Segments must not overlap.  Jumps sit at the segment ends; a node that
    falls exactly on a jump takes the mean of the one-sided limits.
    """
    if grid.dim != 1:
        raise ValueError("piecewise_linear_bv is one-dimensional")
    segs = sorted((float(a), float(b), float(va), float(vb)) for a, b, va, vb in segments)
    for (a0, b0, *_), (a1, *_r) in zip(segs, segs[1:]):
        if a1 < b0:
            raise ValueError("segments overlap")
    for a, b, *_ in segs:
        if not a < b:
            raise ValueError("each segment needs a < b")
        if a <= -grid.box_halfwidth or b >= grid.box_halfwidth:
            raise ValueError("segments must lie inside the box")
    x = grid.axis()
    tol = 1e-9 * grid.spacing
    v = np.zeros_like(x)
    dv = np.zeros_like(x)
    jumps: dict[float, float] = {}
    for a, b, va, vb in segs:
        slope = (vb - va) / (b - a)
        inside = (x > a + tol) & (x < b - tol)
        v[inside] = va + slope * (x[inside] - a)
        dv[inside] = slope
        jumps[a] = jumps.get(a, 0.0) + va
        jumps[b] = jumps.get(b, 0.0) - vb
    atoms = []
    for loc, w in sorted(jumps.items()):
        on = np.abs(x - loc) <= tol
        if on.any():
            left = _limit(segs, loc, side=-1)
            right = _limit(segs, loc, side=+1)
            v[on] = 0.5 * (left + right)
        if w != 0.0:
            atoms.append(Atom((loc,), np.array([[w]])))
    return ConstructedBV(Field(grid, v), Field(grid, dv[None], "vector"), tuple(atoms))


def _limit(segs, x0: float, side: int) -> float:
    for a, b, va, vb in segs:
        if side < 0 and a < x0 <= b:
            return va + (vb - va) * (x0 - a) / (b - a)
        if side > 0 and a <= x0 < b:
            return va + (vb - va) * (x0 - a) / (b - a)
    return 0.0


def indicator_bv(grid: GridSpec, a: float, b: float) -> ConstructedBV:
    """``1_[a, b]`` with atoms ``+1`` at ``a`` and ``-1`` at ``b``."""
    return piecewise_linear_bv(grid, [(a, b, 1.0, 1.0)])


def bump_bv(grid: GridSpec, center: Sequence[float], radius: float, height: float = 1.0) -> ConstructedBV:
    """Smooth bump; its derivative is absolutely continuous."""
    c = np.asarray(center, dtype=float)
    r = grid.radius_from(c)
    vals = height * bump_profile(r / radius)
    dprof = height * bump_profile_derivative(r / radius) / radius
    x = grid.coords()
    rs = np.where(r > 0, r, 1.0)
    grad = np.stack([dprof * (x[a] - c[a]) / rs for a in range(grid.dim)])
    return ConstructedBV(Field(grid, vals), Field(grid, grad, "vector"))


def bv_lift(v, alpha: float, backend: OperatorBackend | None = None) -> tuple[Field, MeasureDecomp]:
    """``u = (-Delta)^((1-alpha)/2) v`` and the exact decomposition of ``D^alpha u = Dv``.

    ``v`` must be a :class:`ConstructedBV` (or an identically zero Field).
    """
    if isinstance(v, Field):
        if v.rank != "scalar" or np.any(v.values != 0.0):
            raise ValueError("bv_lift needs a ConstructedBV with known derivative")
        v = zero_bv(v.grid)
    if not isinstance(v, ConstructedBV):
        raise TypeError("bv_lift needs a ConstructedBV")
    backend = (backend or OperatorBackend.spectral(alpha)).with_alpha(alpha)
    u = frac_laplacian(v.field, (1.0 - alpha) / 2.0, backend)
    return u, v.measure()


# -- laminates -----------------------------------------------------------------


def triangle_wave(t: np.ndarray) -> np.ndarray:
    """Zero-mean 1-periodic wave with slopes +-1."""
    return np.abs(t - np.round(t)) - 0.25


def default_cutoff(mask: DomainMask, inner: float = 0.9, outer: float = 0.98) -> Field:
    """Smooth ``chi`` equal to 1 within ``inner * R`` and exactly 0 from ``outer * R`` (ball masks)."""
    if mask.shape != "ball":
        raise ValueError("default cutoff needs a ball mask")
    return smooth_cutoff(mask.grid, mask.center, inner * mask.radius, outer * mask.radius)


def laminate_sequence(amplitude_profile: Field, direction: Sequence[float], frequencies: Sequence[int],
                      mask: DomainMask, alpha: float, chi: Field | None = None,
                      base: Field | None = None) -> list[Field]:
    """``w_k = base + chi * (-Delta)^((1-alpha)/2) [a(x) T(k x.e) / k]`` for each ``k``.

    ``T`` is :func:`triangle_wave`, so the classical gradient of the bracket
    is ``+-a(x) e`` up to ``O(1/k)``.  ``chi`` defaults to
    :func:`default_cutoff`; the lift is spectral.
    """
    g = mask.grid
    if amplitude_profile.grid != g:
        raise ValueError("amplitude profile and mask live on different grids")
    if np.any(amplitude_profile.values[mask.exterior] != 0.0):
        raise ValueError("amplitude profile must be supported in Omega")
    ks = [int(k) for k in frequencies]
    if not ks or any(k < 1 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("frequencies must be positive and increasing")
    e = np.asarray(direction, dtype=float)
    if e.shape != (g.dim,) or not np.isclose(np.linalg.norm(e), 1.0):
        raise ValueError("direction must be a unit vector")
    nyquist = 1.0 / (2.0 * g.spacing)
    if ks[-1] * np.abs(e).max() > nyquist:
        raise ValueError(f"frequency {ks[-1]} exceeds the grid Nyquist frequency {nyquist:g}")
    chi = default_cutoff(mask) if chi is None else chi
    if np.any(chi.values[mask.exterior] != 0.0):
        raise ValueError("cutoff must vanish outside Omega")
    b0 = np.zeros(g.shape) if base is None else base.values
    phase = np.tensordot(e, g.coords(), axes=1)
    s = (1.0 - alpha) / 2.0
    out = []
    for k in ks:
        vk = amplitude_profile.values * triangle_wave(k * phase) / k
        uk = spectral.frac_laplacian(vk, g, s)
        w = b0 + chi.values * uk
        # exact complementary values, independent of roundoff in the lift
        w[mask.exterior] = b0[mask.exterior]
        out.append(Field(g, w))
    return out


def _l1(values: np.ndarray, grid: GridSpec, where=None) -> float:
    a = np.abs(values)
    if a.ndim > grid.dim:
        a = np.sqrt((values**2).sum(axis=0))
    return float(a.sum(where=True if where is None else where) * grid.cell_volume)


def relaxation_gap_demo(b_profile: Field, alpha: float, mask: DomainMask, frequencies: Sequence[int],
                        integrand: str = "well", base: Field | None = None,
                        backend: OperatorBackend | None = None) -> SequenceDiagnostics:
    """Energies ``F(w_k)`` along the laminate with amplitude ``b`` for ``f = ||A| - b(x)|``.

    With ``integrand="area"`` the convex area integrand is evaluated on the
    same sequence instead (optionally around a nonzero ``base``), where no
    gap is expected.  The summary holds ``F(limit)``, ``min_k F(w_k)``, the
    gap between them and the relaxed value at the limit.
    """
    g = mask.grid
    if np.any(b_profile.values < 0) or np.any(b_profile.values > 1):
        raise ValueError("b must take values in [0, 1]")
    backend = (backend or OperatorBackend.spectral(alpha)).with_alpha(alpha)
    e = np.zeros(g.dim)
    e[0] = 1.0
    seq = laminate_sequence(b_profile, e, frequencies, mask, alpha, base=base)
    limit = Field(g, np.zeros(g.shape)) if base is None else base
    if integrand == "well":
        f = well_integrand(b_profile)
    elif integrand == "area":
        f = area_integrand()
    else:
        raise ValueError(f"unknown integrand {integrand!r}")
    F_lim = energy_plain(limit, limit, mask, f, backend).total
    relaxed = energy_relaxed(limit, [], limit, mask, f, backend).total
    d_lim = frac_gradient(limit, backend).values
    outside = ~mask.omega_prime
    l1, en, ext, area = [], [], [], []
    for w in seq:
        dw = frac_gradient(w, backend).values
        l1.append(_l1(w.values - limit.values, g))
        en.append(energy_plain(w, limit, mask, f, backend).total)
        ext.append(_l1(dw - d_lim, g, outside))
        area.append(float(np.sum(np.sqrt(1.0 + (dw**2).sum(axis=0))[mask.omega]) * g.cell_volume))
    min_e = min(en)
    slack = 0.05
    monotone = all(b <= a * (1 + slack) + 1e-12 for a, b in zip(en, en[1:]))
    summary = {
        "integrand": integrand,
        "alpha": alpha,
        "frequencies": [int(k) for k in frequencies],
        "F_limit": F_lim,
        "min_energy": min_e,
        "gap": F_lim - min_e,
        "relaxed_prediction": relaxed,
        "monotone_with_slack": monotone,
        "l1_ratio_last_first": l1[-1] / l1[0] if l1[0] > 0 else 0.0,
    }
    return SequenceDiagnostics(l1, en, ext, area, summary)


# -- area-strict approximation ---------------------------------------------------


def mollifier(grid: GridSpec, delta: float) -> np.ndarray:
    """Standard bump of radius ``delta`` at the origin, normalised to unit discrete mass."""
    if not delta > grid.spacing:
        raise ValueError(f"delta {delta:g} does not exceed the grid spacing {grid.spacing:g}")
    k = bump_profile(grid.radius_from(np.zeros(grid.dim)) / delta)
    return k / (k.sum() * grid.cell_volume)


def area_strict_approx(u_target: Field, measure: MeasureDecomp, g: Field, mask: DomainMask,
                       deltas: Sequence[float], alpha: float,
                       backend: OperatorBackend | None = None) -> SequenceDiagnostics:
    """Competitors ``u_delta = g + eta_delta * (u_target - g)`` and their area functionals.

    ``measure`` is the exact decomposition of ``D^alpha u_target`` (from
    :func:`bv_lift`); its area functional over the closure of Omega is the
    target.  The support of ``u_target - g`` must sit compactly inside
    Omega, at distance larger than every ``delta`` from the boundary.
    """
    grid = mask.grid
    backend = (backend or OperatorBackend.spectral(alpha)).with_alpha(alpha)
    ds = [float(d) for d in deltas]
    if not ds or any(d <= 0 for d in ds) or any(b >= a for a, b in zip(ds, ds[1:])):
        raise ValueError("deltas must be positive and decreasing")
    diff = u_target.values - g.values
    support = diff != 0.0
    if support.any():
        gap = mask.radius - float(mask.distances()[support].max())
        if gap <= 0:
            raise ValueError("u_target - g is not supported inside Omega")
        if ds[0] >= gap:
            raise ValueError(f"delta {ds[0]:g} exceeds the distance {gap:g} of the support to the boundary")
    target = area_functional(measure, mask, "omega_bar")
    d_target = frac_gradient(u_target, backend).values
    ext = mask.exterior
    l1, tv, exterr, area = [], [], [], []
    for d in ds:
        ud = g.values + spectral.mollify(diff, grid, mollifier(grid, d)) if support.any() else g.values.copy()
        ud[ext] = g.values[ext]
        du = frac_gradient(Field(grid, ud), backend).values
        nrm = np.sqrt((du**2).sum(axis=0))
        l1.append(_l1(ud - u_target.values, grid))
        tv.append(float(nrm[mask.omega].sum() * grid.cell_volume))
        exterr.append(_l1(du - d_target, grid, ext))
        area.append(float(np.sqrt(1.0 + nrm[mask.omega] ** 2).sum() * grid.cell_volume))
    rel = abs(area[-1] - target) / target
    summary = {
        "alpha": alpha,
        "deltas": ds,
        "target_area": target,
        "relative_error_smallest_delta": rel,
        "max_undershoot": max(0.0, max(target - a for a in area)),
    }
    return SequenceDiagnostics(l1, tv, exterr, area, summary)


# -- probes ------------------------------------------------------------------------


@dataclass
class PoincareReport:
    C_hat: float
    ratios: list[float]
    resampled: int = 0

    def to_dict(self) -> dict:
        return {"C_hat": self.C_hat, "ratios": self.ratios, "resampled": self.resampled}


def random_bump_field(grid: GridSpec, mask: DomainMask, rng: np.random.Generator, max_bumps: int = 3) -> Field:
    """Superposition of 1..max_bumps smooth bumps supported strictly inside Omega."""
    R = mask.radius
    c0 = np.asarray(mask.center)
    vals = np.zeros(grid.shape)
    for _ in range(int(rng.integers(1, max_bumps + 1))):
        r = rng.uniform(0.15, 0.5) * R
        # uniform direction, then radius leaving room for the bump
        d = rng.standard_normal(grid.dim)
        d /= np.linalg.norm(d)
        off = rng.uniform(0.0, 0.95 * R - r) * d
        height = rng.standard_normal()
        vals += height * bump_profile(grid.radius_from(c0 + off) / r)
    vals[mask.exterior] = 0.0
    return Field(grid, vals)


def poincare_probe(mask: DomainMask, alpha: float, trials: int, seed: int = 0,
                   backend: OperatorBackend | None = None, max_bumps: int = 3) -> PoincareReport:
    """``(||u||_1 + |D^a u|(box)) / |D^a u|(Omega')`` over random bump superpositions in Omega."""
    if trials < 10:
        raise ValueError("trials must be at least 10")
    grid = mask.grid
    backend = (backend or OperatorBackend.spectral(alpha)).with_alpha(alpha)
    rng = np.random.default_rng(seed)
    ratios: list[float] = []
    resampled = 0
    while len(ratios) < trials:
        u = random_bump_field(grid, mask, rng, max_bumps)
        du = frac_gradient(u, backend)
        nrm = du.pointwise_norm()
        den = float(nrm[mask.omega_prime].sum() * grid.cell_volume)
        if den < 1e-14:
            resampled += 1
            if resampled > 10 * trials:
                raise RuntimeError("too many degenerate samples")
            continue
        num = u.norm_l1() + float(nrm.sum() * grid.cell_volume)
        ratios.append(num / den)
    return PoincareReport(max(ratios), ratios, resampled)


def strong_outside_probe(sequence: Sequence[Field], limit: Field, mask: DomainMask, alpha: float,
                         backend: OperatorBackend | None = None) -> list[float]:
    """``||grad^a u_j - grad^a u||_{L1}`` over the box minus ``Omega'``."""
    backend = (backend or OperatorBackend.spectral(alpha)).with_alpha(alpha)
    ext = mask.exterior
    d_lim = frac_gradient(limit, backend).values
    outside = ~mask.omega_prime
    out = []
    for j, u in enumerate(sequence):
        if u.grid != limit.grid:
            raise ValueError("all fields must share one grid")
        if np.any(u.values[ext] != limit.values[ext]):
            raise ValueError(f"sequence element {j} differs from the limit outside Omega")
        out.append(_l1(frac_gradient(u, backend).values - d_lim, u.grid, outside))
    return out


def locality_check(u: tuple[Field, MeasureDecomp], v: tuple[Field, MeasureDecomp], agreement_window: np.ndarray,
                   chi: Field, alpha: float, backend: OperatorBackend | None = None, tol: float = 1e-12) -> float:
    """Total variation of ``chi (D^a u - D^a v)``'s singular part plus ``|D^a(chi (u - v))|``.

    ``u`` and ``v`` are lifted fields paired with their known decompositions.
    Both terms vanish when ``u = v`` on the window containing ``supp chi``.
    """
    (fu, mu), (fv, mv) = u, v
    grid = fu.grid
    window = np.asarray(agreement_window, dtype=bool)
    if np.any(chi.values[~window] != 0.0):
        raise ValueError("chi must be supported in the agreement window")
    scale = max(1.0, float(np.abs(fu.values).max()))
    if np.any(np.abs(fu.values - fv.values)[window] > tol * scale):
        raise ValueError("u and v differ on the agreement window")
    backend = (backend or OperatorBackend.spectral(alpha)).with_alpha(alpha)
    h = grid.spacing
    L = grid.box_halfwidth

    def chi_at(loc):
        idx = tuple(int(np.rint((c + L) / h)) for c in loc)
        return float(chi.values[idx])

    diffs: dict[tuple, np.ndarray] = {}
    for sign, meas in ((1.0, mu), (-1.0, mv)):
        for a in meas.atoms:
            key = tuple(round(c, 12) for c in a.location)
            diffs[key] = diffs.get(key, 0.0) + sign * a.weight
    singular = sum(abs(chi_at(k)) * float(np.sqrt((w**2).sum())) for k, w in diffs.items())
    grid_term = _l1(frac_gradient(Field(grid, chi.values * (fu.values - fv.values)), backend).values, grid)
    return singular + grid_term
