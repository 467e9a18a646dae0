"""Hot loops: stencil correlation, the bilinear Leibniz sum and lower hulls.

Each kernel has a numba ``@njit`` implementation and a pure numpy/scipy
fallback computing the same discrete quantity.  ``FRACVAR_NUMBA=0`` (or a
missing numba) selects the fallback; ``FRACVAR_THREADS`` caps numba threads.
"""
from __future__ import annotations

import os

import numpy as np
from scipy.signal import correlate

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


# above this many multiply-adds the FFT correlation wins (see benchmarks/)
DIRECT_WORK_LIMIT = 3e5


def numba_enabled() -> bool:
    return HAVE_NUMBA and os.environ.get("FRACVAR_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


def _apply_thread_cap() -> None:
    cap = os.environ.get("FRACVAR_THREADS")
    if HAVE_NUMBA and cap:
        numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


def _support_box(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nz = np.nonzero(u)
    if len(nz[0]) == 0:
        return np.zeros(u.ndim, np.int64), -np.ones(u.ndim, np.int64)
    lo = np.array([a.min() for a in nz], dtype=np.int64)
    hi = np.array([a.max() for a in nz], dtype=np.int64)
    return lo, hi


if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _corr1_nb(u, w, lo, hi):
        n = u.shape[0]
        p = (w.shape[0] - 1) // 2
        out = np.zeros(n)
        for i in prange(n):
            a = max(lo, i - p)
            b = min(hi, i + p)
            s = 0.0
            for y in range(a, b + 1):
                s += w[y - i + p] * u[y]
            out[i] = s
        return out

    @njit(parallel=True, cache=True)
    def _corr2_nb(u, w, lo0, hi0, lo1, hi1):
        n0, n1 = u.shape
        p0 = (w.shape[0] - 1) // 2
        p1 = (w.shape[1] - 1) // 2
        out = np.zeros((n0, n1))
        for i in prange(n0):
            a0 = max(lo0, i - p0)
            b0 = min(hi0, i + p0)
            for j in range(n1):
                a1 = max(lo1, j - p1)
                b1 = min(hi1, j + p1)
                s = 0.0
                for y0 in range(a0, b0 + 1):
                    wr = y0 - i + p0
                    for y1 in range(a1, b1 + 1):
                        s += w[wr, y1 - j + p1] * u[y0, y1]
                out[i, j] = s
        return out

    @njit(parallel=True, cache=True)
    def _pair1_nb(u, psi, w):
        n = u.shape[0]
        p = (w.shape[0] - 1) // 2
        out = np.zeros(n)
        for i in prange(n):
            ui = u[i]
            pi = psi[i]
            s = 0.0
            for y in range(max(0, i - p), min(n - 1, i + p) + 1):
                s += w[y - i + p] * (u[y] - ui) * (psi[y] - pi)
            # nodes outside the box carry u = psi = 0
            for k in range(w.shape[0]):
                y = i + k - p
                if y < 0 or y >= n:
                    s += w[k] * ui * pi
            out[i] = s
        return out

    @njit(parallel=True, cache=True)
    def _pair2_nb(u, psi, w):
        n0, n1 = u.shape
        p0 = (w.shape[0] - 1) // 2
        p1 = (w.shape[1] - 1) // 2
        out = np.zeros((n0, n1))
        for i in prange(n0):
            for j in range(n1):
                ui = u[i, j]
                pi = psi[i, j]
                s = 0.0
                for k0 in range(w.shape[0]):
                    y0 = i + k0 - p0
                    inside0 = 0 <= y0 < n0
                    for k1 in range(w.shape[1]):
                        y1 = j + k1 - p1
                        if inside0 and 0 <= y1 < n1:
                            s += w[k0, k1] * (u[y0, y1] - ui) * (psi[y0, y1] - pi)
                        else:
                            s += w[k0, k1] * ui * pi
                out[i, j] = s
        return out

    @njit(cache=True)
    def _hull_nb(t, f):
        n = t.shape[0]
        idx = np.empty(n, np.int64)
        k = 0
        for i in range(n):
            while k >= 2:
                a = idx[k - 2]
                b = idx[k - 1]
                cross = (t[b] - t[a]) * (f[i] - f[a]) - (f[b] - f[a]) * (t[i] - t[a])
                if cross <= 0.0:
                    k -= 1
                else:
                    break
            idx[k] = i
            k += 1
        return idx[:k]

    @njit(parallel=True, cache=True)
    def _envelope_batch_nb(t, F):
        m, n = F.shape
        out = np.empty((m, n))
        for r in prange(m):
            f = F[r]
            h = _hull_nb(t, f)
            seg = 0
            for i in range(n):
                while seg < h.shape[0] - 2 and t[h[seg + 1]] < t[i]:
                    seg += 1
                a = h[seg]
                b = h[seg + 1]
                lam = (t[i] - t[a]) / (t[b] - t[a])
                out[r, i] = (1.0 - lam) * f[a] + lam * f[b]
        return out


def stencil_correlate(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``out[i] = sum_k w[k] * u[i + k - P]`` with ``u = 0`` outside the array.

    ``w`` has odd length ``2P + 1`` along every axis.
    """
    u = np.ascontiguousarray(u, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    lo, hi = _support_box(u)
    reach = np.minimum(hi - lo + 1, np.array(w.shape))
    if numba_enabled() and u.size * float(np.prod(np.maximum(reach, 0))) <= DIRECT_WORK_LIMIT:
        _apply_thread_cap()
        if u.ndim == 1:
            return _corr1_nb(u, w, lo[0], hi[0])
        return _corr2_nb(u, w, lo[0], hi[0], lo[1], hi[1])
    return _correlate_np(u, w)


def _correlate_np(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    full = correlate(u, w, mode="full", method="fft")
    p = [(s - 1) // 2 for s in w.shape]
    # full[j] = sum_k u[j + k - (len(w)-1)] w[k]; shift to centre the stencil
    sl = tuple(slice(pk, pk + n) for pk, n in zip(p, u.shape))
    return full[sl]


def pair_remainder(u: np.ndarray, psi: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``out[i] = sum_k w[k] (u[i+k-P] - u[i]) (psi[i+k-P] - psi[i])``, zero-extended."""
    u = np.ascontiguousarray(u, dtype=float)
    psi = np.ascontiguousarray(psi, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    if numba_enabled() and u.size * float(w.size) <= DIRECT_WORK_LIMIT:
        _apply_thread_cap()
        return (_pair1_nb if u.ndim == 1 else _pair2_nb)(u, psi, w)
    return _pair_np(u, psi, w)


def _pair_np(u: np.ndarray, psi: np.ndarray, w: np.ndarray) -> np.ndarray:
    # expand the product; the constant term needs sum(w) over the full stencil
    return (
        _correlate_np(u * psi, w)
        - psi * _correlate_np(u, w)
        - u * _correlate_np(psi, w)
        + u * psi * w.sum()
    )


def lower_hull(t: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Indices of the lower convex hull of points ``(t_i, f_i)``, ``t`` increasing."""
    t = np.ascontiguousarray(t, dtype=float)
    f = np.ascontiguousarray(f, dtype=float)
    if numba_enabled():
        return _hull_nb(t, f)
    return _hull_np(t, f)


def _hull_np(t: np.ndarray, f: np.ndarray) -> np.ndarray:
    idx: list[int] = []
    for i in range(len(t)):
        while len(idx) >= 2:
            a, b = idx[-2], idx[-1]
            if (t[b] - t[a]) * (f[i] - f[a]) - (f[b] - f[a]) * (t[i] - t[a]) <= 0.0:
                idx.pop()
            else:
                break
        idx.append(i)
    return np.asarray(idx, dtype=np.int64)


def lower_envelope_batch(t: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Row-wise convex envelope of sampled graphs ``F[r, :]`` over the nodes ``t``."""
    t = np.ascontiguousarray(t, dtype=float)
    F = np.ascontiguousarray(np.atleast_2d(F), dtype=float)
    if numba_enabled():
        _apply_thread_cap()
        return _envelope_batch_nb(t, F)
    return _envelope_np(t, F)


def _envelope_np(t: np.ndarray, F: np.ndarray) -> np.ndarray:
    out = np.empty_like(F)
    for r in range(F.shape[0]):
        h = _hull_np(t, F[r])
        out[r] = np.interp(t, t[h], F[r][h])
    return out
