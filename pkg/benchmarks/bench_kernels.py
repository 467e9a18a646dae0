"""Time the numba kernels against the numpy/scipy fallback.

Run ``python benchmarks/bench_kernels.py [--repeat 5]``.  Each row calls the
direct numba kernel and the fallback on the same input and reports the
agreement.  ``stencil_correlate`` dispatches between them by the work
estimate ``DIRECT_WORK_LIMIT``; the last column shows which path it picks.
"""
import argparse
import time

import numpy as np

from fracvar import _accel
from fracvar.core import GridSpec, make_bump, make_tent
from fracvar.ops import quadrature


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def _odd_stencil(grid):
    m, P = quadrature.stencil_extent(grid, grid.spacing, grid.box_halfwidth)
    return quadrature._stencil(grid, "odd", -grid.dim - 0.5, m, P)[0]


def _corr_nb(u, w):
    lo, hi = _accel._support_box(u)
    if u.ndim == 1:
        return lambda: _accel._corr1_nb(u, w, lo[0], hi[0])
    return lambda: _accel._corr2_nb(u, w, lo[0], hi[0], lo[1], hi[1])


def _dispatch(u, w):
    lo, hi = _accel._support_box(u)
    reach = np.minimum(hi - lo + 1, np.array(w.shape))
    return "numba" if u.size * float(np.prod(reach)) <= _accel.DIRECT_WORK_LIMIT else "fft"


def cases():
    for n in (256, 1024, 8192):
        g = GridSpec(1, n, 16.0)
        W = _odd_stencil(g)
        u = make_bump(g, [0.0], 1.0).values
        psi = make_tent(g, [0.0], 2.0).values
        yield f"correlate 1-D bump n={n}", _corr_nb(u, W), lambda u=u, W=W: _accel._correlate_np(u, W), _dispatch(u, W)
        yield (
            f"leibniz pair 1-D n={n}",
            lambda u=u, p=psi, W=W: _accel._pair1_nb(u, p, W),
            lambda u=u, p=psi, W=W: _accel._pair_np(u, p, W),
            "numba" if u.size * W.size <= _accel.DIRECT_WORK_LIMIT else "fft",
        )
    for n in (32, 128):
        g = GridSpec(2, n, 2.0)
        W = _odd_stencil(g)
        u = make_bump(g, [0.0, 0.0], 0.5).values
        yield f"correlate 2-D bump n={n}^2", _corr_nb(u, W), lambda u=u, W=W: _accel._correlate_np(u, W), _dispatch(u, W)
    t = np.linspace(-8, 8, 2049)
    F = np.abs(np.abs(t)[None, :] - np.random.default_rng(1).uniform(0, 1, (2048, 1)))
    yield "envelope batch 2048 x 2049", lambda: _accel._envelope_batch_nb(t, F), lambda: _accel._envelope_np(t, F), "numba"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return
    print(f"{'kernel':30s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max diff':>9s} {'dispatch':>9s}")
    for name, f_nb, f_np, path in cases():
        ref = f_nb()  # first call compiles
        alt = f_np()
        t_nb = _time(f_nb, args.repeat)
        t_np = _time(f_np, args.repeat)
        diff = float(np.max(np.abs(np.asarray(ref) - np.asarray(alt))))
        print(f"{name:30s} {t_nb:10.5f} {t_np:10.5f} {t_np / t_nb:8.2f} {diff:9.1e} {path:>9s}")


if __name__ == "__main__":
    main()
