"""``fracvar`` command line: operator checks, solvers and lab experiments.

Each run resolves its configuration as defaults < command defaults < JSON
config file < explicit flags, writes ``<command>.json`` (keys sorted, the
timestamp and runtime under ``metadata``) plus CSV artifacts into ``--out``,
and prints one PASS/FAIL line.  Exit codes: 0 pass, 1 tolerance failure,
2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import DomainMask, Field, FracParams, GridSpec, bump_profile, make_bump, smooth_cutoff
from .io import dumps_json, read_field_csv, read_pgm, write_field_csv, write_json, write_pgm
from .ops import OperatorBackend, adjoint_check, classical_gradient, frac_gradient, frac_laplacian, riesz_potential
from .relaxlab import area_strict_approx, bv_lift, indicator_bv, piecewise_linear_bv, poincare_probe, relaxation_gap_demo
from .solver import SolverConfig, solve_frac_area, solve_frac_rof

COMMANDS = ("verify-ops", "denoise", "plateau", "relax-demo", "poincare", "area-strict", "lift")

# Versioned defaults: bump DEFAULTS_VERSION whenever a value below changes.
DEFAULTS_VERSION = "2026.1"
DEFAULTS = {
    "alpha": 0.5,
    "backend": "spectral",
    "seed": 0,
    "dim": 1,
    "in": None,
    "out": ".",
}
COMMAND_DEFAULTS = {
    "verify-ops": {"n": 4096, "box": 16.0, "trials": 20},
    "denoise": {"n": 256, "box": 1.0, "dim": 2, "lambda": 10.0, "noise": 0.1, "max_iters": 5000},
    "plateau": {"n": 256, "box": 3.0, "slope": 2.0, "max_iters": 20000},
    "relax-demo": {"n": 262144, "box": 2.0, "alpha": 0.8, "frequencies": [1, 2, 4, 8, 16, 32], "b_mass": 1.0},
    "poincare": {"n": 1024, "box": 4.0, "trials": 100},
    "area-strict": {"n": 2097152, "box": 2.0, "deltas": [1.2e-4, 6e-5, 3e-5]},
    "lift": {"n": 8192, "box": 16.0, "backend": "quadrature"},
}
THRESHOLDS = {
    "verify-ops": {"transfer": 1e-12, "adjoint_spectral": 1e-10, "adjoint_quadrature": 1e-3, "cross_backend": 1e-2},
    "denoise": {"gap": 1e-6},
    "plateau": {"stationarity": 1e-4},
    "relax-demo": {"min_energy": 0.2, "l1_ratio": 0.1, "F_limit_abs": 1e-3},
    "poincare": {"stability": 0.25},
    "area-strict": {"relative_error": 0.02, "undershoot": 1e-3, "exterior": 1e-3},
    "lift": {"tv_relative": 0.05, "concentration": 0.9},
}


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alpha", type=float)
    common.add_argument("--n", type=int, help="points per axis")
    common.add_argument("--box", type=float, help="box half-width L")
    common.add_argument("--dim", type=int, choices=(1, 2))
    common.add_argument("--backend", choices=("spectral", "quadrature"))
    common.add_argument("--seed", type=int)
    common.add_argument("--in", dest="in", help="input field (CSV or PGM)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--lambda", dest="lambda", type=float)
    common.add_argument("--frequencies", type=_ints, help="e.g. 1,2,4,8")
    common.add_argument("--deltas", type=_floats, help="e.g. 1e-4,5e-5")
    common.add_argument("--trials", type=int)
    common.add_argument("--b-mass", dest="b_mass", type=float, help="integral of b (relax-demo)")
    common.add_argument("--max-iters", dest="max_iters", type=int)
    common.add_argument("--config", help="JSON file with any of the options above")
    p = argparse.ArgumentParser(prog="fracvar", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fracvar {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for c in COMMANDS:
        sub.add_parser(c, parents=[common])
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update(COMMAND_DEFAULTS[args.command])
    cfg["thresholds"] = dict(THRESHOLDS.get(args.command, {}))
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        thr = loaded.pop("thresholds", {})
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
        cfg["thresholds"].update(thr)
    for k, v in vars(args).items():
        if k not in ("command", "config") and v is not None:
            cfg[k] = v
    cfg["command"] = args.command
    cfg["defaults_version"] = DEFAULTS_VERSION
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    if not 0 < float(cfg["alpha"]) < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    if int(cfg["n"]) < 8 or float(cfg["box"]) <= 0:
        raise ConfigError("need n >= 8 and box > 0")
    if int(cfg["dim"]) not in (1, 2):
        raise ConfigError("dim must be 1 or 2")
    if cfg["backend"] not in ("spectral", "quadrature"):
        raise ConfigError("backend must be spectral or quadrature")
    if "trials" in cfg and int(cfg["trials"]) < 1:
        raise ConfigError("trials must be positive")
    if cfg.get("in") and not Path(cfg["in"]).exists():
        raise ConfigError(f"input file {cfg['in']} not found")


def _grid(cfg: dict, dim: int | None = None) -> GridSpec:
    return GridSpec(int(dim or cfg["dim"]), int(cfg["n"]), float(cfg["box"]))


def _backend(cfg: dict) -> OperatorBackend:
    a = float(cfg["alpha"])
    return OperatorBackend.spectral(a) if cfg["backend"] == "spectral" else OperatorBackend.quadrature(a)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def _load_field(path: str, box: float) -> Field:
    if path.lower().endswith(".pgm"):
        return read_pgm(path, box)
    return read_field_csv(path)


# -- commands --------------------------------------------------------------------


def cmd_verify_ops(cfg: dict, out: Path) -> tuple[dict, bool]:
    g = _grid(cfg, 1)
    a = float(cfg["alpha"])
    thr = cfg["thresholds"]
    u = make_bump(g, [0.0], 1.0)
    sb = OperatorBackend.spectral(a)
    qb = OperatorBackend.quadrature(a)
    ga = frac_gradient(u, sb).values
    t1 = _rel(ga, classical_gradient(riesz_potential(u, 1 - a, sb)).values)
    t2 = _rel(classical_gradient(u).values, frac_gradient(frac_laplacian(u, (1 - a) / 2, sb), sb).values)
    adj_s = adjoint_check(sb, g, int(cfg["trials"]), int(cfg["seed"])).max_relative_residual
    adj_q = adjoint_check(qb, g, min(int(cfg["trials"]), 5), int(cfg["seed"])).max_relative_residual
    inner = np.abs(g.axis()) < g.box_halfwidth / 2
    gq = frac_gradient(u, qb).values
    cross = float(np.abs(gq - ga)[:, inner].sum() / np.abs(ga)[:, inner].sum())
    res = {
        "transfer_riesz": t1,
        "transfer_laplacian": t2,
        "adjoint_spectral": adj_s,
        "adjoint_quadrature": adj_q,
        "cross_backend_l1": cross,
    }
    ok = (
        max(t1, t2) <= thr["transfer"]
        and adj_s <= thr["adjoint_spectral"]
        and adj_q <= thr["adjoint_quadrature"]
        and cross <= thr["cross_backend"]
    )
    return res, ok


def _denoise_input(cfg: dict) -> tuple[Field, Field | None]:
    if cfg.get("in"):
        noisy = _load_field(cfg["in"], float(cfg["box"]))
        return noisy, None
    g = _grid(cfg)
    x = g.coords()
    clean = np.ones(g.shape)
    for c in x:
        clean *= np.abs(c) < 0.3 * g.box_halfwidth
    rng = np.random.default_rng(int(cfg["seed"]))
    noisy = clean + float(cfg["noise"]) * rng.standard_normal(g.shape)
    return Field(g, noisy), Field(g, clean)


def cmd_denoise(cfg: dict, out: Path) -> tuple[dict, bool]:
    noisy, clean = _denoise_input(cfg)
    g = noisy.grid
    L = g.box_halfwidth
    mask = DomainMask(g, (0.0,) * g.dim, 0.6 * L, 0.8 * L)
    G = Field(g, np.where(mask.omega, 0.0, noisy.values))
    params = FracParams(float(cfg["alpha"]), cfg["backend"])
    thr = cfg["thresholds"]
    r = solve_frac_rof(noisy, G, mask, float(cfg["lambda"]), params,
                       SolverConfig(max_iters=int(cfg["max_iters"]), tolerance=thr["gap"]))
    u = r.minimizer.values
    om = mask.omega
    comment = "config=" + json.dumps(cfg, sort_keys=True)
    write_field_csv(r.minimizer, out / "denoise_minimizer.csv", comment)
    if g.dim == 2:
        write_pgm(r.minimizer, out / "denoise_minimizer.pgm")
    res = {
        "iterations": r.iterations_used,
        "final_gap": r.gap_history[-1],
        "final_energy": r.energy_history[-1],
        "interior_relative_deviation": float(np.linalg.norm((u - noisy.values)[om]) / max(np.linalg.norm(noisy.values[om]), 1e-300)),
        "exterior_exact": bool(np.array_equal(u[~om], G.values[~om])),
        "energy_nonincreasing": bool(np.all(np.diff(r.energy_history) <= 1e-9)),
    }
    if clean is not None:
        res["interior_error_vs_clean"] = float(np.linalg.norm((u - clean.values)[om]) * np.sqrt(g.cell_volume))
    ok = r.converged and res["exterior_exact"] and res["energy_nonincreasing"]
    return res, ok


def cmd_plateau(cfg: dict, out: Path) -> tuple[dict, bool]:
    if cfg.get("in"):
        G = _load_field(cfg["in"], float(cfg["box"]))
        g = G.grid
    else:
        g = _grid(cfg)
        x = g.coords()
        L = g.box_halfwidth
        G = Field(g, float(cfg["slope"]) * x[0] * smooth_cutoff(g, (0.0,) * g.dim, 0.55 * L, 0.85 * L).values)
    L = g.box_halfwidth
    mask = DomainMask(g, (0.0,) * g.dim, L / 3, L / 2)
    params = FracParams(float(cfg["alpha"]), cfg["backend"])
    thr = cfg["thresholds"]
    r = solve_frac_area(G, mask, params, SolverConfig(max_iters=int(cfg["max_iters"]), tolerance=thr["stationarity"]))
    write_field_csv(r.minimizer, out / "plateau_minimizer.csv", "config=" + json.dumps(cfg, sort_keys=True))
    res = {
        "iterations": r.iterations_used,
        "energy_initial": r.energy_history[0],
        "energy_final": r.energy_history[-1],
        "stationarity_relative": r.gap_history[-1],
    }
    ok = r.converged and r.energy_history[-1] <= r.energy_history[0] + 1e-9
    return res, ok


def cmd_relax_demo(cfg: dict, out: Path) -> tuple[dict, bool]:
    g = _grid(cfg, 1)
    mask = DomainMask(g, (0.0,), 1.0, 1.5)
    mass = float(cfg["b_mass"])
    prof = bump_profile(np.abs(g.axis()) / 0.9)
    b = Field(g, mass * prof / (prof.sum() * g.spacing) if mass > 0 else np.zeros(g.shape))
    d = relaxation_gap_demo(b, float(cfg["alpha"]), mask, cfg["frequencies"])
    d.write_csv(out / "relax_demo.csv", index=cfg["frequencies"], comment="config=" + json.dumps(cfg, sort_keys=True))
    res = dict(d.summary)
    thr = cfg["thresholds"]
    if mass > 0:
        ok = (
            res["min_energy"] <= thr["min_energy"]
            and res["l1_ratio_last_first"] <= thr["l1_ratio"]
            and abs(res["F_limit"] - mass) <= thr["F_limit_abs"]
        )
    else:
        ok = res["gap"] == 0.0 and max(d.energy_values) == 0.0
    return res, ok


def cmd_poincare(cfg: dict, out: Path) -> tuple[dict, bool]:
    dim = int(cfg["dim"])
    a = float(cfg["alpha"])
    chats = []
    for level in range(3):
        g = GridSpec(dim, int(cfg["n"]) * 2**level, float(cfg["box"]))
        mask = DomainMask(g, (0.0,) * dim, 1.0, 1.5)
        rep = poincare_probe(mask, a, int(cfg["trials"]), int(cfg["seed"]))
        chats.append(rep.C_hat)
    spread = max(chats) / min(chats) - 1.0
    res = {"C_hat": chats, "relative_spread": spread, "grids": [int(cfg["n"]) * 2**k for k in range(3)]}
    return res, bool(np.all(np.isfinite(chats))) and spread <= cfg["thresholds"]["stability"]


def cmd_area_strict(cfg: dict, out: Path) -> tuple[dict, bool]:
    g = _grid(cfg, 1)
    a = float(cfg["alpha"])
    mask = DomainMask(g, (0.0,), 1.0, 1.5)
    v = piecewise_linear_bv(g, [(0.0, 0.5, 1.0, 0.0)])
    u, mu = bv_lift(v, a)
    chi = smooth_cutoff(g, (0.0,), 0.7, 0.9)
    G = Field(g, (1.0 - chi.values) * u.values)
    d = area_strict_approx(u, mu, G, mask, cfg["deltas"], a)
    d.write_csv(out / "area_strict.csv", index=cfg["deltas"], comment="config=" + json.dumps(cfg, sort_keys=True))
    res = dict(d.summary)
    res["exterior_gradient_error_final"] = d.exterior_gradient_l1_error[-1]
    thr = cfg["thresholds"]
    ok = (
        res["relative_error_smallest_delta"] <= thr["relative_error"]
        and res["max_undershoot"] <= thr["undershoot"]
        and res["exterior_gradient_error_final"] <= thr["exterior"]
    )
    return res, ok


def cmd_lift(cfg: dict, out: Path) -> tuple[dict, bool]:
    g = _grid(cfg, 1)
    backend = _backend(cfg)
    u, mu = bv_lift(indicator_bv(g, -1.0, 1.0), float(cfg["alpha"]), backend)
    d = frac_gradient(u, backend).pointwise_norm()
    h = g.spacing
    x = g.axis()
    tv = float(d.sum() * h)
    near = (np.abs(x + 1) <= 0.1) | (np.abs(x - 1) <= 0.1)
    frac = float(d[near].sum() * h / tv)
    exact = mu.total_variation()
    write_field_csv(u, out / "lift_u.csv", "config=" + json.dumps(cfg, sort_keys=True))
    thr = cfg["thresholds"]
    res = {"tv_discrete": tv, "tv_exact": exact, "tv_relative_error": abs(tv - exact) / exact, "near_jump_fraction": frac}
    return res, res["tv_relative_error"] <= thr["tv_relative"] and frac >= thr["concentration"]


HANDLERS = {
    "verify-ops": cmd_verify_ops,
    "denoise": cmd_denoise,
    "plateau": cmd_plateau,
    "relax-demo": cmd_relax_demo,
    "poincare": cmd_poincare,
    "area-strict": cmd_area_strict,
    "lift": cmd_lift,
}


def run(cfg: dict) -> tuple[int, dict]:
    """Execute a resolved config; returns the exit code and the JSON document."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results, ok = HANDLERS[cfg["command"]](cfg, out)
    doc = {
        "command": cfg["command"],
        "config": cfg,
        "results": results,
        "status": "PASS" if ok else "FAIL",
        "metadata": {
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "runtime_s": time.perf_counter() - t0,
            "version": __version__,
        },
    }
    write_json(doc, out / f"{cfg['command'].replace('-', '_')}.json")
    return (0 if ok else 1), doc


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        code, doc = run(cfg)
    except ConfigError as exc:
        print(f"fracvar: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, FileNotFoundError) as exc:
        # invalid combinations surface from the library as ValueError
        print(f"fracvar: config error: {exc}", file=sys.stderr)
        return 2
    summary = ", ".join(f"{k}={_short(v)}" for k, v in sorted(doc["results"].items()) if not isinstance(v, (list, dict)))
    print(f"{doc['status']} {cfg['command']}: {summary}")
    return code


def _short(v) -> str:
    return f"{v:.4g}" if isinstance(v, float) else str(v)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
