"""Command-line front end: config ingestion, subcommand dispatch, JSON/CSV output.

Subcommands: wellposed, solve, policy, asymptotics, simulate, sweep.
A JSON config supplies {"model": {...}, "costs": {...}}; flags override file
values.  Summaries go to stdout as JSON; curve/sweep/path data go to --out as
CSV with full double precision.  Exit codes: 0 success, 2 when the input is
(correctly) classified as ill-posed, 1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import asymptotics as asym
from . import statics
from .errors import EztcError, NotWellPosed, ParseError, ValidationError
from .fbsolver import solve_free_boundary
from .model import CostParams, ModelParams
from .policy import build_tables
from .simulate import SimConfig, martingale_check, path_diagnostics, simulate_paths
from .wellposed import classify

_MODEL_KEYS = ("r", "mu", "sigma", "R", "S", "delta")
_FMT = "%.17g"


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    allowed = {"model", "costs", "seed", "dt", "horizon", "paths", "initial_state"}
    unknown = data.keys() - allowed
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    return data


def parse_config(args: argparse.Namespace) -> dict:
    """Merge config file and flags into a validated run configuration.

    Flags take precedence over file values.  All validation failures are
    collected and reported together.
    """
    data = _load_config(args.config)
    problems: list[str] = []

    model_src = dict(data.get("model", {}))
    for key in _MODEL_KEYS:
        flag = getattr(args, f"model_{key}", None)
        if flag is not None:
            model_src[key] = flag
    missing = [k for k in _MODEL_KEYS if k not in model_src]
    if missing:
        problems.append(f"model: missing keys {missing}")
    unknown = sorted(model_src.keys() - set(_MODEL_KEYS))
    if unknown:
        problems.append(f"model: unknown keys {unknown}")
    model = None
    if not problems:
        try:
            model = ModelParams.from_dict(model_src)
        except EztcError as exc:
            problems.append(f"model: {exc}")

    costs_src = dict(data.get("costs", {}))
    if args.xi is not None:
        costs_src = {"xi": args.xi}
    if args.gamma_up is not None or args.gamma_down is not None:
        pair = {}
        if args.gamma_up is not None:
            pair["gamma_up"] = args.gamma_up
        if args.gamma_down is not None:
            pair["gamma_down"] = args.gamma_down
        if costs_src.keys() == {"gamma_up", "gamma_down"}:
            costs_src.update(pair)
        else:
            costs_src = {"gamma_up": 1.0, "gamma_down": 1.0} | pair
    costs = None
    if costs_src:
        try:
            costs = CostParams.from_dict(costs_src)
        except EztcError as exc:
            problems.append(f"costs: {exc}")

    sim = {
        "seed": args.seed if args.seed is not None else int(data.get("seed", 0)),
        "dt": args.dt if args.dt is not None else float(data.get("dt", 1e-4)),
        "horizon": args.horizon if args.horizon is not None else float(data.get("horizon", 1.0)),
        "paths": args.paths if args.paths is not None else int(data.get("paths", 10_000)),
        "initial_state": tuple(data.get("initial_state", (0.5, 1.0, 0.5))),
    }
    if problems:
        raise ValidationError("; ".join(problems))
    return {"model": model, "costs": costs, "sim": sim,
            "out": Path(args.out) if args.out else None}


def _emit(obj: dict, cfg=None) -> None:
    if cfg is not None:
        # Echo the inputs so any summary is re-ingestible as a config fragment.
        obj = dict(obj)
        obj["model"] = {k: getattr(cfg["model"], k) for k in _MODEL_KEYS}
        if cfg["costs"] is not None:
            obj["costs"] = {"gamma_up": cfg["costs"].gamma_up,
                            "gamma_down": cfg["costs"].gamma_down}
    print(json.dumps(obj, sort_keys=True))


def _write_csv(out_dir: Path, name: str, header: list[str], rows) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / name, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_FMT % v for v in row])


def _require_costs(cfg) -> CostParams:
    if cfg["costs"] is None:
        raise ValidationError("this command needs costs: --xi or --gamma-up/--gamma-down")
    return cfg["costs"]


def cmd_wellposed(cfg) -> int:
    verdict = classify(cfg["model"], _require_costs(cfg))
    _emit(verdict.to_dict(), cfg)
    return 0 if verdict.is_well_posed else 2


def cmd_solve(cfg) -> int:
    costs = _require_costs(cfg)
    sol = solve_free_boundary(cfg["model"], costs)
    tables = build_tables(sol, costs)
    _emit({
        "xi": sol.xi, "q_star": sol.q_star, "q_upper": sol.q_upper,
        "p_star": tables.p_star, "p_upper": tables.p_upper,
        "crossed_one": sol.crossed_one,
    }, cfg)
    if cfg["out"] is not None:
        _write_csv(cfg["out"], "n_curve.csv", ["q", "n"],
                   zip(sol.grid_q, sol.grid_n))
    return 0


def cmd_policy(cfg) -> int:
    costs = _require_costs(cfg)
    sol = solve_free_boundary(cfg["model"], costs)
    tables = build_tables(sol, costs)
    _emit({
        "q_star": sol.q_star, "q_upper": sol.q_upper,
        "p_star": tables.p_star, "p_upper": tables.p_upper,
        "gamma_up": costs.gamma_up, "gamma_down": costs.gamma_down,
        "kappa_start": float(tables.kappa_grid[0]), "kappa_end": float(tables.kappa_grid[-1]),
    }, cfg)
    if cfg["out"] is not None:
        _write_csv(cfg["out"], "kappa.csv", ["q", "kappa"],
                   zip(sol.grid_q, tables.kappa_grid))
        _write_csv(cfg["out"], "pq.csv", ["q", "p"],
                   zip(sol.grid_q, tables.p_grid))
    return 0


def cmd_asymptotics(cfg) -> int:
    params = cfg["model"]
    c = asym.coeffs(params)
    _emit({
        "delta_coef": c.delta_coef, "sigma_coef": c.sigma_coef, "psi_coef": c.psi_coef,
        "zeta1": c.zeta1, "q_hat": c.q_hat, "m_hat": c.m_hat,
        "consumption_correction_sign": asym.consumption_correction_sign(params),
    }, cfg)
    if cfg["out"] is not None:
        rows = []
        for eps in np.logspace(-4, -2, 8):
            qs_a, qu_a = asym.shadow_boundary_expansion(params, eps)
            sol = solve_free_boundary(params, 1.0 + eps)
            rows.append((eps, abs(sol.q_star - qs_a), abs(sol.q_upper - qu_a)))
        _write_csv(cfg["out"], "residuals.csv",
                   ["eps", "q_star_abs_err", "q_upper_abs_err"], rows)
    return 0


def cmd_simulate(cfg) -> int:
    costs = _require_costs(cfg)
    sol = solve_free_boundary(cfg["model"], costs)
    tables = build_tables(sol, costs)
    sim = cfg["sim"]
    sim_cfg = SimConfig(initial_state=sim["initial_state"], dt=sim["dt"],
                        horizon=sim["horizon"], n_paths=sim["paths"], seed=sim["seed"])
    paths = simulate_paths(sol, tables, sim_cfg)
    diags = [path_diagnostics(p, tables) for p in paths[: min(len(paths), 100)]]
    mart = martingale_check(paths, tables, sim["horizon"]) if len(paths) >= 1000 else None
    summary = {
        "n_paths": len(paths),
        "dt": sim["dt"],
        "horizon": sim["horizon"],
        "seed": sim["seed"],
        "q_star": sol.q_star,
        "q_upper": sol.q_upper,
        "self_consistency_max": max(d.self_consistency_max for d in diags),
        "cash_resid_mean": float(np.mean([d.cash_resid_mean for d in diags])),
        "confinement_violation": max(d.confinement_violation for d in diags),
        "g_monotone": all(d.g_monotone for d in diags),
    }
    if mart is not None:
        summary["martingale"] = {
            "mean": mart.mean, "std_err": mart.std_err, "m0": mart.m0,
            "z_score": mart.z_score,
        }
    _emit(summary, cfg)
    if cfg["out"] is not None:
        rows = []
        for idx, p in enumerate(paths[: min(len(paths), 20)]):
            for j, t in enumerate(p.times):
                rows.append((idx, t, p.Q_hat[j], p.X_hat[j], p.Phi_hat[j],
                             p.C_hat[j], p.Y[j]))
        _write_csv(cfg["out"], "paths.csv",
                   ["path", "t", "Q", "X", "Phi", "C", "Y"], rows)
    return 0


def _parse_grid(spec: str) -> np.ndarray:
    try:
        a, b, n = spec.split(":")
        return np.linspace(float(a), float(b), int(n))
    except ValueError as exc:
        raise ValidationError(f"--grid must be 'a:b:n', got {spec!r}") from exc


def cmd_sweep(cfg, param: str, grid: np.ndarray) -> int:
    costs = _require_costs(cfg)
    result = statics.sweep(param, grid, cfg["model"], costs)
    _emit({
        "axis": result.axis,
        "values": list(result.values),
        "well_posed": [row.well_posed for row in result.rows],
    }, cfg)
    if cfg["out"] is not None:
        _write_csv(cfg["out"], "sweep.csv",
                   ["value", "p_star", "p_upper", "q_star", "q_upper"],
                   ((r.value, r.p_star, r.p_upper, r.q_star, r.q_upper)
                    for r in result.rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eztc",
        description="Transaction-cost investment-consumption solver (Epstein-Zin utility)",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", help="directory for CSV artifacts")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--xi", type=float, help="round-trip cost (symmetric split)")
    parser.add_argument("--gamma-up", dest="gamma_up", type=float)
    parser.add_argument("--gamma-down", dest="gamma_down", type=float)
    parser.add_argument("--dt", type=float)
    parser.add_argument("--paths", type=int)
    parser.add_argument("--horizon", type=float)
    for key in _MODEL_KEYS:
        parser.add_argument(f"--{key}", dest=f"model_{key}", type=float,
                            help=f"model parameter {key}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("wellposed", "solve", "policy", "asymptotics", "simulate"):
        sub.add_parser(name)
    sweep_p = sub.add_parser("sweep")
    sweep_p.add_argument("--param", required=True, choices=statics._SWEEPABLE)
    sweep_p.add_argument("--grid", required=True, help="a:b:n inclusive linspace")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args)
        if args.command == "wellposed":
            return cmd_wellposed(cfg)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "policy":
            return cmd_policy(cfg)
        if args.command == "asymptotics":
            return cmd_asymptotics(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.param, _parse_grid(args.grid))
        parser.error(f"unknown command {args.command}")
    except NotWellPosed as exc:
        print(json.dumps({"error": "ill-posed", "detail": str(exc)}), file=sys.stderr)
        return 2
    except EztcError as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
