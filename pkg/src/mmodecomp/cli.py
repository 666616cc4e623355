"""Command-line front end.

Subcommands: koper-sim, maps-compute, maps-fit, mmo-analyze, hybrid-run.
Each takes an optional JSON config (``--config``) with flag overrides; all
outputs are plot-ready CSV/JSON written under ``--out``.  Identical
configs produce identical output bytes apart from a timestamp header that
``--no-timestamp`` suppresses.  MMO_DECOMP_THREADS caps the worker pool
used for lambda / m0 sweeps; results are merged in deterministic order
and written by the parent process only.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import math
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import hybrid as hy
from . import map_fit as mf
from . import mmo_analysis as ma
from . import singular_maps as sm
from .errors import ConfigError, MmoDecompError, NumericalError
from .integrator import OdeProblem, solve_adaptive
from .koper_model import (
    KoperParams,
    LAMBDA_FSN_II,
    LAMBDA_NODE_FOCUS,
    full_vector_field,
    manifold_y,
)

SCHEMA_VERSION = 1
_ALL_MAPS = ("m_j", "m_a_plus", "m_f", "m_b")


def _timestamp(enabled: bool) -> str:
    if not enabled:
        return ""
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _workers() -> int:
    raw = os.environ.get("MMO_DECOMP_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MMO_DECOMP_THREADS={raw!r} is not an integer")
    return max(1, n)


def _parallel_map(fn, items):
    """Order-preserving map over items, parallel when the pool allows."""
    n = _workers()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _load_config(path, defaults: dict) -> dict:
    """Merge a JSON config over defaults, rejecting unknown keys."""
    cfg = dict(defaults)
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    unknown = set(data) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg.update(data)
    return cfg


def _apply_overrides(cfg: dict, args, names) -> dict:
    for cli_name, key in names.items():
        value = getattr(args, cli_name, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _koper_params(cfg: dict) -> KoperParams:
    _require(cfg["eps"] >= 0.0, f"eps must be >= 0, got {cfg['eps']}")
    _require(cfg["mu"] >= 0.0, f"mu must be >= 0, got {cfg['mu']}")
    return KoperParams(lam=cfg["lambda"], k=cfg["k"], eps1=cfg["eps"],
                       mu=cfg["mu"])


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict, stamp: str) -> None:
    if stamp:
        payload = {"generated": stamp, **payload}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _say(cfg, message: str) -> None:
    if not cfg.get("quiet"):
        print(message)


# --- koper-sim ------------------------------------------------------------

_KOPER_SIM_DEFAULTS = {
    "lambda": -7.0, "k": -10.0, "eps": 0.01, "mu": 0.1,
    "t_end": 100.0, "x0": 2.0, "z0": -8.0,
    "max_step": 0.01, "lao_threshold": 1.5,
    "transient_fraction": 0.5, "max_period": 8,
    "out": "out", "quiet": False, "timestamp": True,
}


def cmd_koper_simulate(cfg: dict) -> int:
    _require(cfg["t_end"] > 0.0, "t_end must be positive")
    _require(cfg["eps"] > 0.0, "full-system simulation needs eps > 0")
    params = _koper_params(cfg)
    x0, z0 = cfg["x0"], cfg["z0"]
    state0 = np.array([x0, manifold_y(x0), z0])

    def rhs(t, s):
        return full_vector_field(s, params)

    prob = OdeProblem(3, rhs, 0.0, state0, max_step=cfg["max_step"])
    res = solve_adaptive(prob, cfg["t_end"], max_steps=5_000_000)
    traj = res.trajectory
    times, states = traj.times, traj.states

    out = _out_dir(cfg)
    stamp = _timestamp(cfg["timestamp"])
    with open(out / "koper_sim_trajectory.csv", "w") as fh:
        if stamp:
            fh.write(f"# generated {stamp}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "x", "y", "z"])
        for t, s in zip(times, states):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in s])

    counts = hy.sao_counts_from_series(states[:, 0], cfg["lao_threshold"])
    payload = {"params": {"lambda": params.lam, "k": params.k,
                          "eps": params.eps1},
               "n_large_oscillations": len(counts)}
    if len(counts) >= 2 * cfg["max_period"]:
        sig = hy.extract_signature(counts, cfg["max_period"],
                                   cfg["transient_fraction"])
        payload.update({"signature": sig.canonical,
                        "period": sig.detected_period,
                        "aperiodic": sig.aperiodic,
                        "sao_counts": sig.counts})
    else:
        payload.update({"signature": None, "period": None,
                        "aperiodic": None, "sao_counts": counts})
    _write_json(out / "koper_sim_signature.json", payload, stamp)
    _say(cfg, f"trajectory: {len(times)} nodes, "
              f"signature: {payload['signature']}")
    return 0


# --- maps-compute ---------------------------------------------------------

_MAPS_COMPUTE_DEFAULTS = {
    "lambda_grid": [-7.0], "k": -10.0, "eps": 0.0, "mu": 0.1,
    "maps": list(_ALL_MAPS), "n_grid": 101, "arc_step": 0.02,
    "out": "out", "quiet": False, "timestamp": True,
}


def _canard_gate(lam: float) -> None:
    if not (LAMBDA_FSN_II < lam < LAMBDA_NODE_FOCUS):
        from .errors import OutOfRangeLambda
        raise OutOfRangeLambda(
            f"canard maps need lambda in (-8, -23/6), got {lam}")


def _compute_maps_for_lambda(task):
    lam, k, mu, maps, n_grid, arc_step = task
    params = KoperParams(lam=lam, k=k, mu=mu)
    grid = sm.default_z_grid(lam, k, n_grid)
    samples = []
    canard = None
    for map_id in maps:
        if map_id == "m_j":
            samples.append(sm.compute_m_j(params, grid))
        elif map_id == "m_a_plus":
            samples.append(sm.compute_m_a_plus(params, grid))
        else:
            _canard_gate(lam)
            if canard is None:
                canard = sm.strong_canard(params, arc_step=arc_step)
            if map_id == "m_f":
                samples.append(sm.compute_m_f(params, canard))
            else:
                samples.append(sm.compute_m_b(params, canard))
    return samples


def cmd_maps_compute(cfg: dict) -> int:
    grid = list(cfg["lambda_grid"])
    _require(len(grid) > 0, "lambda_grid must not be empty")
    _require(all(isinstance(v, (int, float)) for v in grid),
             "lambda_grid entries must be numbers")
    unknown = set(cfg["maps"]) - set(_ALL_MAPS)
    _require(not unknown, f"unknown map ids: {sorted(unknown)}")
    _require(cfg["n_grid"] >= 3, "n_grid must be >= 3")
    _require(cfg["mu"] >= 0.0, "mu must be >= 0")

    tasks = [(lam, cfg["k"], cfg["mu"], tuple(cfg["maps"]),
              cfg["n_grid"], cfg["arc_step"]) for lam in grid]
    per_lambda = _parallel_map(_compute_maps_for_lambda, tasks)

    out = _out_dir(cfg)
    stamp = _timestamp(cfg["timestamp"])
    n_files = 0
    for lam, samples in zip(grid, per_lambda):
        for sample in samples:
            name = f"{sample.map_id}_lambda_{lam:.6g}.csv"
            with open(out / name, "w") as fh:
                sm.map_sample_to_csv(sample, fh, timestamp=stamp)
            n_files += 1
    _say(cfg, f"wrote {n_files} map CSVs to {out}")
    return 0


# --- maps-fit -------------------------------------------------------------

_MAPS_FIT_DEFAULTS = {
    "input_dir": "out", "lambda_grid": None, "maps": list(_ALL_MAPS),
    "families": False,
    "out": "out", "quiet": False, "timestamp": True,
}

_MAP_DEGREES = {"m_j": 1, "m_a_plus": 2, "m_f": (1, 2), "m_b": (2, 1)}


def _fit_one(task):
    path, map_id = task
    with open(path) as fh:
        sample = sm.map_sample_from_csv(fh)
    return mf.fit_piecewise(sample, _MAP_DEGREES[map_id])


def cmd_maps_fit(cfg: dict) -> int:
    in_dir = Path(cfg["input_dir"])
    _require(in_dir.is_dir(), f"input_dir {in_dir} does not exist")
    unknown = set(cfg["maps"]) - set(_ALL_MAPS)
    _require(not unknown, f"unknown map ids: {sorted(unknown)}")

    tasks = []
    for map_id in cfg["maps"]:
        paths = sorted(in_dir.glob(f"{map_id}_lambda_*.csv"))
        if cfg["lambda_grid"] is not None:
            wanted = {f"{map_id}_lambda_{lam:.6g}.csv"
                      for lam in cfg["lambda_grid"]}
            missing = wanted - {p.name for p in paths}
            _require(not missing, f"missing input CSVs: {sorted(missing)}")
            paths = [p for p in paths if p.name in wanted]
        _require(len(paths) > 0, f"no input CSVs for {map_id} in {in_dir}")
        tasks.extend((p, map_id) for p in paths)

    fits = _parallel_map(_fit_one, tasks)
    out = _out_dir(cfg)
    stamp = _timestamp(cfg["timestamp"])

    rows = []
    by_map = {}
    for (path, map_id), fit in zip(tasks, fits):
        name = path.name.replace(".csv", ".json").replace(map_id,
                                                          f"fit_{map_id}", 1)
        _write_json(out / name, mf.piecewise_map_to_json(fit), stamp)
        rows.append((fit.lam, map_id, fit.fit_report))
        by_map.setdefault(map_id, []).append(fit)

    rows.sort(key=lambda r: (r[0], r[1]))
    with open(out / "fit_errors.csv", "w") as fh:
        if stamp:
            fh.write(f"# generated {stamp}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lambda", "map", "e_l1", "e_l2", "e_linf"])
        for lam, map_id, rep in rows:
            writer.writerow([repr(lam), map_id, repr(rep.e_l1),
                             repr(rep.e_l2), repr(rep.e_linf)])

    if cfg["families"]:
        families = {}
        for map_id, fit_list in by_map.items():
            fit_list.sort(key=lambda f: f.lam)
            lams = [f.lam for f in fit_list]
            if len(lams) < 6:
                _say(cfg, f"skipping families for {map_id}: "
                          f"need >= 6 lambdas, have {len(lams)}")
                continue
            for fam in mf.fit_coefficient_family(lams, fit_list):
                families[fam.coefficient_id] = {
                    "lambda_grid": list(fam.lambda_grid),
                    "values": list(fam.values),
                    "poly_fits": {str(d): {"coeffs": list(c),
                                           "max_residual": r}
                                  for d, (c, r) in fam.poly_fits.items()},
                }
        _write_json(out / "coefficient_families.json",
                    {"families": families}, stamp)

    _say(cfg, f"fitted {len(fits)} map samples; error table in "
              f"{out / 'fit_errors.csv'}")
    return 0


# --- mmo-analyze ----------------------------------------------------------

_MMO_ANALYZE_DEFAULTS = {
    "k": -10.0, "mu": 0.1, "bracket": [-7.5, -6.0],
    "margin_lambdas": [-7.5, -7.0, -6.5],
    "fixed_point_lambdas": [-7.5, -7.0, -6.5],
    "n_grid": 101,
    "out": "out", "quiet": False, "timestamp": True,
}


def cmd_mmo_analyze(cfg: dict) -> int:
    bracket = cfg["bracket"]
    _require(len(bracket) == 2 and bracket[0] < bracket[1],
             "bracket must be [lo, hi] with lo < hi")
    _require(cfg["mu"] >= 0.0, "mu must be >= 0")
    params = KoperParams(lam=bracket[0], k=cfg["k"], mu=cfg["mu"])
    result = ma.find_lambda_r(params, tuple(bracket), n_grid=cfg["n_grid"])

    margins = []
    for lam in cfg["margin_lambdas"]:
        p = KoperParams(lam=lam, k=cfg["k"], mu=cfg["mu"])
        model = ma.GlobalMapModel.build(p, cfg["n_grid"])
        entry = ma.funnel_margin(p, 2.0 * lam + 6.0, model)
        margins.append({"lambda": lam, "z_in": entry.z_in,
                        "z_at_section": entry.z_at_section,
                        "margin": entry.margin})

    fixed = []
    for lam in cfg["fixed_point_lambdas"]:
        p = KoperParams(lam=lam, k=cfg["k"], mu=cfg["mu"])
        model = ma.GlobalMapModel.build(p, cfg["n_grid"])
        for fp in ma.fixed_points(model.return_composite()):
            fixed.append({"lambda": lam, "z_star": fp.z_star,
                          "multiplier": fp.derivative,
                          "stable": fp.stable,
                          "boundary": fp.on_domain_boundary})

    out = _out_dir(cfg)
    stamp = _timestamp(cfg["timestamp"])
    _write_json(out / "mmo_analysis.json", {
        "lambda_r": result.lambda_r,
        "lambda_r_direct": result.lambda_r_direct,
        "margin_at_root": result.margin_at_root,
        "fixed_points": fixed,
        "funnel_margins": margins,
    }, stamp)
    _say(cfg, f"lambda_r = {result.lambda_r:.6f} "
              f"(direct {result.lambda_r_direct:.6f})")
    return 0


# --- hybrid-run -----------------------------------------------------------

_HYBRID_RUN_DEFAULTS = {
    "normal_form": "folded_node",
    "eps": 0.01, "mu": 0.006,
    "nu": 0.01, "a": 0.5, "b": -1.0, "c": 1.0,
    "k1": 1.0, "k2": 1.0,
    "m2": 0.0, "m1": 0.1, "m0": 0.0, "m0_list": None,
    "initial": [0.01, 0.15], "n_returns": 80,
    "sao_window": 2.0, "transient_fraction": 0.5, "max_period": 8,
    "chaos_check": False, "chaos_max_period": 20, "chaos_tol": 1e-6,
    "out": "out", "quiet": False, "timestamp": True,
}


def _run_hybrid_task(task):
    (kind, eps, mu, nu, a, b, c, k1, k2, m2, m1, m0, initial, n_returns,
     sao_window, transient_fraction, max_period) = task
    if kind == "folded_node":
        nf = hy.FoldedNodeNF(eps, mu)
    else:
        nf = hy.SingularHopfNF(eps, nu, a, b, c)
    model = hy.GlobalReturnModel(m2=m2, m1=m1, m0=m0)
    return hy.run_hybrid(nf, hy.SectionPair(k1, k2), model, initial,
                         n_returns, sao_window=sao_window,
                         transient_fraction=transient_fraction,
                         max_period=max_period)


def cmd_hybrid_run(cfg: dict) -> int:
    _require(cfg["normal_form"] in ("folded_node", "singular_hopf"),
             f"unknown normal_form {cfg['normal_form']!r}")
    _require(cfg["n_returns"] >= 1, "n_returns must be >= 1")
    _require(cfg["eps"] > 0.0, "eps must be positive")
    if cfg["normal_form"] == "folded_node":
        _require(0.0 < cfg["mu"] < 1.0, "folded node needs mu in (0, 1)")
    _require(len(cfg["initial"]) == 2, "initial must be [y, z]")

    m0_values = cfg["m0_list"] if cfg["m0_list"] is not None else [cfg["m0"]]
    _require(len(m0_values) > 0, "m0_list must not be empty")
    tasks = [(cfg["normal_form"], cfg["eps"], cfg["mu"], cfg["nu"],
              cfg["a"], cfg["b"], cfg["c"], cfg["k1"], cfg["k2"],
              cfg["m2"], cfg["m1"], m0, tuple(cfg["initial"]),
              cfg["n_returns"], cfg["sao_window"],
              cfg["transient_fraction"], cfg["max_period"])
             for m0 in m0_values]
    runs = _parallel_map(_run_hybrid_task, tasks)

    out = _out_dir(cfg)
    stamp = _timestamp(cfg["timestamp"])
    sweep = len(m0_values) > 1
    for m0, run in zip(m0_values, runs):
        suffix = f"_m0_{m0:.6g}" if sweep else ""
        with open(out / f"hybrid_returns{suffix}.csv", "w") as fh:
            if stamp:
                fh.write(f"# generated {stamp}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["return_index", "y_pre", "z_pre", "sao_count"])
            for r in run.records:
                writer.writerow([r.return_index, repr(r.y_pre),
                                 repr(r.z_pre), r.sao_count])
        payload = {
            "params": {"normal_form": cfg["normal_form"], "eps": cfg["eps"],
                       "mu": cfg["mu"], "nu": cfg["nu"], "a": cfg["a"],
                       "b": cfg["b"], "c": cfg["c"], "k1": cfg["k1"],
                       "k2": cfg["k2"], "m2": cfg["m2"], "m1": cfg["m1"],
                       "m0": m0, "initial": list(cfg["initial"]),
                       "n_returns": cfg["n_returns"],
                       "sao_window": cfg["sao_window"],
                       "transient_fraction": cfg["transient_fraction"]},
            "signature": run.signature.canonical,
            "period": run.signature.detected_period,
            "aperiodic": run.signature.aperiodic,
        }
        if cfg["chaos_check"]:
            report = hy.detect_chaos(run.z_pre, run.sao_counts,
                                     cfg["chaos_max_period"],
                                     cfg["chaos_tol"],
                                     cfg["transient_fraction"])
            payload["chaos"] = {"aperiodic": report.aperiodic,
                                "period": report.period,
                                "symbolic_aperiodic":
                                    report.symbolic_aperiodic}
        _write_json(out / f"hybrid_signature{suffix}.json", payload, stamp)
        _say(cfg, f"m0={m0:g}: signature {run.signature.canonical} "
                  f"(period {run.signature.detected_period})")
    return 0


# --- argument parsing -----------------------------------------------------


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--quiet", action="store_true", default=None)
    sub.add_argument("--no-timestamp", action="store_true", default=None)


def _float_list(text: str):
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float "
                                         f"list: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmodecomp",
        description="Singular return-map decomposition of mixed-mode "
                    "oscillations: simulation, map fitting, analysis and "
                    "hybrid runs.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("koper-sim", help="integrate the full model")
    _add_common(p)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)

    p = subs.add_parser("maps-compute", help="sample the singular maps")
    _add_common(p)
    p.add_argument("--lambda", dest="lam", type=float,
                   help="single lambda (shorthand for a one-point grid)")
    p.add_argument("--lambda-grid", dest="lambda_grid", type=_float_list)
    p.add_argument("--mu", type=float)
    p.add_argument("--maps", type=lambda s: s.split(","))
    p.add_argument("--n-grid", dest="n_grid", type=int)

    p = subs.add_parser("maps-fit", help="fit sampled maps")
    _add_common(p)
    p.add_argument("--input-dir", dest="input_dir")
    p.add_argument("--maps", type=lambda s: s.split(","))
    p.add_argument("--families", action="store_true", default=None)

    p = subs.add_parser("mmo-analyze", help="fixed points and onset value")
    _add_common(p)
    p.add_argument("--bracket", type=_float_list)
    p.add_argument("--mu", type=float)

    p = subs.add_parser("hybrid-run", help="local-global hybrid simulation")
    _add_common(p)
    p.add_argument("--normal-form", dest="normal_form",
                   choices=("folded_node", "singular_hopf"))
    p.add_argument("--eps", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--m0", type=float)
    p.add_argument("--m0-list", dest="m0_list", type=_float_list)
    p.add_argument("--m1", type=float)
    p.add_argument("--m2", type=float)
    p.add_argument("--n-returns", dest="n_returns", type=int)
    p.add_argument("--chaos-check", dest="chaos_check", action="store_true",
                   default=None)
    return parser


_COMMANDS = {
    "koper-sim": (cmd_koper_simulate, _KOPER_SIM_DEFAULTS,
                  {"lam": "lambda", "eps": "eps", "mu": "mu",
                   "t_end": "t_end"}),
    "maps-compute": (cmd_maps_compute, _MAPS_COMPUTE_DEFAULTS,
                     {"lambda_grid": "lambda_grid", "mu": "mu",
                      "maps": "maps", "n_grid": "n_grid"}),
    "maps-fit": (cmd_maps_fit, _MAPS_FIT_DEFAULTS,
                 {"input_dir": "input_dir", "maps": "maps",
                  "families": "families"}),
    "mmo-analyze": (cmd_mmo_analyze, _MMO_ANALYZE_DEFAULTS,
                    {"bracket": "bracket", "mu": "mu"}),
    "hybrid-run": (cmd_hybrid_run, _HYBRID_RUN_DEFAULTS,
                   {"normal_form": "normal_form", "eps": "eps", "mu": "mu",
                    "nu": "nu", "m0": "m0", "m0_list": "m0_list",
                    "m1": "m1", "m2": "m2", "n_returns": "n_returns",
                    "chaos_check": "chaos_check"}),
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    fn, defaults, overrides = _COMMANDS[args.command]
    try:
        cfg = _load_config(args.config, defaults)
        cfg = _apply_overrides(cfg, args, overrides)
        if getattr(args, "out", None) is not None:
            cfg["out"] = args.out
        if getattr(args, "quiet", None):
            cfg["quiet"] = True
        if getattr(args, "no_timestamp", None):
            cfg["timestamp"] = False
        if args.command == "maps-compute" and getattr(args, "lam",
                                                      None) is not None:
            cfg["lambda_grid"] = [args.lam]
        return fn(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
