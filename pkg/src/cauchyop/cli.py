"""Command line runner: ``cauchyop {reproduce-cauchy,verify,sweep,solve}``.

Exit codes: 0 success, 1 a checked property failed, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import __version__
from .errors import CauchyOpError, ConfigError

log = logging.getLogger("cauchyop")

DEFAULT_CONFIG = {
    "grid": {"n": 1, "m": 1, "N": 64, "L": 2 * np.pi, "t_min": 1e-3, "t_max": 20.0, "nodes": 60},
    "coefficients": {"kind": "expression", "spec": [["1", "0"], ["0", "1"]]},
    "perturbation": {"delta": 0.05},
    "weight": {"alpha": 0.0},
    "solver": {"tol": 1e-10, "max_terms": 200},
    "seeds": {"data": 0},
    "output_dir": "out",
}

SCHEMA = {
    "type": "object",
    "required": ["grid"],
    "properties": {
        "grid": {
            "type": "object",
            "required": ["n", "m", "N"],
            "properties": {
                "n": {"type": "integer", "minimum": 1, "maximum": 3},
                "m": {"type": "integer", "minimum": 1},
                "N": {"type": "integer", "minimum": 2},
                "L": {"type": "number", "exclusiveMinimum": 0},
                "t_min": {"type": "number", "exclusiveMinimum": 0},
                "t_max": {"type": "number", "exclusiveMinimum": 0},
                "nodes": {"type": "integer", "minimum": 3},
            },
            "additionalProperties": False,
        },
        "coefficients": {
            "type": "object",
            "required": ["kind", "spec"],
            "properties": {"kind": {"enum": ["expression", "file"]},
                           "spec": {"type": ["array", "string"]}},
            "additionalProperties": False,
        },
        "perturbation": {"type": "object", "properties": {"delta": {"type": "number", "minimum": 0}},
                         "additionalProperties": False},
        "weight": {"type": "object", "properties": {"alpha": {"type": "number", "minimum": -1, "maximum": 1}},
                   "additionalProperties": False},
        "solver": {"type": "object",
                   "properties": {"tol": {"type": "number", "exclusiveMinimum": 0},
                                  "max_terms": {"type": "integer", "minimum": 1}},
                   "additionalProperties": False},
        "seeds": {"type": "object", "additionalProperties": {"type": "integer"}},
        "output_dir": {"type": "string"},
    },
    "additionalProperties": False,
}


class CheckFailed(Exception):
    """A verified property did not hold (exit code 1)."""


# ------------------------------------------------------------------ config


def load_config(path):
    """Read, validate and complete a JSON or YAML config."""
    if path is None:
        raw = {"grid": copy.deepcopy(DEFAULT_CONFIG["grid"])}
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            text = p.read_text()
            raw = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config invalid at {list(exc.absolute_path)}: {exc.message}") from exc
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    for key, val in raw.items():
        if isinstance(val, dict):
            cfg[key].update(val)
        else:
            cfg[key] = val
    if cfg["grid"]["t_max"] <= cfg["grid"]["t_min"]:
        raise ConfigError("t_max must exceed t_min")
    return cfg


def config_hash(cfg) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=float).encode()).hexdigest()[:16]


def provenance(cfg, seed):
    import numba
    import scipy

    return {"config_hash": config_hash(cfg), "seed": seed,
            "versions": {"cauchyop": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "numba": numba.__version__}}


def _grids(cfg, quick=False):
    from .grid import TGrid, TorusGrid

    g = cfg["grid"]
    N = max(g["N"] // 2, 4) if quick else g["N"]
    return TorusGrid(g["n"], g["m"], N, g["L"]), TGrid(g["t_min"], g["t_max"], g["nodes"])


def _coefficients(cfg, grid, tgrid):
    from .coeff import CoefficientTensor, load_coefficients
    from .expr import ExpressionError

    c = cfg["coefficients"]
    try:
        if c["kind"] == "file":
            return load_coefficients(c["spec"])
        return CoefficientTensor.from_expressions(c["spec"], grid, tgrid)
    except (ExpressionError, CauchyOpError, OSError, ValueError) as exc:
        raise ConfigError(f"bad coefficients: {exc}") from exc


def _band_limited(rng, grid, width=8):
    from .grid import idft_slice

    shape = grid.shape + (grid.d,)
    hh = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = (grid.abs_xi > 0) & (grid.abs_xi <= width * 2 * np.pi / grid.L)
    return idft_slice(grid, hh * mask[..., None])


def _write_json(path, obj):
    from .funcnorms import _jsonable

    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2))


def _write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in columns})


# ---------------------------------------------------------------- commands


def cmd_reproduce_cauchy(cfg, out: Path, seed, quick):
    """Flow extension against the classical Cauchy kernel for A = I, alpha = -1."""
    from .flow import FlowConfig, cauchy_extension, hardy_projection
    from .funcalc import assemble_DB0
    from .grid import BoundaryField, TGrid, TorusGrid
    from .oracle import cauchy_kernel_extension

    g = cfg["grid"]
    N = 128 if quick else 256
    tol = 1e-2 if quick else 1e-3
    grid = TorusGrid(1, 1, N, g.get("L", 2 * np.pi))
    tgrid = TGrid(0.1, 1.0, 10 if quick else 20)
    rng = np.random.default_rng(seed)
    dec = assemble_DB0(grid, np.eye(2))
    hp = hardy_projection(dec, "+", _band_limited(rng, grid))
    f = cauchy_extension(dec, FlowConfig(-1.0, tgrid), hp)
    o = cauchy_kernel_extension(BoundaryField(grid, hp), tgrid)
    rows = []
    for j, t in enumerate(tgrid.t):
        err = np.linalg.norm(f.values[j] - o.values[j]) / np.linalg.norm(f.values[j])
        rows.append({"t": float(t), "rel_error": float(err)})
    _write_csv(out / "cauchy_agreement.csv", rows, ("t", "rel_error"))
    worst = max(r["rel_error"] for r in rows)
    summary = {"command": "reproduce-cauchy", "N": N, "max_rel_error": worst, "tolerance": tol,
               "passed": worst < tol, **provenance(cfg, seed)}
    _write_json(out / "reproduce_cauchy.json", summary)
    if worst >= tol:
        raise CheckFailed(f"max relative error {worst:.2e} >= {tol}")
    return summary


def _suite_calculus(cfg, seed, quick):
    from .coeff import random_accretive
    from .funcalc import assemble_DB0, verify_calculus

    grid, _ = _grids(cfg, quick)
    rng = np.random.default_rng(seed)
    out = {}
    for name, B0 in (("identity", np.eye(grid.d)), ("random", random_accretive(rng, grid.d))):
        rep = verify_calculus(assemble_DB0(grid, B0), rng=rng)
        worst = max(v for k, v in rep.details["deviations"].items())
        out[name] = {"max_deviation": worst, "passed": worst < (1e-8 if name == "identity" else 1e-6)}
    return out


def _suite_norms(cfg, seed, quick):
    from .funcnorms import WhitneyGeometry, duality_check, sandwich_constants
    from .grid import HalfSpaceField
    from .sio import _smooth_random

    grid, tgrid = _grids(cfg, quick)
    rng = np.random.default_rng(seed)
    geom = WhitneyGeometry(grid, tgrid)
    v = _smooth_random(rng, grid, tgrid, 2)
    f, g = HalfSpaceField(grid, tgrid, v[0]), HalfSpaceField(grid, tgrid, v[1])
    s = sandwich_constants(f, geom).details
    d = duality_check(f, g, geom).value
    return {"sandwich": {**s, "passed": s["lower_constant"] <= 1 + 1e-12 and np.isfinite(s["upper_constant"])},
            "duality": {"constant": d, "passed": bool(np.isfinite(d))}}


def _suite_sio(cfg, seed, quick):
    from .funcalc import assemble_DB0
    from .grid import HalfSpaceField
    from .sio import (TruncationProfile, _smooth_random, apply_S, apply_S_exact, splitting_duality)

    grid, tgrid = _grids(cfg, quick)
    rng = np.random.default_rng(seed)
    dec = assemble_DB0(grid, np.eye(grid.d))
    v = _smooth_random(rng, grid, tgrid, 2)
    f = HalfSpaceField(grid, tgrid, dec.apply_values(np.ones(dec.K), v[0]), in_H=True)
    g = HalfSpaceField(grid, tgrid, dec.apply_values(np.ones(dec.K), v[1]), in_H=True)
    a, b = apply_S(dec, f).values, apply_S_exact(dec, f).values
    eng = float(np.linalg.norm(a - b) / np.linalg.norm(a))
    lhs, rhs = splitting_duality(dec, tgrid, TruncationProfile(0.05), f.values, g.values)
    dual = abs(lhs - rhs) / max(abs(lhs), 1e-300)
    return {"sweep_vs_cells": {"rel_error": eng, "passed": eng < 1e-10},
            "splitting_duality": {"rel_error": dual, "passed": dual < 1e-8}}


def _suite_solver(cfg, seed, quick):
    from .coeff import PerturbationField
    from .flow import FlowConfig, hardy_projection
    from .funcalc import assemble_DB0
    from .solver import solve_cauchy, verify_representation

    grid, tgrid = _grids(cfg, quick)
    rng = np.random.default_rng(seed)
    dec = assemble_DB0(grid, np.eye(grid.d))
    hp = hardy_projection(dec, "+", _band_limited(rng, grid))
    M = rng.standard_normal((grid.d, grid.d)) + 1j * rng.standard_normal((grid.d, grid.d))
    M /= np.linalg.norm(M, 2)
    alpha = cfg["weight"]["alpha"]
    fc = FlowConfig(alpha, tgrid)
    table = []
    for delta in (0.0, 0.05, 0.1):
        E = PerturbationField(grid, tgrid, delta * M)
        res = solve_cauchy(dec, E, fc, hp, tol=cfg["solver"]["tol"], max_terms=cfg["solver"]["max_terms"])
        rep = verify_representation(res.f, dec, E, fc)
        table.append({"delta": delta, "terms": res.series_terms, "contraction": res.contraction_estimate,
                      "increments": res.increments, "residual": rep.value, "passed": rep.value < 1e-6})
    return {"geometric_convergence": {"table": table, "passed": all(r["passed"] for r in table)}}


def _suite_bvp(cfg, seed, quick):
    from .coeff import CoefficientTensor
    from .bvp import hardy_projection_EA, rellich_check, restriction_map
    from .flow import FlowConfig
    from .funcalc import assemble_DB0

    grid, tgrid = _grids(cfg, quick)
    dec = assemble_DB0(grid, np.eye(grid.d))
    P = hardy_projection_EA(dec, None, FlowConfig(0.0, tgrid))
    rep = {w: restriction_map(P, w) for w in ("Neu", "Dir")}
    rng = np.random.default_rng(seed)
    h = _band_limited(rng, grid)
    rel = rellich_check(CoefficientTensor.constant(np.eye(grid.d), grid), h, tgrid, dec).value
    return {w: {"sigma_min": r.sigma_min, "sigma_max": r.sigma_max, "passed": r.verdict == "well_posed"}
            for w, r in rep.items()} | {"rellich_identity": {"ratio": rel, "passed": abs(rel - 1) < 1e-8}}


SUITES = {"calculus": _suite_calculus, "norms": _suite_norms, "sio": _suite_sio,
          "solver": _suite_solver, "bvp": _suite_bvp}


def cmd_verify(cfg, out: Path, seed, quick, suite):
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    results = SUITES[suite](cfg, seed, quick)
    passed = all(r["passed"] for r in results.values())
    summary = {"command": "verify", "suite": suite, "results": results, "passed": passed, **provenance(cfg, seed)}
    _write_json(out / f"verify_{suite}.json", summary)
    for name, r in results.items():
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {suite}.{name}")
    if not passed:
        raise CheckFailed(f"suite {suite} has failures")
    return summary


def _random_hermitian(rng, grid, spread=0.5):
    from .coeff import CoefficientTensor, random_accretive

    v = random_accretive(rng, grid.d, size=grid.shape, spread=spread, skew=0.0)
    v = (v + np.conj(np.swapaxes(v, -1, -2))) / 2
    return CoefficientTensor(grid, v[None])


def cmd_sweep(cfg, out: Path, seed, quick, parameter, values):
    from .bvp import SWEEP_COLUMNS, perturbation_sweep
    from .flow import FlowConfig
    from .funcalc import assemble_DB0
    from .sio import estimate_operator_norm

    if not values:
        raise ConfigError("sweep needs a non-empty --values list")
    grid, tgrid = _grids(cfg, quick)
    rng = np.random.default_rng(seed)
    if parameter == "epsilon":
        A0 = _coefficients(cfg, grid, tgrid)
        direction = _random_hermitian(rng, grid)
        rep = perturbation_sweep(A0, direction, values, FlowConfig(cfg["weight"]["alpha"], tgrid))
        rows, cols = rep.details["rows"], SWEEP_COLUMNS
    elif parameter == "alpha":
        dec = assemble_DB0(grid, np.eye(grid.d))
        rows = []
        for a in values:
            r = estimate_operator_norm("S", dec, tgrid, float(a), trials=2 if quick else 5, iters=10 if quick else 20,
                                       rng=np.random.default_rng(seed))
            rows.append({"alpha": float(a), "norm_S": r.details["l2"], "endpoint": r.details["endpoint"]})
        cols = ("alpha", "norm_S", "endpoint")
    else:
        raise ConfigError(f"unknown sweep parameter {parameter!r}")
    _write_csv(out / f"sweep_{parameter}.csv", rows, cols)
    summary = {"command": "sweep", "parameter": parameter, "rows": rows, **provenance(cfg, seed)}
    _write_json(out / f"sweep_{parameter}.json", summary)
    return summary


def cmd_solve(cfg, out: Path, seed, quick):
    from .coeff import extract_E, select_B0, transform_A_to_B
    from .container import write_container
    from .flow import FlowConfig, hardy_projection
    from .funcalc import assemble_DB0
    from .solver import extract_trace, solve_cauchy, verify_representation

    grid, tgrid = _grids(cfg, quick)
    A = _coefficients(cfg, grid, tgrid)
    if A.grid.shape != grid.shape:
        raise ConfigError("coefficient file does not match the configured grid")
    B = transform_A_to_B(A)
    B0 = select_B0(B)
    E = extract_E(B, B0)
    dec = assemble_DB0(grid, B0.values[0])
    rng = np.random.default_rng(seed)
    hp = hardy_projection(dec, "+", _band_limited(rng, grid))
    fc = FlowConfig(cfg["weight"]["alpha"], tgrid)
    res = solve_cauchy(dec, E, fc, hp, tol=cfg["solver"]["tol"], max_terms=cfg["solver"]["max_terms"])
    rep = verify_representation(res.f, dec, E, fc)
    h = extract_trace(res.f, dec, E, fc)
    write_container(out / "solution.cop", {"kind": "solve", **grid.describe(), "tgrid": tgrid.describe(),
                                           "config_hash": config_hash(cfg), "B0_key": dec.key},
                    {"f": res.f.values, "h_plus": hp, "h": h.values})
    summary = {"command": "solve", **res.summary(), "E_sup": E.sup_norm, "representation_residual": rep.value,
               "h_over_f": h.meta["h_over_f"], **provenance(cfg, seed)}
    _write_json(out / "solve.json", summary)
    if rep.value > 1e-6:
        raise CheckFailed(f"representation residual {rep.value:.2e}")
    return summary


# -------------------------------------------------------------------- main


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON or YAML experiment config")
    common.add_argument("--out", metavar="DIR", help="output directory (default: config output_dir)")
    common.add_argument("--seed", type=int, default=None, help="random seed (default: config seeds.data)")
    common.add_argument("--quick", action="store_true", help="smaller grids and wider tolerances")
    p = argparse.ArgumentParser(prog="cauchyop", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"cauchyop {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("reproduce-cauchy", parents=[common], help="classical Cauchy-kernel reproduction")
    v = sub.add_parser("verify", parents=[common], help="run an invariant suite")
    v.add_argument("--suite", default="calculus", help=f"one of {', '.join(SUITES)}")
    s = sub.add_parser("sweep", parents=[common], help="parameter sweep to CSV")
    s.add_argument("--parameter", choices=["epsilon", "alpha"], default="epsilon")
    s.add_argument("--values", default="", help="comma separated values")
    sub.add_parser("solve", parents=[common], help="solve the Cauchy problem for the configured coefficients")
    return p


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --values list: {text!r}") from exc


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else cfg["seeds"].get("data", 0)
        out = Path(args.out or cfg["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "reproduce-cauchy":
            cmd_reproduce_cauchy(cfg, out, seed, args.quick)
        elif args.command == "verify":
            cmd_verify(cfg, out, seed, args.quick, args.suite)
        elif args.command == "sweep":
            cmd_sweep(cfg, out, seed, args.quick, args.parameter, _floats(args.values))
        else:
            cmd_solve(cfg, out, seed, args.quick)
    except ConfigError as exc:
        log.error("%s", exc)
        return 2
    except CheckFailed as exc:
        log.error("check failed: %s", exc)
        return 1
    except CauchyOpError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    log.info("wrote results to %s", out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
