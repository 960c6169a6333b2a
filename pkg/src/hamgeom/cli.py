"""Command-line entry point: ``hamgeom run --config job.json`` and ``hamgeom verify``.

Exit codes: 0 success, 1 computation or verification failure, 2 invalid
configuration. Errors are printed as ``{"error", "detail", "location"}``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Optional

import jsonschema
import numpy as np

from . import boltzmann, dynamics, eikonal, geometry, stability, verify
from .errors import ConfigInvalid, HamGeomError
from .models import (PhasePoint, builtin, emd, field_from_expr, from_expression,
                     metric_from_exprs, vector_from_exprs)
from .samples import NAMED_METRICS

SCHEMA_VERSION = 1

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_PARAMS = {"type": "object", "additionalProperties": {"anyOf": [_NUM, _VEC]}}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_QUAD = _obj({"method": {"enum": ["analytic_gaussian", "gauss_hermite", "monte_carlo"]},
              "nodes": {"type": "integer", "minimum": 2},
              "samples": {"type": "integer", "minimum": 2},
              "refine": {"type": "boolean"}})

_MODEL = {"oneOf": [
    _obj({"builtin": {"enum": ["free", "sho", "inverted_sho", "constant_field", "trap"]},
          "params": _PARAMS}, ["builtin"]),
    _obj({"expression": {"type": "string"}, "n": {"type": "integer", "minimum": 1},
          "params": _PARAMS}, ["expression", "n"]),
    _obj({"fields": _obj({
        "n": {"type": "integer", "minimum": 1},
        "metric": {"anyOf": [{"enum": sorted(NAMED_METRICS)},
                             {"type": "array", "items": {"type": "array",
                                                         "items": {"type": ["string", "number"]}}}]},
        "A": {"type": "array", "items": {"type": ["string", "number"]}},
        "phi": {"type": ["string", "number"]},
        "params": _PARAMS}, ["n"])}, ["fields"]),
]}

_POINT = _obj({"q": _VEC, "p": _VEC}, ["q", "p"])

_COMMANDS = {
    "curvature": {"anyOf": [_POINT, _obj({"points": {"type": "array", "items": _POINT, "minItems": 1}},
                                          ["points"])]},
    "ricci-density": _obj({"q": {"anyOf": [_VEC, {"type": "array", "items": _VEC, "minItems": 1}]},
                           "quadrature": _QUAD}, ["q"]),
    "eikonal": _obj({"pairs": {"type": "array", "minItems": 1, "items": _obj(
        {"Q": _VEC, "Q_prime": _VEC, "E": {"type": "number", "exclusiveMinimum": 0}},
        ["Q", "Q_prime"])},
        "hj_step": {"type": "number", "exclusiveMinimum": 0}}, ["pairs"]),
    "trajectory": _obj({"q": _VEC, "p": _VEC, "T": _NUM, "method": {"enum": ["dop853", "midpoint"]},
                        "steps": {"type": "integer", "minimum": 1},
                        "tol": {"type": "number", "exclusiveMinimum": 0},
                        "samples": {"type": "integer", "minimum": 2}}, ["q", "p", "T"]),
    "second-variation": _obj({"q": _VEC, "p": _VEC, "T": {"type": "number", "exclusiveMinimum": 0},
                              "amplitudes": {"type": "array", "items": _VEC, "minItems": 1}},
                             ["q", "p", "T", "amplitudes"]),
    "stability": {"anyOf": [
        _obj({"k1": _NUM, "k2": _NUM, "k3": _NUM, "B": _NUM}, ["k1", "k2", "k3", "B"]),
        _obj({"grid": _obj({"k1": _VEC, "k2": _VEC, "k3": _VEC, "B": _VEC},
                           ["k1", "k2", "k3", "B"])}, ["grid"])]},
    "verify": _obj({"filter": {"type": "string"}, "tolerance": {"type": "number", "minimum": 0}}),
    "action-compare": _obj({"points": {"type": "integer", "minimum": 4, "multipleOf": 2},
                            "quadrature": _QUAD,
                            "halving_tol": {"type": "number", "exclusiveMinimum": 0}}),
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "model": _MODEL,
        "command": {"type": "object", "minProperties": 1, "maxProperties": 1,
                    "properties": _COMMANDS, "additionalProperties": False},
        "output": _obj({"format": {"enum": ["json", "csv"]}, "path": {"type": "string"}}),
        "seed": {"type": "integer", "minimum": 0},
        "tolerances": _obj({"integration": {"type": "number", "exclusiveMinimum": 0},
                            "energy": {"type": "number", "exclusiveMinimum": 0}}),
    },
    "required": ["command"],
    "additionalProperties": False,
}


def load_config(text: str) -> dict:
    """Parse and validate a job config; raises :class:`ConfigInvalid`."""
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"malformed JSON: {exc.msg}", f"line {exc.lineno}, column {exc.colno}") from None
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigInvalid(err.message, "/" + "/".join(str(x) for x in err.absolute_path))
    command = next(iter(cfg["command"]))
    if command not in ("verify", "stability") and "model" not in cfg:
        raise ConfigInvalid(f"command {command!r} needs a model block", "/model")
    return cfg


def build_model(block: dict):
    if "builtin" in block:
        params = {k: (np.asarray(v, dtype=float) if isinstance(v, list) else v)
                  for k, v in block.get("params", {}).items()}
        return builtin(block["builtin"], **params)
    if "expression" in block:
        return from_expression(block["expression"], block["n"], block.get("params"))
    return emd(*field_functions(block["fields"]), block["fields"]["n"])


def field_functions(f: dict):
    """``(metric_fn, A_fn, phi_fn)`` from a ``fields`` block."""
    n = f["n"]
    params = f.get("params")
    metric = f.get("metric")
    if isinstance(metric, str):
        dim, metric_fn = NAMED_METRICS[metric]
        if dim != n:
            raise ConfigInvalid(f"metric {metric!r} is {dim}-dimensional", "/model/fields/metric")
    elif metric is None:
        metric_fn = None
    else:
        metric_fn = metric_from_exprs(metric, n, params)
    A_fn = vector_from_exprs(f["A"], n, params) if "A" in f else None
    phi_fn = field_from_expr(str(f["phi"]), n, params) if "phi" in f else None
    return metric_fn, A_fn, phi_fn


def _tolist(x):
    return np.asarray(x, dtype=float).tolist()


def _table(columns, rows):
    return {"columns": columns, "rows": [[float(v) for v in r] for r in rows]}


def cmd_curvature(model, opts, cfg):
    pts = opts["points"] if "points" in opts else [opts]
    q = np.array([p["q"] for p in pts], dtype=float)
    p = np.array([p["p"] for p in pts], dtype=float)
    res = geometry.curvature(model, PhasePoint(q, p))
    if "points" not in opts:
        return {"R": _tolist(res.R[0]), "ricci": float(res.ricci[0]), "gamma": _tolist(res.gamma[0]),
                "G": _tolist(res.G[0])}
    n = model.n
    cols = [f"q{i+1}" for i in range(n)] + [f"p{i+1}" for i in range(n)] + ["ricci"]
    return {"R": _tolist(res.R), "ricci": _tolist(res.ricci),
            "table": _table(cols, np.column_stack([q, p, res.ricci]))}


def _tol(cfg, key, default):
    return cfg.get("tolerances", {}).get(key, default)


def _quad_spec(opts, seed):
    d = dict(opts.get("quadrature", {}))
    return boltzmann.QuadratureSpec(seed=seed, **d)


def cmd_ricci_density(model, opts, cfg):
    q = np.atleast_2d(np.asarray(opts["q"], dtype=float))
    r = boltzmann.ricci_density(model, q, _quad_spec(opts, cfg["seed"]))
    cols = [f"q{i+1}" for i in range(model.n)] + ["density", "error"]
    return {"value": _tolist(r.value), "error": _tolist(r.error), "method": r.method,
            "table": _table(cols, np.column_stack([q, r.value, r.error]))}


def cmd_eikonal(model, opts, cfg):
    """Eikonal rows; with ``hj_step`` the stationary Hamilton-Jacobi residual
    is also computed (2n extra solves per pair), otherwise the residual column
    is the energy mismatch of the minimizing orbit."""
    rows, out = [], []
    h = opts.get("hj_step")
    for pair in opts["pairs"]:
        Q = np.asarray(pair["Q"], dtype=float)
        Qp = np.asarray(pair["Q_prime"], dtype=float)
        E = pair.get("E", eikonal.HALF_UNITS_ENERGY)
        v = eikonal.eikonal_sigma(model, Q, Qp, E)
        entry = {"Q": Q.tolist(), "Q_prime": Qp.tolist(), "E": E, "sigma": v.sigma, "T": v.T,
                 "s_T": v.s_T, "energy_residual": v.energy_residual}
        residual = v.energy_residual
        if h is not None:
            residual = eikonal.hj_residual(model, lambda x: eikonal.eikonal_sigma(model, x, Qp, E).sigma,
                                           Q, "stationary", h, E)
            entry["hj_residual"] = residual
        out.append(entry)
        rows.append(list(Q) + list(Qp) + [E, v.sigma, v.T, residual])
    n = model.n
    cols = ([f"Q{i+1}" for i in range(n)] + [f"Qp{i+1}" for i in range(n)]
            + ["E", "sigma", "T", "hj_residual" if h is not None else "energy_residual"])
    result = {"results": out, "table": _table(cols, rows)}
    if len(out) == 1:
        result["sigma"] = out[0]["sigma"]
    return result


def cmd_trajectory(model, opts, cfg):
    traj = dynamics.integrate(model, PhasePoint(np.asarray(opts["q"], float), np.asarray(opts["p"], float)),
                              opts["T"], tol=opts.get("tol", _tol(cfg, "integration", 1e-12)),
                              method=opts.get("method", "dop853"), steps=opts.get("steps"),
                              energy_tol=_tol(cfg, "energy", dynamics.ENERGY_TOL))
    if "samples" in opts:
        t = np.linspace(0.0, traj.T, opts["samples"])
        z = traj(t)
        H = model.value(PhasePoint.from_z(z))
    else:
        t, z, H = traj.t, traj.states, traj.energy
    n = model.n
    cols = ["t"] + [f"q{i+1}" for i in range(n)] + [f"p{i+1}" for i in range(n)] + ["H"]
    return {"energy_drift": traj.energy_drift, "table": _table(cols, np.column_stack([t, z, H]))}


def cmd_second_variation(model, opts, cfg):
    traj = dynamics.integrate(model, PhasePoint(np.asarray(opts["q"], float), np.asarray(opts["p"], float)),
                              opts["T"], tol=_tol(cfg, "integration", 1e-12),
                              energy_tol=_tol(cfg, "energy", dynamics.ENERGY_TOL))
    amps = np.asarray(opts["amplitudes"], dtype=float)
    if amps.shape[1] != model.n:
        raise ConfigInvalid("each amplitude vector needs n entries", "/command/second-variation/amplitudes")
    T = traj.T

    def xi(t):
        k = np.arange(1, amps.shape[0] + 1)[:, None]
        s = np.sin(np.pi * k * t / T)
        c = np.pi * k / T * np.cos(np.pi * k * t / T)
        return s.T @ amps, c.T @ amps

    raw = dynamics.second_variation(traj, xi, "raw")
    cov = dynamics.second_variation(traj, xi, "covariant")
    return {"raw": raw, "covariant": cov, "difference": abs(raw - cov)}


def cmd_stability(model, opts, cfg):
    if "grid" in opts:
        g = opts["grid"]
        s = stability.sweep(g["k1"], g["k2"], g["k3"], g["B"])
        v = s.violations()
        cols = ["k1", "k2", "k3", "B", "spectrally_stable", "marginal", "curvature_positive",
                "sufficient_criterion_met"]
        rows = np.column_stack([s.k1, s.k2, s.k3, s.B, s.spectrally_stable, s.marginal,
                                s.curvature_positive, s.sufficient_criterion_met])
        return {"violations": {k: int(x.size) for k, x in v.items()}, "table": _table(cols, rows)}
    return stability.assess(opts["k1"], opts["k2"], opts["k3"], opts["B"]).as_dict()


def cmd_verify(model, opts, cfg):
    results = verify.run(opts.get("filter"), opts.get("tolerance"), cfg["seed"])
    return {"cases": [r.as_dict() for r in results], "passed": all(r.passed for r in results),
            "table": _table(["residual", "tolerance", "passed"],
                            [[r.residual, r.tolerance, r.passed] for r in results]),
            "names": [r.name for r in results]}


def cmd_action_compare(model, opts, cfg):
    block = cfg["model"].get("fields")
    if block is None:
        raise ConfigInvalid("action-compare needs a fields model", "/model")
    metric_fn, A_fn, phi_fn = field_functions(block)
    r = boltzmann.action_integral_compare(metric_fn, A_fn, phi_fn, block["n"], opts.get("points", 8),
                                          _quad_spec(opts, cfg["seed"]), opts.get("halving_tol", 1e-4))
    return {"momentum": r.momentum, "closed": r.closed, "gradient": r.gradient,
            "conformal": r.conformal, "conformal_coefficient": r.conformal_coefficient,
            "fitted_coefficient": r.fitted_coefficient, "derived_coefficient": r.derived_coefficient,
            "residuals": r.residuals, "halving_deltas": r.halving_deltas}


COMMANDS = {
    "curvature": cmd_curvature,
    "ricci-density": cmd_ricci_density,
    "eikonal": cmd_eikonal,
    "trajectory": cmd_trajectory,
    "second-variation": cmd_second_variation,
    "stability": cmd_stability,
    "verify": cmd_verify,
    "action-compare": cmd_action_compare,
}


def execute(cfg: dict) -> dict:
    """Run a validated config and return the JSON-ready result."""
    cfg = dict(cfg)
    cfg.setdefault("seed", 0)
    command, opts = next(iter(cfg["command"].items()))
    model = build_model(cfg["model"]) if "model" in cfg else None
    body = COMMANDS[command](model, opts, cfg)
    return {"schema": SCHEMA_VERSION, "command": command, **body}


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else repr(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def to_json(result: dict) -> str:
    return json.dumps(_clean(result), sort_keys=True, indent=2) + "\n"


def to_csv(result: dict) -> str:
    table = result.get("table")
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA_VERSION} command={result['command']}\n")
    w = csv.writer(buf, lineterminator="\n")
    if table is None:
        scalars = {k: v for k, v in result.items() if isinstance(v, (int, float, bool, str))}
        w.writerow(list(scalars))
        w.writerow([repr(v) if isinstance(v, float) else v for v in scalars.values()])
    else:
        w.writerow(table["columns"])
        for row in table["rows"]:
            w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def _error(exc, location=""):
    return {"error": type(exc).__name__, "detail": str(exc),
            "location": getattr(exc, "location", location) or location}


def _emit(text: str, path: Optional[str]):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parser():
    ap = argparse.ArgumentParser(prog="hamgeom", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="action", required=True)

    def common(p):
        p.add_argument("--output", help="write results here instead of stdout")
        p.add_argument("--format", choices=["json", "csv"], help="output format (default json)")
        p.add_argument("--seed", type=int, help="seed for stochastic steps (overrides the config)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker count; computations currently run in one thread")

    run = sub.add_parser("run", help="execute a JSON job config")
    run.add_argument("--config", required=True, help="path to the job config ('-' for stdin)")
    common(run)
    ver = sub.add_parser("verify", help="run the closed-form verification suite")
    ver.add_argument("--filter", help="only cases whose name contains this substring")
    ver.add_argument("--tolerance", type=float, help="override every case tolerance")
    common(ver)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out_path = args.output
    try:
        if args.threads < 1:
            raise ConfigInvalid("--threads must be at least 1", "--threads")
        if args.seed is not None and args.seed < 0:
            raise ConfigInvalid("--seed must be non-negative", "--seed")
        if args.action == "run":
            try:
                text = sys.stdin.read() if args.config == "-" else open(args.config, encoding="utf-8").read()
            except OSError as exc:
                raise ConfigInvalid(f"cannot read config: {exc.strerror}", args.config) from None
            cfg = load_config(text)
        else:
            opts = {}
            if args.filter is not None:
                opts["filter"] = args.filter
            if args.tolerance is not None:
                opts["tolerance"] = args.tolerance
            cfg = {"schema": SCHEMA_VERSION, "command": {"verify": opts}}
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = cfg.get("output", {})
        fmt = args.format or out.get("format", "json")
        out_path = out_path or out.get("path")
    except ConfigInvalid as exc:
        _emit(to_json(_error(exc)), None)
        return 2
    try:
        result = execute(cfg)
    except ConfigInvalid as exc:
        _emit(to_json(_error(exc)), None)
        return 2
    except (HamGeomError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        _emit(to_json(_error(exc, "/command")), None)
        return 1
    _emit(to_csv(result) if fmt == "csv" else to_json(result), out_path)
    if result["command"] == "verify":
        for case in result["cases"]:
            status = "PASS" if case["passed"] else "FAIL"
            sys.stderr.write(f"{status} {case['name']} residual={case['residual']:.3g} "
                             f"tol={case['tolerance']:.3g}\n")
        return 0 if result["passed"] else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
