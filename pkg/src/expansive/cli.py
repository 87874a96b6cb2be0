"""Command-line entry point: ``expansive <command> --config run.json [flags]``.

Every run reads a versioned JSON config (validated with jsonschema, unknown
keys rejected), writes CSV or JSON records to ``--out`` and a manifest
``<out>.manifest.json`` with the effective config, tool version, arithmetic
mode, wall time and SHA-256 digests of every output file.  A manifest can be
passed back as ``--config`` to replay the run.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import jsonschema
import mpmath

from . import __version__
from .errors import ConfigError, DomainError, ExpansiveError
from .model import ExpansiveSpec, resolve_mode, sv_report, working_precision
from .series import format_value

CONFIG_SCHEMA_ID = "expansive/1"
MANIFEST_SCHEMA_ID = "expansive-manifest/1"
COMMANDS = ("transform", "saddle", "nstar", "asym", "compare", "sample", "estimate", "llt",
            "phase-sweep", "check-sv")
DEFAULT_EXACT_GUARD = 2000
MAX_SEED = 2**64 - 1

_real = {"anyOf": [{"type": "number"}, {"type": "string"}]}
_pos_int = {"type": "integer", "minimum": 1}
_nonneg_int = {"type": "integer", "minimum": 0}
_pos_num = {"type": "number", "exclusiveMinimum": 0}
_forms = {"type": "array", "items": {"enum": ["LLT_I", "Explicit_I", "Comb_I", "LLT_II", "Comb_II",
                                              "LLT_II_printed"]}}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "command"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": CONFIG_SCHEMA_ID},
        "command": {"enum": list(COMMANDS)},
        "spec": {"$ref": "#/$defs/spec"},
        "params": {"type": "object"},
        "seed": {"type": "integer", "minimum": 0, "maximum": MAX_SEED},
        "threads": _pos_int,
        "precision": {"type": "integer", "minimum": 53},
        "exact": {"type": "boolean"},
        "format": {"enum": ["csv", "json"]},
        "allow_window": {"type": "boolean"},
    },
    "$defs": {
        "spec": {
            "type": "object",
            "required": ["alpha", "rho"],
            "additionalProperties": False,
            "properties": {"alpha": _real, "rho": _real, "m": _pos_int, "h": {"$ref": "#/$defs/sv"}},
        },
        "sv": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["constant", "log_power", "loglog_power", "product"]},
                "params": {"type": "object"},
            },
        },
    },
}


def _params(props: dict, required=()) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props, "required": list(required)}


_point = {"n": _pos_int, "N": _pos_int, "lam": _pos_num}

PARAM_SCHEMAS = {
    "transform": _params({"n_max": _nonneg_int, "N_max": _nonneg_int,
                          "raw": {"type": "array", "items": _real}}, ["n_max", "N_max"]),
    "saddle": _params({**_point, "tol": _pos_num}, ["n"]),
    "nstar": _params({"v": {"anyOf": [_pos_num, {"type": "array", "items": _pos_num, "minItems": 1}]},
                      "tol": _pos_num}, ["v"]),
    "asym": _params({**_point, "forms": _forms}, ["n"]),
    "compare": _params({"n_grid": {"type": "array", "items": _pos_int, "minItems": 1}, "N": _pos_int,
                        "lam": _pos_num, "forms": _forms, "exact_guard": _pos_int}, ["n_grid"]),
    "sample": _params({"x0": _pos_num, "y0": _pos_num, "n": _pos_int, "N": _pos_int,
                       "draws": _pos_int, "eps": _pos_num}, ["draws"]),
    "estimate": _params({"n": _pos_int, "N": _pos_int, "trials": _pos_int}, ["n", "N", "trials"]),
    "llt": _params({**_point, "p_grid": {"type": "array", "items": _pos_int, "minItems": 1},
                    "t_grid": {"type": "array", "items": {"type": "number"}}}, ["n", "p_grid"]),
    "phase-sweep": _params({"n": _pos_int, "lambda_grid": {"type": "array", "items": _pos_num, "minItems": 1},
                            "exact_guard": _pos_int}, ["n", "lambda_grid"]),
    "check-sv": _params({"x_grid": {"type": "array", "items": _pos_int, "minItems": 2},
                         "deltas": {"type": "array", "items": _pos_num}}, ["x_grid"]),
}


# --------------------------------------------------------------------------
# Config handling


def load_config(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if isinstance(doc, dict) and doc.get("schema") == MANIFEST_SCHEMA_ID:
        doc = doc.get("config")
    return doc


def validate_config(doc) -> dict:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
        jsonschema.validate(doc.get("params", {}), PARAM_SCHEMAS[doc["command"]])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    return doc


def merge_flags(doc: dict, args: argparse.Namespace) -> dict:
    """Effective config: command-line flags override config values."""
    doc = copy.deepcopy(doc)
    if doc.get("command") not in (None, args.command):
        raise ConfigError(f"config is for command {doc['command']!r}, not {args.command!r}")
    doc["command"] = args.command
    for key in ("seed", "threads", "precision", "format"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    if args.exact:
        doc["exact"] = True
    if args.allow_window:
        doc["allow_window"] = True
    doc.setdefault("seed", 0)
    doc.setdefault("threads", 1)
    doc.setdefault("format", "csv")
    return doc


# --------------------------------------------------------------------------
# Output


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, mpmath.mpf):
        return format_value(v, "mp")
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, (Fraction, mpmath.mpf)):
        return _cell(v)
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def render_records(records: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([_json_value(r) for r in records], indent=1) + "\n"
    fields: list[str] = []
    for r in records:
        fields.extend(k for k in r if k not in fields)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for r in records:
        writer.writerow([_cell(r.get(k)) for k in fields])
    return buf.getvalue()


class Outputs:
    """Collects output files and their digests for the manifest."""

    def __init__(self, out: Path, fmt: str):
        self.out = out
        self.fmt = fmt
        self.digests: dict[str, str] = {}

    def sibling(self, tag: str) -> Path:
        return self.out.with_name(f"{self.out.stem}.{tag}{self.out.suffix}")

    def write_text(self, path: Path, text: str) -> None:
        data = text.encode()
        path.write_bytes(data)
        self.digests[str(path)] = hashlib.sha256(data).hexdigest()

    def write(self, records: list[dict], path: Path | None = None) -> None:
        self.write_text(path or self.out, render_records(records, self.fmt))


def notice(msg: str) -> None:
    print(f"expansive: {msg}", file=sys.stderr)


# --------------------------------------------------------------------------
# Commands


def _spec(cfg: dict) -> ExpansiveSpec:
    if "spec" not in cfg:
        raise ConfigError("this command needs a 'spec' entry")
    return ExpansiveSpec.from_dict(cfg["spec"])


def _resolve_N(spec: ExpansiveSpec, p: dict) -> int:
    from .asym import N_at

    if "N" in p and "lam" in p:
        raise ConfigError("give either N or lam, not both")
    if "N" in p:
        return p["N"]
    if "lam" in p:
        N = N_at(spec, p["n"], p["lam"])
        if N < 1:
            raise DomainError(f"floor(lam N*) = {N} is not a positive count")
        return N
    raise ConfigError("give N or lam")


def _saddle_fields(sol) -> dict:
    return {"n": sol.n, "N": sol.N, "lam": sol.lam, "regime": sol.regime, "x_n": sol.x_n, "y_n": sol.y_n,
            "chi_n": sol.chi_n, "S_n": sol.S_n, "residual_size": sol.residual_size,
            "residual_count": sol.residual_count}


def cmd_transform(cfg: dict, out: Outputs) -> str:
    from .series import (CoeffVector, build_C, max_relative_difference, mset_exp_transform,
                         mset_product_transform, tables_equal)

    p = cfg.get("params", {})
    n_max, N_max = p["n_max"], p["N_max"]
    if "raw" in p:
        if "spec" in cfg:
            raise ConfigError("give either spec or params.raw, not both")
        mode = "exact" if cfg.get("exact") else None
        raw = list(p["raw"][: n_max + 1])
        c = CoeffVector.from_raw(raw + [0] * (n_max + 1 - len(raw)), mode=mode)  # missing weights are 0
    else:
        spec = _spec(cfg)
        mode = resolve_mode(spec, "exact" if cfg.get("exact") else "auto")
        c = build_C(spec, max(n_max, 0), mode=mode)
    exp_t = mset_exp_transform(c, n_max, N_max)
    prod_t = mset_product_transform(c, n_max, N_max)
    equal = tables_equal(exp_t, prod_t)
    rows = lambda t: [{"n": n, "N": N, "g": v} for n, N, v in t.nonzero()]
    out.write(rows(exp_t))
    out.write(rows(prod_t), out.sibling("product"))
    report = {"mode": c.mode, "n_max": n_max, "N_max": N_max, "identical": equal,
              "max_relative_difference": max_relative_difference(exp_t, prod_t),
              "row_sums": [exp_t.row_sum(n) for n in range(n_max + 1)]}
    out.write_text(out.out.with_name(out.out.stem + ".check.json"),
                   json.dumps(_json_value(report), indent=1) + "\n")
    if c.mode != "exact" and not equal:
        notice(f"tables differ by at most {report['max_relative_difference']:.3g} (relative)")
    elif c.mode == "exact" and not equal:
        raise ExpansiveError("exact transforms disagree")
    return c.mode


def cmd_saddle(cfg: dict, out: Outputs) -> str:
    from .saddle import DEFAULT_ROOT_TOL, chi_asymptotic_check, solve_bivariate, solve_univariate

    spec, p = _spec(cfg), cfg.get("params", {})
    tol = p.get("tol", DEFAULT_ROOT_TOL)
    if "N" not in p and "lam" not in p:
        z = solve_univariate(spec, p["n"], tol)
        out.write([{"n": p["n"], "z_n": z}])
        return "float"
    sol = solve_bivariate(spec, p["n"], _resolve_N(spec, p), tol)
    rec = _saddle_fields(sol)
    rec.update(chi_asymptotic_check(spec, sol))
    out.write([rec])
    return "float"


def cmd_nstar(cfg: dict, out: Outputs) -> str:
    from .saddle import DEFAULT_ROOT_TOL, nstar_residual, solve_Nstar

    spec, p = _spec(cfg), cfg.get("params", {})
    vs = p["v"] if isinstance(p["v"], list) else [p["v"]]
    rows = []
    for v in vs:
        s = solve_Nstar(spec, v, p.get("tol", DEFAULT_ROOT_TOL))
        rows.append({"v": s.v, "u_v": s.u_v, "g_v": s.g_v, "N_star": s.N_star, "C0": s.C0,
                     "residual": nstar_residual(spec, s)})
    out.write(rows)
    return "float"


def cmd_asym(cfg: dict, out: Outputs) -> str:
    from .asym import estimate, forms_for, g_n_formula
    from .saddle import solve_bivariate

    spec, p = _spec(cfg), cfg.get("params", {})
    if "N" not in p and "lam" not in p:
        est = g_n_formula(spec, p["n"])
        out.write([est.record()])
        return "float"
    sol = solve_bivariate(spec, p["n"], _resolve_N(spec, p))
    if sol.regime == "Window":
        if not cfg.get("allow_window"):
            raise DomainError(f"lambda = {sol.lam:.4g} lies in the window band; no formula applies "
                              "(pass --allow-window for saddle data only)")
        notice("window band: formula values withheld, writing saddle data only")
        out.write([_saddle_fields(sol)])
        return "float"
    forms = p.get("forms") or forms_for(sol.regime)
    out.write([estimate(spec, sol, f, enforce_regime=False).record() for f in forms])
    return "float"


def _exact_log_gnN(spec: ExpansiveSpec, n: int, N: int) -> float:
    from .series import build_C, mset_exp_transform

    v = mset_exp_transform(build_C(spec, n, mode="exact"), n, N).value(n, N)
    return math.log(v.numerator) - math.log(v.denominator) if v > 0 else -math.inf


def cmd_compare(cfg: dict, out: Outputs) -> str:
    from .asym import compare_gn, compare_point
    from .saddle import classify

    spec, p = _spec(cfg), cfg.get("params", {})
    guard = p.get("exact_guard", DEFAULT_EXACT_GUARD)
    exact = bool(cfg.get("exact"))
    if exact:
        resolve_mode(spec, "exact")
    rows = []
    for n in p["n_grid"]:
        if n > guard:
            raise ConfigError(f"n = {n} exceeds the exact guard {guard}")
        if "N" not in p and "lam" not in p:
            rows.append(compare_gn(spec, n))
            continue
        N = _resolve_N(spec, {**p, "n": n})
        if "lam" in p and classify(p["lam"]) == "Window" and not cfg.get("allow_window"):
            notice(f"skipping n = {n}: lambda in the window band")
            continue
        point = compare_point(spec, n, N, p.get("forms"), enforce_regime=False)
        for row in point:
            if exact:
                row["exact_log"] = _exact_log_gnN(spec, n, N)
                row["ratio"] = math.exp(row["formula_log"] - row["exact_log"]) \
                    if math.isfinite(row["formula_log"]) else row["formula_log"]
            expected = {"CaseI": "_I", "CaseII": "_II"}.get(row["regime"], "?")
            row["matched"] = row["formula"].endswith(expected) and not row["formula"].endswith("_printed")
            rows.append(row)
    out.write(rows)
    return "exact" if exact else "float"


def _boltzmann_params(spec: ExpansiveSpec, p: dict):
    from .boltz import DEFAULT_EPS, params_at, tune

    eps = p.get("eps", DEFAULT_EPS)
    if "x0" in p or "y0" in p:
        if "x0" not in p or "y0" not in p:
            raise ConfigError("give both x0 and y0")
        return params_at(spec, p["x0"], p["y0"], eps)
    if "n" not in p:
        raise ConfigError("give (x0, y0) or a target n (and optionally N)")
    return tune(spec, p["n"], p.get("N"), eps)


def cmd_sample(cfg: dict, out: Outputs) -> str:
    from .boltz import RngState, expected_size_count, sample_many

    spec, p = _spec(cfg), cfg.get("params", {})
    params = _boltzmann_params(spec, p)
    sizes, counts = sample_many(params, spec, p["draws"], RngState(cfg["seed"]), cfg["threads"])
    if out.fmt == "csv":
        body = "\n".join(f"{i},{s},{c}" for i, (s, c) in enumerate(zip(sizes.tolist(), counts.tolist())))
        out.write_text(out.out, "draw,size,count\n" + body + "\n")
    else:
        out.write([{"draw": i, "size": s, "count": c}
                   for i, (s, c) in enumerate(zip(sizes.tolist(), counts.tolist()))])
    e_size, e_count = expected_size_count(spec, params)
    summary = [{"x0": params.x0, "y0": params.y0, "j_max": params.j_max, "draws": len(sizes),
                "mean_size": float(sizes.mean()), "expected_size": e_size,
                "mean_count": float(counts.mean()), "expected_count": e_count}]
    out.write(summary, out.sibling("summary"))
    return "float"


def cmd_estimate(cfg: dict, out: Outputs) -> str:
    from .boltz import estimate_gnN

    spec, p = _spec(cfg), cfg.get("params", {})
    res = estimate_gnN(spec, p["n"], p["N"], p["trials"], cfg["seed"], cfg["threads"])
    rec = res.record()
    rec.update({"hits": res.hits, "estimate": res.value})
    out.write([rec])
    return "float"


def cmd_llt(cfg: dict, out: Outputs) -> str:
    from .llt import llt_check

    spec, p = _spec(cfg), cfg.get("params", {})
    N = _resolve_N(spec, p)
    out.write(llt_check(spec, p["n"], N, sorted(p["p_grid"]), tuple(p.get("t_grid", (0.0, 1.0, 2.0)))))
    return "float"


def cmd_phase_sweep(cfg: dict, out: Outputs) -> str:
    from .asym import N_at, estimate
    from .saddle import chi_asymptotic_check, classify, solve_bivariate, solve_Nstar
    from .series import float_table

    spec, p = _spec(cfg), cfg.get("params", {})
    n = p["n"]
    guard = p.get("exact_guard", DEFAULT_EXACT_GUARD)
    n_star = solve_Nstar(spec, n).N_star
    points = []
    for lam in p["lambda_grid"]:
        if classify(lam) == "Window" and not cfg.get("allow_window"):
            notice(f"skipping lambda = {lam}: window band")
            continue
        N = N_at(spec, n, lam)
        if N < 1 or n - spec.m * N < 1:
            notice(f"skipping lambda = {lam}: N = {N} is infeasible for n = {n}")
            continue
        points.append((lam, N))
    table = float_table(spec, n, max(N for _, N in points)) if points and n <= guard else None
    rows = []
    for lam, N in points:
        sol = solve_bivariate(spec, n, N)
        chk = chi_asymptotic_check(spec, sol)
        row = {"lambda": lam, "N_star": n_star, **_saddle_fields(sol), "S_over_N": chk["S_over_N"],
               "y_rho_m": chk["y_rho_m"], "a_n": chk["a_n"], "S_ratio_II": chk["S_ratio_II"]}
        if sol.regime != "Window":
            exact_log = table.log_value(n, N) if table is not None else None
            row["exact_log"] = exact_log
            for form, tag in (("LLT_I", "I"), ("LLT_II", "II")):
                try:
                    val = estimate(spec, sol, form, enforce_regime=False).log_value
                except DomainError:
                    val = math.inf
                row[f"LLT_{tag}_log"] = val
                row[f"ratio_{tag}"] = (math.exp(val - exact_log) if exact_log is not None and math.isfinite(val)
                                       else (math.inf if exact_log is not None else None))
            row["matched"] = "LLT_I" if sol.regime == "CaseI" else "LLT_II"
        rows.append(row)
    out.write(rows)
    return "float"


def cmd_check_sv(cfg: dict, out: Outputs) -> str:
    spec, p = _spec(cfg), cfg.get("params", {})
    deltas = tuple(p.get("deltas", (0.1,)))
    rep = sv_report(spec, p["x_grid"], deltas)
    dev = {(x, lam): d for x, lam, d in rep.grid}
    lambdas = sorted({lam for _, lam, _ in rep.grid})
    rows = []
    for i, x in enumerate(p["x_grid"]):
        row = {"x": x, "karamata_ratio": rep.karamata[i][1]}
        for lam in lambdas:
            row[f"sv_deviation_{lam:g}"] = dev[(float(x), lam)]
        for d in deltas:
            row[f"subpoly_{d}"] = rep.subpoly_ok[d][i]
        rows.append(row)
    out.write(rows)
    return "float"


HANDLERS = {
    "transform": cmd_transform, "saddle": cmd_saddle, "nstar": cmd_nstar, "asym": cmd_asym,
    "compare": cmd_compare, "sample": cmd_sample, "estimate": cmd_estimate, "llt": cmd_llt,
    "phase-sweep": cmd_phase_sweep, "check-sv": cmd_check_sv,
}


# --------------------------------------------------------------------------
# Driver


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="expansive", description="Expansive multiset enumeration toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run config (or a manifest to replay)")
    ap.add_argument("--out", help="output path (default: <command>.<format>)")
    ap.add_argument("--format", choices=("csv", "json"))
    ap.add_argument("--seed", type=int, help="RNG seed (unsigned 64-bit)")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--precision", type=int, help="mantissa bits for the mp arithmetic mode")
    ap.add_argument("--exact", action="store_true", help="force exact rational arithmetic")
    ap.add_argument("--allow-window", action="store_true",
                    help="process window-band points (saddle data only)")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    doc = load_config(args.config)
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    cfg = validate_config(merge_flags(doc, args))
    out = Outputs(Path(args.out or f"{cfg['command']}.{cfg['format']}"), cfg["format"])
    start = time.perf_counter()
    with working_precision(cfg.get("precision", 128)):
        mode = HANDLERS[cfg["command"]](cfg, out)
    manifest = {
        "schema": MANIFEST_SCHEMA_ID,
        "config": cfg,
        "version": __version__,
        "mode": mode,
        "wall_time_s": time.perf_counter() - start,
        "outputs": out.digests,
    }
    Path(str(out.out) + ".manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except ExpansiveError as exc:
        notice(f"{type(exc).__name__}: {exc}")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
