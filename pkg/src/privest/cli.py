"""Command line front end: audits, bound verifications, benchmarks and a self test.

Exit codes: 0 success, 1 a requested verdict failed, 2 bad input, 3 resource cap.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import audit, bench, bounds
from .core import (
    DEFAULT_CAP,
    KL,
    TV,
    DiscreteChannel,
    DomainError,
    ResourceError,
    SpecError,
    kl_divergence,
    random_channel,
    random_distribution,
    tv_distance,
)
from .mechanisms import HistogramSpec, MechanismSpec
from .report import jsonable

EXIT_OK, EXIT_VERDICT, EXIT_INPUT, EXIT_CAP = 0, 1, 2, 3
MAX_SEED = 2**64 - 1


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# schemas

_NUMBER_OR_INF = {"anyOf": [{"type": "number"}, {"enum": ["inf"]}]}
_WINDOW = {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2}

TABLE1_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "d": {"type": "integer", "minimum": 1},
        "d_high": {"type": "integer", "minimum": 1},
        "eps": {"type": "number", "exclusiveMinimum": 0},
        "r": {"type": "number", "exclusiveMinimum": 0},
        "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "reps": {"type": "integer", "minimum": 100},
        "privacy_window": _WINDOW,
        "statistical_window": _WINDOW,
        "reference_window": {"anyOf": [_WINDOW, {"type": "null"}]},
        "ratio_n": {"anyOf": [{"type": "integer", "minimum": 1}, {"type": "null"}]},
        "rows": {
            "type": "array",
            "items": {"enum": list(bench.THEORY)},
            "minItems": 1,
        },
        "slope_tol": {"type": "number", "exclusiveMinimum": 0},
        "ratio_factor": {"type": "number", "minimum": 1},
    },
}

SWEEP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["mechanism", "family", "grid", "reps"],
    "properties": {
        "mechanism": {"type": "object"},
        "family": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": list(bench.FAMILIES)},
                "r": {"type": "number"},
                "d": {"type": "integer"},
                "k": _NUMBER_OR_INF,
                "delta_mass": {"type": "number"},
                "slope": {"type": "number"},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["axis", "values"],
            "properties": {
                "axis": {"enum": list(bench.AXES)},
                "values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            },
        },
        "reps": {"type": "integer", "minimum": 100},
        "n": {"type": "integer", "minimum": 1},
        "noise": {"type": "boolean"},
        "fit_window": _WINDOW,
    },
}

BENCH_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command"],
    "properties": {
        "command": {"const": "bench"},
        "table1": TABLE1_SCHEMA,
        "sweeps": {"type": "array", "items": SWEEP_SCHEMA},
        "lemma_suite": {"type": "boolean"},
    },
}

BOUNDS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command"],
    "properties": {
        "command": {"const": "bounds"},
        "contraction": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "instances": {"type": "integer", "minimum": 0},
                "max_alphabet": {"type": "integer", "minimum": 2},
                "max_n": {"type": "integer", "minimum": 1},
                "max_outputs": {"type": "integer", "minimum": 2},
            },
        },
        "mass_everywhere": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "instances": {"type": "integer", "minimum": 0},
                "n": {"type": "integer", "minimum": 1, "maximum": 4},
                "outputs": {"type": "integer", "minimum": 1},
            },
        },
        "evaluators": {"type": "boolean"},
    },
}

DEFAULT_BOUNDS_CONFIG = {"command": "bounds", "contraction": {}, "mass_everywhere": {}, "evaluators": True}


def _load_json(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _validate(doc, schema) -> None:
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"config rejected at {where}: {exc.message}") from exc


def _emit(doc, out: str | None) -> None:
    text = json.dumps(jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cap(value: int | None) -> int:
    if value is None:
        return DEFAULT_CAP
    if value < 1 or value > DEFAULT_CAP:
        raise InputError(f"--cap may only lower the enumeration cap (1..{DEFAULT_CAP})")
    return value


def _require_seed(args) -> int:
    if args.seed is None:
        raise InputError(f"{args.command} requires --seed")
    if not 0 <= args.seed <= MAX_SEED:
        raise InputError("--seed must be an unsigned 64-bit integer")
    return args.seed


# ---------------------------------------------------------------------------
# commands


def _needs(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + m.replace("_", "-") for m in missing)
        raise InputError(f"definition needs {flags}")


def _audit_one(q: DiscreteChannel, definition: str, args, cap: int) -> dict:
    eps = math.inf if args.eps is None else args.eps
    if definition == "dp":
        return audit.audit_dp(q, eps, cap).to_json()
    if definition == "approx_dp":
        _needs(args, "eps")
        return audit.audit_approx_dp(q, args.eps, args.delta or 0.0, cap).to_json()
    if definition == "testing_bound":
        _needs(args, "eps")
        return audit.audit_testing_bound(q, args.eps, args.delta or 0.0, cap).to_json()
    if definition == "smooth_dp":
        _needs(args, "metric")
        metric = audit.MetricSpec.from_json(_load_json(args.metric))
        return audit.audit_smooth_dp(q, metric, eps, cap).to_json()
    if definition in ("tv", "kl"):
        return audit.audit_f_privacy(q, TV if definition == "tv" else KL, eps, cap).to_json()
    if definition == "chtp":
        _needs(args, "eps_ch")
        verdict = audit.audit_chtp(q, args.eps_ch, args.delta_ch or 0.0, cap).to_json()
        return verdict
    if definition == "f_div":
        raise InputError("f_div takes a Python generator; use privest.audit.audit_f_privacy from the library")
    raise InputError(f"unknown definition {definition!r}; choose from {', '.join(audit.DEFINITIONS)}")


def cmd_audit(args) -> int:
    cap = _cap(args.cap)
    try:
        q = DiscreteChannel.from_json(_load_json(args.channel))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"invalid channel: {exc}") from exc
    definitions = [d.strip() for d in args.definitions.split(",") if d.strip()]
    if not definitions:
        raise InputError("no definitions requested")
    verdicts = [_audit_one(q, d, args, cap) for d in definitions]
    _emit({"channel": args.channel, "verdicts": verdicts}, args.out)
    return EXIT_OK if all(v["holds"] for v in verdicts) else EXIT_VERDICT


def run_bounds(config: dict, seed: int, jobs: int = 1, cap: int | None = None) -> dict:
    _validate(config, BOUNDS_SCHEMA)
    reports = []
    if "contraction" in config:
        c = config["contraction"]
        reports.append(
            bounds.contraction_sweep(
                seed,
                c.get("instances", 100),
                c.get("max_alphabet", 3),
                c.get("max_n", 3),
                c.get("max_outputs", 4),
                jobs,
                cap,
            ).to_json()
        )
    if "mass_everywhere" in config:
        m = config["mass_everywhere"]
        reports.append(
            bounds.mass_everywhere_sweep(
                seed, m.get("instances", 50), m.get("n", 3), m.get("outputs", 4), jobs, cap
            ).to_json()
        )
    doc = {"check": "bounds", "seed": seed, "reports": reports}
    if config.get("evaluators", False):
        doc["evaluators"] = bounds.evaluator_table()
    doc["ok"] = all(not r["violations"] for r in reports) and all(
        e.get("agree", True) for e in doc.get("evaluators", [])
    )
    return doc


def cmd_bounds(args) -> int:
    seed = _require_seed(args)
    config = _load_json(args.config) if args.config else DEFAULT_BOUNDS_CONFIG
    doc = run_bounds(config, seed, args.jobs, _cap(args.cap))
    _emit(doc, args.out)
    return EXIT_OK if doc["ok"] else EXIT_VERDICT


def _mechanism_from_json(doc: dict):
    if "variant" in doc:
        return MechanismSpec.from_json(doc)
    return HistogramSpec.from_json(doc)


def run_bench(config: dict, seed: int, jobs: int = 1) -> tuple[dict, str]:
    """Returns the JSON report and the CSV text."""
    _validate(config, BENCH_SCHEMA)
    curves, doc = [], {"check": "bench", "seed": seed}
    if "table1" in config:
        try:
            cfg = bench.Table1Config.from_json(config["table1"])
        except TypeError as exc:
            raise InputError(str(exc)) from exc
        report, t_curves = bench.table1_report(cfg, seed, jobs)
        doc["table1"] = report
        curves.extend(t_curves)
    sweeps = []
    for entry in config.get("sweeps", []):
        fam_doc = dict(entry["family"])
        if fam_doc.get("k") == "inf":
            fam_doc["k"] = math.inf
        family = bench.DistributionFamilySpec(**fam_doc)
        curve = bench.risk_sweep(
            _mechanism_from_json(entry["mechanism"]),
            family,
            bench.SweepGrid(entry["grid"]["axis"], tuple(entry["grid"]["values"])),
            entry["reps"],
            seed,
            n=entry.get("n"),
            noise=entry.get("noise", True),
            jobs=jobs,
        )
        if "fit_window" in entry:
            bench.fit_exponent(curve, tuple(entry["fit_window"]))
        curves.append(curve)
        sweeps.append(curve.to_json())
    if sweeps:
        doc["sweeps"] = sweeps
    if config.get("lemma_suite"):
        doc["lemma_suite"] = bench.lemma_property_suite(seed)
    return doc, bench.write_csv(curves)


def cmd_bench(args) -> int:
    seed = _require_seed(args)
    if args.config:
        config = _load_json(args.config)
    else:
        config = json.loads(resources.files("privest").joinpath("configs/table1.json").read_text())
    try:
        doc, csv_text = run_bench(config, seed, args.jobs)
    except bench.FitError as exc:
        raise InputError(str(exc)) from exc
    out = Path(args.out) if args.out else None
    if out is None:
        sys.stdout.write(csv_text)
        _emit(doc, None)
    else:
        out.with_suffix(".csv").write_text(csv_text)
        _emit(doc, str(out.with_suffix(".json")))
    ok = doc.get("table1", {}).get("agrees", True) and doc.get("lemma_suite", {}).get("ok", True)
    return EXIT_OK if ok else EXIT_VERDICT


# ---------------------------------------------------------------------------
# self test


def _check_testing_equivalence(seed: int, fault: bool) -> tuple[bool, str]:
    gen = np.random.default_rng([seed, 1])
    worst = 0.0
    for _ in range(50):
        q = random_channel(gen, int(gen.integers(2, 4)), int(gen.integers(1, 3)), int(gen.integers(2, 7)))
        eps = float(gen.uniform(0, 2))
        a = audit.audit_approx_dp(q, eps).tight_param + (1e-3 if fault else 0.0)
        b = audit.audit_testing_bound(q, eps, 0.0).tight_param
        worst = max(worst, abs(a - b))
    return worst <= 1e-9, f"max |delta gap| = {worst:.3g}"


def _check_chtp_round_trip(seed: int) -> tuple[bool, str]:
    gen = np.random.default_rng([seed, 2])
    worst = 0.0
    for _ in range(200):
        eps, delta = float(gen.uniform(0.01, 3)), float(gen.uniform(0, 0.5))
        c, dc = audit.chtp_params_from_dp(eps, delta)
        e2, d2 = audit.dp_params_from_chtp(*audit.converse_chtp_params(eps, delta))
        worst = max(worst, abs(e2 - eps), abs(d2 - delta))
        if not (c >= 0 and dc >= 0):
            return False, "forward map produced a negative parameter"
    return worst <= 1e-9, f"max round-trip error = {worst:.3g}"


def _check_pinsker(seed: int) -> tuple[bool, str]:
    gen = np.random.default_rng([seed, 3])
    worst = -math.inf
    for _ in range(500):
        outcomes = tuple(range(int(gen.integers(2, 8))))
        p, q = random_distribution(gen, outcomes), random_distribution(gen, outcomes)
        worst = max(worst, tv_distance(p, q) - math.sqrt(kl_divergence(p, q) / 2))
    return worst <= 1e-12, f"max TV - sqrt(KL/2) = {worst:.3g}"


def _check_contraction(seed: int) -> tuple[bool, str]:
    rep = bounds.contraction_sweep(seed, 30)
    return rep.ok, f"{rep.instances} instances, min margin {rep.max_slack_used:.3g}"


def _check_lemmas(seed: int) -> tuple[bool, str]:
    rep = bench.lemma_property_suite(seed, draws=20_000)
    return rep["ok"], f"{rep['instances']} configurations"


SELFTEST_CHECKS = (
    ("testing_equivalence", lambda s, f: _check_testing_equivalence(s, f)),
    ("chtp_round_trip", lambda s, f: _check_chtp_round_trip(s)),
    ("pinsker", lambda s, f: _check_pinsker(s)),
    ("contraction_sweep", lambda s, f: _check_contraction(s)),
    ("truncation_lemmas", lambda s, f: _check_lemmas(s)),
)


def cmd_selftest(args) -> int:
    seed = 0 if args.seed is None else args.seed
    results = []
    for name, fn in SELFTEST_CHECKS:
        ok, info = fn(seed, args.inject_fault)
        results.append({"check": name, "ok": bool(ok), "info": info})
        print(f"{'PASS' if ok else 'FAIL'} {name}: {info}")
    if args.out:
        _emit({"check": "selftest", "results": results}, args.out)
    return EXIT_OK if all(r["ok"] for r in results) else EXIT_VERDICT


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", default=None, help="output path (stdout when omitted)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--cap", type=int, default=None, help=f"enumeration cap, at most {DEFAULT_CAP}")

    parser = argparse.ArgumentParser(prog="privest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", parents=[common], help="audit a serialized channel")
    p.add_argument("channel", help="channel JSON file")
    p.add_argument("--definitions", default="dp", help=f"comma list from {','.join(audit.DEFINITIONS)}")
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--eps-ch", dest="eps_ch", type=float)
    p.add_argument("--delta-ch", dest="delta_ch", type=float)
    p.add_argument("--metric", help="metric JSON file for smooth_dp")
    p.set_defaults(handler=cmd_audit)

    p = sub.add_parser("bounds", parents=[common], help="run bound verification sweeps")
    p.add_argument("config", nargs="?", help="bounds config JSON (default sweep when omitted)")
    p.set_defaults(handler=cmd_bounds)

    p = sub.add_parser("bench", parents=[common], help="run risk benchmarks")
    p.add_argument("config", nargs="?", help="bench config JSON (bundled rate table when omitted)")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("selftest", parents=[common], help="run the invariant suite")
    p.add_argument("--inject-fault", action="store_true", help="perturb one check to confirm failures surface")
    p.set_defaults(handler=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.handler(args)
    except ResourceError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (InputError, SpecError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
