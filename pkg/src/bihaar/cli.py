"""Command-line front end.

Exit codes: 0 pass, 1 threshold failure, 2 configuration error, 3 budget
guard.  All outputs embed the configuration hash and seed and contain no
timestamps, so reruns with the same config and seed are byte-identical
regardless of --threads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

from .grid import Grid
from .harness import (
    BudgetExceededError,
    ExperimentConfig,
    extrapolation_consistency,
    oracle_suite,
    run_sweep,
)
from .weights import (
    ExponentTuple,
    WeightTuple,
    ap_constant,
    component_margins,
    multilinear_constant,
    sample_weight,
    slice_characteristics,
)

EXIT_PASS = 0
EXIT_THRESHOLD = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3


class ConfigError(ValueError):
    pass


def _load_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(p) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc


def _hash_payload(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _parse_exponent_str(text: str) -> float:
    t = str(text).strip().lower()
    if t in ("inf", "infinity"):
        return math.inf
    value = float(t)
    if value < 1.0:
        raise ConfigError(f"exponent must lie in [1, inf], got {text!r}")
    return value


def cmd_weights(args) -> int:
    payload = _load_json(args.config)
    if payload.get("schema_version", 1) != 1:
        raise ConfigError("unsupported schema version")
    try:
        depths = tuple(int(d) for d in payload["depths"])
        specs = list(payload["weights"])
        exponents = [_parse_exponent_str(e) for e in payload["exponents"]]
        seed = int(payload.get("seed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid weights config: {exc}") from exc
    if len(specs) != len(exponents):
        raise ConfigError("one exponent per weight slot required")
    grid = Grid(*depths)
    try:
        weights = [sample_weight(grid, dict(s), (seed, i)) for i, s in enumerate(specs)]
        wt = WeightTuple(tuple(weights))
    except ValueError as exc:
        raise ConfigError(f"invalid weight spec: {exc}") from exc

    lines = [
        f"# config_hash={_hash_payload(payload)}",
        f"# seed={seed}",
        "quantity,slot,value",
    ]
    for i, (w, p) in enumerate(zip(weights, exponents), start=1):
        label = "inf" if p == math.inf else f"{p:g}"
        if p > 1:
            lines.append(f"a_{label},{i},{ap_constant(w, p)!r}")
        lines.append(f"a_inf,{i},{ap_constant(w, math.inf)!r}")
        lines.append(f"a_1,{i},{ap_constant(w, 1)!r}")
        s1, s2 = slice_characteristics(w, p if 1 < p < math.inf else 2.0)
        lines.append(f"slice_char_x1,{i},{s1!r}")
        lines.append(f"slice_char_x2,{i},{s2!r}")
    joint = multilinear_constant(wt, exponents)
    lines.append(f"multilinear,,{joint!r}")
    for rec in component_margins(wt, exponents):
        lines.append(f"margin:{rec.name},,{rec.margin!r}")
    _write_text(args.out, "\n".join(lines) + "\n")
    return EXIT_PASS


def cmd_oracle(args) -> int:
    depths = (args.depths[0], args.depths[1])
    report = oracle_suite(depths, seed=args.seed)
    for item in report.summary["items"]:
        status = "pass" if item["passed"] else "FAIL"
        print(f"{status} {item['name']}: error={item['error']:.3e} "
              f"tolerance={item['tolerance']:.0e}")
    if args.out:
        Path(args.out).write_text(report.to_json())
    return EXIT_PASS if report.passed else EXIT_THRESHOLD


def _run_config(args, runner) -> int:
    payload = _load_json(args.config)
    try:
        config = ExperimentConfig.from_payload(payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config {args.config}: {exc}") from exc
    out = args.out or config.out
    if out is None:
        raise ConfigError("no output prefix: pass --out or set \"out\" in the config")
    try:
        report = runner(config, threads=args.threads)
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    prefix = Path(out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(str(prefix) + ".csv").write_text(report.to_csv())
    Path(str(prefix) + ".json").write_text(report.to_json())
    for check in report.summary.get("checks", []):
        status = "pass" if check["passed"] else "FAIL"
        print(f"{status} {check['name']}: value={check['value']:.4g} "
              f"threshold={check['threshold']:.4g}")
    print(f"report written to {prefix}.csv and {prefix}.json")
    return EXIT_PASS if report.passed else EXIT_THRESHOLD


def cmd_sweep(args) -> int:
    return _run_config(args, run_sweep)


def cmd_extrapolate(args) -> int:
    return _run_config(args, extrapolation_consistency)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bihaar",
        description="dyadic bi-parameter harmonic analysis workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weights", help="weight characteristics and margins as CSV")
    p.add_argument("--config", required=True, help="JSON file with depths/weights/exponents")
    p.add_argument("--out", default=None, help="output CSV path (default stdout)")
    p.set_defaults(fn=cmd_weights)

    p = sub.add_parser("oracle", help="run the exact-identity suite")
    p.add_argument("--depths", type=int, nargs=2, default=(2, 2))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="JSON report path")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("sweep", help="run a statistical norm-ratio sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None,
                   help="output prefix (.csv/.json appended); default from config")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("extrapolate", help="cross-exponent consistency experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_extrapolate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
