"""Command line entry point: ``olt run|presets|verify|oracle``.

Exit codes: 0 when every check passes, 1 on a bound or oracle failure,
2 on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .analysis import LedgerError
from .harness import (
    ConfigError,
    RunConfig,
    group_records,
    load_records,
    oracle_suite,
    run_ensemble,
    verify_bounds,
    write_record,
)
from .presets import preset, preset_names

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _print_rows(rows) -> bool:
    for row in rows:
        verdict = "PASS" if row.passed else "FAIL"
        print(
            f"{verdict} {row.bound:<12} {row.reference:<16} lhs={row.lhs:.6g} rhs={row.rhs:.6g} "
            f"slack={row.slack:.3g} tol={row.tol:.3g} {row.detail}"
        )
    return all(row.passed for row in rows)


def _out_root(arg: str | None) -> Path:
    return Path(arg or os.environ.get("OLT_OUT_DIR", "olt-out"))


def cmd_run(args) -> int:
    if args.preset:
        config = preset(args.preset)
    else:
        config = RunConfig.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.replicates is not None:
        changes["replicates"] = args.replicates
    if changes:
        config = config.replace(**changes)
    out = _out_root(args.out) / config.name
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(config.dump())
    records = run_ensemble(config, workers=args.workers)
    rows = verify_bounds(records)
    for rec in records:
        rec.checks = [row.to_dict() for row in rows]
        write_record(rec, out)
    (out / "checks.json").write_text(json.dumps([row.to_dict() for row in rows], indent=1))
    print(f"{len(records)} replicate(s) of {config.name} written to {out}")
    return EXIT_OK if _print_rows(rows) else EXIT_FAIL


def cmd_presets(args) -> int:
    if args.show:
        print(preset(args.show).dump(), end="")
        return EXIT_OK
    for name in preset_names():
        cfg = preset(name)
        print(f"{name:<22} {cfg.variant:<18} eta={cfg.eta:g} m={cfg.m} T={cfg.T} replicates={cfg.replicates}")
    return EXIT_OK


def cmd_verify(args) -> int:
    records = load_records(args.records)
    if not records:
        raise ConfigError(f"no record.json found under {args.records}")
    ok = True
    for name, group in group_records(records).items():
        print(f"# {name}: {len(group)} replicate(s)")
        ok &= _print_rows(verify_bounds(group))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_oracle(args) -> int:
    report = oracle_suite(args.seed, args.count)
    print(f"qp {report.qp_agree}/{report.qp_instances}  w2 {report.w2_agree}/{report.w2_instances}  digest {report.digest}")
    return EXIT_OK if report.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="olt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a configuration and check its bounds")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="YAML or JSON run configuration")
    src.add_argument("--preset", help="name of a built-in configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output root (default: $OLT_OUT_DIR or ./olt-out)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("presets", help="list built-in configurations")
    p.add_argument("--show", metavar="NAME", help="print one preset as a config file")
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("verify", help="re-check bounds on written records")
    p.add_argument("--records", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="cross-check solvers against brute force")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, LedgerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
