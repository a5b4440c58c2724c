"""Command line: ``coopsgd run|bounds|compare-selection``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from .errors import ConfigError, DomainError
from .harness import all_diverged, bounds_only, compare_selection_modes, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopsgd", description="Cooperative local-SGD simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every sweep point and seed")
    r.add_argument("config")
    r.add_argument("--out", required=True)
    r.add_argument("--jobs", type=int, default=1)

    b = sub.add_parser("bounds", help="print the bound report without simulating")
    b.add_argument("config")

    c = sub.add_parser("compare-selection", help="per-round vs static client selection")
    c.add_argument("config")
    c.add_argument("--out", required=True)
    c.add_argument("--jobs", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            if args.jobs < 1:
                raise ConfigError("must be >= 1", "--jobs")
            records = run_experiment(args.config, args.out, args.jobs)
            ok = sum(r.status == "ok" for r in records)
            print(f"{ok}/{len(records)} runs completed; comparison written to {args.out}/comparison.csv")
            return EXIT_DIVERGED if all_diverged(records) else EXIT_OK
        if args.command == "bounds":
            json.dump(_json_safe(bounds_only(args.config)), sys.stdout, indent=2, sort_keys=True)
            sys.stdout.write("\n")
            return EXIT_OK
        per_round, static = compare_selection_modes(args.config, args.out, args.jobs)
        for res in (per_round, static):
            print(f"{res.mode}: median final loss {res.median_final_loss:.6g} "
                  f"over {len(res.final_losses)} run(s)")
        return EXIT_DIVERGED if all_diverged(per_round.records + static.records) else EXIT_OK
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
