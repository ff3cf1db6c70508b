"""``gem-mix`` command line.

Usage::

    gem-mix <subcommand> --spec FILE --seed N --out DIR [--threads N] [--against-best-fixed-point]

Subcommands are the experiment kinds plus ``suite``. Exit codes: 0 on
success (including a not-contractive bounds report), 1 on an invalid spec,
2 on a runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiments import KINDS, ExperimentSpec, SpecError, read_spec_file, run_experiment, run_suite

EXIT_OK, EXIT_SPEC, EXIT_RUNTIME = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gem-mix", description="Gradient EM experiments for Gaussian mixtures.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*KINDS, "suite"):
        p = sub.add_parser(name)
        p.add_argument("--spec", required=True, type=Path, help="TOML or JSON spec file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the spec)")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides the spec)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--against-best-fixed-point", action="store_true",
                       help="measure errors against the truth-initialised sample-EM fixed point")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_SPEC
    try:
        data = read_spec_file(args.spec)
        if args.command == "suite":
            out = args.out if args.out is not None else Path(data.get("out_dir", "out"))
        else:
            data.setdefault("kind", args.command)
            if data["kind"] != args.command:
                raise SpecError(f"spec kind {data['kind']!r} does not match subcommand {args.command!r}")
            if args.seed is not None:
                data["seed"] = args.seed
            spec = ExperimentSpec.from_dict(data)
    except (OSError, SpecError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    try:
        if args.command == "suite":
            manifest = run_suite(data, out, seed=args.seed, threads=args.threads,
                                 against_best_fixed_point=args.against_best_fixed_point)
            failed = [e["name"] for e in manifest["experiments"] if e["status"] != "ok"]
            print(f"{len(manifest['experiments'])} experiments, {len(failed)} failed; manifest in {out}")
            return EXIT_RUNTIME if failed else EXIT_OK
        summary = run_experiment(spec, args.out, threads=args.threads,
                                 against_best_fixed_point=args.against_best_fixed_point)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except Exception as exc:
        logging.getLogger(__name__).debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out = args.out if args.out is not None else Path(spec.out_dir)
    print(f"wrote {out / spec.name}.csv")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
