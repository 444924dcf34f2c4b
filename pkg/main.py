import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

from commands import routers
from config import get_settings
from core.numbers import parse_rational
from core.orchestrator import RunFlags, orchestrator

for router in routers:
    orchestrator.include_router(router)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treeharmonic",
        description="Harmonic functions, boundary martingales and universality on trees.",
    )
    groups = parser.add_subparsers(dest="group", required=True)
    for group, actions in orchestrator.commands().items():
        group_parser = groups.add_parser(group)
        action_parsers = group_parser.add_subparsers(dest="action", required=True)
        for action in actions:
            _, title = orchestrator.routes[(group, action)]
            p = action_parsers.add_parser(action, help=title)
            p.add_argument("scene", type=Path, help="JSON scene file")
            p.add_argument("--seed", type=int, help="RNG seed for walks")
            p.add_argument("--depth", type=int, help="override the working depth D")
            p.add_argument("--horizon", type=int, help="ruler steps K")
            p.add_argument("--tol", type=parse_rational, help="tolerance, e.g. 1/1024")
            p.add_argument("--out-dir", type=Path, help="directory for CSV and Markdown")
            p.add_argument("--jobs", type=int, help="parallel walk workers")
            p.add_argument("--debug", action="store_true", help="debug logging")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    logging.basicConfig(
        level=logging.DEBUG if args.debug or settings.debug else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    flags = RunFlags(
        seed=args.seed,
        depth=args.depth,
        horizon=args.horizon,
        tol=args.tol,
        out_dir=args.out_dir,
        jobs=args.jobs,
    )
    report = orchestrator.run(args.group, args.action, args.scene, flags)
    if report.error is not None:
        print(f"error: {report.error}", file=sys.stderr)
    else:
        for artifact in report.artifacts:
            print(artifact.path)
        for check in report.violations:
            print(f"invariant failed: {check.name} {check.detail}", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
