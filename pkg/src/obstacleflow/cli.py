"""Command line: ``obstacleflow run <scenario.json>`` and ``obstacleflow study <study.json>``.

Errors are printed to stderr as one JSON object and the process exits with
status 2 for invalid input, 3 for numerical failures and 4 for anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from .errors import ObstacleFlowError, ValidationError


def _threads(arg):
    n = arg if arg is not None else os.environ.get("SIM_THREADS")
    if n is None:
        return None
    try:
        n = int(n)
    except ValueError:
        raise ValidationError(f"thread count {n!r} is not an integer", field="threads") from None
    if n < 1:
        raise ValidationError("thread count must be at least 1", field="threads")
    return n


def _limit(n):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _log(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr)


def cmd_run(args) -> int:
    from .report import write_run
    from .scenario import Scenario, run

    sc = Scenario.load(args.scenario)
    out = Path(args.out or "out")

    def progress(n, total):
        if not args.quiet and (n == total or n % max(1, total // 10) == 0):
            print(f"step {n}/{total}", file=sys.stderr)

    problem, traj = run(sc, progress)
    files = write_run(problem, traj, out, figures=args.figures, save_maps=args.save_maps)
    for note in sc.notes:
        _log(args, f"note: {note}")
    for f in files:
        _log(args, f"wrote {f}")
    return 0


def cmd_study(args) -> int:
    from .report import write_study
    from .scenario import STUDY_SCHEMA
    from .studies import run_study

    try:
        spec = json.loads(Path(args.study).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read study file: {exc.strerror}", field="study") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"study file is not valid JSON: {exc.msg}", field="study") from None
    if not isinstance(spec, dict):
        raise ValidationError("study file must be a JSON object", field="study")
    if spec.get("schema") != STUDY_SCHEMA:
        raise ValidationError(f"unsupported schema {spec.get('schema')!r}, expected {STUDY_SCHEMA!r}",
                              field="schema")
    params = spec.get("params", {})
    if not isinstance(params, dict):
        raise ValidationError("params must be an object", field="params")
    report = run_study(spec.get("study"), params)
    files = write_study(report, Path(args.out or "out"), figures=not args.no_figures)
    for f in files:
        _log(args, f"wrote {f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="obstacleflow", description="Vortex blobs around obstacles.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default ./out)")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")
    common.add_argument("--threads", type=str, default=None,
                        help="threads for linear algebra (falls back to SIM_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="simulate a scenario file")
    r.add_argument("scenario")
    r.add_argument("--figures", action="store_true", help="also render PNG figures")
    r.add_argument("--save-maps", action="store_true", help="also write map JSON and curve CSV per obstacle")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("study", parents=[common], help="run a refinement study")
    s.add_argument("study")
    s.add_argument("--no-figures", action="store_true", help="skip the PNG figure")
    s.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _limit(_threads(args.threads)):
            return args.func(args)
    except ObstacleFlowError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return 2 if isinstance(exc, ValidationError) else 3
    except Exception as exc:  # report anything unexpected in the same format
        print(json.dumps({"error": "internal", "message": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
