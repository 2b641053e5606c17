"""Command-line entry point.

Exit codes: 0 success, 1 invalid input (config, files), 2 verification hard
failure, 3 divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pydantic import ValidationError

from . import __version__
from .config import PRESETS, SimConfig, load_config, preset
from .experiment import build_instance, precheck, run_experiment, solve_reference, \
    verify_config, verify_directory

EXIT_OK, EXIT_INVALID, EXIT_VERIFY, EXIT_DIVERGED = 0, 1, 2, 3


class _Invalid(Exception):
    pass


def _err(msg: str) -> None:
    print(f"asyncdgd: error: {msg}", file=sys.stderr)


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for e in exc.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"  {loc}: {e['msg']}")
    return "invalid config:\n" + "\n".join(lines)


def _load(args) -> SimConfig:
    if bool(args.config) == bool(args.preset):
        raise _Invalid("give exactly one of --config or --preset")
    try:
        if args.preset:
            cfg = preset(args.preset)
        else:
            cfg = load_config(args.config)
        if args.seed is not None:
            data = cfg.model_dump()
            data["seed"] = args.seed
            cfg = SimConfig.model_validate(data)
    except KeyError as exc:
        raise _Invalid(str(exc.args[0])) from None
    except OSError as exc:
        raise _Invalid(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise _Invalid(f"{args.config}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except ValidationError as exc:
        raise _Invalid(_format_validation(exc)) from None
    return cfg


def _cmd_run(args) -> int:
    cfg = _load(args)
    if args.replications < 1:
        raise _Invalid("--replications must be at least 1")
    try:
        inst = build_instance(cfg)
    except ValueError as exc:
        raise _Invalid(str(exc)) from None
    if not args.skip_precheck:
        res = precheck(inst)
        if res.hard_failure:
            _err(f"precheck failed: {res.name}: {res.evidence}")
            return EXIT_VERIFY
    out = Path(args.out)
    rows = run_experiment(cfg, out, args.replications)
    for r in rows:
        flag = "  DIVERGED" if r["diverged"] else ""
        print(f"rep {r['replication']:3d} seed {r['seed']}: F_final={r['F_final']:.6g} "
              f"relative_gap={r['relative_gap']:.3g} tau_max={r['tau_max']}{flag}")
    print(f"wrote {out}")
    return EXIT_DIVERGED if any(r["diverged"] for r in rows) else EXIT_OK


def _cmd_verify(args) -> int:
    if args.directory and (args.config or args.preset):
        raise _Invalid("give a run directory or a config, not both")
    if args.directory:
        try:
            report = verify_directory(Path(args.directory))
        except (OSError, ValueError, KeyError, ValidationError) as exc:
            raise _Invalid(f"cannot verify {args.directory}: {exc}") from None
        dest = Path(args.out) if args.out else Path(args.directory)
    else:
        report = verify_config(_load(args))
        dest = Path(args.out) if args.out else None
    text = report.to_text()
    print(text, end="")
    if dest is not None:
        dest.mkdir(parents=True, exist_ok=True)
        (dest / "report.txt").write_text(text)
        (dest / "report.csv").write_text(report.to_csv())
    return EXIT_VERIFY if report.hard_failure else EXIT_OK


def _cmd_solve(args) -> int:
    cfg = _load(args)
    sol = solve_reference(cfg)
    payload = json.dumps(sol, indent=2) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(payload)
        print(f"F* = {sol['F_star']!r}; wrote {args.out}")
    else:
        print(payload, end="")
    return EXIT_OK


def _cmd_presets(args) -> int:
    for name, (desc, _) in PRESETS.items():
        print(f"{name:15s} {desc}")
    return EXIT_OK


def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="use a built-in config")
    p.add_argument("--seed", type=int, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="asyncdgd", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run seeded replications and write traces")
    _config_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--skip-precheck", action="store_true",
                   help="run even if the connectivity precheck fails")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="check assumptions on a run directory or a config")
    p.add_argument("directory", nargs="?", help="output directory of 'run'")
    _config_flags(p)
    p.add_argument("--out", help="where to write report.txt/report.csv")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("solve-reference", help="write the analytic minimizer x* and F(x*)")
    _config_flags(p)
    p.add_argument("--out", help="output JSON file (stdout if omitted)")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("presets", help="built-in configurations")
    psub = p.add_subparsers(dest="action", required=True)
    psub.add_parser("list").set_defaults(func=_cmd_presets)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit 2; map them to invalid input
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return args.func(args)
    except _Invalid as exc:
        _err(str(exc))
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
