from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .commands import COMMANDS, EXIT_CONFIG, EXIT_RUNTIME
from .config import config_schema_json, default_config_json, parse_config
from .errors import ConfigError, ParaxialError

THREADS_ENV = "PARAXIAL_THREADS"

EXIT_CODES = """\
exit codes:
  0  success, every verdict holds
  2  configuration error
  3  a verdict failed
  4  runtime or resource error
"""


def build_parser() -> argparse.ArgumentParser:
    epilog = (
        EXIT_CODES
        + f"\n{THREADS_ENV} overrides --threads.\n"
        + "\ndefault configuration:\n"
        + default_config_json()
        + "\n\nconfiguration schema:\n"
        + config_schema_json()
    )
    parser = argparse.ArgumentParser(
        prog="paraxial-verify",
        description="Numerical checks of the paraxial (Schrödinger) approximation "
        "to the z-evolutionary Helmholtz equation.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="JSON config (defaults used if omitted)")
    parser.add_argument("--out-dir", type=Path, help="output directory (overrides config out_dir)")
    parser.add_argument("--threads", type=int, help="worker threads for sweeps")
    return parser


def _threads(arg: int | None, cfg_threads: int) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError([(THREADS_ENV, f"not an integer: {env!r}")]) from None
    elif arg is not None:
        n = arg
    else:
        n = cfg_threads
    if n < 1:
        raise ConfigError([("threads", "must be ≥ 1")])
    return n


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else "{}"
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
        threads = _threads(args.threads, cfg.threads)
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = args.out_dir if args.out_dir is not None else Path(cfg.out_dir)
    try:
        result = COMMANDS[args.command](cfg, threads=threads)
        written = result.write(out_dir)
    except (ParaxialError, ValueError, OSError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    for v in result.summary["verdicts"]:
        label = v["checks"] + (f"[{v['variant']}]" if "variant" in v else "")
        print(f"{'PASS' if v['holds'] else 'FAIL'}  {label}")
    for path in written:
        print(f"wrote {path}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
