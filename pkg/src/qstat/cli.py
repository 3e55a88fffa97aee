"""Command-line workbench.

    qstat <command> [--seed S] [--n N] [--reps R] [--truth x,y[,z]]
                    [--strategy a,b] [--output DIR] [--format json|csv]
                    [--workers W] [--config FILE] [--povm SPEC]

Exit codes: 0 all checks pass, 2 check violation, 3 invalid input, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import subprocess
import sys
import time
from dataclasses import fields
from importlib import metadata
from pathlib import Path

import numpy as np

from .commands import COMMANDS, InvalidInput, RunConfig, execute, report_payload

EXIT_PASS = 0
EXIT_VIOLATION = 2
EXIT_INVALID = 3
EXIT_IO = 4

log = logging.getLogger("qstat")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qstat", description="Seeded quantum-statistics experiments with JSON/CSV reports.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--n", type=int, help="particles / samples / teleportations")
    parser.add_argument("--reps", type=int, help="Monte Carlo repetitions or battery size")
    parser.add_argument("--truth", type=_floats, help="theta,phi (pure) or ax,ay,az (Bloch vector)")
    parser.add_argument("--strategy", type=_names, help="comma-separated: two-stage, aligned, fixed-xyz, pair-7")
    parser.add_argument("--output", help="directory for report, tables and manifest")
    parser.add_argument("--format", choices=("json", "csv"))
    parser.add_argument("--workers", type=int)
    parser.add_argument("--povm", help="triad | pvm | pair7 | sphere:K | path to a POVM JSON fixture")
    parser.add_argument("--alpha", help="delft-demo amplitude of |0>, e.g. 0.6 or 0.6+0.1j")
    parser.add_argument("--beta", help="delft-demo amplitude of |1>")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"config is not valid JSON: {exc}") from None
        known = {f.name for f in fields(RunConfig)}
        for key, val in raw.items():
            key = key.replace("-", "_")
            if key not in known:
                raise InvalidInput(f"unknown config field {key!r}")
            values[key] = val
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    values["command"] = args.command
    if isinstance(values.get("strategy"), str):
        values["strategy"] = _names(values["strategy"])
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise InvalidInput(str(exc)) from None


def build_identifier() -> str:
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "0+unknown"
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{version}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return version


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"


def table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()


def write_outputs(cfg: RunConfig, payload: dict, tables: dict, out_dir: Path) -> list[str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    report = out_dir / f"{cfg.command}.json"
    report.write_text(dumps(payload))
    written.append(report.name)
    if cfg.format == "csv":
        for name, rows in tables.items():
            path = out_dir / f"{cfg.command}-{name}.csv"
            path.write_text(table_csv(rows))
            written.append(path.name)
    return written


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        cfg = resolve_config(args)
        result = execute(cfg)
    except InvalidInput as exc:
        print(f"qstat: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"qstat: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    payload = report_payload(cfg, result)
    code = EXIT_PASS if result.passed else EXIT_VIOLATION
    manifest = {
        "schema": payload["schema"],
        "config": cfg.echo(),
        "build": build_identifier(),
        "wall_time_s": round(time.perf_counter() - start, 3),
        "checks": {c.name: c.passed for c in result.checks},
        "passed": result.passed,
        "exit_code": code,
        "artifacts": [],
    }
    try:
        if cfg.output:
            out_dir = Path(cfg.output)
            manifest["artifacts"] = write_outputs(cfg, payload, result.tables, out_dir)
            manifest["artifacts"].append("manifest.json")
            (out_dir / "manifest.json").write_text(dumps(manifest))
        else:
            if cfg.format == "csv":
                for rows in result.tables.values():
                    sys.stdout.write(table_csv(rows))
            else:
                sys.stdout.write(dumps(payload))
            sys.stderr.write(dumps(manifest))
    except OSError as exc:
        print(f"qstat: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for c in result.checks:
        log.info("%s %s", "PASS" if c.passed else "FAIL", c.name)
    return code


if __name__ == "__main__":
    sys.exit(main())
