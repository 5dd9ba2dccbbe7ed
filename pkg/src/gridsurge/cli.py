"""Command-line front end: ``gridsurge run|batch|validate|diff``.

Exit codes: 0 completed, 2 blackout, 1 any error. Errors go to stderr as
``ERROR:<kind>:<message>``.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from gridsurge.engine import SimResult, compare_runs, run_scenario, summarize
from gridsurge.errors import GridSurgeError
from gridsurge.report import (
    IoError,
    atomic_write,
    read_csv,
    summary_dict,
    write_csv,
    write_frame_trace,
    write_json,
    write_svg,
)
from gridsurge.scenario_file import parse_scenario_file, with_dt

EMIT_KINDS = ("csv", "json", "svg", "frametrace")
DEFAULT_OUT = "gridsurge-out"
EXIT_OK, EXIT_ERROR, EXIT_BLACKOUT = 0, 1, 2


class UsageError(GridSurgeError):
    kind = "UsageError"


class SolverFailure(GridSurgeError):
    kind = "SolverFailure"


@dataclass
class RunConfig:
    scenarios: list[str]
    out_dir: Path
    emit: tuple[str, ...] = ("csv", "json")
    dt: float | None = None
    overrides: dict[str, str] = field(default_factory=dict)
    baseline: str | None = None


def shipped_scenarios() -> list[str]:
    """Names of the scenario files bundled with the package."""
    root = resources.files("gridsurge") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".scn"))


def resolve_scenario(arg: str) -> Path:
    """A path on disk, or the name of a bundled scenario (with or without ``.scn``)."""
    p = Path(arg)
    if p.exists():
        return p
    name = p.name[:-4] if p.name.endswith(".scn") else p.name
    bundled = resources.files("gridsurge") / "scenarios" / f"{name}.scn"
    if bundled.is_file():
        return Path(str(bundled))
    raise IoError(f"no scenario file {arg!r} (and no bundled scenario {name!r})")


def load_scenario(arg: str, cfg: RunConfig | None = None):
    scn = parse_scenario_file(resolve_scenario(arg), cfg.overrides if cfg else None)
    if cfg is not None and cfg.dt is not None:
        scn = with_dt(scn, cfg.dt)
    return scn


def _load_result(arg: str, cfg: RunConfig | None = None) -> SimResult:
    if arg.endswith(".csv"):
        return read_csv(arg)
    return run_scenario(load_scenario(arg, cfg))


def _parse_emit(text: str) -> tuple[str, ...]:
    kinds = tuple(k.strip() for k in text.split(",") if k.strip())
    for k in kinds:
        if k not in EMIT_KINDS:
            raise UsageError(f"unknown --emit kind {k!r} (choose from {', '.join(EMIT_KINDS)})")
    return kinds


def _parse_sets(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def emit_outputs(result: SimResult, cfg: RunConfig, baseline: SimResult | None = None) -> list[Path]:
    """Write the requested files for one run; returns the paths written."""
    summary = summarize(result)
    stem = cfg.out_dir / result.scenario
    written = []
    if "csv" in cfg.emit:
        written.append(write_csv(result, stem.with_suffix(".csv")))
    if "json" in cfg.emit:
        written.append(write_json(summary_dict(summary, result), stem.with_suffix(".json")))
    if "svg" in cfg.emit:
        written.append(write_svg(result, stem.with_suffix(".svg"), baseline))
    if "frametrace" in cfg.emit:
        written.append(write_frame_trace(result, Path(f"{stem}.frames.txt")))
    return written


def _status_code(result: SimResult) -> int:
    if result.status == "blackout":
        return EXIT_BLACKOUT
    if result.status == "solver_failure":
        raise SolverFailure(f"{result.scenario}: dynamics produced non-finite state")
    return EXIT_OK


def _line(result: SimResult) -> str:
    s = summarize(result)
    return (f"{result.scenario}: status={result.status} nadir={s.nadir_hz:.4f} Hz at {s.nadir_time_s:.3f} s "
            f"overload={s.genset_overload_s:.3f} s trips={len(s.trips)}")


def cmd_run(cfg: RunConfig) -> int:
    result = run_scenario(load_scenario(cfg.scenarios[0], cfg))
    baseline = _load_result(cfg.baseline) if cfg.baseline else None
    emit_outputs(result, cfg, baseline)
    print(_line(result))
    return _status_code(result)


def _batch_one(arg: str, cfg: RunConfig):
    scn = load_scenario(arg, cfg)
    result = run_scenario(scn)
    emit_outputs(result, cfg)
    delay = sum(a.delay_s or 0.0 for a in scn.attacks if a.kind in ("dos_fixed_delay", "breaker_delay"))
    s = summarize(result)
    return result.scenario, delay, s, _line(result), result.status


def cmd_batch(cfg: RunConfig, jobs: int = 1) -> int:
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_batch_one, cfg.scenarios, [cfg] * len(cfg.scenarios)))
    else:
        rows = [_batch_one(a, cfg) for a in cfg.scenarios]
    rows.sort(key=lambda r: (r[1], r[0]))
    table = ["scenario,delay_s,nadir_hz,nadir_time_s,blackout,status"]
    code = EXIT_OK
    for name, delay, s, line, status in rows:
        print(line)
        table.append(f"{name},{delay!r},{s.nadir_hz!r},{s.nadir_time_s!r},{str(s.blackout).lower()},{status}")
        if status == "solver_failure":
            print(f"ERROR:SolverFailure:{name}: dynamics produced non-finite state", file=sys.stderr)
            code = EXIT_ERROR
        elif status == "blackout" and code == EXIT_OK:
            code = EXIT_BLACKOUT
    atomic_write(cfg.out_dir / "nadir_vs_delay.csv", "\n".join(table) + "\n")
    return code


def cmd_validate(cfg: RunConfig) -> int:
    for arg in cfg.scenarios:
        scn = load_scenario(arg, cfg)
        print(f"{arg}: ok ({scn.name}, {scn.n_steps} steps, {len(scn.attacks)} attack(s))")
    return EXIT_OK


def cmd_diff(cfg: RunConfig, a: str, b: str) -> int:
    ra, rb = _load_result(a, cfg), _load_result(b, cfg)
    report = compare_runs(ra, rb)
    first = "none" if report.first_divergence_s is None else f"{report.first_divergence_s:.6f} s"
    print(f"first divergence: {first}; samples compared: {report.compared_samples}")
    for name, dev in report.max_abs.items():
        print(f"  {name}: max |diff| = {dev:.6g}")
    if "json" in cfg.emit:
        write_json(report.as_dict(), cfg.out_dir / f"diff_{ra.scenario}_vs_{rb.scenario}.json")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gridsurge", description="Cyber-physical microgrid co-simulation.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(p, emit_default="csv,json"):
        p.add_argument("--emit", default=emit_default, help=f"comma list of {','.join(EMIT_KINDS)}")
        p.add_argument("--out", help=f"output directory (default $GRIDSURGE_OUT or ./{DEFAULT_OUT})")
        p.add_argument("--dt", type=float, help="override the step size in seconds")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scenario key, e.g. attacks.0.delay_s=5")

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("scenario")
    p.add_argument("--baseline", help="scenario or result CSV drawn in black under this run")
    common(p)
    p = sub.add_parser("batch", help="run several scenarios and tabulate nadir vs delay")
    p.add_argument("scenarios", nargs="+")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    common(p)
    p = sub.add_parser("validate", help="parse and validate scenario files")
    p.add_argument("scenarios", nargs="+")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--dt", type=float)
    p = sub.add_parser("diff", help="compare two runs (scenario files or result CSVs)")
    p.add_argument("a")
    p.add_argument("b")
    common(p, emit_default="")
    sub.add_parser("list", help="list bundled scenarios")
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.verb == "list":
            print("\n".join(shipped_scenarios()))
            return EXIT_OK
        out = getattr(args, "out", None) or os.environ.get("GRIDSURGE_OUT") or DEFAULT_OUT
        if getattr(args, "dt", None) is not None and not args.dt > 0:
            raise UsageError("--dt must be > 0")
        cfg = RunConfig(
            scenarios=getattr(args, "scenarios", None) or [getattr(args, "scenario", "")],
            out_dir=Path(out),
            emit=_parse_emit(getattr(args, "emit", "")),
            dt=getattr(args, "dt", None),
            overrides=_parse_sets(getattr(args, "set", [])),
            baseline=getattr(args, "baseline", None),
        )
        if args.verb == "run":
            return cmd_run(cfg)
        if args.verb == "batch":
            return cmd_batch(cfg, args.jobs)
        if args.verb == "validate":
            return cmd_validate(cfg)
        return cmd_diff(cfg, args.a, args.b)
    except GridSurgeError as exc:
        print(f"ERROR:{exc.kind}:{exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"ERROR:IoError:{exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
