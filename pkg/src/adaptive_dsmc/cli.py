"""Command-line front end: ``adaptive-dsmc {run,sweep,compare,table1,validate}``.

Exit codes: 0 success, 1 usage or configuration problem, 2 numerical divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .config import FORMAT_REFERENCE, ExperimentConfig, dump_config, load_config
from .errors import ConfigError, DivergedRun, DsmcError
from .report import (
    format_comparison,
    format_metrics,
    format_table1,
    read_csv,
    stability_json,
    write_csv,
    write_plot_data,
)
from .sim import SWEEP_AXES, metrics, run, stability_reports, sweep, table1_grid

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2

log = logging.getLogger("adaptive_dsmc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors share the config exit code
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI experiment file (defaults when omitted)")
    p.add_argument("--order", type=int, choices=(1, 2), help="override controller order")
    p.add_argument("--sampling-ms", type=float, help="override sampling time in ms")
    p.add_argument("--no-adaptation", action="store_true", help="freeze every alpha_hat")
    p.add_argument("--seedless", action="store_true", default=True,
                   help="deterministic run (always on; reserved for future noise models)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="adaptive-dsmc", description="Adaptive discrete sliding-mode engine control experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate one configuration and write its outputs")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("sweep", help="one run per value along an axis")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True,
                   help="comma-separated values (sampling_time in ms, uncertainty as a multiplier)")

    p = sub.add_parser("compare", help="mean errors and improvement of log B over log A")
    p.add_argument("log_a", type=Path)
    p.add_argument("log_b", type=Path)
    p.add_argument("--settling-s", type=float, default=0.0)

    p = sub.add_parser("table1", help="first vs second order at 10 ms and 40 ms")
    _add_common(p)
    p.add_argument("--out", type=Path, help="also write table1.txt here")

    p = sub.add_parser("validate", help="check a config and print it fully resolved")
    p.add_argument("--config", type=Path)
    p.add_argument("--format-reference", action="store_true", help="print the config file keys")
    return ap


def _load(args) -> ExperimentConfig:
    exp = load_config(args.config) if args.config else ExperimentConfig()
    sim = exp.sim
    if getattr(args, "order", None):
        sim = sim.with_(order=args.order)
    if getattr(args, "sampling_ms", None) is not None:
        sim = sim.with_(sampling_time=args.sampling_ms / 1000.0)
    if getattr(args, "no_adaptation", False):
        sim = sim.with_(adaptation=False)
    for w in sim.validate():
        print(f"warning: {w}", file=sys.stderr)
    return ExperimentConfig(sim, exp.output)


def _outdir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc}") from None
    return path


def cmd_run(args) -> int:
    exp = _load(args)
    out = _outdir(args.out)
    cfg = exp.sim
    lg = run(cfg)
    write_csv(lg, out / exp.output.csv)
    rep = metrics(lg, cfg.settling_exclusion, label=f"order {cfg.order}, T = {cfg.sampling_time * 1000:g} ms")
    (out / exp.output.metrics).write_text(format_metrics(rep), encoding="ascii")
    (out / exp.output.stability).write_text(
        stability_json(stability_reports(lg, cfg), cfg.sampling_time), encoding="ascii")
    if exp.output.plot:
        write_plot_data(lg, out / Path(exp.output.csv).stem)
    print(format_metrics(rep), end="")
    return EXIT_OK


def _sweep_values(axis: str, text: str) -> list:
    try:
        raw = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {text!r}") from None
    if axis == "sampling_time":
        return [v / 1000.0 for v in raw]
    if axis == "order":
        return [int(v) for v in raw]
    return raw


def cmd_sweep(args) -> int:
    exp = _load(args)
    out = _outdir(args.out)
    values = _sweep_values(args.axis, args.values)
    results = sweep(exp.sim, args.axis, values, workers=exp.output.workers)
    lines = [f"{args.axis:<16}{'AFR':>14}{'Texh':>14}{'N':>14}"]
    for i, r in enumerate(results):
        write_csv(r.log, out / f"sweep_{i:02d}.csv")
        e = r.metrics.mean_error
        lines.append(f"{r.value!s:<16}{e['afr']:>14.4g}{e['texh']:>14.4g}{e['rpm']:>14.4g}")
    text = "\n".join(lines) + "\n"
    (out / "sweep.txt").write_text(text, encoding="ascii")
    print(text, end="")
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = read_csv(args.log_a), read_csv(args.log_b)
    ea = metrics(a, args.settling_s).mean_error
    eb = metrics(b, args.settling_s).mean_error
    la, lb = args.log_a.stem, args.log_b.stem
    if la == lb:  # e.g. two run directories holding log.csv
        la, lb = f"{args.log_a.parent.name}/{la}", f"{args.log_b.parent.name}/{lb}"
    print(format_comparison(ea, eb, la, lb), end="")
    return EXIT_OK


def cmd_table1(args) -> int:
    exp = _load(args)
    out = _outdir(args.out) if args.out else None
    grid = table1_grid(exp.sim)
    text = format_table1(grid)
    if out is not None:
        (out / "table1.txt").write_text(text, encoding="ascii")
    print(text, end="")
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.format_reference:
        print(FORMAT_REFERENCE, end="")
        return EXIT_OK
    exp = _load(args)
    print(dump_config(exp), end="")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "compare": cmd_compare,
            "table1": cmd_table1, "validate": cmd_validate}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DivergedRun as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DsmcError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
