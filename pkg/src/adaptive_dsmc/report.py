"""Serialization: CSV logs, gnuplot data, text tables and stability JSON."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DsmcError
from .lyapunov import StabilityReport
from .sim import CSV_COLUMNS, LOG_DIGITS, TRACKED, MetricsReport, TrajectoryLog, improvement

UNITS = {"afr": "-", "texh": "degC", "rpm": "RPM"}
LABELS = {"afr": "AFR", "texh": "Texh", "rpm": "N"}


class SchemaMismatch(DsmcError):
    """A CSV log does not carry the expected header."""


def _fmt(v: float) -> str:
    return f"{v:.{LOG_DIGITS}g}"


def log_to_csv(log: TrajectoryLog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    cols = [log[c] for c in CSV_COLUMNS]
    for k in range(len(log)):
        w.writerow([_fmt(col[k]) for col in cols])
    return buf.getvalue()


def write_csv(log: TrajectoryLog, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(log_to_csv(log).encode("ascii"))
    return path


def read_csv(path: str | Path) -> TrajectoryLog:
    """Load a log written by write_csv; the sampling time is taken from the time column."""
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaMismatch(f"{path}: empty file")
    header = tuple(rows[0])
    if header != CSV_COLUMNS:
        missing = sorted(set(CSV_COLUMNS) - set(header))
        extra = sorted(set(header) - set(CSV_COLUMNS))
        raise SchemaMismatch(f"{path}: header mismatch (missing {missing}, unexpected {extra})")
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise SchemaMismatch(f"{path}: {exc}") from None
    cols = {c: data[:, i] for i, c in enumerate(header)}
    t = cols["time"]
    T = float(t[1] - t[0]) if len(t) > 1 else float("nan")
    return TrajectoryLog(cols, T)


# -- gnuplot -----------------------------------------------------------------

def write_plot_data(log: TrajectoryLog, stem: str | Path) -> tuple[Path, Path]:
    """Write ``stem.dat`` (whitespace separated) and ``stem.gp`` plotting it."""
    stem = Path(stem)
    dat, gp = stem.with_suffix(".dat"), stem.with_suffix(".gp")
    cols = [log[c] for c in CSV_COLUMNS]
    lines = ["# " + " ".join(CSV_COLUMNS)]
    lines += [" ".join(_fmt(col[k]) for col in cols) for k in range(len(log))]
    dat.write_text("\n".join(lines) + "\n", encoding="ascii")

    idx = {c: i + 1 for i, c in enumerate(CSV_COLUMNS)}
    panels = [
        ("AFR", [("afr", "AFR"), ("afr_d", "desired")]),
        ("Texh [degC]", [("texh", "Texh"), ("texh_d", "desired")]),
        ("omega_e [rad/s]", [("omega_e", "omega_e"), ("omega_d", "desired")]),
        ("alpha hat", [(f"alpha_hat_{c}", c) for c in ("texh", "mf", "we", "ma")]),
    ]
    script = [
        "set terminal pngcairo size 900,1000",
        f"set output '{stem.name}.png'",
        "set multiplot layout 4,1",
        "set xlabel 'time [s]'",
        "set key right bottom",
    ]
    for ylabel, series in panels:
        script.append(f"set ylabel '{ylabel}'")
        parts = [f"'{dat.name}' using 1:{idx[c]} with lines title '{t}'" for c, t in series]
        script.append("plot " + ", \\\n     ".join(parts))
    script.append("unset multiplot")
    gp.write_text("\n".join(script) + "\n", encoding="ascii")
    return dat, gp


# -- tables --------------------------------------------------------------------

def _num(v: float) -> str:
    if isinstance(v, float) and not math.isfinite(v):
        return "n/a"
    return f"{v:.4g}"


def format_metrics(report: MetricsReport) -> str:
    lines = [f"mean tracking error{': ' + report.label if report.label else ''}"]
    for ch in TRACKED:
        lines.append(f"  {LABELS[ch]:<5} [{UNITS[ch]}]  {_num(report.mean_error[ch])}")
    return "\n".join(lines) + "\n"


def _pct(a: float, b: float) -> str:
    try:
        return f"{improvement(a, b):+.1f}%"
    except DsmcError:
        return "n/a"


def format_comparison(ea: Mapping[str, float], eb: Mapping[str, float],
                      label_a: str = "A", label_b: str = "B") -> str:
    """Channels as rows: mean error of a, of b, improvement of b over a."""
    head = f"{'channel':<12}{label_a:>14}{label_b:>14}{'improvement':>14}"
    lines = [head, "-" * len(head)]
    for ch in TRACKED:
        lines.append(f"{LABELS[ch] + ' [' + UNITS[ch] + ']':<12}{_num(ea[ch]):>14}{_num(eb[ch]):>14}"
                     f"{_pct(ea[ch], eb[ch]):>14}")
    return "\n".join(lines) + "\n"


def format_table1(grid: Mapping[tuple[int, float], MetricsReport]) -> str:
    """Mean errors of first and second order at each sampling time, plus the improvement."""
    Ts = sorted({T for _, T in grid})
    head = f"{'channel':<12}"
    for T in Ts:
        ms = f"{T * 1000:g} ms"
        head += f"{'1st ' + ms:>14}{'2nd ' + ms:>14}{'improv.':>10}"
    lines = ["Mean tracking error", head, "-" * len(head)]
    for ch in TRACKED:
        row = f"{LABELS[ch] + ' [' + UNITS[ch] + ']':<12}"
        for T in Ts:
            e1 = grid[(1, T)].mean_error[ch]
            e2 = grid[(2, T)].mean_error[ch]
            row += f"{_num(e1):>14}{_num(e2):>14}{_pct(e1, e2):>10}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def stability_json(reports: Mapping[str, StabilityReport], sampling_time: float) -> str:
    def clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return None
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        return x

    body = {"sampling_time_s": sampling_time,
            "channels": {ch: clean(r.to_dict()) for ch, r in reports.items()}}
    return json.dumps(body, indent=2, sort_keys=True) + "\n"
