"""Result files: CSV time series, JSON summary, frame trace and SVG overlays.

Every writer goes through :func:`atomic_write`, so a reader never sees a
half-written file.
"""

from __future__ import annotations

import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from gridsurge.engine import SimResult, Summary
from gridsurge.errors import EmptySeries, GridSurgeError


class IoError(GridSurgeError):
    kind = "IoError"


def atomic_write(path: str | Path, data: str | bytes) -> Path:
    """Write ``data`` to a temp file beside ``path`` and rename it into place."""
    path = Path(path)
    raw = data.encode("utf-8") if isinstance(data, str) else data
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(raw)
            umask = os.umask(0)
            os.umask(umask)
            os.chmod(tmp, 0o666 & ~umask)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def _num(x: float) -> str:
    return repr(float(x))


def csv_text(result: SimResult) -> str:
    """Header ``time_s,freq_hz,v_<bus>_pu...,p_<src>_kw,q_<src>_kvar...,genset_loading_pu``
    followed by one row per recorded step, at full float precision."""
    if len(result) == 0:
        raise EmptySeries(f"{result.scenario}: nothing to write")
    channels = result.channels()
    cols = [np.asarray(c).tolist() for c in channels.values()]
    out = io.StringIO()
    out.write(",".join(channels) + "\n")
    for row in zip(*cols):
        out.write(",".join(map(_num, row)) + "\n")
    return out.getvalue()


def write_csv(result: SimResult, path: str | Path) -> Path:
    return atomic_write(path, csv_text(result))


def read_csv(path: str | Path, name: str | None = None) -> SimResult:
    """Load a CSV written by :func:`write_csv` back into a SimResult.

    The event log is not part of the CSV and comes back empty; ``duration``
    is taken as the last timestamp.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(lines) < 2:
        raise EmptySeries(f"{path}: no data rows")
    header = lines[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    col = {h: data[:, j] for j, h in enumerate(header)}
    time = col["time_s"]
    dt = float(round(time[1] - time[0], 12)) if len(time) > 1 else 0.0
    buses = {h[2:-3]: v for h, v in col.items() if h.startswith("v_") and h.endswith("_pu")}
    p = {h[2:-3]: v for h, v in col.items() if h.startswith("p_") and h.endswith("_kw")}
    q = {h[2:-5]: v for h, v in col.items() if h.startswith("q_") and h.endswith("_kvar")}
    return SimResult(
        scenario=name or path.stem,
        dt=dt,
        duration=float(time[-1]),
        nominal_hz=60.0,
        time=time,
        frequency_hz=col["freq_hz"],
        bus_voltage=buses,
        source_p_kw=p,
        source_q_kvar=q,
        genset_loading=col["genset_loading_pu"],
        events=[],
    )


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def summary_dict(summary: Summary, result: SimResult) -> dict:
    doc = summary.as_dict()
    doc.update(
        dt_s=result.dt,
        duration_s=result.duration,
        samples=len(result),
        end_time_s=float(result.time[-1]),
        events=[{"time_s": e.time, "kind": e.kind, "target": e.target, "detail": e.detail} for e in result.events],
    )
    return _jsonable(doc)


def write_json(doc: dict, path: str | Path) -> Path:
    return atomic_write(path, json.dumps(doc, indent=2, sort_keys=False) + "\n")


def frame_trace_text(result: SimResult) -> str:
    """One line per frame: t_send t_deliver src dst hex verdict."""
    return "".join(rec.line() + "\n" for rec in result.frames)


def write_frame_trace(result: SimResult, path: str | Path) -> Path:
    return atomic_write(path, frame_trace_text(result))


def svg_text(result: SimResult, baseline: SimResult | None = None) -> str:
    """Stacked frequency / voltage / P / Q panels.

    With a baseline, the baseline is drawn in black and ``result`` in red;
    otherwise ``result`` alone is drawn in black.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    buses = list(result.plot_buses) or list(result.bus_voltage)
    sources = list(result.source_p_kw)
    runs = [(baseline, "black", "baseline"), (result, "red", "attack")] if baseline is not None else [
        (result, "black", result.scenario)
    ]
    with matplotlib.rc_context({"svg.hashsalt": "gridsurge", "svg.fonttype": "none"}):
        fig, axes = plt.subplots(4, 1, figsize=(8, 10), sharex=True)
        for run, color, label in runs:
            axes[0].plot(run.time, run.frequency_hz, color=color, lw=1, label=label)
            for i, b in enumerate(buses):
                if b in run.bus_voltage:
                    axes[1].plot(run.time, run.bus_voltage[b], color=color, lw=1,
                                 ls=("-", "--", ":", "-.")[i % 4], label=f"{b} ({label})")
            for i, s in enumerate(sources):
                if s in run.source_p_kw:
                    ls = ("-", "--", ":", "-.")[i % 4]
                    axes[2].plot(run.time, run.source_p_kw[s], color=color, lw=1, ls=ls, label=f"{s} ({label})")
                    axes[3].plot(run.time, run.source_q_kvar[s], color=color, lw=1, ls=ls, label=f"{s} ({label})")
        axes[0].set_ylabel("frequency (Hz)")
        axes[1].set_ylabel("|V| (pu)")
        axes[2].set_ylabel("P (kW)")
        axes[3].set_ylabel("Q (kvar)")
        axes[3].set_xlabel("time (s)")
        axes[0].set_title(result.scenario)
        for ax in axes:
            ax.grid(True, lw=0.3)
            ax.legend(fontsize=6, loc="best")
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def write_svg(result: SimResult, path: str | Path, baseline: SimResult | None = None) -> Path:
    return atomic_write(path, svg_text(result, baseline))
