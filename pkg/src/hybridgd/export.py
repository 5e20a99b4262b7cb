"""CSV/JSON artifact formats.

Trajectory CSV columns are fixed (``TRAJECTORY_COLUMNS``); values that were
not computed are written as empty strings.  Floats use 17 significant digits
so files round-trip exactly.
"""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

__all__ = [
    "TRAJECTORY_COLUMNS",
    "JUMP_COLUMNS",
    "SchemaError",
    "fmt_float",
    "trajectory_rows",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_jump_csv",
    "write_json",
    "dumps_json",
]

TRAJECTORY_COLUMNS = ("t", "j", "dist_A", "V", "L_x", "L_etabar", "grad_norm", "envelope_thm1", "envelope_prop")
JUMP_COLUMNS = ("j", "t_j", "tau_reset")


class SchemaError(ValueError):
    pass


def fmt_float(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return ""
    return format(v, ".17g")


def trajectory_rows(metrics, thm1=None, prop=None) -> list[list[str]]:
    """Rows for ``metrics`` (a ``TrajectoryMetrics``); envelope arrays are
    aligned with the samples and may contain NaN where not applicable."""
    k = len(metrics)
    cols = [
        [fmt_float(v) for v in metrics.t],
        [str(int(v)) for v in metrics.j],
        [fmt_float(v) for v in metrics.dist_A] if metrics.dist_A is not None else [""] * k,
        [fmt_float(v) for v in metrics.V],
        [fmt_float(v) for v in metrics.L_x],
        [fmt_float(v) for v in metrics.L_etabar],
        [fmt_float(v) for v in metrics.grad_norm],
        [fmt_float(v) for v in thm1] if thm1 is not None else [""] * k,
        [fmt_float(v) for v in prop] if prop is not None else [""] * k,
    ]
    return [list(r) for r in zip(*cols)]


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_trajectory_csv(path, metrics, thm1=None, prop=None) -> Path:
    path = Path(path)
    _atomic_write(path, _csv_text(TRAJECTORY_COLUMNS, trajectory_rows(metrics, thm1, prop)))
    return path


def write_jump_csv(path, traj) -> Path:
    path = Path(path)
    rows = [[str(k + 1), fmt_float(r.t), fmt_float(r.tau_reset)] for k, r in enumerate(traj.jumps)]
    _atomic_write(path, _csv_text(JUMP_COLUMNS, rows))
    return path


def read_trajectory_csv(path) -> dict[str, np.ndarray | None]:
    """Parse a trajectory CSV into column arrays; all-empty columns become ``None``."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if tuple(header) != TRAJECTORY_COLUMNS:
            raise SchemaError(f"{path}: header {header} does not match {list(TRAJECTORY_COLUMNS)}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no samples")
    out: dict[str, np.ndarray | None] = {}
    for c, name in enumerate(TRAJECTORY_COLUMNS):
        try:
            cells = [r[c] for r in rows]
        except IndexError:
            raise SchemaError(f"{path}: short row") from None
        if name == "j":
            try:
                out[name] = np.array([int(v) for v in cells], dtype=int)
            except ValueError as exc:
                raise SchemaError(f"{path}: bad jump counter: {exc}") from None
            continue
        if all(v == "" for v in cells):
            out[name] = None
            continue
        try:
            out[name] = np.array([float(v) if v != "" else np.nan for v in cells])
        except ValueError as exc:
            raise SchemaError(f"{path}: column {name}: {exc}") from None
    if any(len(r) != len(TRAJECTORY_COLUMNS) for r in rows):
        raise SchemaError(f"{path}: ragged rows")
    if out["t"] is None or np.isnan(out["t"]).any():
        raise SchemaError(f"{path}: time column incomplete")
    return out


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    _atomic_write(path, dumps_json(obj))
    return path
