"""Reading and writing panel CSVs and flat configuration files.

Panel CSV (long format, header required)::

    participant_id,period,time,y,z1,...,zK,x1,...,xL

The ``z``/``x`` column counts come from the header. Lines starting with ``#``
are comments; writers use one to stamp the fingerprint of what produced the
file.
"""
from __future__ import annotations

import ast
import configparser
import csv
import io
import re
from pathlib import Path

import numpy as np

from .model import PanelDataset, ValidationError

__all__ = ["read_panel_csv", "write_panel_csv", "panel_csv_text", "read_config", "write_csv_rows"]

_BASE = ["participant_id", "period", "time", "y"]


def _numbered(header, prefix):
    cols = [h for h in header if re.fullmatch(prefix + r"\d+", h)]
    expected = [f"{prefix}{k}" for k in range(1, len(cols) + 1)]
    if cols != expected:
        raise ValidationError(f"{prefix} columns must be {prefix}1..{prefix}K in order, got {cols}")
    return cols


def _parse_id(s: str):
    try:
        return int(s)
    except ValueError:
        return s


def read_panel_csv(path) -> PanelDataset:
    """Parse a panel CSV into an unvalidated :class:`PanelDataset`.

    Raises :class:`ValidationError` naming the offending line for malformed input.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"data file not found: {path}")
    with open(path, newline="") as fh:
        lines = [(n, line) for n, line in enumerate(fh, start=1) if line.strip() and not line.startswith("#")]
    if not lines:
        raise ValidationError(f"{path}: empty file")
    reader = csv.reader([line for _, line in lines])
    header = [h.strip() for h in next(reader)]
    missing = [c for c in _BASE if c not in header]
    if missing:
        raise ValidationError(f"{path}:{lines[0][0]}: header lacks column(s) {missing}")
    zc, xc = _numbered(header, "z"), _numbered(header, "x")
    extra = set(header) - set(_BASE) - set(zc) - set(xc)
    if extra:
        raise ValidationError(f"{path}:{lines[0][0]}: unknown column(s) {sorted(extra)}")
    col = {h: k for k, h in enumerate(header)}
    pid, per, t, y, z, x = [], [], [], [], [], []
    for (lineno, _), row in zip(lines[1:], reader):
        if len(row) != len(header):
            raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
        try:
            pid.append(_parse_id(row[col["participant_id"]].strip()))
            per.append(_parse_id(row[col["period"]].strip()))
            t.append(float(row[col["time"]]))
            yv = float(row[col["y"]])
            z.append([float(row[col[c]]) for c in zc])
            x.append([float(row[col[c]]) for c in xc])
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
        if yv not in (0.0, 1.0):
            raise ValidationError(f"{path}:{lineno}: non-binary outcome {row[col['y']]!r}")
        y.append(int(yv))
    n = len(y)
    return PanelDataset(
        participant_id=np.asarray(pid),
        period=np.asarray(per),
        time=np.asarray(t, dtype=np.float64),
        y=np.asarray(y, dtype=np.int64),
        z=np.asarray(z, dtype=np.float64).reshape(n, len(zc)),
        x=np.asarray(x, dtype=np.float64).reshape(n, len(xc)),
    )


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv_rows(path, header, rows, fingerprint: str | None = None) -> None:
    """Write rows with a fixed float format (shortest round-trip repr)."""
    buf = io.StringIO()
    if fingerprint:
        buf.write(f"# fingerprint: {fingerprint}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def panel_csv_text(data: PanelDataset) -> tuple[list, list]:
    """Header and rows of a dataset in original time units."""
    header = _BASE + [f"z{k}" for k in range(1, data.dz + 1)] + [f"x{k}" for k in range(1, data.dx + 1)]
    t = data.original_times() if data.validated else data.time
    rows = (
        [data.participant_id[m], data.period[m], t[m], int(data.y[m]), *data.z[m], *data.x[m]]
        for m in range(data.n_obs)
    )
    return header, rows


def write_panel_csv(path, data: PanelDataset, fingerprint: str | None = None) -> None:
    header, rows = panel_csv_text(data)
    write_csv_rows(path, header, rows, fingerprint)


def _value(text: str):
    text = text.strip()
    if text.lower() in ("none", "null", ""):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def read_config(path) -> dict:
    """Flat ``key = value`` file (an optional single section header is ignored)."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    text = path.read_text()
    if not re.search(r"^\s*\[", text, flags=re.M):
        text = "[config]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"{path}: {exc}") from None
    out = {}
    for section in parser.sections():
        for k, v in parser.items(section):
            out[k] = _value(v)
    return out
