"""Minimal CSV helpers shared by the CLI and the trajectory objects.

Numbers are written with ``repr`` precision so files roundtrip exactly;
empty cells read back as NaN.
"""

from __future__ import annotations

import csv
import io

import numpy as np


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return "" if np.isnan(value) else repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path_or_buf, header, rows):
    """Write ``rows`` (iterable of sequences) under ``header``; ``path_or_buf`` may be a path or text stream."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    finally:
        if own:
            fh.close()


def to_csv_string(header, rows):
    buf = io.StringIO()
    write_csv(buf, header, rows)
    return buf.getvalue()


def read_csv(path_or_buf, numeric=True):
    """Return ``(header, data)``.

    With ``numeric=True`` data is a float array (empty cells -> NaN) of shape
    (rows, columns); otherwise a list of string rows.
    """
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, newline="") if own else path_or_buf
    try:
        rows = list(csv.reader(fh))
    finally:
        if own:
            fh.close()
    if not rows:
        raise ValueError("empty CSV")
    header, body = rows[0], rows[1:]
    if not numeric:
        return header, body
    data = np.array([[float(c) if c != "" else np.nan for c in r] for r in body], dtype=float)
    return header, data.reshape(len(body), len(header))
