"""CSV ingestion and provenance-stamped output."""
import csv
import hashlib
import io
import json
import os

import numpy as np

from .. import __version__
from ..errors import ValidationError


def _read_rows(path):
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror or exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    rows = list(csv.reader(lines))
    return [[c.strip() for c in r] for r in rows]


def read_table(path, what="table"):
    """Header plus float matrix; cells must parse as numbers."""
    rows = _read_rows(path)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    header, body = rows[0], rows[1:]
    if not body:
        raise ValidationError(f"{path}: no data rows")
    out = np.empty((len(body), len(header)))
    for i, r in enumerate(body, start=1):
        if len(r) != len(header):
            raise ValidationError(f"{path}: row {i} has {len(r)} cells, expected {len(header)}")
        for j, c in enumerate(r):
            try:
                out[i - 1, j] = float(c)
            except ValueError:
                raise ValidationError(f"{path}: row {i}, column {header[j]!r}: {c!r} is not a number") from None
    return header, out


def load_panel(path):
    """Binary panel CSV -> (names, int8 array n x M)."""
    header, vals = read_table(path, "panel")
    bad = np.argwhere((vals != 0) & (vals != 1))
    if bad.size:
        i, j = bad[0]
        raise ValidationError(f"{path}: row {i + 1}, column {header[j]!r}: value {vals[i, j]:g} is not 0/1")
    return header, vals.astype(np.int8)


def expand_design(X, n, M, layout):
    """Tile an n-row shared design to nM rows; optionally expand into response blocks."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] == n and n * M != n:
        X = np.repeat(X, M, axis=0)
    elif X.shape[0] != n * M:
        raise ValidationError(f"design has {X.shape[0]} rows; expected n={n} or nM={n * M}")
    if layout == "blocks":
        q = X.shape[1]
        out = np.zeros((n * M, M * q))
        j = np.tile(np.arange(M), n)
        for r in range(n * M):
            out[r, j[r] * q : (j[r] + 1) * q] = X[r]
        return out
    if layout != "shared":
        raise ValidationError(f"unknown layout {layout!r}")
    return X


def load_design(path, n, M, layout="shared"):
    header, X = read_table(path, "design")
    if layout == "blocks":
        header = [f"{h}_{j + 1}" for j in range(M) for h in header]
    return header, expand_design(X, n, M, layout)


def panel_hash(y):
    y = np.ascontiguousarray(np.asarray(y, dtype=np.int8))
    h = hashlib.sha256()
    h.update(str(y.shape).encode())
    h.update(y.tobytes())
    return h.hexdigest()


def fmt(x):
    return repr(float(x)) if np.isfinite(x) else ("nan" if np.isnan(x) else ("inf" if x > 0 else "-inf"))


def provenance(**fields):
    base = {"version": __version__}
    base.update(fields)
    return base


def write_csv(path, header, rows, meta=None):
    """Write rows with a ``# key: value`` comment block first."""
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([c if isinstance(c, str) else fmt(c) for c in r])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror or exc}") from exc


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
