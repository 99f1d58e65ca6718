"""File writers: CSV tables, JSON reports, PGM heatmaps.

CSV headers are fixed:

* fields   ``x,y,z,t,C``
* series   ``t,C``
* ROC      ``tau,p_fa,p_d``
* windows  ``window,start,expected,observation,threshold,decision,p_fa,p_md``
* compare  ``pair,rel_rmse``

Floats are written with ``repr`` so the files round-trip exactly and are
byte-stable for a given result.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .fields import ConcentrationField, ConcentrationSeries

FIELD_HEADER = ("x", "y", "z", "t", "C")
SERIES_HEADER = ("t", "C")
ROC_HEADER = ("tau", "p_fa", "p_d")
WINDOW_HEADER = ("window", "start", "expected", "observation", "threshold", "decision", "p_fa", "p_md")
COMPARE_HEADER = ("pair", "rel_rmse")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_rows(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_field_csv(path, field: ConcentrationField) -> Path:
    X, Y, Z = field.grid.mesh()
    t = field.time_stamp
    rows = zip(X.ravel(), Y.ravel(), Z.ravel(), [t] * field.values.size, field.values.ravel())
    return write_rows(path, FIELD_HEADER, rows)


def write_series_csv(path, series: ConcentrationSeries) -> Path:
    return write_rows(path, SERIES_HEADER, zip(series.times, series.values))


def write_pgm(path, image: np.ndarray) -> Path:
    """8-bit binary PGM, scaled linearly so the image maximum maps to 255.

    ``image`` is indexed ``[row, column]``; row 0 is the top line.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    top = image.max() if image.size else 0.0
    scaled = np.zeros(image.shape, dtype=np.uint8)
    if top > 0:
        scaled = np.clip(np.rint(image / top * 255.0), 0, 255).astype(np.uint8)
    h, w = image.shape
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def field_heatmap(field: ConcentrationField) -> np.ndarray:
    """x-y image of the first z plane: rows run from +y (top) to -y, columns along x."""
    return field.values[:, ::-1, 0].T


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
