"""RFC-4180 CSV exports for features, assignments, centers and curves."""
import csv
from pathlib import Path

import numpy as np


def _writer(fh):
    return csv.writer(fh, lineterminator="\r\n")


def write_matrix(path, ids, matrix, prefix="f", id_col="id", extra=None):
    """Rows of ``id, <prefix>0..<prefix>m-1[, extra columns]``."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or len(ids) != matrix.shape[0]:
        raise ValueError("ids and matrix rows must align")
    extra = extra or {}
    header = [id_col] + [f"{prefix}{j}" for j in range(matrix.shape[1])] + list(extra)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(header)
        cols = list(extra.values())
        for i, rid in enumerate(ids):
            w.writerow([rid] + [repr(float(v)) for v in matrix[i]] + [c[i] for c in cols])


def read_matrix(path, prefix="f", id_col="id"):
    """Return (ids, matrix, extra columns dict) from :func:`write_matrix` output."""
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    if header[0] != id_col:
        raise ValueError(f"{path}: first column must be {id_col!r}")
    num = [j for j, h in enumerate(header) if h.startswith(prefix) and h[len(prefix):].isdigit()]
    other = [j for j in range(1, len(header)) if j not in num]
    ids = [r[0] for r in body]
    matrix = np.array([[float(r[j]) for j in num] for r in body], dtype=np.float64).reshape(len(body), len(num))
    extra = {header[j]: [r[j] for r in body] for j in other}
    return ids, matrix, extra


def write_rows(path, header, rows):
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_rows(path):
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_assignments(path, ids, assignments):
    write_rows(path, ["id", "cluster"], zip(ids, (int(a) for a in assignments)))


def read_assignments(path):
    header, rows = read_rows(path)
    if header[:2] != ["id", "cluster"]:
        raise ValueError(f"{path}: expected id,cluster header")
    return [r[0] for r in rows], np.array([int(r[1]) for r in rows], dtype=np.int64)


def write_centers(path, centers):
    centers = np.asarray(centers)
    write_matrix(path, list(range(centers.shape[0])), centers, prefix="c", id_col="cluster")


def read_centers(path):
    _, matrix, _ = read_matrix(path, prefix="c", id_col="cluster")
    return matrix


def write_curve(path, k_values, wss):
    write_rows(path, ["k", "wss"], zip(k_values, (float(w) for w in wss)))


def read_curve(path):
    _, rows = read_rows(path)
    return [int(r[0]) for r in rows], [float(r[1]) for r in rows]


def read_features(path):
    """Read any ``id, <prefix>0..`` matrix, inferring the prefix from the header."""
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        header = next(csv.reader(fh), None)
    if not header or len(header) < 2:
        raise ValueError(f"{path}: expected id and at least one feature column")
    prefix = header[1].rstrip("0123456789")
    return read_matrix(path, prefix=prefix, id_col=header[0])[:2]
