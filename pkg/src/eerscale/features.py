"""Two-session feature matrices: data model, file formats, normalization and
random subsetting.

Values are held as an ``(n, k, 2)`` array indexed by (subject, feature,
session). Matrices are immutable once built, so they can be shared
read-only between workers.
"""

import csv
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from eerscale._rng import stream
from eerscale.errors import DataError

N_SESSIONS = 2
FMX_MAGIC = b"FMX1"
_HEADER = struct.Struct("<4sQQQ")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Measurements of ``k`` features on ``n`` subjects in two sessions.

    ``values[i, j, m]`` is feature ``j`` of subject ``i`` in session ``m``.
    Construction validates the invariants (two sessions, finite values,
    unique subject ids) and freezes the array.
    """

    values: np.ndarray
    subject_ids: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 3:
            raise DataError(f"values must be 3-D (subject, feature, session), got shape {values.shape}")
        if values.shape[2] != N_SESSIONS:
            raise DataError(f"expected {N_SESSIONS} sessions, got {values.shape[2]}")
        if values.dtype not in (np.float32, np.float64):
            values = values.astype(np.float64)
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"matrix needs at least one subject and one feature, got shape {values.shape}")
        _check_finite(values)
        ids = np.asarray(self.subject_ids, dtype=str)
        if ids.shape != (values.shape[0],):
            raise DataError(f"expected {values.shape[0]} subject ids, got {ids.shape[0] if ids.ndim else 0}")
        _check_unique(ids)
        if values.flags.writeable:
            values = values.view()
            values.flags.writeable = False
        ids.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "subject_ids", ids)

    @classmethod
    def from_sessions(cls, session1, session2, subject_ids=None):
        """Build from two ``(n, k)`` arrays."""
        s1 = np.asarray(session1)
        s2 = np.asarray(session2)
        if s1.ndim == 1:
            s1 = s1[:, None]
            s2 = s2[:, None]
        if s1.shape != s2.shape:
            raise DataError(f"session shapes differ: {s1.shape} vs {s2.shape}")
        if subject_ids is None:
            subject_ids = default_ids(s1.shape[0])
        return cls(np.stack([s1, s2], axis=2), subject_ids)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def k(self):
        return self.values.shape[1]

    @property
    def s(self):
        return self.values.shape[2]

    def session(self, m):
        """The ``(n, k)`` view of session ``m`` (0 or 1)."""
        return self.values[:, :, m]

    def equals(self, other):
        return (
            self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.subject_ids, other.subject_ids)
        )


@dataclass(frozen=True)
class SubsetRequest:
    n_subjects: int
    n_features: int
    seed: int

    def check(self, matrix):
        if not 1 <= self.n_subjects <= matrix.n:
            raise DataError(f"requested {self.n_subjects} subjects from a matrix with {matrix.n}")
        if not 1 <= self.n_features <= matrix.k:
            raise DataError(f"requested {self.n_features} features from a matrix with {matrix.k}")


def default_ids(n):
    return np.array([f"s{i}" for i in range(n)])


def _check_finite(values):
    bad = ~np.isfinite(values)
    if bad.any():
        i, j, m = np.argwhere(bad)[0]
        raise DataError(
            f"non-finite value {values[i, j, m]!r} at subject row {i}, feature column f{j + 1}, session {m + 1}"
        )


def _check_unique(ids):
    uniq, first, counts = np.unique(ids, return_index=True, return_counts=True)
    if (counts > 1).any():
        dup = uniq[counts > 1][0]
        rows = np.flatnonzero(ids == dup)
        raise DataError(f"duplicate subject id {dup!r} at rows {rows.tolist()}")


def zscore_features(matrix):
    """Standardize each feature over both sessions pooled.

    Each feature's ``n * 2`` values are shifted to mean 0 and scaled to unit
    sample standard deviation (divisor ``n * 2 - 1``). Returns a float64
    matrix.
    """
    x = matrix.values.astype(np.float64)
    pooled = x.transpose(1, 0, 2).reshape(matrix.k, -1)
    mean = pooled.mean(axis=1)
    sd = pooled.std(axis=1, ddof=1) if pooled.shape[1] > 1 else np.zeros(matrix.k)
    zero = np.flatnonzero(~(sd > 0))
    if zero.size:
        j = int(zero[0])
        raise DataError(f"feature f{j + 1} has zero variance and cannot be z-scored")
    z = (x - mean[None, :, None]) / sd[None, :, None]
    return FeatureMatrix(z, matrix.subject_ids)


def sample_subset(matrix, req):
    """Random subjects and features, drawn uniformly without replacement.

    The same subject rows are taken from both sessions, so genuine pairs
    survive. The draw is a pure function of ``req.seed``.
    """
    req.check(matrix)
    rng = stream(req.seed, "subset")
    rows = rng.choice(matrix.n, size=req.n_subjects, replace=False)
    cols = rng.choice(matrix.k, size=req.n_features, replace=False)
    return take(matrix, rows, cols)


def take(matrix, rows=None, cols=None):
    values = matrix.values
    ids = matrix.subject_ids
    if rows is not None:
        values = values[rows]
        ids = ids[rows]
    if cols is not None:
        values = values[:, cols]
    return FeatureMatrix(np.ascontiguousarray(values), ids)


def _infer_format(path, fmt):
    if fmt:
        fmt = fmt.lower()
    else:
        fmt = "csv" if os.fspath(path).lower().endswith(".csv") else "fmx"
    if fmt not in ("fmx", "csv"):
        raise DataError(f"unknown matrix format {fmt!r} (expected 'fmx' or 'csv')")
    return fmt


def store(matrix, path, fmt=None):
    """Write ``matrix`` as FMX1 binary (default) or CSV.

    FMX1 holds 32-bit floats, so float32 matrices round-trip bit-exactly.
    """
    if _infer_format(path, fmt) == "csv":
        _store_csv(matrix, path)
    else:
        _store_fmx(matrix, path)


def load(path, fmt=None):
    if _infer_format(path, fmt) == "csv":
        return _load_csv(path)
    return _load_fmx(path)


def _store_fmx(matrix, path):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FMX_MAGIC, matrix.n, matrix.k, matrix.s))
        fh.write(np.ascontiguousarray(matrix.values, dtype="<f4").tobytes())
        for sid in matrix.subject_ids:
            fh.write(str(sid).encode("utf-8") + b"\0")


def _load_fmx(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header ({len(raw)} bytes, need {_HEADER.size})")
    magic, n, k, s = _HEADER.unpack_from(raw)
    if magic != FMX_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r} at byte 0 (expected {FMX_MAGIC!r})")
    if s != N_SESSIONS:
        raise DataError(f"{path}: header declares s={s} sessions at byte 20; only s=2 is supported")
    if n < 1 or k < 1:
        raise DataError(f"{path}: header declares n={n}, k={k}; both must be >= 1")
    count = n * k * s
    end = _HEADER.size + 4 * count
    if len(raw) < end:
        raise DataError(f"{path}: value block truncated: need {4 * count} bytes after header, found {len(raw) - _HEADER.size}")
    values = np.frombuffer(raw, dtype="<f4", count=count, offset=_HEADER.size).reshape(n, k, s)
    values = values.astype(np.float32)
    parts = raw[end:].split(b"\0")
    if parts and parts[-1] == b"":
        parts.pop()
    else:
        raise DataError(f"{path}: subject id block is not null-terminated")
    if len(parts) != n:
        raise DataError(f"{path}: expected {n} subject ids, found {len(parts)}")
    try:
        ids = np.array([p.decode("utf-8") for p in parts])
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: subject id is not valid UTF-8: {exc}") from None
    return FeatureMatrix(values, ids)


def _store_csv(matrix, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject", "session"] + [f"f{j + 1}" for j in range(matrix.k)])
        for i, sid in enumerate(matrix.subject_ids):
            for m in range(matrix.s):
                w.writerow([sid, m + 1] + [repr(float(v)) for v in matrix.values[i, :, m]])


def _load_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "subject" or header[1] != "session":
            raise DataError(f"{path}: line 1: header must be 'subject,session,f1..fk', got {header[:3]}")
        k = len(header) - 2
        expected = [f"f{j + 1}" for j in range(k)]
        if header[2:] != expected:
            raise DataError(f"{path}: line 1: feature columns must be named f1..f{k}")
        order = []
        rows = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != k + 2:
                raise DataError(f"{path}: line {lineno}: expected {k + 2} columns, got {len(row)}")
            sid, sess = row[0], row[1]
            try:
                m = int(sess)
            except ValueError:
                raise DataError(f"{path}: line {lineno}, column 'session': {sess!r} is not an integer") from None
            if m not in (1, 2):
                raise DataError(f"{path}: line {lineno}, column 'session': session {m} found; only sessions 1 and 2 are supported")
            vals = []
            for j, cell in enumerate(row[2:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: line {lineno}, column f{j + 1}: {cell!r} is not a number") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: line {lineno}, column f{j + 1}: non-finite value {cell!r}")
                vals.append(v)
            slots = rows.get(sid)
            if slots is None:
                slots = rows[sid] = [None, None]
                order.append(sid)
            if slots[m - 1] is not None:
                raise DataError(f"{path}: line {lineno}: duplicate row for subject {sid!r} session {m}")
            slots[m - 1] = vals
    if not order:
        raise DataError(f"{path}: no data rows")
    values = np.empty((len(order), k, N_SESSIONS), dtype=np.float64)
    for i, sid in enumerate(order):
        for m, vals in enumerate(rows[sid]):
            if vals is None:
                raise DataError(f"{path}: subject {sid!r} has no session {m + 1} row")
            values[i, :, m] = vals
    return FeatureMatrix(values, np.array(order))
