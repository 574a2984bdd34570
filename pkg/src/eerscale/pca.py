"""Principal component projection of two-session feature matrices.

A model is fit on training rows only (by default the first subjects'
session-1 rows). It is then applied to both sessions of the remaining
subjects, truncated to the leading components and z-scored.
"""

import struct
from dataclasses import dataclass

import numpy as np

from eerscale.errors import DataError
from eerscale.features import FeatureMatrix, take, zscore_features

PCA_MAGIC = b"PCA1"
_HEADER = struct.Struct("<4sQQ")
_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Training mean plus orthonormal components (one per row)."""

    mean_vector: np.ndarray
    components: np.ndarray
    singular_values: np.ndarray = None

    @property
    def d(self):
        return self.components.shape[1]

    @property
    def n_components_kept(self):
        return self.components.shape[0]

    def truncate(self, k):
        if not 1 <= k <= self.n_components_kept:
            raise DataError(f"can keep 1..{self.n_components_kept} components, asked for {k}")
        sv = None if self.singular_values is None else self.singular_values[:k]
        return PcaModel(self.mean_vector, self.components[:k], sv)


def _fix_signs(components):
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(components.shape[0]), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def fit(rows, k):
    """Top-``k`` principal directions of ``rows`` (r x d) by thin SVD.

    The sign of each component is fixed so its largest-magnitude entry is
    positive. Raises when ``k`` exceeds ``min(r - 1, d)`` or the centered
    data has fewer than ``k`` non-negligible directions.
    """
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"training rows must be a 2-D array, got shape {x.shape}")
    r, d = x.shape
    if r < 2:
        raise DataError(f"PCA needs at least 2 training rows, got {r}")
    if not 1 <= k <= min(r - 1, d):
        raise DataError(f"k={k} components requested; must be in 1..min(r - 1, d) = {min(r - 1, d)}")
    if not np.all(np.isfinite(x)):
        raise DataError("training rows contain non-finite values")
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[0] == 0.0:
        raise DataError("training data has zero variance in every dimension")
    if s[k - 1] <= _RANK_TOL * s[0]:
        rank = int(np.count_nonzero(s > _RANK_TOL * s[0]))
        raise DataError(f"training data has rank {rank} after centering; cannot extract {k} components")
    return PcaModel(mean, _fix_signs(vt[:k]), s[:k])


def transform(model, rows, n_keep=None):
    """Project rows onto the (leading ``n_keep``) components."""
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.d:
        raise DataError(f"rows must have {model.d} columns, got shape {x.shape}")
    comps = model.components if n_keep is None else model.truncate(n_keep).components
    return (x - model.mean_vector) @ comps.T


def transform_matrix(model, matrix, n_keep=None):
    """Project both sessions of a FeatureMatrix."""
    s1 = transform(model, matrix.session(0), n_keep)
    s2 = transform(model, matrix.session(1), n_keep)
    return FeatureMatrix.from_sessions(s1, s2, matrix.subject_ids)


def zscore_components(matrix):
    """z-score each component over the evaluation population, sessions pooled."""
    return zscore_features(matrix)


def split_training(matrix, n_train):
    """``(training session-1 rows, evaluation matrix)`` from a leading split."""
    if not 2 <= n_train < matrix.n:
        raise DataError(f"training split must be in 2..{matrix.n - 1} subjects, got {n_train}")
    train = np.asarray(matrix.session(0)[:n_train], dtype=np.float64)
    return train, take(matrix, np.arange(n_train, matrix.n))


def save(model, path):
    """Write the ``PCA1`` container: magic, u64 d, u64 k, mean, components (f64)."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(PCA_MAGIC, model.d, model.n_components_kept))
        fh.write(np.ascontiguousarray(model.mean_vector, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.components, dtype="<f8").tobytes())


def load(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated PCA header")
    magic, d, k = _HEADER.unpack_from(raw)
    if magic != PCA_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r} (expected {PCA_MAGIC!r})")
    need = _HEADER.size + 8 * (d + d * k)
    if len(raw) != need:
        raise DataError(f"{path}: expected {need} bytes for d={d}, k={k}, found {len(raw)}")
    mean = np.frombuffer(raw, dtype="<f8", count=d, offset=_HEADER.size).astype(np.float64)
    comps = np.frombuffer(raw, dtype="<f8", count=d * k, offset=_HEADER.size + 8 * d).reshape(k, d)
    return PcaModel(mean, comps.astype(np.float64))
