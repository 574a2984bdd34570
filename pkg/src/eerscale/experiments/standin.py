"""Low-rank stand-in for a two-session image corpus.

Each subject has a latent vector on ``rank`` directions of a ``dims``-wide
space. Direction ``r`` carries variance ``lambda_r`` (decaying with r) and
its own persistence: the session value is ``sqrt(icc_r) z + sqrt(1 - icc_r) w``
with ``z`` shared between sessions and ``w`` drawn per session. Isotropic
per-session noise is added on top. Rows are generated chunk by chunk from
keyed streams, so any subject range can be produced on demand without
holding the whole corpus.
"""

from dataclasses import dataclass

import numpy as np

from eerscale._rng import stream
from eerscale.errors import DataError
from eerscale.features import FeatureMatrix, default_ids


@dataclass(frozen=True)
class StandinSpec:
    n_subjects: int = 13_003
    dims: int = 12_000
    rank: int = 120
    decay: float = 1.0
    icc_first: float = 0.7
    icc_last: float = 0.3
    noise_sd: float = 0.05
    seed: int = 0
    chunk: int = 1000

    def __post_init__(self):
        if self.n_subjects < 2 or self.dims < 2:
            raise DataError("stand-in corpus needs at least 2 subjects and 2 dimensions")
        if not 1 <= self.rank <= self.dims:
            raise DataError(f"rank must be in 1..dims, got {self.rank}")
        if not (0 < self.icc_last <= 1 and 0 < self.icc_first <= 1):
            raise DataError("component ICCs must lie in (0, 1]")
        if self.chunk < 1:
            raise DataError("chunk must be >= 1")


class StandinCorpus:
    """Chunked two-session corpus; ``rows(start, stop)`` gives both sessions."""

    def __init__(self, spec):
        self.spec = spec
        r = np.arange(spec.rank)
        self.variances = (r + 1.0) ** -spec.decay
        self.iccs = np.linspace(spec.icc_first, spec.icc_last, spec.rank)
        g = stream(spec.seed, "standin-basis").standard_normal((spec.dims, spec.rank))
        q, _ = np.linalg.qr(g)
        self.basis = np.ascontiguousarray(q.T)  # rank x dims, orthonormal rows

    @property
    def n(self):
        return self.spec.n_subjects

    @property
    def d(self):
        return self.spec.dims

    @property
    def subject_ids(self):
        return default_ids(self.n)

    def _chunk(self, c):
        sp = self.spec
        start = c * sp.chunk
        m = min(sp.chunk, sp.n_subjects - start)
        scale = np.sqrt(self.variances)
        z = stream(sp.seed, "standin-latent", c).standard_normal((m, sp.rank))
        out = []
        for sess in range(2):
            w = stream(sp.seed, "standin-session", c, sess).standard_normal((m, sp.rank))
            latent = (np.sqrt(self.iccs) * z + np.sqrt(1.0 - self.iccs) * w) * scale
            x = latent @ self.basis
            x += sp.noise_sd * stream(sp.seed, "standin-noise", c, sess).standard_normal((m, sp.dims))
            out.append(x)
        return out

    def rows(self, start, stop):
        """``(session1, session2)`` float64 rows for subjects ``start..stop``."""
        if not 0 <= start <= stop <= self.n:
            raise DataError(f"subject range {start}..{stop} outside 0..{self.n}")
        c0 = start // self.spec.chunk
        c1 = (stop - 1) // self.spec.chunk if stop > start else c0 - 1
        s1, s2 = [], []
        for c in range(c0, c1 + 1):
            a, b = self._chunk(c)
            lo = max(start - c * self.spec.chunk, 0)
            hi = min(stop - c * self.spec.chunk, a.shape[0])
            s1.append(a[lo:hi])
            s2.append(b[lo:hi])
        if not s1:
            return np.empty((0, self.d)), np.empty((0, self.d))
        return np.concatenate(s1), np.concatenate(s2)

    def iter_rows(self, start=0, stop=None):
        stop = self.n if stop is None else stop
        for a in range(start, stop, self.spec.chunk):
            b = min(a + self.spec.chunk, stop)
            yield a, *self.rows(a, b)

    def to_matrix(self, dtype=np.float32):
        """Materialize the whole corpus (small specs only)."""
        s1, s2 = self.rows(0, self.n)
        return FeatureMatrix.from_sessions(s1.astype(dtype), s2.astype(dtype), self.subject_ids)


class MatrixCorpus:
    """The chunked-corpus interface over an in-memory FeatureMatrix."""

    def __init__(self, matrix, chunk=1000):
        self.matrix = matrix
        self.chunk = chunk

    @property
    def n(self):
        return self.matrix.n

    @property
    def d(self):
        return self.matrix.k

    @property
    def subject_ids(self):
        return self.matrix.subject_ids

    def rows(self, start, stop):
        v = self.matrix.values[start:stop]
        return v[:, :, 0].astype(np.float64), v[:, :, 1].astype(np.float64)

    def iter_rows(self, start=0, stop=None):
        stop = self.n if stop is None else stop
        for a in range(start, stop, self.chunk):
            b = min(a + self.chunk, stop)
            yield a, *self.rows(a, b)
