"""Cosine similarity scores between session-1 and session-2 feature vectors.

The score of a pair is ``(1 + cos) / 2``: the cosine distance ``1 - cos``
scaled from [0, 2] to [0, 1] and reflected. Scores form an implicit
``n x n`` matrix whose diagonal holds the genuine scores and whose
off-diagonal entries are the impostor scores.

Scores are evaluated in float64 on fixed 64-row tiles. Each tile is one
GEMM of identical shape, which keeps every score bit-identical whatever the
batch size. Threshold tests are done on the raw cosine against precomputed
cut points that reproduce exactly the comparison on the rounded score.
"""

import csv
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from eerscale.errors import DataError

TILE_ROWS = 64
DEFAULT_BATCH = 1000
DEFAULT_ALL_SCORES_CAP = 20_000
_SIGN_BIT = 1 << 63
_MAG_MASK = _SIGN_BIT - 1


def to_score(cos):
    """Map cosine values to similarity scores in [0, 1]."""
    s = (np.add(1.0, cos)) * 0.5
    return np.clip(s, 0.0, 1.0)


def _score1(c):
    return min(max((1.0 + c) * 0.5, 0.0), 1.0)


def _ordered(x):
    b = struct.unpack("<q", struct.pack("<d", x))[0]
    return b if b >= 0 else -(b & _MAG_MASK)


def _unordered(o):
    bits = o if o >= 0 else (-o) | _SIGN_BIT
    return struct.unpack("<d", struct.pack("<Q", bits))[0]


def _last_true(pred, lo, hi):
    """Largest float in [lo, hi) with ``pred`` true, given pred(lo) and not pred(hi)."""
    a, b = _ordered(lo), _ordered(hi)
    while b - a > 1:
        mid = (a + b) // 2
        if pred(_unordered(mid)):
            a = mid
        else:
            b = mid
    return _unordered(a)


def cut_above(t):
    """Largest cosine whose score is ``<= t``; ``score > t`` iff ``cos > cut``."""
    if t >= 1.0:
        return math.inf
    if t < 0.0:
        return -math.inf
    return _last_true(lambda c: _score1(c) <= t, -1.0, 1.0)


def cut_at_least(t):
    """Smallest cosine whose score is ``>= t``; ``score < t`` iff ``cos < cut``."""
    if t <= 0.0:
        return -math.inf
    if t > 1.0:
        return math.inf
    return math.nextafter(_last_true(lambda c: _score1(c) < t, -1.0, 1.0), math.inf)


def similarity(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape or a.size < 1:
        raise DataError(f"vectors must be 1-D of equal non-zero length, got {a.shape} and {b.shape}")
    aa = float(a @ a)
    bb = float(b @ b)
    if aa == 0.0 or bb == 0.0:
        raise DataError("cosine similarity is undefined for a zero-norm vector")
    return float(to_score(float(a @ b) / math.sqrt(aa * bb)))


def _paired_cosines(x1, x2):
    """Row-wise cosine of matching rows; exactly 1.0 when the rows are equal.

    ``dot / sqrt(|a|^2 |b|^2)`` with all three sums taken the same way, so
    identical rows give ``x / sqrt(x * x) == x / x``.
    """
    dot = np.einsum("ij,ij->i", x1, x2)
    n1 = np.einsum("ij,ij->i", x1, x1)
    n2 = np.einsum("ij,ij->i", x2, x2)
    return np.clip(dot / np.sqrt(n1 * n2), -1.0, 1.0)


def _unit_rows(x, ids, session):
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        i = int(zero[0])
        raise DataError(f"subject {ids[i]!r} (row {i}) has a zero-norm feature vector in session {session}")
    return x / norms[:, None]


@dataclass(eq=False)
class ScoreModel:
    """All ``n**2`` session-1 x session-2 scores of a matrix, never stored whole.

    Batches partition the session-1 subjects; each batch is scored against
    every session-2 subject.
    """

    matrix: object
    batch_size: int = DEFAULT_BATCH
    threads: int = 1
    _probe: np.ndarray = field(init=False, repr=False)
    _gallery_t: np.ndarray = field(init=False, repr=False)
    _genuine_cos: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.batch_size < 1:
            raise DataError(f"batch_size must be >= 1, got {self.batch_size}")
        ids = self.matrix.subject_ids
        self._probe = np.ascontiguousarray(_unit_rows(self.matrix.session(0), ids, 1))
        self._gallery_t = np.ascontiguousarray(_unit_rows(self.matrix.session(1), ids, 2).T)
        x1 = np.asarray(self.matrix.session(0), dtype=np.float64)
        x2 = np.asarray(self.matrix.session(1), dtype=np.float64)
        self._genuine_cos = _paired_cosines(x1, x2)

    @property
    def n(self):
        return self._probe.shape[0]

    @property
    def n_genuine(self):
        return self.n

    @property
    def n_impostor(self):
        return self.n * self.n - self.n

    def batches(self):
        return [(b, min(b + self.batch_size, self.n)) for b in range(0, self.n, self.batch_size)]

    def cosine_tiles(self, start, stop):
        """Yield ``(row0, cos)`` for rows ``start..stop`` in tiles of at most 64 rows.

        Off-diagonal entries come from one fixed-shape GEMM per tile; the
        diagonal (genuine) entries are the paired cosines computed once at
        construction.
        """
        k = self._probe.shape[1]
        pad = None
        for r0 in range(start, stop, TILE_ROWS):
            r1 = min(r0 + TILE_ROWS, stop)
            if r1 - r0 == TILE_ROWS:
                block = self._probe[r0:r1]
            else:
                if pad is None:
                    pad = np.zeros((TILE_ROWS, k))
                pad[: r1 - r0] = self._probe[r0:r1]
                pad[r1 - r0 :] = 0.0
                block = pad
            cos = (block @ self._gallery_t)[: r1 - r0]
            rows = np.arange(r1 - r0)
            cos[rows, r0 + rows] = self._genuine_cos[r0:r1]
            yield r0, cos

    def map_batches(self, fn):
        """``fn(start, stop)`` over all batches, in batch order."""
        spans = self.batches()
        if self.threads > 1 and len(spans) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(lambda span: fn(*span), spans))
        return [fn(*span) for span in spans]

    def map_batch_groups(self, fn):
        """``fn(spans)`` over contiguous runs of batches, one run per worker."""
        spans = self.batches()
        groups = [g.tolist() for g in np.array_split(np.arange(len(spans)), min(self.threads, len(spans)))]
        groups = [[spans[i] for i in g] for g in groups if g]
        if len(groups) > 1:
            with ThreadPoolExecutor(max_workers=len(groups)) as pool:
                return list(pool.map(fn, groups))
        return [fn(g) for g in groups]


@dataclass
class ThresholdCounts:
    """Counts from one pass over all scores.

    ``impostors_above``/``genuine_at_or_below`` refer to ``threshold``; the
    ``*_lower`` pair refers to ``lower``; ``in_bracket`` counts scores
    strictly inside ``(lower, upper)``. ``bracket_scores`` and
    ``bracket_genuine`` hold those scores, in row-major order of the score
    matrix, when ``in_bracket`` does not exceed the collection cap; else
    they are ``None``.
    """

    threshold: float
    lower: float
    upper: float
    n_genuine: int
    n_impostor: int
    impostors_above: int = 0
    genuine_at_or_below: int = 0
    impostors_above_lower: int = 0
    genuine_at_or_below_lower: int = 0
    in_bracket: int = 0
    bracket_scores: np.ndarray = None
    bracket_genuine: np.ndarray = None

    @property
    def far(self):
        return self.impostors_above / self.n_impostor

    @property
    def frr(self):
        return self.genuine_at_or_below / self.n_genuine


def _merge(parts, collect_cap):
    first = parts[0]
    out = ThresholdCounts(first.threshold, first.lower, first.upper, first.n_genuine, first.n_impostor)
    for p in parts:
        out.impostors_above += p.impostors_above
        out.genuine_at_or_below += p.genuine_at_or_below
        out.impostors_above_lower += p.impostors_above_lower
        out.genuine_at_or_below_lower += p.genuine_at_or_below_lower
        out.in_bracket += p.in_bracket
    if out.in_bracket <= collect_cap and all(p.bracket_scores is not None for p in parts):
        out.bracket_scores = np.concatenate([p.bracket_scores for p in parts])
        out.bracket_genuine = np.concatenate([p.bracket_genuine for p in parts])
    return out


def stream_counts(model, threshold, lower=0.0, upper=1.0, collect_cap=0):
    """One full pass over the ``n**2`` scores, batch by batch."""
    if not 0.0 <= lower <= threshold <= upper <= 1.0:
        raise DataError(f"need 0 <= lower <= threshold <= upper <= 1, got {lower}, {threshold}, {upper}")
    c_t = cut_above(threshold)
    c_lo = cut_above(lower)
    c_hi = cut_at_least(upper)
    n = model.n
    n_gen, n_imp = model.n_genuine, model.n_impostor

    def one_batch(start, stop):
        part = ThresholdCounts(threshold, lower, upper, n_gen, n_imp)
        above_t = above_lo = gen_above_t = gen_above_lo = 0
        kept_s, kept_g = [], []
        collecting = collect_cap > 0
        for r0, cos in model.cosine_tiles(start, stop):
            m = cos.shape[0]
            rows = np.arange(m)
            diag = cos[rows, r0 + rows]
            above_t += np.count_nonzero(cos > c_t)
            gen_above_t += np.count_nonzero(diag > c_t)
            inside = cos > c_lo
            above_lo += np.count_nonzero(inside)
            gen_above_lo += np.count_nonzero(diag > c_lo)
            inside &= cos < c_hi
            cnt = np.count_nonzero(inside)
            part.in_bracket += cnt
            if collecting and cnt:
                if part.in_bracket > collect_cap:
                    collecting = False
                    kept_s, kept_g = [], []
                else:
                    ri, ci = np.nonzero(inside)
                    kept_s.append(to_score(cos[ri, ci]))
                    kept_g.append(ci == ri + r0)
        part.impostors_above = above_t - gen_above_t
        part.genuine_at_or_below = (stop - start) - gen_above_t
        part.impostors_above_lower = above_lo - gen_above_lo
        part.genuine_at_or_below_lower = (stop - start) - gen_above_lo
        if collecting:
            part.bracket_scores = np.concatenate(kept_s) if kept_s else np.empty(0)
            part.bracket_genuine = np.concatenate(kept_g) if kept_g else np.empty(0, dtype=bool)
        return part

    if n == 0:
        raise DataError("empty score model")
    return _merge(model.map_batches(one_batch), collect_cap)


@dataclass
class ScoreHistogram:
    """Genuine/impostor score counts on the dyadic grid ``i / 2**bits``.

    Bin ``i`` holds scores in ``((i - 1) / 2**bits, i / 2**bits]`` (bin 0
    holds exact zeros). ``*_edge[i]`` counts scores equal to ``i / 2**bits``.
    That is enough to answer every count of ``stream_counts`` exactly when
    the threshold and both bounds lie on the grid.
    """

    bits: int
    n_genuine: int
    n_impostor: int
    genuine: np.ndarray
    impostor: np.ndarray
    genuine_edge: np.ndarray
    impostor_edge: np.ndarray

    def index(self, v):
        """Grid index of ``v``, or ``None`` when ``v`` is off the grid."""
        x = v * (1 << self.bits)
        return int(x) if x == math.floor(x) else None

    def counts(self, threshold, lower, upper):
        it, il, iu = self.index(threshold), self.index(lower), self.index(upper)
        if it is None or il is None or iu is None:
            return None
        cg = self._cum_gen
        ci = self._cum_imp
        out = ThresholdCounts(threshold, lower, upper, self.n_genuine, self.n_impostor)
        out.genuine_at_or_below = int(cg[it])
        out.impostors_above = self.n_impostor - int(ci[it])
        out.genuine_at_or_below_lower = int(cg[il])
        out.impostors_above_lower = self.n_impostor - int(ci[il])
        at_upper = int(self.genuine_edge[iu] + self.impostor_edge[iu])
        out.in_bracket = int(cg[iu] - cg[il] + ci[iu] - ci[il]) - at_upper
        return out

    def __post_init__(self):
        self._cum_gen = np.cumsum(self.genuine)
        self._cum_imp = np.cumsum(self.impostor)


class _GridAccumulator:
    """Bin counts on the dyadic grid, with indices buffered for bulk ``bincount``."""

    FLUSH = 1 << 20

    def __init__(self, bits):
        self.bits = bits
        self.size = (1 << bits) + 1
        self.counts = np.zeros(self.size, dtype=np.int64)
        self.edges = np.zeros(self.size, dtype=np.int64)
        self._idx, self._edge, self._pending = [], [], 0

    def add(self, scores):
        scaled = np.ravel(scores) * float(1 << self.bits)
        up = np.ceil(scaled)
        idx = up.astype(np.int64)
        edge = scaled == up
        if idx.size >= self.size:
            self._count(idx, edge)
            return
        self._idx.append(idx)
        self._edge.append(edge)
        self._pending += idx.size
        if self._pending >= self.FLUSH:
            self.flush()

    def _count(self, idx, edge):
        self.counts += np.bincount(idx, minlength=self.size)
        self.edges += np.bincount(idx[edge], minlength=self.size)

    def flush(self):
        if self._pending:
            self._count(np.concatenate(self._idx), np.concatenate(self._edge))
        self._idx, self._edge, self._pending = [], [], 0
        return self


def stream_histogram(model, bits=16):
    """One full pass binning every score on the ``2**bits`` dyadic grid."""
    if not 1 <= bits <= 24:
        raise DataError(f"histogram bits must be in 1..24, got {bits}")

    def one_group(spans):
        every, gen = _GridAccumulator(bits), _GridAccumulator(bits)
        for start, stop in spans:
            for r0, cos in model.cosine_tiles(start, stop):
                s = to_score(cos)
                rows = np.arange(s.shape[0])
                every.add(s)
                gen.add(s[rows, r0 + rows])
        return every.flush(), gen.flush()

    parts = model.map_batch_groups(one_group)
    tot = sum(p[0].counts for p in parts)
    tot_edge = sum(p[0].edges for p in parts)
    gen = sum(p[1].counts for p in parts)
    gen_edge = sum(p[1].edges for p in parts)
    return ScoreHistogram(
        bits, model.n_genuine, model.n_impostor, gen, tot - gen, gen_edge, tot_edge - gen_edge
    )


def all_scores(model, cap=DEFAULT_ALL_SCORES_CAP):
    """Materialize every score: ``(genuine[n], impostor[n*n - n])``.

    Impostors are in row-major order of the score matrix with the diagonal
    removed.
    """
    n = model.n
    if n > cap:
        raise DataError(
            f"{n} subjects means {n * n} scores, above the in-memory cap of {cap} subjects; "
            "use the streaming path (stream_counts / binary_search_eer)"
        )
    genuine = np.empty(n)
    impostor = np.empty(n * n - n)
    pos = 0
    for r0, cos in model.cosine_tiles(0, n):
        s = to_score(cos)
        m = s.shape[0]
        rows = np.arange(m)
        genuine[r0 : r0 + m] = s[rows, r0 + rows]
        off = np.ones(s.shape, dtype=bool)
        off[rows, r0 + rows] = False
        chunk = s[off]
        impostor[pos : pos + chunk.size] = chunk
        pos += chunk.size
    return genuine, impostor


def dump_scores(model, path, max_subjects=1000):
    """Write ``row,col,score,label`` for every pair (small models only)."""
    if model.n > max_subjects:
        raise DataError(f"score dump is limited to {max_subjects} subjects, model has {model.n}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "score", "label"])
        for r0, cos in model.cosine_tiles(0, model.n):
            s = to_score(cos)
            for r in range(s.shape[0]):
                i = r0 + r
                for j in range(model.n):
                    w.writerow([i, j, repr(float(s[r, j])), "genuine" if i == j else "impostor"])
