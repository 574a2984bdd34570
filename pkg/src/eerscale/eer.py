"""Equal error rate: exact in-memory and batched binary search.

Conventions used everywhere: FAR(t) is the fraction of impostor scores
strictly above ``t``; FRR(t) is the fraction of genuine scores at or below
``t``. ``d(t) = FAR(t) - FRR(t)`` is non-increasing in ``t``.

Both methods end the same way. They list the distinct (FAR, FRR) states
around the crossing in threshold order, find where ``d`` changes sign, and
interpolate linearly in ``d`` between the two bracketing states. They
enumerate the same states, so on the same scores they return the same EER.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from eerscale.errors import DataError
from eerscale.scoring import all_scores, stream_counts, stream_histogram

STOP_COUNT = 40
COLLECT_CAP = 2_000_000
STALL_LIMIT = 64
HISTOGRAM_BITS = 16


@dataclass
class EerResult:
    eer: float
    threshold: float
    passes: int = 0
    bracket_width_final: int = 0
    lower: float = 0.0
    upper: float = 1.0
    tie_fallback: bool = False
    history: list = field(default_factory=list, repr=False)

    @property
    def eer_percent(self):
        return 100.0 * self.eer


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    far: float
    frr: float


def _crossing(thresholds, far, frr):
    """Interpolate the sign change of ``far - frr`` over ordered states."""
    d = far - frr
    j = int(np.argmax(d <= 0))
    if d[j] > 0:
        # no sign change (cannot happen with a final all-rejecting state)
        j = len(d) - 1
    if d[j] == 0 or j == 0:
        return float(far[j]), float(thresholds[j])
    a = d[j - 1] / (d[j - 1] - d[j])
    eer = far[j - 1] + a * (far[j] - far[j - 1])
    thr = thresholds[j - 1] + a * (thresholds[j] - thresholds[j - 1])
    return float(eer), float(thr)


def exact_eer(genuine, impostor):
    """EER from the full sorted score set.

    Candidate thresholds sit halfway between adjacent distinct scores, plus
    one below the smallest and one above the largest score; together they
    enumerate every distinct (FAR, FRR) pair.
    """
    g = np.sort(np.asarray(genuine, dtype=np.float64).ravel())
    imp = np.sort(np.asarray(impostor, dtype=np.float64).ravel())
    if g.size == 0 or imp.size == 0:
        raise DataError("exact_eer needs at least one genuine and one impostor score")
    u = np.unique(np.concatenate([g, imp]))
    gen_le = np.searchsorted(g, u, side="right")
    imp_le = np.searchsorted(imp, u, side="right")
    far = np.concatenate([[imp.size], imp.size - imp_le]) / imp.size
    frr = np.concatenate([[0], gen_le]) / g.size
    if u.size > 1:
        gaps = np.diff(u)
        first, last = gaps[0], gaps[-1]
    else:
        gaps = np.empty(0)
        first = last = 1.0
    cands = np.concatenate([[u[0] - first / 2], u[:-1] + gaps / 2, [u[-1] + last / 2]])
    eer, thr = _crossing(cands, far, frr)
    return EerResult(eer=eer, threshold=thr, bracket_width_final=int(u.size))


def eer_from_model(model, method="binsearch", **kwargs):
    if method == "exact":
        return exact_eer(*all_scores(model))
    if method == "binsearch":
        return binary_search_eer(model, **kwargs)
    raise DataError(f"unknown EER method {method!r} (expected 'exact' or 'binsearch')")


class _Bracket:
    """Scores collected from a bracket, plus the counts at its lower bound.

    Answers the same questions as a full pass for any sub-bracket, in
    memory. The arrays are narrowed as the bracket shrinks.
    """

    def __init__(self, counts):
        s, g = counts.bracket_scores, counts.bracket_genuine
        self.gen = s[g]
        self.imp = s[~g]
        self.lo, self.hi = counts.lower, counts.upper
        self.n_genuine = counts.n_genuine
        self.n_impostor = counts.n_impostor
        self.imp_above_lo = counts.impostors_above_lower
        self.gen_le_lo = counts.genuine_at_or_below_lower

    def _narrow(self, lo, hi):
        if lo > self.lo:
            self.imp_above_lo -= int(np.count_nonzero(self.imp <= lo))
            self.gen_le_lo += int(np.count_nonzero(self.gen <= lo))
            self.imp = self.imp[self.imp > lo]
            self.gen = self.gen[self.gen > lo]
            self.lo = lo
        if hi < self.hi:
            self.imp = self.imp[self.imp < hi]
            self.gen = self.gen[self.gen < hi]
            self.hi = hi

    def counts(self, t, lo, hi):
        from eerscale.scoring import ThresholdCounts

        self._narrow(lo, hi)
        out = ThresholdCounts(t, lo, hi, self.n_genuine, self.n_impostor)
        out.impostors_above = self.imp_above_lo - int(np.count_nonzero(self.imp <= t))
        out.genuine_at_or_below = self.gen_le_lo + int(np.count_nonzero(self.gen <= t))
        out.impostors_above_lower = self.imp_above_lo
        out.genuine_at_or_below_lower = self.gen_le_lo
        out.in_bracket = self.gen.size + self.imp.size
        return out

    def collect(self, counts):
        scores = np.concatenate([self.gen, self.imp])
        labels = np.concatenate([np.ones(self.gen.size, bool), np.zeros(self.imp.size, bool)])
        order = np.lexsort((labels, scores))
        counts.bracket_scores = scores[order]
        counts.bracket_genuine = labels[order]


def _state_counts(scores, genuine, counts, v):
    """(impostors above v, genuine at or below v) for ``lo < v < hi``."""
    below = scores <= v
    return (
        counts.impostors_above_lower - int(np.count_nonzero(below & ~genuine)),
        counts.genuine_at_or_below_lower + int(np.count_nonzero(below & genuine)),
    )


def _finish(counts, hi_counts, lo, hi):
    """EER from the last pass over bracket ``(lo, hi)``.

    States are taken at ``lo``, at each distinct bracket score and at
    ``hi``; these are consecutive (FAR, FRR) states, so ``d`` is
    interpolated between neighbours exactly as in ``exact_eer``.
    """
    n_gen, n_imp = counts.n_genuine, counts.n_impostor
    thr = [lo]
    imp_above = [counts.impostors_above_lower]
    gen_le = [counts.genuine_at_or_below_lower]
    if lo == 0.0:
        # the state below every score, in case scores sit exactly at 0
        thr.insert(0, lo)
        imp_above.insert(0, n_imp)
        gen_le.insert(0, 0)
    if counts.bracket_scores is not None and counts.bracket_scores.size:
        for v in np.unique(counts.bracket_scores):
            ia, gl = _state_counts(counts.bracket_scores, counts.bracket_genuine, counts, v)
            thr.append(float(v))
            imp_above.append(ia)
            gen_le.append(gl)
    thr.append(hi)
    imp_above.append(hi_counts[0])
    gen_le.append(hi_counts[1])
    far = np.asarray(imp_above) / n_imp
    frr = np.asarray(gen_le) / n_gen
    return _crossing(np.asarray(thr), far, frr)


def binary_search_eer(
    model,
    stop_count=STOP_COUNT,
    collect_cap=COLLECT_CAP,
    refine_in_memory=True,
    stall_limit=STALL_LIMIT,
    histogram_bits=HISTOGRAM_BITS,
):
    """EER by bisection on the threshold, one data pass per step.

    Bounds start at (0, 1). Each step evaluates the midpoint: when
    FRR > FAR the upper bound moves down to it, otherwise the lower bound
    moves up. Stops once at most ``stop_count`` scores lie strictly between
    the bounds, then interpolates over the collected bracket scores.

    With ``refine_in_memory`` the same steps are answered with fewer passes:
    the first pass bins every score on a ``2**histogram_bits`` dyadic grid,
    which answers the early midpoints (all on that grid) exactly, and once
    the bracket population fits in ``collect_cap`` a pass collects the
    bracket scores and the remaining steps run on them. Decisions and
    result are identical to doing every step as a full pass; only
    ``passes`` differs.
    """
    if stop_count < 0:
        raise DataError(f"stop_count must be >= 0, got {stop_count}")
    cap = max(collect_cap, stop_count)
    lo, hi = 0.0, 1.0
    hi_counts = (0, model.n_genuine)
    passes = 0
    stall = 0
    prev_pop = None
    hist = None
    bracket = None
    history = []
    tie = False
    if refine_in_memory and histogram_bits and model.n * model.n > cap:
        hist = stream_histogram(model, histogram_bits)
        passes += 1
    while True:
        t = 0.5 * (lo + hi)
        counts = None
        if bracket is not None:
            counts = bracket.counts(t, lo, hi)
        elif hist is not None:
            counts = hist.counts(t, lo, hi)
            if counts is not None and counts.in_bracket <= cap:
                counts = None  # time to collect the bracket
        if counts is None:
            counts = stream_counts(model, t, lo, hi, collect_cap=cap)
            passes += 1
            if refine_in_memory and counts.bracket_scores is not None:
                bracket = _Bracket(counts)
        pop = counts.in_bracket
        history.append((lo, hi, pop))
        if pop <= stop_count:
            break
        stall = stall + 1 if prev_pop is not None and pop >= prev_pop else 0
        prev_pop = pop
        if stall >= stall_limit or not lo < t < hi:
            tie = True
            break
        if counts.frr > counts.far:
            hi = t
            hi_counts = (counts.impostors_above, counts.genuine_at_or_below)
        else:
            lo = t
    if counts.bracket_scores is None:
        if bracket is None:
            # a tie stop before the bracket fit in memory: nothing to list
            counts.bracket_scores = np.empty(0)
            counts.bracket_genuine = np.empty(0, dtype=bool)
        else:
            bracket.collect(counts)
    eer, thr = _finish(counts, hi_counts, lo, hi)
    return EerResult(
        eer=eer,
        threshold=thr,
        passes=passes,
        bracket_width_final=pop,
        lower=lo,
        upper=hi,
        tie_fallback=tie,
        history=history,
    )


def roc_curve(genuine, impostor, grid):
    grid = np.asarray(grid, dtype=np.float64)
    if np.any(np.diff(grid) < 0):
        raise DataError("ROC grid must be sorted ascending")
    g = np.sort(np.asarray(genuine, dtype=np.float64))
    imp = np.sort(np.asarray(impostor, dtype=np.float64))
    far = (imp.size - np.searchsorted(imp, grid, side="right")) / imp.size
    frr = np.searchsorted(g, grid, side="right") / g.size
    return [RocPoint(float(t), float(a), float(r)) for t, a, r in zip(grid, far, frr)]


def format_percent(eer):
    return f"{100.0 * eer:.3f}" if math.isfinite(eer) else "nan"
