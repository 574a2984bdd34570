"""Statistics used by the experiments: ICC, Pearson r, standard error and
Welch's two-sample t-test.

The Student-t tail probability is computed from the regularized incomplete
beta function (continued fraction, modified Lentz), so the package needs no
statistics library.
"""

import math
from dataclasses import dataclass

import numpy as np

from eerscale.errors import DataError

_BETA_EPS = 1e-15
_BETA_MAX_ITER = 10_000
_TINY = 1e-300


@dataclass(frozen=True)
class GroupSummary:
    mean: float
    sd: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise DataError(f"a group summary needs n >= 2, got {self.n}")
        if not self.sd >= 0:
            raise DataError(f"sd must be >= 0, got {self.sd}")

    @classmethod
    def of(cls, values):
        v = np.asarray(values, dtype=np.float64)
        if v.size < 2:
            raise DataError(f"a group summary needs at least 2 values, got {v.size}")
        return cls(float(v.mean()), float(v.std(ddof=1)), int(v.size))

    @property
    def se(self):
        return self.sd / math.sqrt(self.n)


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float


def _betacf(a, b, x):
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a, b, x):
    """Regularized incomplete beta ``I_x(a, b)`` for ``a, b > 0``."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a > 0 and b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t, df):
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError(f"df must be positive, got {df}")
    if math.isinf(t):
        return 0.0
    return min(1.0, max(0.0, betainc(df / 2.0, 0.5, df / (df + t * t))))


def welch_t(a, b):
    """Welch's unequal-variance t-test of ``a.mean - b.mean`` from summaries."""
    va = a.sd**2 / a.n
    vb = b.sd**2 / b.n
    if va + vb == 0:
        raise DataError("Welch's t-test is undefined when both groups have zero variance")
    t = (a.mean - b.mean) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (a.n - 1) + vb**2 / (b.n - 1))
    return WelchResult(t=t, df=df, p=t_two_sided_p(t, df))


def standard_error(values):
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise DataError(f"standard error needs at least 2 values, got {v.size}")
    return float(v.std(ddof=1) / math.sqrt(v.size))


def pearson(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise DataError("pearson needs two 1-D vectors of equal length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx == 0 or syy == 0:
        raise DataError("pearson correlation is undefined for a zero-variance vector")
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def icc_oneway(table):
    """ICC(1,1) of an ``n x s`` table (subjects x repeated measurements).

    ``(MSB - MSW) / (MSB + (s - 1) MSW)`` from the one-way random-effects
    ANOVA, clamped to [-1, 1].
    """
    y = np.asarray(table, dtype=np.float64)
    n, s = y.shape
    if n < 3 or s < 2:
        raise DataError(f"ICC needs at least 3 subjects and 2 measurements, got {n} x {s}")
    subj_mean = y.mean(axis=1)
    grand = subj_mean.mean()
    msb = s * np.sum((subj_mean - grand) ** 2) / (n - 1)
    msw = np.sum((y - subj_mean[:, None]) ** 2) / (n * (s - 1))
    denom = msb + (s - 1) * msw
    if denom == 0:
        raise DataError("ICC is undefined for a feature with zero total variance")
    return float(np.clip((msb - msw) / denom, -1.0, 1.0))


def estimate_icc(x1, x2):
    """One-way random-effects ICC for one feature measured in two sessions."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape or x1.ndim != 1:
        raise DataError("estimate_icc needs two 1-D session vectors of equal length")
    return icc_oneway(np.column_stack([x1, x2]))


def feature_iccs(matrix):
    """ICC of every feature of a two-session matrix (vectorized)."""
    x = matrix.values.astype(np.float64)
    n = matrix.n
    if n < 3:
        raise DataError(f"ICC needs at least 3 subjects, got {n}")
    subj = x.mean(axis=2)
    grand = subj.mean(axis=0)
    msb = 2.0 * np.sum((subj - grand) ** 2, axis=0) / (n - 1)
    msw = np.sum((x - subj[:, :, None]) ** 2, axis=(0, 2)) / n
    denom = msb + msw
    zero = np.flatnonzero(denom == 0)
    if zero.size:
        raise DataError(f"feature f{int(zero[0]) + 1} has zero total variance; ICC is undefined")
    return np.clip((msb - msw) / denom, -1.0, 1.0)


def interfeature_correlations(matrix, chunk=256):
    """Pearson r between every pair of features, sessions concatenated.

    Returns the upper-triangle values (``k * (k - 1) / 2`` of them).
    """
    x = np.concatenate([matrix.session(0), matrix.session(1)], axis=0).astype(np.float64)
    x -= x.mean(axis=0)
    norms = np.linalg.norm(x, axis=0)
    if np.any(norms == 0):
        raise DataError("correlation undefined for a zero-variance feature")
    x /= norms
    k = x.shape[1]
    out = []
    for j0 in range(0, k, chunk):
        block = x[:, j0 : j0 + chunk].T @ x
        for r in range(block.shape[0]):
            j = j0 + r
            out.append(block[r, j + 1 :])
    return np.clip(np.concatenate(out), -1.0, 1.0) if out else np.empty(0)
