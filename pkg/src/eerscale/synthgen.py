"""Synthetic two-session features with a controlled intraclass correlation.

For a target ICC ``r`` every feature is built as

    x1 = z + w1,  x2 = z + w2,   z ~ N(0, 1),  w1, w2 ~ N(0, (1 - r) / r)

and then standardized over both sessions pooled, which gives a theoretical
between-session correlation of ``r`` and zero correlation between features
and between subjects. Each feature draws from its own keyed stream, so a
column does not depend on how many other columns are generated.
"""

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from eerscale._rng import stream
from eerscale.errors import DataError
from eerscale.features import FeatureMatrix, default_ids


@dataclass(frozen=True)
class SynthSpec:
    n_subjects: int
    n_features: int
    icc_target: float
    seed: int = 0

    def __post_init__(self):
        _check_dims(self.n_subjects, self.n_features)
        if not 0.0 < self.icc_target <= 1.0:
            raise DataError(f"icc_target must lie in (0, 1], got {self.icc_target}")


@dataclass(frozen=True)
class BandSpec:
    """Band ``b`` covers target ICCs in ``[b/10, (b+1)/10)``."""

    band_index: int
    n_subjects: int
    n_features: int
    seed: int = 0

    def __post_init__(self):
        if not 3 <= self.band_index <= 9:
            raise DataError(f"band_index must be in 3..9, got {self.band_index}")
        _check_dims(self.n_subjects, self.n_features)

    @property
    def icc_low(self):
        return self.band_index / 10

    @property
    def icc_high(self):
        return (self.band_index + 1) / 10


def _check_dims(n, k):
    if n < 2:
        raise DataError(f"need at least 2 subjects, got {n}")
    if k < 1:
        raise DataError(f"need at least 1 feature, got {k}")


def noise_sd(icc):
    return math.sqrt((1.0 - icc) / icc)


def _feature(seed, j, n, icc):
    rng = stream(seed, "feature", j)
    z = rng.standard_normal(n)
    x = np.empty((n, 2))
    sd = noise_sd(icc)
    if sd == 0.0:
        x[:, 0] = z
        x[:, 1] = z
    else:
        x[:, 0] = z + sd * rng.standard_normal(n)
        x[:, 1] = z + sd * rng.standard_normal(n)
    x -= x.mean()
    x /= x.std(ddof=1)
    return x


def _assemble(seed, n, targets, dtype):
    values = np.empty((n, len(targets), 2), dtype=dtype)
    for j, icc in enumerate(targets):
        values[:, j, :] = _feature(seed, j, n, icc)
    return FeatureMatrix(values, default_ids(n))


def generate(spec, dtype=np.float32):
    """Features that all share ``spec.icc_target``."""
    return _assemble(spec.seed, spec.n_subjects, [spec.icc_target] * spec.n_features, dtype)


def band_targets(spec):
    """Per-feature target ICCs for a band.

    Stratified draw: feature ``j`` gets a uniform point inside its own
    ``1/k``-wide slice of the band, with slices assigned in random order.
    Every target is marginally uniform over the band.
    """
    rng = stream(spec.seed, "band-targets")
    k = spec.n_features
    slots = rng.permutation(k) + rng.uniform(size=k)
    return spec.icc_low + (spec.icc_high - spec.icc_low) * slots / k


def generate_band(spec, dtype=np.float32):
    return _assemble(spec.seed, spec.n_subjects, band_targets(spec), dtype)


def metadata(spec, targets=None):
    from eerscale import __version__

    if targets is None:
        targets = band_targets(spec) if isinstance(spec, BandSpec) else [spec.icc_target] * spec.n_features
    return {
        "kind": type(spec).__name__,
        "seed": spec.seed,
        "spec": asdict(spec),
        "target_icc": [float(t) for t in targets],
        "version": __version__,
    }


def write_metadata(path, spec):
    with open(path, "w") as fh:
        json.dump(metadata(spec), fh, indent=2)
        fh.write("\n")
