"""Experiment configurations and their JSON config files.

A config file is a JSON object with an ``"experiment"`` key (``exp1``,
``exp2`` or ``exp3``) plus any fields of the matching config class; fields
left out keep their desk-scale defaults. ``"full_scale": true`` switches to
the published population sizes before the explicit fields are applied.
"""

import json
from dataclasses import dataclass, field, fields, replace

from eerscale.errors import DataError

DESK_COUNTS = (1000, 10_000)
FULL_COUNTS = (1000, 10_000, 100_000)
DESK_TARGETS = (10.0, 5.0, 2.5, 1.0, 0.1)
FULL_TARGETS = (10.0, 5.0, 2.5, 1.0, 0.1, 0.01, 0.001, 0.0001, 0.0)


def _default_cells():
    return tuple((b, 10) for b in range(3, 9)) + tuple((9, k) for k in range(7, 12))


@dataclass(frozen=True)
class Exp1Config:
    """Smallest feature count whose EER stays under each target in every rep."""

    subject_counts: tuple = DESK_COUNTS
    feature_range: tuple = (1, 100)
    reps: int = 20
    eer_targets: tuple = DESK_TARGETS
    band: int = 8
    source_subjects: int = None  # defaults to max(subject_counts)
    source_features: int = 500
    seed: int = 0
    method: str = "binsearch"
    batch_size: int = 1000
    workers: int = 1
    out_dir: str = None

    def __post_init__(self):
        if self.reps < 1:
            raise DataError(f"reps must be >= 1, got {self.reps}")
        t = list(self.eer_targets)
        if t != sorted(t, reverse=True):
            raise DataError(f"eer_targets must be sorted descending, got {t}")
        if not t or min(t) < 0 or max(t) > 100:
            raise DataError("eer_targets must be percents in [0, 100]")
        lo, hi = self.feature_range
        if not 1 <= lo <= hi:
            raise DataError(f"feature_range must satisfy 1 <= lo <= hi, got {self.feature_range}")
        if hi > self.source_features:
            raise DataError(f"feature_range goes to {hi} but the source has {self.source_features} features")
        if max(self.subject_counts) > self.n_source:
            raise DataError(f"subject count {max(self.subject_counts)} exceeds the {self.n_source}-subject source")
        _check_common(self)

    @property
    def n_source(self):
        return self.source_subjects or max(self.subject_counts)

    @classmethod
    def full(cls, **kw):
        return cls(**{"subject_counts": FULL_COUNTS, "eer_targets": FULL_TARGETS, **kw})


@dataclass(frozen=True)
class Exp2Config:
    """EER per (band, features) cell at each subject count, SE-matched."""

    cells: tuple = field(default_factory=_default_cells)
    subject_counts: tuple = DESK_COUNTS
    baseline_runs: int = 48
    fixed_runs: int = None  # run exactly this many per group instead of SE matching
    min_runs: int = 8
    max_runs: int = 2000
    source_subjects: int = None  # defaults to max(subject_counts)
    source_features: int = 50
    seed: int = 0
    method: str = "binsearch"
    batch_size: int = 1000
    workers: int = 1
    out_dir: str = None

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(tuple(int(v) for v in c) for c in self.cells))
        for band, k in self.cells:
            if not 3 <= band <= 9:
                raise DataError(f"band must be in 3..9, got {band}")
            if not 1 <= k <= self.source_features:
                raise DataError(f"cell ({band}, {k}) asks for more features than the {self.source_features}-feature source")
        if self.baseline_runs < 2 or (self.fixed_runs is not None and self.fixed_runs < 2):
            raise DataError("groups need at least 2 runs")
        if not 2 <= self.min_runs <= self.max_runs:
            raise DataError(f"need 2 <= min_runs <= max_runs, got {self.min_runs}, {self.max_runs}")
        if max(self.subject_counts) > self.n_source:
            raise DataError(f"subject count {max(self.subject_counts)} exceeds the {self.n_source}-subject source")
        _check_common(self)

    @property
    def n_source(self):
        return self.source_subjects or max(self.subject_counts)

    @classmethod
    def full(cls, **kw):
        return cls(**{"subject_counts": FULL_COUNTS, **kw})


@dataclass(frozen=True)
class Exp3Config:
    """PCA pipeline on a two-session corpus: leading components, two subject counts."""

    feature_counts: tuple = (3, 5, 9, 19, 85)
    subject_counts: tuple = DESK_COUNTS
    baseline_runs: int = 50
    min_runs: int = 8
    max_runs: int = 10_000
    n_train: int = 1000
    n_components: int = 500
    matrix_path: str = None  # FMX1/CSV corpus; the stand-in generator when absent
    standin: dict = None  # StandinSpec overrides
    seed: int = 0
    method: str = "binsearch"
    batch_size: int = 1000
    workers: int = 1
    out_dir: str = None

    def __post_init__(self):
        fc = list(self.feature_counts)
        if not fc or min(fc) < 1 or fc != sorted(set(fc)):
            raise DataError(f"feature_counts must be distinct ascending positive counts, got {fc}")
        if max(fc) > self.n_components:
            raise DataError(f"feature count {max(fc)} exceeds n_components={self.n_components}")
        if self.baseline_runs < 2 or not 2 <= self.min_runs <= self.max_runs:
            raise DataError("need baseline_runs >= 2 and 2 <= min_runs <= max_runs")
        _check_common(self)

    @classmethod
    def full(cls, **kw):
        return cls(**kw)


def _check_common(cfg):
    counts = list(cfg.subject_counts)
    if not counts or min(counts) < 2 or counts != sorted(set(counts)):
        raise DataError(f"subject_counts must be distinct ascending counts >= 2, got {counts}")
    if cfg.method not in ("exact", "binsearch"):
        raise DataError(f"method must be 'exact' or 'binsearch', got {cfg.method!r}")
    if cfg.batch_size < 1 or cfg.workers < 1:
        raise DataError("batch_size and workers must be >= 1")


CONFIGS = {"exp1": Exp1Config, "exp2": Exp2Config, "exp3": Exp3Config}


def config_from_dict(data, kind=None):
    data = dict(data)
    kind = data.pop("experiment", kind)
    if kind not in CONFIGS:
        raise DataError(f"config 'experiment' must be one of {sorted(CONFIGS)}, got {kind!r}")
    cls = CONFIGS[kind]
    full = bool(data.pop("full_scale", False))
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise DataError(f"unknown {kind} config keys: {', '.join(unknown)}")
    for key, val in data.items():
        if isinstance(val, list):
            data[key] = tuple(tuple(v) if isinstance(v, list) else v for v in val)
    return cls.full(**data) if full else cls(**data)


def load_config(path, kind=None):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise DataError(f"{path}: config must be a JSON object")
    return config_from_dict(data, kind)


def with_overrides(cfg, **kw):
    """Replace the fields given as non-None keyword values."""
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
