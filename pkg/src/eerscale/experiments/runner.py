"""Shared plumbing for the experiments: run records, the worker pool and
CSV output.

A repetition is described entirely by a small picklable task (source key,
subset size, seed). Workers are forked after the source matrices are
registered, so they read them without copying, and each task's seed is
derived from the master seed and the cell/rep keys. Scheduling therefore
cannot change any result.
"""

import csv
import logging
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields

import numpy as np

from eerscale._rng import stream
from eerscale.eer import eer_from_model
from eerscale.errors import DataError
from eerscale.features import SubsetRequest, sample_subset, take
from eerscale.scoring import ScoreModel
from eerscale.stats import GroupSummary, welch_t

log = logging.getLogger("eerscale.experiments")

_SOURCES = {}


@dataclass(frozen=True)
class RunRecord:
    band: str
    n_features: int
    n_subjects: int
    rep: int
    seed: int
    eer_percent: float
    threshold: float
    wall_time: float
    passes: int = 0


@dataclass(frozen=True)
class Task:
    """One repetition: subset ``source`` and compute its EER.

    With ``leading_features`` the first ``n_features`` columns are used
    instead of a random feature subset.
    """

    source: str
    band: str
    n_features: int
    n_subjects: int
    rep: int
    seed: int
    method: str = "binsearch"
    batch_size: int = 1000
    leading_features: bool = False


def register_source(key, matrix):
    _SOURCES[key] = matrix


def clear_sources():
    _SOURCES.clear()


def subset_for(task):
    src = _SOURCES[task.source]
    if task.leading_features:
        if not 1 <= task.n_features <= src.k:
            raise DataError(f"requested {task.n_features} leading features from a matrix with {src.k}")
        req = SubsetRequest(task.n_subjects, task.n_features, task.seed)
        req.check(src)
        rows = stream(task.seed, "subset").choice(src.n, size=task.n_subjects, replace=False)
        return take(src, rows, np.arange(task.n_features))
    return sample_subset(src, SubsetRequest(task.n_subjects, task.n_features, task.seed))


def run_task(task):
    t0 = time.perf_counter()
    model = ScoreModel(subset_for(task), batch_size=task.batch_size)
    res = eer_from_model(model, task.method)
    return RunRecord(
        band=task.band,
        n_features=task.n_features,
        n_subjects=task.n_subjects,
        rep=task.rep,
        seed=task.seed,
        eer_percent=res.eer_percent,
        threshold=res.threshold,
        wall_time=time.perf_counter() - t0,
        passes=res.passes,
    )


class Pool:
    """Ordered ``map`` over tasks, inline or in forked worker processes."""

    def __init__(self, workers=1):
        self.workers = max(1, int(workers))
        self._exec = None

    def __enter__(self):
        if self.workers > 1:
            ctx = multiprocessing.get_context("fork")
            self._exec = ProcessPoolExecutor(max_workers=self.workers, mp_context=ctx)
        return self

    def __exit__(self, *exc):
        if self._exec is not None:
            self._exec.shutdown()
            self._exec = None

    def map(self, tasks):
        tasks = list(tasks)
        if self._exec is None:
            return [run_task(t) for t in tasks]
        return list(self._exec.map(run_task, tasks))


def default_workers():
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def match_se(run_chunk, baseline_se, min_runs=8, max_runs=1000, chunk=8):
    """Run repetitions until the running standard error reaches ``baseline_se``.

    ``run_chunk(start, stop)`` returns the records for reps ``start..stop``.
    Stops at the first count ``>= min_runs`` whose SE of the EERs is
    ``<= baseline_se``; records past that count are dropped, so the result
    does not depend on ``chunk``. Returns ``(records, matched)``.
    """
    if not baseline_se > 0:
        raise DataError(f"baseline standard error must be > 0, got {baseline_se}")
    if max_runs < min_runs:
        raise DataError(f"max_runs ({max_runs}) must be >= min_runs ({min_runs})")
    records = []
    while len(records) < max_runs:
        start = len(records)
        new = run_chunk(start, min(start + chunk, max_runs))
        for r in new:
            records.append(r)
            if len(records) >= min_runs and _se(records) <= baseline_se:
                return records, True
    log.warning("standard error %.4g not reached after %d runs (baseline %.4g)", _se(records), len(records), baseline_se)
    return records, False


@dataclass
class MatchResult:
    records: list
    matched: bool

    @property
    def count(self):
        return len(self.records)


def run_group(pool, make_task, n_runs, chunk=None):
    """Records for reps ``0..n_runs``; ``make_task(rep)`` builds each task."""
    return pool.map(make_task(rep) for rep in range(n_runs))


def run_matched(pool, make_task, baseline_se, min_runs, max_runs):
    """SE-matched repetitions (see ``match_se``) as a MatchResult."""
    chunk = max(min_runs, pool.workers)

    def run_chunk(a, b):
        return pool.map(make_task(rep) for rep in range(a, b))

    if baseline_se == 0:
        # a zero-variance baseline can only be matched by a zero-variance group
        recs = run_chunk(0, min_runs)
        return MatchResult(recs, _se(recs) == 0)
    recs, ok = match_se(run_chunk, baseline_se, min_runs, max_runs, chunk)
    return MatchResult(recs, ok)


def _se(records):
    v = np.array([r.eer_percent for r in records])
    return float(v.std(ddof=1) / math.sqrt(v.size))


def summarize(records):
    return GroupSummary.of([r.eer_percent for r in records])


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v


def write_runs(path, records):
    write_csv(path, [f.name for f in fields(RunRecord)], [astuple(r) for r in records])


def read_runs(path):
    with open(path, newline="") as fh:
        out = []
        for row in csv.DictReader(fh):
            out.append(
                RunRecord(
                    band=row["band"],
                    n_features=int(row["n_features"]),
                    n_subjects=int(row["n_subjects"]),
                    rep=int(row["rep"]),
                    seed=int(row["seed"]),
                    eer_percent=float(row["eer_percent"]),
                    threshold=float(row["threshold"]),
                    wall_time=float(row["wall_time"]),
                    passes=int(row["passes"]),
                )
            )
        return out


def welch_rows(groups, key_fields):
    """Welch tests between every pair of subject counts within each cell.

    ``groups`` maps ``(*cell, n_subjects) -> GroupSummary``.
    """
    cells = {}
    for key, g in groups.items():
        cells.setdefault(key[:-1], []).append((key[-1], g))
    rows = []
    for cell, items in cells.items():
        items.sort()
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                (n1, g1), (n2, g2) = items[i], items[j]
                try:
                    res = welch_t(g1, g2)
                    t, df, p = res.t, res.df, res.p
                except DataError:
                    # both groups constant: no test is possible
                    t = df = p = math.nan
                rows.append(dict(zip(key_fields, cell), n1=n1, n2=n2, runs1=g1.n, runs2=g2.n, t=t, df=df, p=p))
    return rows


__all__ = [
    "RunRecord",
    "Task",
    "Pool",
    "register_source",
    "clear_sources",
    "run_task",
    "match_se",
    "MatchResult",
    "run_group",
    "run_matched",
    "summarize",
    "write_csv",
    "write_runs",
    "read_runs",
    "welch_rows",
    "default_workers",
]
