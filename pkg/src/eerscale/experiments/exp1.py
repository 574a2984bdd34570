"""Experiment 1: how many features does each EER target need?

For each subject count the feature count is scanned upward. A feature count
meets a target when the largest EER over ``reps`` random subject/feature
subsets is at or below it. The smallest such count is reported per target;
the scan stops once every target has been met.
"""

import logging
import os
from dataclasses import dataclass, field

from eerscale._rng import derive_seed
from eerscale.experiments.config import Exp1Config
from eerscale.experiments.runner import Pool, Task, clear_sources, register_source, write_csv, write_runs
from eerscale.synthgen import BandSpec, generate_band

log = logging.getLogger("eerscale.experiments")

NOT_ACHIEVED = "not achieved"


@dataclass
class Exp1Result:
    table: dict  # target -> {n_subjects: feature count or None}
    records: list
    cells: dict  # (n_subjects, n_features) -> (reps run, max EER, all reps run)
    non_monotone: list = field(default_factory=list)

    def required(self, target, n_subjects):
        return self.table[target][n_subjects]


def source_spec(cfg):
    return BandSpec(cfg.band, cfg.n_source, cfg.source_features, seed=derive_seed(cfg.seed, "exp1-source"))


def _cell_runs(pool, cfg, n, p, give_up_above):
    """Reps for one cell, in rep order, cut at the first EER above ``give_up_above``.

    Once one rep exceeds every unmet target the cell cannot meet any of
    them, so later reps are skipped. Reps run in chunks of the worker count
    but the kept records depend only on rep order.
    """
    out = []
    step = pool.workers
    for a in range(0, cfg.reps, step):
        tasks = [
            Task("exp1", str(cfg.band), p, n, rep, derive_seed(cfg.seed, "exp1", n, p, rep), cfg.method, cfg.batch_size)
            for rep in range(a, min(a + step, cfg.reps))
        ]
        for r in pool.map(tasks):
            out.append(r)
            if r.eer_percent > give_up_above:
                return out, False
    return out, True


def run_exp1(cfg=None):
    cfg = cfg or Exp1Config()
    log.info("generating band %d source (%d subjects x %d features)", cfg.band, cfg.n_source, cfg.source_features)
    register_source("exp1", generate_band(source_spec(cfg)))
    targets = list(cfg.eer_targets)
    table = {t: {n: None for n in cfg.subject_counts} for t in targets}
    records, cells, non_mono = [], {}, []
    lo, hi = cfg.feature_range
    try:
        with Pool(cfg.workers) as pool:
            for n in cfg.subject_counts:
                for p in range(lo, hi + 1):
                    unmet = [t for t in targets if table[t][n] is None]
                    if not unmet:
                        break
                    recs, complete = _cell_runs(pool, cfg, n, p, max(unmet))
                    records += recs
                    worst = max(r.eer_percent for r in recs)
                    cells[(n, p)] = (len(recs), worst, complete)
                    for t in targets:
                        if table[t][n] is None:
                            if complete and worst <= t:
                                table[t][n] = p
                        elif worst > t:
                            non_mono.append((t, n, p, worst))
                            log.warning(
                                "non-monotone: N=%d, %d features exceeds target %g%% (max EER %.4f%%) after %d features met it",
                                n, p, t, worst, table[t][n],
                            )
                    log.info("N=%d, %d features: %d reps, max EER %.4f%%", n, p, len(recs), worst)
    finally:
        clear_sources()
    result = Exp1Result(table, records, cells, non_mono)
    if cfg.out_dir:
        write_exp1(result, cfg.out_dir)
    return result


def write_exp1(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_runs(os.path.join(out_dir, "runs.csv"), result.records)
    write_csv(
        os.path.join(out_dir, "summary.csv"),
        ["n_subjects", "n_features", "reps", "max_eer", "all_reps_run"],
        ((n, p, k, worst, done) for (n, p), (k, worst, done) in sorted(result.cells.items())),
    )
    write_csv(
        os.path.join(out_dir, "fig2.csv"),
        ["eer_target", "n_subjects", "min_features"],
        (
            (t, n, NOT_ACHIEVED if c is None else c)
            for t, row in result.table.items()
            for n, c in row.items()
        ),
    )
