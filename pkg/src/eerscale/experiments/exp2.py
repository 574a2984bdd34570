"""Experiment 2: EER of band data sets across subject counts.

For every (band, feature count) cell the largest subject count is the
baseline: it gets ``baseline_runs`` repetitions. Each smaller count gets as
many repetitions as it takes for the standard error of its EERs to reach the
baseline's. The groups are then summarized and compared with Welch's t-test.
"""

import logging
import os
from dataclasses import dataclass, field

from eerscale._rng import derive_seed
from eerscale.experiments.config import Exp2Config
from eerscale.experiments.runner import (
    Pool,
    Task,
    clear_sources,
    register_source,
    run_group,
    run_matched,
    summarize,
    welch_rows,
    write_csv,
    write_runs,
)
from eerscale.synthgen import BandSpec, generate_band

log = logging.getLogger("eerscale.experiments")


@dataclass
class Exp2Result:
    records: list
    summaries: dict  # (band, n_features, n_subjects) -> GroupSummary
    matched: dict  # same keys -> bool
    tests: list = field(default_factory=list)

    def runs_of(self, band, n_features, n_subjects):
        return [r for r in self.records if (r.band, r.n_features, r.n_subjects) == (str(band), n_features, n_subjects)]


def band_source_spec(cfg, band):
    return BandSpec(band, cfg.n_source, cfg.source_features, seed=derive_seed(cfg.seed, "exp2-band", band))


def _task_factory(cfg, band, k, n):
    def make(rep):
        return Task(
            source=f"band{band}",
            band=str(band),
            n_features=k,
            n_subjects=n,
            rep=rep,
            seed=derive_seed(cfg.seed, "exp2", band, k, n, rep),
            method=cfg.method,
            batch_size=cfg.batch_size,
        )

    return make


def match_se_replications(cfg, band, n_features, small_n, baseline_se, max_runs=None, pool=None):
    """Repetitions at ``small_n`` until their SE reaches ``baseline_se``.

    Returns a MatchResult (``count``, ``matched``, ``records``). Needs the
    band source registered (``run_exp2`` does this).
    """
    max_runs = cfg.max_runs if max_runs is None else max_runs
    make = _task_factory(cfg, band, n_features, small_n)
    if pool is None:
        with Pool(cfg.workers) as p:
            return run_matched(p, make, baseline_se, cfg.min_runs, max_runs)
    return run_matched(pool, make, baseline_se, cfg.min_runs, max_runs)


def run_exp2(cfg=None):
    cfg = cfg or Exp2Config()
    bands = sorted({b for b, _ in cfg.cells})
    for b in bands:
        log.info("generating band %d source (%d subjects x %d features)", b, cfg.n_source, cfg.source_features)
        register_source(f"band{b}", generate_band(band_source_spec(cfg, b)))
    counts = sorted(cfg.subject_counts)
    records, summaries, matched = [], {}, {}
    try:
        with Pool(cfg.workers) as pool:
            for band, k in cfg.cells:
                big = counts[-1]
                n_base = cfg.fixed_runs or cfg.baseline_runs
                base = run_group(pool, _task_factory(cfg, band, k, big), n_base)
                records += base
                g = summarize(base)
                summaries[(band, k, big)] = g
                matched[(band, k, big)] = True
                log.info("band %d, %d features, N=%d: %d runs, mean EER %.3f%%", band, k, big, g.n, g.mean)
                for n in counts[:-1]:
                    make = _task_factory(cfg, band, k, n)
                    if cfg.fixed_runs:
                        recs, ok = run_group(pool, make, cfg.fixed_runs), True
                    else:
                        res = run_matched(pool, make, g.se, cfg.min_runs, cfg.max_runs)
                        recs, ok = res.records, res.matched
                    records += recs
                    summaries[(band, k, n)] = summarize(recs)
                    matched[(band, k, n)] = ok
                    log.info("band %d, %d features, N=%d: %d runs, mean EER %.3f%%", band, k, n, len(recs), summaries[(band, k, n)].mean)
    finally:
        clear_sources()
    tests = welch_rows(summaries, ("band", "n_features"))
    result = Exp2Result(records, summaries, matched, tests)
    if cfg.out_dir:
        write_exp2(result, cfg.out_dir)
    return result


def summary_rows(summaries, matched):
    for key in sorted(summaries):
        g = summaries[key]
        yield (*key, g.n, g.mean, g.sd, g.se, matched.get(key, True))


def write_exp2(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_runs(os.path.join(out_dir, "runs.csv"), result.records)
    write_csv(
        os.path.join(out_dir, "summary.csv"),
        ["band", "n_features", "n_subjects", "runs", "mean_eer", "sd", "se", "matched"],
        summary_rows(result.summaries, result.matched),
    )
    write_csv(
        os.path.join(out_dir, "tests.csv"),
        ["band", "n_features", "n1", "n2", "runs1", "runs2", "t", "df", "p"],
        ([r["band"], r["n_features"], r["n1"], r["n2"], r["runs1"], r["runs2"], r["t"], r["df"], r["p"]] for r in result.tests),
    )
    fig3 = [(r.band, r.n_subjects, r.eer_percent) for r in result.records if r.band != "9"]
    fig4 = [(r.n_features, r.n_subjects, r.eer_percent) for r in result.records if r.band == "9"]
    write_csv(os.path.join(out_dir, "fig3.csv"), ["band", "n_subjects", "eer_percent"], fig3)
    write_csv(os.path.join(out_dir, "fig4.csv"), ["n_features", "n_subjects", "eer_percent"], fig4)
