"""Experiment 3: the PCA pipeline on a two-session corpus.

PCA is fit on session-1 rows of the first ``n_train`` subjects, which are
then dropped. Both sessions of the remaining subjects are projected, the
leading components kept and z-scored over that evaluation population.
Subsets use random subjects but always the leading components, since
components are ordered. The largest subject count gets ``baseline_runs``
repetitions, smaller counts are SE-matched, and Welch's t-test compares
them per feature count.
"""

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from eerscale import pca
from eerscale._rng import derive_seed
from eerscale.errors import DataError
from eerscale.experiments.config import Exp3Config
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
from eerscale.experiments.standin import MatrixCorpus, StandinCorpus, StandinSpec
from eerscale.features import FeatureMatrix, load

log = logging.getLogger("eerscale.experiments")


@dataclass
class Exp3Result:
    records: list
    summaries: dict  # (n_features, n_subjects) -> GroupSummary
    matched: dict
    tests: list = field(default_factory=list)
    model: object = None


def default_corpus(cfg):
    if cfg.matrix_path:
        return MatrixCorpus(load(cfg.matrix_path))
    spec = StandinSpec(**{"seed": derive_seed(cfg.seed, "standin"), **(cfg.standin or {})})
    return StandinCorpus(spec)


def prepare_components(corpus, cfg):
    """Fit PCA on the training split and return ``(model, evaluation matrix)``.

    The evaluation matrix holds the leading ``max(feature_counts)``
    components of both sessions, z-scored over the evaluation subjects.
    Keeping fewer columns than ``n_components`` changes nothing for the
    columns kept, since each is projected and z-scored on its own.
    """
    need = cfg.n_train + max(cfg.subject_counts)
    if corpus.n < need:
        raise DataError(f"corpus has {corpus.n} subjects; need {cfg.n_train} for training plus {max(cfg.subject_counts)}")
    train, _ = corpus.rows(0, cfg.n_train)
    k_fit = min(cfg.n_components, cfg.n_train - 1, corpus.d)
    if k_fit < max(cfg.feature_counts):
        raise DataError(f"only {k_fit} components can be fit; feature counts go to {max(cfg.feature_counts)}")
    log.info("fitting PCA: %d training rows x %d dims, %d components", train.shape[0], corpus.d, k_fit)
    model = pca.fit(train, k_fit)
    keep = max(cfg.feature_counts)
    s1, s2 = [], []
    for _, a, b in corpus.iter_rows(cfg.n_train, corpus.n):
        s1.append(pca.transform(model, a, keep))
        s2.append(pca.transform(model, b, keep))
    ids = np.asarray(corpus.subject_ids)[cfg.n_train :]
    projected = FeatureMatrix.from_sessions(np.concatenate(s1), np.concatenate(s2), ids)
    return model, pca.zscore_components(projected)


def _task_factory(cfg, k, n):
    def make(rep):
        return Task(
            source="exp3",
            band="pca",
            n_features=k,
            n_subjects=n,
            rep=rep,
            seed=derive_seed(cfg.seed, "exp3", k, n, rep),
            method=cfg.method,
            batch_size=cfg.batch_size,
            leading_features=True,
        )

    return make


def run_exp3(cfg=None, corpus=None):
    cfg = cfg or Exp3Config()
    corpus = corpus if corpus is not None else default_corpus(cfg)
    model, evaluation = prepare_components(corpus, cfg)
    register_source("exp3", evaluation)
    counts = sorted(cfg.subject_counts)
    records, summaries, matched = [], {}, {}
    try:
        with Pool(cfg.workers) as pool:
            for k in cfg.feature_counts:
                big = counts[-1]
                base = run_group(pool, _task_factory(cfg, k, big), cfg.baseline_runs)
                records += base
                g = summarize(base)
                summaries[(k, big)] = g
                matched[(k, big)] = True
                log.info("%d components, N=%d: %d runs, mean EER %.3f%%", k, big, g.n, g.mean)
                for n in counts[:-1]:
                    res = run_matched(pool, _task_factory(cfg, k, n), g.se, cfg.min_runs, cfg.max_runs)
                    records += res.records
                    summaries[(k, n)] = summarize(res.records)
                    matched[(k, n)] = res.matched
                    log.info("%d components, N=%d: %d runs, mean EER %.3f%%", k, n, res.count, summaries[(k, n)].mean)
    finally:
        clear_sources()
    tests = welch_rows(summaries, ("n_features",))
    result = Exp3Result(records, summaries, matched, tests, model)
    if cfg.out_dir:
        write_exp3(result, cfg.out_dir)
    return result


def write_exp3(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_runs(os.path.join(out_dir, "runs.csv"), result.records)
    write_csv(
        os.path.join(out_dir, "summary.csv"),
        ["n_features", "n_subjects", "runs", "mean_eer", "sd", "se", "matched"],
        ((k, n, g.n, g.mean, g.sd, g.se, result.matched[(k, n)]) for (k, n), g in sorted(result.summaries.items())),
    )
    write_csv(
        os.path.join(out_dir, "tests.csv"),
        ["n_features", "n1", "n2", "runs1", "runs2", "t", "df", "p"],
        ([r["n_features"], r["n1"], r["n2"], r["runs1"], r["runs2"], r["t"], r["df"], r["p"]] for r in result.tests),
    )
    write_csv(
        os.path.join(out_dir, "fig5.csv"),
        ["n_features", "n_subjects", "eer_percent"],
        ((r.n_features, r.n_subjects, r.eer_percent) for r in result.records),
    )
    if result.model is not None:
        pca.save(result.model, os.path.join(out_dir, "pca_model.pca1"))
