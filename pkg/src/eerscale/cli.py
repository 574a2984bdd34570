"""Command-line front end.

Results go to stdout as CSV (or to files under ``--out``); progress and
diagnostics go to stderr. Exit status: 0 on success, 1 on a usage error,
2 on a data or validation error.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys

import numpy as np

from eerscale import pca
from eerscale.eer import COLLECT_CAP, eer_from_model
from eerscale.errors import DataError
from eerscale.features import FeatureMatrix, SubsetRequest, load, sample_subset, store, take
from eerscale.scoring import ScoreModel
from eerscale.stats import GroupSummary, feature_iccs, interfeature_correlations, welch_t
from eerscale.synthgen import BandSpec, SynthSpec, generate, generate_band, write_metadata

log = logging.getLogger("eerscale")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _available_cores():
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _out_writer(stdout):
    return csv.writer(stdout, lineterminator="\n")


def _common(p, seed=True, threads=False):
    if seed:
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    if threads:
        p.add_argument("--threads", type=_positive, default=None, help="worker cap (default: available cores)")
    p.add_argument("--quiet", action="store_true", help="suppress progress messages on stderr")


def _check_sessions(args):
    if getattr(args, "sessions", 2) != 2:
        raise DataError(f"only 2 sessions are supported, got --sessions {args.sessions}")


def _write_matrix(m, path, meta_spec=None):
    store(m, path)
    if meta_spec is not None:
        write_metadata(path + ".json", meta_spec)
    log.info("wrote %d subjects x %d features to %s", m.n, m.k, path)


def cmd_generate(args, out):
    _check_sessions(args)
    spec = SynthSpec(args.subjects, args.features, args.icc, args.seed)
    _write_matrix(generate(spec), args.out, spec)
    return 0


def cmd_band(args, out):
    _check_sessions(args)
    spec = BandSpec(args.band, args.subjects, args.features, args.seed)
    _write_matrix(generate_band(spec), args.out, spec)
    return 0


def cmd_icc_check(args, out):
    m = load(args.matrix)
    iccs = feature_iccs(m)
    w = _out_writer(out)
    if args.per_feature:
        w.writerow(["feature", "icc"])
        for j, v in enumerate(iccs):
            w.writerow([f"f{j + 1}", f"{v:.6f}"])
        return 0
    w.writerow(["statistic", "value"])
    w.writerow(["n_subjects", m.n])
    w.writerow(["n_features", m.k])
    w.writerow(["mean_icc", f"{iccs.mean():.6f}"])
    w.writerow(["sd_icc", f"{iccs.std(ddof=1) if iccs.size > 1 else 0.0:.6f}"])
    w.writerow(["min_icc", f"{iccs.min():.6f}"])
    w.writerow(["max_icc", f"{iccs.max():.6f}"])
    if args.correlations and m.k > 1:
        r = np.abs(interfeature_correlations(m))
        w.writerow(["median_abs_r", f"{np.median(r):.6f}"])
        w.writerow(["max_abs_r", f"{r.max():.6f}"])
    return 0


def _spec_hash(m, args):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(m.values).tobytes())
    h.update("\0".join(map(str, m.subject_ids)).encode("utf-8"))
    h.update(json.dumps([args.subjects, args.features, args.seed]).encode())
    return h.hexdigest()[:16]


def cmd_eer(args, out):
    m = load(args.matrix)
    if args.subjects is not None or args.features is not None:
        req = SubsetRequest(args.subjects or m.n, args.features or m.k, args.seed)
        m = sample_subset(m, req)
    threads = args.threads or _available_cores()
    model = ScoreModel(m, batch_size=args.batch_size, threads=threads)
    kw = {} if args.method == "exact" else {"collect_cap": args.bracket_cap}
    res = eer_from_model(model, args.method, **kw)
    if args.method == "binsearch":
        print(
            f"binary search: {res.passes} passes, {len(res.history)} steps, "
            f"{res.bracket_width_final} scores in final bracket"
            + (" (tie fallback)" if res.tie_fallback else ""),
            file=sys.stderr,
        )
    w = _out_writer(out)
    w.writerow(["eer_percent", "threshold", "passes", "bracket_width_final", "seed", "spec_hash"])
    w.writerow([f"{res.eer_percent:.6f}", repr(res.threshold), res.passes, res.bracket_width_final, args.seed, _spec_hash(m, args)])
    return 0


def _experiment_config(args, kind):
    from eerscale.experiments.config import CONFIGS, config_from_dict, load_config, with_overrides

    cfg = load_config(args.config, kind) if args.config else None
    if cfg is not None and type(cfg) is not CONFIGS[kind]:
        raise DataError(f"{args.config} configures a different experiment, not {kind}")
    if cfg is None:
        cfg = config_from_dict({"full_scale": args.full_scale}, kind)
    elif args.full_scale:
        cfg = type(cfg).full(**{k: v for k, v in cfg.__dict__.items() if k not in ("subject_counts", "eer_targets")})
    workers = args.threads
    if workers is None and not args.config:
        workers = _available_cores()
    overrides = dict(
        seed=args.seed,
        out_dir=args.out,
        method=args.method,
        batch_size=args.batch_size,
        workers=workers,
        subject_counts=tuple(args.subjects) if args.subjects else None,
    )
    return with_overrides(cfg, **overrides)


def _emit_rows(out, header, rows):
    w = _out_writer(out)
    w.writerow(header)
    for r in rows:
        w.writerow(r)


def cmd_exp1(args, out):
    from eerscale.experiments.exp1 import NOT_ACHIEVED, run_exp1

    cfg = _experiment_config(args, "exp1")
    res = run_exp1(cfg)
    _emit_rows(
        out,
        ["eer_target", "n_subjects", "min_features"],
        ((t, n, NOT_ACHIEVED if c is None else c) for t, row in res.table.items() for n, c in row.items()),
    )
    return 0


def cmd_exp2(args, out):
    from eerscale.experiments.exp2 import run_exp2, summary_rows

    res = run_exp2(_experiment_config(args, "exp2"))
    rows = [(*r[:4], f"{r[4]:.3f}", f"{r[5]:.3f}", f"{r[6]:.4f}", r[7]) for r in summary_rows(res.summaries, res.matched)]
    _emit_rows(out, ["band", "n_features", "n_subjects", "runs", "mean_eer", "sd", "se", "matched"], rows)
    _log_tests(res.tests)
    return 0


def cmd_exp3(args, out):
    from eerscale.experiments.exp3 import run_exp3

    cfg = _experiment_config(args, "exp3")
    if args.matrix:
        from eerscale.experiments.config import with_overrides

        cfg = with_overrides(cfg, matrix_path=args.matrix)
    res = run_exp3(cfg)
    rows = [
        (k, n, g.n, f"{g.mean:.3f}", f"{g.sd:.3f}", f"{g.se:.4f}", res.matched[(k, n)])
        for (k, n), g in sorted(res.summaries.items())
    ]
    _emit_rows(out, ["n_features", "n_subjects", "runs", "mean_eer", "sd", "se", "matched"], rows)
    _log_tests(res.tests)
    return 0


def _log_tests(tests):
    for t in tests:
        cell = ", ".join(f"{k}={t[k]}" for k in ("band", "n_features") if k in t)
        log.info("Welch %s: N=%d vs N=%d: t=%.3f df=%.1f p=%.4f", cell, t["n1"], t["n2"], t["t"], t["df"], t["p"])


def cmd_pca_fit(args, out):
    m = load(args.matrix)
    if not 2 <= args.train <= m.n:
        raise DataError(f"--train must be in 2..{m.n}, got {args.train}")
    train = np.asarray(m.session(0)[: args.train], dtype=np.float64)
    model = pca.fit(train, args.components)
    pca.save(model, args.out)
    w = _out_writer(out)
    w.writerow(["component", "singular_value"])
    for i, s in enumerate(model.singular_values):
        w.writerow([i + 1, repr(float(s))])
    return 0


def cmd_pca_apply(args, out):
    model = pca.load(args.model)
    m = load(args.matrix)
    if args.skip:
        if args.skip >= m.n:
            raise DataError(f"--skip {args.skip} leaves no subjects out of {m.n}")
        m = take(m, np.arange(args.skip, m.n))
    keep = args.components or model.n_components_kept
    proj = pca.transform_matrix(model, m, keep)
    z = pca.zscore_components(proj)
    z = FeatureMatrix(z.values.astype(np.float32), z.subject_ids)
    _write_matrix(z, args.out)
    return 0


def cmd_ttest(args, out):
    res = welch_t(GroupSummary(args.mean1, args.sd1, args.n1), GroupSummary(args.mean2, args.sd2, args.n2))
    w = _out_writer(out)
    w.writerow(["t", "df", "p"])
    w.writerow([f"{res.t:.4f}", f"{res.df:.2f}", f"{res.p:.4f}"])
    return 0


def cmd_plot(args, out):
    from eerscale.plotting import plot_directory

    written = plot_directory(args.input, args.out or args.input)
    if not written:
        raise DataError(f"no fig*.csv files found in {args.input}")
    w = _out_writer(out)
    w.writerow(["svg"])
    for path in written:
        w.writerow([path])
    return 0


def build_parser():
    parser = _Parser(prog="eerscale", description="Synthetic biometric features, EER and population-size experiments.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("generate", help="synthetic features with one target ICC")
    p.add_argument("--subjects", type=_positive, required=True)
    p.add_argument("--features", type=_positive, required=True)
    p.add_argument("--icc", type=float, required=True)
    p.add_argument("--sessions", type=int, default=2)
    p.add_argument("--out", required=True, help="output matrix (.fmx or .csv)")
    _common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("band", help="a band data set (per-feature ICCs inside [b/10, (b+1)/10))")
    p.add_argument("--band", type=int, required=True)
    p.add_argument("--subjects", type=_positive, required=True)
    p.add_argument("--features", type=_positive, required=True)
    p.add_argument("--sessions", type=int, default=2)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_band)

    p = sub.add_parser("icc-check", help="empirical ICC of every feature")
    p.add_argument("matrix")
    p.add_argument("--per-feature", action="store_true")
    p.add_argument("--correlations", action="store_true", help="also report inter-feature |r|")
    _common(p)
    p.set_defaults(func=cmd_icc_check)

    p = sub.add_parser("eer", help="EER of a matrix (optionally of a random subset)")
    p.add_argument("matrix")
    p.add_argument("--subjects", type=_positive)
    p.add_argument("--features", type=_positive)
    p.add_argument("--method", choices=("exact", "binsearch"), default="binsearch")
    p.add_argument("--batch-size", type=_positive, default=1000)
    p.add_argument("--bracket-cap", type=int, default=COLLECT_CAP)
    _common(p, threads=True)
    p.set_defaults(func=cmd_eer)

    for name, helptext in (
        ("exp1", "features needed for each EER target"),
        ("exp2", "band EERs across subject counts"),
        ("exp3", "PCA pipeline on a corpus (stand-in when no matrix is given)"),
    ):
        p = sub.add_parser(name, help=helptext)
        if name == "exp3":
            p.add_argument("matrix", nargs="?", help="two-session corpus (FMX1 or CSV)")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory for runs/summary/tests/fig CSVs")
        p.add_argument("--subjects", type=_positive, nargs="+", help="subject counts")
        p.add_argument("--method", choices=("exact", "binsearch"))
        p.add_argument("--batch-size", type=_positive)
        p.add_argument("--full-scale", action="store_true", help="published population sizes (hours of compute)")
        p.add_argument("--seed", type=int, default=None, help="master seed (default: config or 0)")
        _common(p, seed=False, threads=True)
        p.set_defaults(func={"exp1": cmd_exp1, "exp2": cmd_exp2, "exp3": cmd_exp3}[name])

    p = sub.add_parser("pca-fit", help="fit PCA on the first subjects' session-1 rows")
    p.add_argument("matrix")
    p.add_argument("--components", type=_positive, required=True)
    p.add_argument("--train", type=_positive, default=1000)
    p.add_argument("--out", required=True, help="model file (PCA1)")
    _common(p)
    p.set_defaults(func=cmd_pca_fit)

    p = sub.add_parser("pca-apply", help="project both sessions, keep leading components, z-score")
    p.add_argument("model")
    p.add_argument("matrix")
    p.add_argument("--components", type=_positive)
    p.add_argument("--skip", type=int, default=0, help="drop the first SKIP subjects (the training split)")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_pca_apply)

    p = sub.add_parser("ttest", help="Welch's t-test from two group summaries")
    for g in ("1", "2"):
        p.add_argument(f"--mean{g}", type=float, required=True)
        p.add_argument(f"--sd{g}", type=float, required=True)
        p.add_argument(f"--n{g}", type=int, required=True)
    _common(p)
    p.set_defaults(func=cmd_ttest)

    p = sub.add_parser("plot", help="SVG figures from an experiment's fig*.csv files")
    p.add_argument("input", help="directory holding fig*.csv")
    p.add_argument("--out", help="output directory (default: the input directory)")
    _common(p)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args, stdout)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
