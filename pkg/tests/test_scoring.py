import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eerscale.errors import DataError
from eerscale.scoring import (
    ScoreModel,
    _score1,
    all_scores,
    cut_above,
    cut_at_least,
    dump_scores,
    similarity,
    stream_counts,
    stream_histogram,
)
from eerscale.synthgen import SynthSpec, generate

from _helpers import random_matrix


def brute_scores(m):
    """Score matrix computed pair by pair, independent of the tiled path."""
    a = m.session(0).astype(np.float64)
    b = m.session(1).astype(np.float64)
    out = np.empty((m.n, m.n))
    for i in range(m.n):
        for j in range(m.n):
            out[i, j] = similarity(a[i], b[j])
    return out


def test_similarity_examples():
    a = np.array([0.3, -1.2, 2.0])
    assert similarity(a, a) == 1.0
    assert similarity(a, -a) == 0.0
    assert similarity([1.0, 0.0], [0.0, 2.0]) == 0.5


def test_similarity_errors():
    with pytest.raises(DataError):
        similarity([0.0, 0.0], [1.0, 2.0])
    with pytest.raises(DataError):
        similarity([1.0], [1.0, 2.0])


vec = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-3
)


@pytest.mark.property
@given(vec, vec, st.floats(0.01, 100))
def test_similarity_symmetry_and_scale(a, b, c):
    s = similarity(a, b)
    assert 0.0 <= s <= 1.0
    assert similarity(b, a) == pytest.approx(s, abs=1e-12)
    assert similarity(np.multiply(c, a), b) == pytest.approx(s, abs=1e-12)


@pytest.mark.property
@given(st.floats(-0.1, 1.1, allow_nan=False))
def test_cut_points_reproduce_score_comparisons(t):
    ca = cut_above(t)
    cl = cut_at_least(t)
    for c in np.linspace(-1, 1, 41).tolist() + [ca, cl, math.nextafter(ca, 2), math.nextafter(cl, -2)]:
        if not -1 <= c <= 1:
            continue
        assert (_score1(c) > t) == (c > ca)
        assert (_score1(c) < t) == (c < cl)


def test_stream_counts_range_bounds(rng):
    model = ScoreModel(random_matrix(rng, 40, 5))
    top = stream_counts(model, 1.0)
    assert top.impostors_above == 0
    assert top.genuine_at_or_below == 40
    low = stream_counts(model, 0.0)
    assert low.genuine_at_or_below == 0
    assert low.impostors_above == 40 * 39


@pytest.mark.property
def test_stream_counts_match_brute_force(rng):
    m = random_matrix(rng, 100, 6)
    s = brute_scores(m)
    gen = np.diag(s)
    imp = s[~np.eye(100, dtype=bool)]
    model = ScoreModel(m, batch_size=33)
    for t, lo, hi in [(0.5, 0.2, 0.8), (0.7, 0.65, 0.75), (0.9, 0.0, 1.0)]:
        c = stream_counts(model, t, lo, hi, collect_cap=10**6)
        assert c.impostors_above == np.count_nonzero(imp > t)
        assert c.genuine_at_or_below == np.count_nonzero(gen <= t)
        inside = (s > lo) & (s < hi)
        assert c.in_bracket == np.count_nonzero(inside)
        assert np.allclose(np.sort(c.bracket_scores), np.sort(s[inside]), atol=1e-12)
        assert c.bracket_genuine.sum() == np.count_nonzero(inside & np.eye(100, dtype=bool))


def test_collection_cap(rng):
    model = ScoreModel(random_matrix(rng, 30, 4))
    full = stream_counts(model, 0.5, 0.0, 1.0, collect_cap=10)
    assert full.bracket_scores is None and full.in_bracket == 900
    ok = stream_counts(model, 0.5, 0.0, 1.0, collect_cap=900)
    assert ok.bracket_scores.size == 900


def test_threshold_order_validated(rng):
    model = ScoreModel(random_matrix(rng, 5, 2))
    with pytest.raises(DataError):
        stream_counts(model, 0.5, 0.6, 0.9)


@pytest.mark.property
def test_count_conservation(rng):
    m = random_matrix(rng, 120, 5)
    model = ScoreModel(m, batch_size=50)
    g, i = all_scores(model)
    for t in np.linspace(0, 1, 23):
        c = stream_counts(model, t)
        assert c.impostors_above + np.count_nonzero(i <= t) == 120 * 119
        assert c.genuine_at_or_below + np.count_nonzero(g > t) == 120


@pytest.mark.property
def test_batch_and_thread_invariance(rng):
    m = random_matrix(rng, 90, 7)
    ref = None
    for bs, threads in [(1, 1), (7, 1), (90, 1), (7, 3), (1000, 2)]:
        model = ScoreModel(m, batch_size=bs, threads=threads)
        c = stream_counts(model, 0.6, 0.55, 0.65, collect_cap=10**5)
        h = stream_histogram(model, 8)
        got = (c.impostors_above, c.genuine_at_or_below, c.in_bracket, c.bracket_scores.tobytes(), h.impostor.tobytes())
        if ref is None:
            ref = got
        assert got == ref


@pytest.mark.property
def test_histogram_answers_match_full_passes(rng):
    model = ScoreModel(random_matrix(rng, 80, 3), batch_size=17)
    h = stream_histogram(model, 6)
    for t, lo, hi in [(0.5, 0.25, 0.75), (0.625, 0.5, 0.75), (1.0, 0.0, 1.0), (0.0, 0.0, 0.5)]:
        a = h.counts(t, lo, hi)
        b = stream_counts(model, t, lo, hi)
        assert (a.impostors_above, a.genuine_at_or_below, a.in_bracket) == (b.impostors_above, b.genuine_at_or_below, b.in_bracket)
        assert (a.impostors_above_lower, a.genuine_at_or_below_lower) == (b.impostors_above_lower, b.genuine_at_or_below_lower)
    assert h.counts(0.3, 0.25, 0.75) is None  # off the grid


def test_histogram_counts_scores_on_grid_edges():
    # identical sessions: genuine scores are exactly 1.0, an edge of every grid
    m = generate(SynthSpec(30, 4, 1.0, seed=2))
    model = ScoreModel(m)
    h = stream_histogram(model, 4)
    assert h.genuine_edge[-1] == 30
    c = h.counts(0.5, 0.0, 1.0)
    assert c.in_bracket == stream_counts(model, 0.5, 0.0, 1.0).in_bracket


def test_all_scores_counts():
    m = generate(SynthSpec(3, 2, 0.5, seed=1))
    g, i = all_scores(ScoreModel(m))
    assert g.size == 3 and i.size == 6


def test_icc_one_genuine_scores_exactly_one():
    g, i = all_scores(ScoreModel(generate(SynthSpec(1000, 10, 1.0, seed=3))))
    assert np.all(g == 1.0)
    assert np.all(i < 1.0)


def test_all_scores_match_brute_force(rng):
    m = random_matrix(rng, 50, 4)
    s = brute_scores(m)
    g, i = all_scores(ScoreModel(m, batch_size=9))
    assert np.allclose(g, np.diag(s), atol=1e-12)
    assert np.allclose(np.sort(i), np.sort(s[~np.eye(50, dtype=bool)]), atol=1e-12)


def test_all_scores_cap(rng):
    with pytest.raises(DataError, match="streaming"):
        all_scores(ScoreModel(random_matrix(rng, 30, 2)), cap=20)


def test_zero_norm_subject_reported(rng):
    from eerscale.features import FeatureMatrix

    x = rng.standard_normal((4, 3))
    y = x.copy()
    y[2] = 0.0
    with pytest.raises(DataError, match="row 2"):
        ScoreModel(FeatureMatrix.from_sessions(x, y))


def test_dump_scores(tmp_path, rng):
    m = random_matrix(rng, 6, 3)
    dump_scores(ScoreModel(m), tmp_path / "s.csv")
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert len(rows) == 36
    assert sum(r["label"] == "genuine" for r in rows) == 6
    with pytest.raises(DataError):
        dump_scores(ScoreModel(m), tmp_path / "x.csv", max_subjects=5)


@pytest.mark.property
def test_streaming_memory_is_per_batch():
    import tracemalloc

    m = generate(SynthSpec(3000, 8, 0.7, seed=1))
    model = ScoreModel(m, batch_size=500)
    tracemalloc.start()
    stream_counts(model, 0.7, 0.69, 0.71)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    # a full score matrix would be 72 MB; a pass holds a few 64-row tiles
    assert peak < 64 * 3000 * 8 * 8
