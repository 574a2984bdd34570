import numpy as np
import pytest

from eerscale import pca
from eerscale.eer import eer_from_model
from eerscale.errors import DataError
from eerscale.experiments.standin import StandinCorpus, StandinSpec
from eerscale.features import FeatureMatrix, take
from eerscale.scoring import ScoreModel


def test_axis_aligned_cloud():
    x = np.array([[-2.0, 0.0], [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    m = pca.fit(x, 1)
    assert np.allclose(m.components[0], [1.0, 0.0])
    assert np.allclose(pca.fit(-x, 1).components[0], [1.0, 0.0])


def test_rank_one_training_rejected():
    x = np.outer(np.arange(6.0), [1.0, 2.0, 3.0])
    with pytest.raises(DataError, match="rank"):
        pca.fit(x, 2)


@pytest.mark.parametrize("k", [0, 10])
def test_k_out_of_range(k):
    with pytest.raises(DataError):
        pca.fit(np.random.default_rng(0).standard_normal((10, 4)), k)


def test_degenerate_inputs():
    with pytest.raises(DataError):
        pca.fit(np.ones((5, 3)), 1)
    with pytest.raises(DataError):
        pca.fit(np.ones((1, 3)), 1)
    bad = np.zeros((4, 3))
    bad[0, 0] = np.nan
    with pytest.raises(DataError):
        pca.fit(bad, 1)


@pytest.mark.property
def test_projection_covariance_is_diagonal(rng):
    x = rng.standard_normal((100, 50))
    m = pca.fit(x, 50)
    cov = np.cov(pca.transform(m, x).T)
    off = cov - np.diag(np.diag(cov))
    assert np.abs(off).max() <= 1e-8
    assert np.allclose(np.diag(cov), m.singular_values**2 / 99)


def test_mean_projects_to_zero(rng):
    x = rng.standard_normal((30, 8))
    m = pca.fit(x, 5)
    assert np.allclose(pca.transform(m, m.mean_vector[None, :]), 0.0, atol=1e-12)


def test_full_rank_reconstruction(rng):
    x = rng.standard_normal((20, 8))
    m = pca.fit(x, 8)
    back = pca.transform(m, x) @ m.components + m.mean_vector
    assert np.abs(back - x).max() <= 1e-6


@pytest.mark.property
def test_truncation_error_non_increasing(rng):
    x = rng.standard_normal((40, 12)) @ rng.standard_normal((12, 12))
    m = pca.fit(x, 12)
    errs = []
    for k in range(1, 13):
        y = pca.transform(m, x, k) @ m.components[:k] + m.mean_vector
        errs.append(np.sum((x - y) ** 2))
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-18 * np.sum(x**2) + 1e-12


@pytest.mark.property
@pytest.mark.parametrize("shape", [(50, 10), (30, 200), (300, 40)])
def test_orthonormal_and_ordered(shape):
    x = np.random.default_rng(shape[0]).standard_normal(shape)
    k = min(shape[0] - 1, shape[1])
    m = pca.fit(x, k)
    c = m.components
    assert np.abs(c @ c.T - np.eye(k)).max() <= 1e-8
    assert np.all(np.diff(m.singular_values) <= 0)
    idx = np.argmax(np.abs(c), axis=1)
    assert np.all(c[np.arange(k), idx] > 0)


def test_matches_sklearn(rng):
    decomposition = pytest.importorskip("sklearn.decomposition")
    x = rng.standard_normal((60, 15)) @ np.diag(np.linspace(3, 0.5, 15))
    ours = pca.fit(x, 6)
    ref = decomposition.PCA(n_components=6, svd_solver="full").fit(x)
    comps = pca._fix_signs(ref.components_)
    assert np.allclose(ours.components, comps, atol=1e-10)
    assert np.allclose(ours.singular_values, ref.singular_values_, rtol=1e-10)
    assert np.allclose(ours.mean_vector, ref.mean_, atol=1e-12)


def test_transform_dimension_mismatch(rng):
    m = pca.fit(rng.standard_normal((10, 4)), 2)
    with pytest.raises(DataError):
        pca.transform(m, np.zeros((3, 5)))
    with pytest.raises(DataError):
        pca.transform(m, np.zeros((3, 4)), n_keep=3)


def test_save_load_roundtrip(tmp_path, rng):
    m = pca.fit(rng.standard_normal((25, 7)), 4)
    p = tmp_path / "m.pca1"
    pca.save(m, p)
    assert p.read_bytes()[:4] == b"PCA1"
    back = pca.load(p)
    assert np.array_equal(back.mean_vector, m.mean_vector)
    assert np.array_equal(back.components, m.components)


def test_load_rejects_bad_files(tmp_path, rng):
    m = pca.fit(rng.standard_normal((25, 7)), 4)
    p = tmp_path / "m.pca1"
    pca.save(m, p)
    raw = p.read_bytes()
    (tmp_path / "short").write_bytes(raw[:-8])
    (tmp_path / "magic").write_bytes(b"XXXX" + raw[4:])
    for name in ("short", "magic"):
        with pytest.raises(DataError):
            pca.load(tmp_path / name)


def test_split_and_zscore(rng):
    m = FeatureMatrix.from_sessions(rng.standard_normal((30, 6)), rng.standard_normal((30, 6)))
    train, evaluation = pca.split_training(m, 10)
    assert train.shape == (10, 6) and evaluation.n == 20
    assert list(evaluation.subject_ids) == list(m.subject_ids[10:])
    z = pca.zscore_components(pca.transform_matrix(pca.fit(train, 3), evaluation))
    pooled = np.concatenate([z.session(0), z.session(1)]).astype(np.float64)
    assert np.allclose(pooled.mean(axis=0), 0, atol=1e-6)
    assert np.allclose(pooled.std(axis=0, ddof=1), 1, atol=1e-5)
    with pytest.raises(DataError):
        pca.split_training(m, 30)


@pytest.mark.property
def test_pipeline_eer_falls_then_plateaus():
    corpus = StandinCorpus(StandinSpec(n_subjects=1400, dims=300, rank=12, noise_sd=0.02, seed=9, chunk=500))
    train, _ = corpus.rows(0, 400)
    model = pca.fit(train, 40)
    s1, s2 = corpus.rows(400, 1400)
    ev = FeatureMatrix.from_sessions(pca.transform(model, s1), pca.transform(model, s2))
    ev = pca.zscore_components(ev)
    eers = {}
    for k in (2, 4, 8, 12, 16, 24):
        sub = take(ev, cols=np.arange(k))
        eers[k] = eer_from_model(ScoreModel(sub), method="exact").eer
    # falls through the signal rank (12); past it, z-scored noise components add nothing
    assert eers[2] > eers[4] > eers[8] > eers[12]
    assert min(eers[16], eers[24]) >= eers[12]
