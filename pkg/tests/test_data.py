import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats
from scipy.spatial.distance import pdist

from maller.data import (CSVParseError, Dataset, DegenerateDatasetError, NoiseSpec, klein_embedding,
                         klein_regression, load_csv, normalize_dataset, rase, read_table, sample_flat,
                         sample_interval, sample_klein_bottle, sample_sphere, sample_torus, sigma0_from_snrdb,
                         torus_embedding, torus_gradient, torus_normal, torus_regression, write_csv)


def test_dataset_validation_and_immutability():
    ds = Dataset(np.arange(3.0), [1, 2, 3])
    assert ds.n == 3 and ds.p == 1
    with pytest.raises(ValueError):
        ds.predictors[0, 0] = 5.0
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2))


# -- Klein bottle ----------------------------------------------------------------

def test_klein_origin():
    assert np.allclose(klein_embedding(0.0, 0.0), [3, 0, 0, 0])
    assert klein_regression(0.0, 0.0) == pytest.approx(5 + 6 * math.exp(-64 * math.pi ** 2))


def test_klein_noiseless_predictors_on_image():
    ds = sample_klein_bottle(300, NoiseSpec(5.0), seed=3)
    u, v = ds.meta["u"], ds.meta["v"]
    assert np.array_equal(ds.predictors, klein_embedding(u, v))
    r2 = ds.predictors[:, 0] ** 2 + ds.predictors[:, 1] ** 2
    assert np.allclose(r2, (2 * np.cos(v) + 1) ** 2, atol=1e-9)


def test_klein_snrdb_calibration():
    ds = sample_klein_bottle(1500, NoiseSpec(5.0), seed=0)
    m = ds.meta["m"]
    sigma0 = ds.meta["sigma0"]
    assert 10 * math.log10(np.var(m, ddof=1) / sigma0 ** 2) == pytest.approx(5.0, abs=1e-9)
    # the realized noise level agrees with the calibration within 0.3 dB
    noise = (ds.responses - m) / (1 + 0.1 * np.cos(ds.meta["u"]) + 0.1 * np.sin(ds.meta["v"]))
    realized = 10 * math.log10(np.var(m, ddof=1) / np.var(noise, ddof=1))
    assert realized == pytest.approx(5.0, abs=0.3)


def test_sigma_x_perturbs_predictors():
    a = sample_klein_bottle(50, NoiseSpec(5.0, 0.1), seed=1)
    assert not np.allclose(a.predictors, a.meta["clean"])
    with pytest.raises(ValueError):
        NoiseSpec(5.0, -1.0)


def test_generators_deterministic():
    for gen in (lambda s: sample_klein_bottle(40, seed=s), lambda s: sample_torus(40, seed=s),
                lambda s: sample_sphere(2, 40, s), lambda s: sample_interval(40, s)):
        a, b, c = gen(7), gen(7), gen(8)
        assert np.array_equal(a.predictors, b.predictors) and np.array_equal(a.responses, b.responses)
        assert not np.array_equal(a.predictors, c.predictors)


# -- torus -----------------------------------------------------------------------

def test_torus_gradient_values():
    # with the unit frame the E1 derivative carries 1/(2 + cos v)
    assert np.allclose(torus_gradient(0.0, 0.0), [0, 0, 4 * math.cos(1.0)], atol=1e-12)
    assert torus_regression(math.pi / 2, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(torus_gradient(math.pi / 2, 0.0), [math.sin(1.0) / 3, 0, 0], atol=1e-12)


def test_torus_gradient_matches_chain_rule():
    # g . d(phi)/du = dm/du and g . d(phi)/dv = dm/dv, with g tangent: an independent oracle
    rng = np.random.default_rng(0)
    u, v = rng.uniform(0, 2 * np.pi, size=(2, 200))
    g = torus_gradient(u, v)
    eps = 1e-6
    for du, dv in ((eps, 0.0), (0.0, eps)):
        dphi = (torus_embedding(u + du, v + dv) - torus_embedding(u - du, v - dv)) / (2 * eps)
        dm = (torus_regression(u + du, v + dv) - torus_regression(u - du, v - dv)) / (2 * eps)
        assert np.allclose(np.sum(g * dphi, axis=1), dm, atol=1e-7)


def test_torus_gradient_tangent():
    ds = sample_torus(500, seed=2)
    n = torus_normal(ds.meta["u"], ds.meta["v"])
    assert np.max(np.abs(np.sum(ds.meta["gradient"] * n, axis=1))) < 1e-9


# -- spheres and interval ---------------------------------------------------------

def test_sphere_on_unit_sphere():
    ds = sample_sphere(3, 1000, seed=0)
    assert ds.p == 4
    assert np.allclose(np.linalg.norm(ds.predictors, axis=1), 1.0, atol=1e-12)


def test_sphere_mean_near_origin():
    ds = sample_sphere(2, 10**4, seed=0)
    assert np.all(np.abs(ds.predictors.mean(axis=0)) < 0.05)


def test_circle_angles_uniform():
    ds = sample_sphere(1, 10**4, seed=0)
    theta = np.arctan2(ds.predictors[:, 1], ds.predictors[:, 0])
    assert stats.kstest(theta, stats.uniform(-np.pi, 2 * np.pi).cdf).statistic < 0.02


def test_interval():
    n = 2000
    ds = sample_interval(n, seed=0)
    x = ds.predictors[:, 0]
    assert ds.n == 2000 and np.all((x >= 0) & (x <= 1))
    assert abs(x.mean() - 0.5) < 3 / (math.sqrt(12) * math.sqrt(n))


def test_flat_sample_lies_on_plane():
    ds = sample_flat(100, 2, 5, seed=0)
    Q, off, t = ds.meta["basis"], ds.meta["offset"], ds.meta["latent"]
    assert np.allclose(ds.predictors, t @ Q.T + off)


# -- normalization -----------------------------------------------------------------

def test_normalize_two_points():
    out = normalize_dataset(Dataset(np.array([[0.0], [2.0]]), np.zeros(2)))
    assert np.allclose(out.predictors[:, 0], [-0.5, 0.5])


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 40), st.integers(1, 4)),
              elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)))
def test_normalize_unit_diameter_and_idempotent(X):
    if pdist(X).max() < 1e-6:
        return
    ds = normalize_dataset(Dataset(X, np.zeros(len(X))))
    assert pdist(ds.predictors).max() == pytest.approx(1.0, abs=1e-9)
    again = normalize_dataset(ds)
    assert np.allclose(again.predictors, ds.predictors, atol=1e-9)


def test_normalize_union_of_train_and_test():
    tr = Dataset(np.array([[0.0], [1.0]]), np.zeros(2))
    te = Dataset(np.array([[3.0]]), np.zeros(1))
    a, b = normalize_dataset(tr, te)
    assert a.meta["norm_scale"] == 3.0 and b.meta["norm_scale"] == 3.0
    assert np.allclose(np.concatenate([a.predictors, b.predictors]).ravel(), (np.array([0, 1, 3]) - 4 / 3) / 3)


def test_large_sample_diameter_chunked():
    X = np.random.default_rng(0).normal(size=(2500, 3))
    ds = normalize_dataset(Dataset(X, np.zeros(len(X))))
    assert ds.meta["norm_scale"] == pytest.approx(pdist(X).max(), rel=1e-12)


def test_normalize_degenerate():
    with pytest.raises(DegenerateDatasetError):
        normalize_dataset(Dataset(np.ones((1, 2)), np.zeros(1)))
    with pytest.raises(DegenerateDatasetError):
        normalize_dataset(Dataset(np.ones((5, 2)), np.zeros(5)))


# -- CSV ---------------------------------------------------------------------------

def test_load_csv_shapes(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("1,2,3\n4,5,6\n7,8,9\n")
    ds = load_csv(f)
    assert ds.n == 3 and ds.p == 2
    assert np.array_equal(ds.responses, [3, 6, 9])


def test_header_autodetect(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("x1,x2,y\n1,2,3\n4,5,6\n")
    b.write_text("1,2,3\n4,5,6\n")
    da, db = load_csv(a), load_csv(b)
    assert np.array_equal(da.predictors, db.predictors) and np.array_equal(da.responses, db.responses)
    assert np.array_equal(load_csv(a, "x1").responses, [1, 4])


def test_csv_round_trip(tmp_path):
    ds = sample_klein_bottle(25, seed=4)
    f = tmp_path / "k.csv"
    write_csv(f, ds)
    back = load_csv(f)
    assert np.allclose(back.predictors, ds.predictors, atol=1e-12, rtol=0)
    assert np.allclose(back.responses, ds.responses, atol=1e-12, rtol=0)


@pytest.mark.parametrize("text,needle", [
    ("1,2,3\n4,oops,6\n", "row 2, column 2"),
    ("1,2,3\n4,5\n", "row 2"),
])
def test_csv_errors_name_location(tmp_path, text, needle):
    f = tmp_path / "bad.csv"
    f.write_text(text)
    with pytest.raises(CSVParseError, match=needle):
        read_table(f)


def test_missing_response_column(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("x,y\n1,2\n")
    with pytest.raises(CSVParseError, match="not found"):
        load_csv(f, "z")
    with pytest.raises(CSVParseError, match="out of range"):
        load_csv(f, 5)


# -- RASE ----------------------------------------------------------------------------

def test_rase():
    t = np.arange(10.0)
    assert rase(t, t) == 0.0
    assert rase(t + 2, t) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        rase(t[:3], t)


def test_sigma0_from_snrdb():
    s = np.random.default_rng(0).normal(size=1000)
    sigma0 = sigma0_from_snrdb(s, 10.0)
    assert 10 * math.log10(np.var(s, ddof=1) / sigma0 ** 2) == pytest.approx(10.0)
