import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pqcluster import kmeans
from helpers import brute_force_kmeans, naive_silhouette, partition_objective, partitions


def test_partition_enumerator_counts():
    # Stirling numbers of the second kind
    assert sum(1 for _ in partitions(5, 2)) == 15
    assert sum(1 for _ in partitions(8, 3)) == 966


def test_two_pair_fixture():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    m = kmeans.fit(X, 2, seed=0, n_init=50)
    assert sorted(m.centers[:, 0]) == [0.5, 10.5]
    assert m.objective == 1.0
    assert brute_force_kmeans(X, 2) == 1.0


def small_fixtures():
    rng = np.random.default_rng(2024)
    out = []
    for i in range(24):
        n = int(rng.integers(3, 9))
        d = int(rng.integers(1, 3))
        k = int(rng.integers(1, min(3, n) + 1))
        out.append((rng.normal(size=(n, d)) * rng.uniform(0.5, 5), k))
    return out


@pytest.mark.parametrize("X,k", small_fixtures())
def test_matches_exhaustive_minimum(X, k):
    m = kmeans.fit(X, k, seed=1, n_init=50)
    best = brute_force_kmeans(X, k)
    assert m.objective == pytest.approx(best, rel=1e-12, abs=1e-12)
    assert m.objective == pytest.approx(partition_objective(X, m.assignments), rel=1e-12)


def test_ties_go_to_lowest_index():
    centers = np.array([[-1.0], [1.0]])
    assert kmeans.assign(np.array([[0.0]]), centers)[0] == 0


def test_empty_cluster_reseed():
    X = np.array([[0.0], [0.1], [5.0], [5.1], [20.0]])
    centers = np.array([[0.0], [100.0]])
    assign = kmeans.assign(X, centers)
    new, counts = kmeans.update_centers(X, assign, 2, centers)
    assert counts[1] == 0
    reseeded = kmeans._reseed_empty(X, new, assign, counts)
    # the farthest point from its own center takes over the empty slot
    assert reseeded[1, 0] == 20.0


def test_monotone_history_and_determinism():
    rng = np.random.default_rng(8)
    X = np.concatenate([rng.normal(c, 0.5, size=(40, 3)) for c in (0, 4, 8, 12)])
    a = kmeans.fit(X, 4, seed=3)
    b = kmeans.fit(X, 4, seed=3)
    np.testing.assert_array_equal(a.assignments, b.assignments)
    assert np.all(np.diff(a.wss_history) <= 0)
    assert a.sizes.sum() == len(X)
    assert kmeans.wss(a, X) == pytest.approx(a.objective)
    np.testing.assert_array_equal(kmeans.predict(a, X), a.assignments)


@given(arrays(np.float64, st.tuples(st.integers(4, 30), st.integers(1, 4)),
              elements=st.floats(-50, 50, allow_nan=False)),
       st.integers(1, 4), st.integers(0, 1000))
def test_objective_never_increases(X, k, seed):
    k = min(k, len(X))
    m = kmeans.fit(X, k, seed=seed, n_init=2)
    h = np.asarray(m.wss_history)
    assert np.all(h[1:] <= h[:-1] * (1 + 1e-12) + 1e-12)
    assert m.objective == pytest.approx(partition_objective(X, m.assignments), rel=1e-9, abs=1e-9)


def test_argument_errors():
    X = np.zeros((3, 2))
    with pytest.raises(ValueError):
        kmeans.fit(X, 4)
    with pytest.raises(ValueError):
        kmeans.fit(X, 0)
    with pytest.raises(ValueError):
        kmeans.fit(np.zeros(3), 1)


def test_find_knee():
    ks = list(range(2, 10))
    wss = [100, 60, 25, 20, 17, 15, 14, 13]
    knee, strength, weak = kmeans.find_knee(ks, wss)
    assert knee == 4 and not weak
    knee, strength, weak = kmeans.find_knee(ks, np.linspace(10, 1, 8))
    assert weak and strength == pytest.approx(0.0, abs=1e-12)
    assert kmeans.find_knee([2, 3], [5, 4]) == (None, 0.0, True)


def test_elbow_scan_on_blobs():
    rng = np.random.default_rng(9)
    X = np.concatenate([rng.normal(c, 0.3, size=(30, 2)) for c in ([0, 0], [10, 0], [0, 10])])
    scan = kmeans.elbow_scan(X, range(2, 8), seed=0, n_init=5)
    assert scan.knee == 3
    assert scan.k_values == [2, 3, 4, 5, 6, 7]
    assert all(a >= b for a, b in zip(scan.wss, scan.wss[1:]))


@pytest.mark.parametrize("seed", range(20))
def test_silhouette_matches_naive(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 51))
    k = int(rng.integers(2, min(6, n) + 1))
    X = rng.normal(size=(n, int(rng.integers(1, 5))))
    labels = rng.integers(0, k, size=n)
    labels[:2] = [0, 1]
    s, mean = kmeans.silhouette(X, labels)
    ref = naive_silhouette(X, labels)
    np.testing.assert_allclose(s, ref, atol=1e-9, rtol=0)
    assert mean == pytest.approx(ref.mean(), abs=1e-9)


def test_silhouette_singletons_and_errors():
    X = np.array([[0.0], [0.1], [5.0]])
    s, _ = kmeans.silhouette(X, [0, 0, 1])
    assert s[2] == 0.0
    with pytest.raises(ValueError):
        kmeans.silhouette(X, [0, 0, 0])


def test_silhouette_report():
    X = np.array([[0.0], [1.0], [10.0], [11.0], [12.0]])
    rep = kmeans.silhouette_report(X, np.array([0, 0, 1, 1, 1]))
    assert rep["clusters"]["0"]["size"] == 2 and rep["clusters"]["1"]["size"] == 3
    ref = naive_silhouette(X, [0, 0, 1, 1, 1])
    assert rep["overall_mean"] == pytest.approx(ref.mean(), abs=1e-12)
    assert rep["clusters"]["1"]["mean"] == pytest.approx(ref[2:].mean(), abs=1e-12)
