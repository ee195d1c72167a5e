import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtsaga.topology import (MixingMatrix, TopologyError, build_mixing_matrix, build_topology,
                             load_matrix_csv, mix, save_matrix_csv, spectral_gap)


def test_complete_adjacency_all_true():
    g = build_topology("complete", 4)
    assert g.adjacency.all()
    assert g.is_complete()


def test_ring_three_links_everyone():
    g = build_topology("ring", 3)
    assert g.adjacency.all()


def test_exponential_offsets():
    g = build_topology("exponential", 8)
    assert set(g.out_neighbors(0)) == {1, 2, 4}
    assert set(g.in_neighbors(0)) == {7, 6, 4}
    assert g.directed


def test_exponential_n20_degree():
    g = build_topology("exponential", 20)
    # offsets 1, 2, 4, 8, 16
    assert np.all(g.out_degrees() == 5)
    assert np.all(g.in_degrees() == 5)


def test_grid_requires_square():
    with pytest.raises(TopologyError):
        build_topology("grid2d", 20)


def test_grid_neighbors():
    g = build_topology("grid2d", 9)
    assert set(g.out_neighbors(4)) == {1, 3, 5, 7}
    assert set(g.out_neighbors(0)) == {1, 3}
    assert np.array_equal(g.adjacency, g.adjacency.T)


def test_zero_nodes_rejected():
    with pytest.raises(TopologyError):
        build_topology("ring", 0)


def test_unknown_kind():
    with pytest.raises(TopologyError):
        build_topology("star", 5)


def test_geometric_needs_seed():
    with pytest.raises(TopologyError):
        build_topology("geometric", 10)


def test_geometric_connected_and_seeded():
    a = build_topology("geometric", 50, seed=3)
    b = build_topology("geometric", 50, seed=3)
    assert a.is_connected()
    assert np.array_equal(a.adjacency, b.adjacency)
    assert np.array_equal(a.adjacency, a.adjacency.T)
    # edges exactly where points are within the default radius
    r = math.sqrt(2 * math.log(50) / 50)
    dist = np.linalg.norm(a.positions[:, None] - a.positions[None], axis=-1)
    assert np.array_equal(a.adjacency, dist <= r)


def test_geometric_gives_up():
    with pytest.raises(TopologyError, match="disconnected"):
        build_topology("geometric", 60, seed=0, radius=0.01)


def test_single_node():
    g = build_topology("ring", 1)
    w = build_mixing_matrix(g)
    assert w.w.tolist() == [[1.0]]
    assert w.lam == 0.0


def test_average_on_complete():
    w = build_mixing_matrix(build_topology("complete", 20), "average")
    assert np.all(w.w == 1 / 20)
    assert w.lam == 0.0


def test_average_requires_complete():
    with pytest.raises(TopologyError):
        build_mixing_matrix(build_topology("ring", 5), "average")


def test_lazy_metropolis_rejects_directed():
    with pytest.raises(TopologyError):
        build_mixing_matrix(build_topology("exponential", 8), "lazy_metropolis")


def test_equal_rejects_irregular():
    with pytest.raises(TopologyError):
        build_mixing_matrix(build_topology("grid2d", 9), "equal")


def test_unknown_rule():
    with pytest.raises(TopologyError):
        build_mixing_matrix(build_topology("ring", 5), "uniform")


def test_ring_equal_weights_odd():
    # odd ring: 1/2 to each neighbor, no self weight
    w = build_mixing_matrix(build_topology("ring", 5), "equal")
    assert w.w[0, 1] == w.w[0, 4] == 0.5
    assert w.w[0, 0] == 0.0
    assert w.lam == pytest.approx(math.cos(math.pi / 5))


def test_ring_three_equal_weights():
    w = build_mixing_matrix(build_topology("ring", 3), "equal")
    assert np.allclose(w.w, (np.ones((3, 3)) - np.eye(3)) / 2)
    assert w.lam == pytest.approx(0.5)


def test_even_ring_uses_lazy_form():
    w = build_mixing_matrix(build_topology("ring", 20), "equal")
    assert w.w[0, 0] == 0.5
    assert w.w[0, 1] == w.w[0, 19] == 0.25
    # (1 + cos(2 pi / n)) / 2
    assert w.lam == pytest.approx((1 + math.cos(2 * math.pi / 20)) / 2, abs=1e-12)


def test_lazy_metropolis_weights():
    g = build_topology("grid2d", 9)
    w = build_mixing_matrix(g, "lazy_metropolis")
    # corner (deg 2) to edge node (deg 3): 1 / (2 * 3)
    assert w.w[0, 1] == pytest.approx(1 / 6)
    # centre (deg 4) to edge node (deg 3): 1 / 8
    assert w.w[4, 1] == pytest.approx(1 / 8)
    assert w.w[0, 0] == pytest.approx(1 - 2 / 6)
    assert np.all(w.w[~g.adjacency] == 0)


def test_weights_respect_graph():
    for kind, n in [("ring", 10), ("exponential", 16), ("grid2d", 16)]:
        g = build_topology(kind, n)
        w = build_mixing_matrix(g)
        assert np.all(w.w[~g.adjacency] == 0)


def test_spectral_gap_identity_and_average():
    assert spectral_gap(np.eye(4)) == pytest.approx(1.0)
    assert spectral_gap(np.full((5, 5), 0.2)) == pytest.approx(0.0, abs=1e-15)


def test_spectral_gap_matches_svd():
    w = build_mixing_matrix(build_topology("grid2d", 16))
    sv = np.linalg.svd(w.w, compute_uv=False)
    assert w.lam == pytest.approx(sv[1], abs=1e-12)


def test_from_array_rejects_non_stochastic():
    with pytest.raises(TopologyError):
        MixingMatrix.from_array([[0.5, 0.6], [0.5, 0.4]])
    with pytest.raises(TopologyError):
        MixingMatrix.from_array([[1.5, -0.5], [-0.5, 1.5]])
    with pytest.raises(TopologyError):
        MixingMatrix.from_array(np.ones((2, 3)) / 3)


def test_mixing_is_read_only():
    w = build_mixing_matrix(build_topology("ring", 5))
    with pytest.raises(ValueError):
        w.w[0, 0] = 1.0


def test_mix_average_gives_column_means(rng):
    w = build_mixing_matrix(build_topology("complete", 6), "average")
    X = rng.standard_normal((6, 3))
    assert np.allclose(mix(w, X), X.mean(axis=0))


def test_mix_fixes_consensus(rng):
    w = build_mixing_matrix(build_topology("exponential", 8))
    X = np.tile(rng.standard_normal(4), (8, 1))
    assert np.allclose(mix(w, X), X, atol=1e-15)


def test_mix_dimension_mismatch():
    w = build_mixing_matrix(build_topology("ring", 5))
    with pytest.raises(ValueError):
        mix(w, np.zeros((4, 2)))


def _random_doubly_stochastic(rng, n, terms=6):
    weights = rng.dirichlet(np.ones(terms))
    return sum(c * np.eye(n)[rng.permutation(n)] for c in weights)


def test_mix_contraction_random_matrix(rng):
    w = MixingMatrix.from_array(_random_doubly_stochastic(rng, 5))
    X = rng.standard_normal((5, 3))
    J = np.full((5, 5), 0.2)
    WX = mix(w, X)
    assert np.linalg.norm(WX - J @ WX) <= w.lam * np.linalg.norm(X - J @ X) + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["ring", "exponential", "grid2d", "complete", "geometric"]),
       st.integers(2, 6), st.integers(0, 1000))
def test_mean_preserved(kind, side, seed):
    n = side * side if kind == "grid2d" else side + 2
    w = build_mixing_matrix(build_topology(kind, n, seed=seed))
    X = np.random.default_rng(seed).standard_normal((n, 3))
    assert np.allclose(mix(w, X).mean(axis=0), X.mean(axis=0), atol=1e-10)
    assert w.stochasticity_error() <= 1e-12
    assert 0 <= w.lam < 1


def test_matrix_csv_roundtrip(tmp_path):
    w = build_mixing_matrix(build_topology("grid2d", 9))
    save_matrix_csv(tmp_path / "w.csv", w.w)
    assert np.array_equal(load_matrix_csv(tmp_path / "w.csv"), w.w)
    g = build_topology("ring", 4)
    save_matrix_csv(tmp_path / "a.csv", g.adjacency)
    assert np.array_equal(load_matrix_csv(tmp_path / "a.csv").astype(bool), g.adjacency)
