from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_glm
from gtsaga.algorithms import AlgoConfig, init_network, max_step_nonconvex, max_step_pl, run
from gtsaga.analysis import (TRACE_COLUMNS, MetricRecord, MetricTrace, aux_sequence,
                             build_G_alpha, build_H_alpha, consensus_error, fit_linear_rate,
                             g_alpha_offset, g_certificate_vector, h_certificate_vector,
                             heterogeneity_measure, max_step_g_contraction,
                             positive_vector_certificate, record_metrics, spectral_radius)
from gtsaga.objectives import GlmProblem, make_quadratic_problem
from gtsaga.topology import build_mixing_matrix, build_topology


# Metrics


def test_consensus_error_values():
    assert consensus_error(np.ones((4, 3))) == 0.0
    x = np.array([[1.0], [-1.0]])
    assert consensus_error(x) == 1.0


def test_aux_sequence_brute_force(rng):
    x = rng.standard_normal((2, 3))
    z = rng.standard_normal((2, 2, 3))
    x_bar = x.mean(axis=0)
    brute = sum(np.sum((x_bar - z[i, j]) ** 2) for i in range(2) for j in range(2)) / 4
    assert aux_sequence(x, z) == pytest.approx(brute, rel=1e-14)


def test_fresh_network_records(rng):
    prob = small_glm(n=3, m=4, seed=1)
    net = init_network(prob, rng.standard_normal(3), seed=0)
    rec = record_metrics(net, prob)
    # the mean of identical rows can differ from them by one rounding
    assert rec.t_k <= 1e-30 and rec.consensus_error <= 1e-30 and rec.k == 0
    assert rec.optimality_gap is None
    assert rec.stationarity_gap == pytest.approx(np.linalg.norm(prob.value_grad(net.x[0])[1]))


def test_record_with_known_optimum():
    c = np.array([1.0, 2.0])
    prob = make_quadratic_problem(2, 2, 2, seed=0, center=c)
    net = init_network(prob, c + 1, seed=0, kind="dsgd")
    rec = record_metrics(net, prob, f_star=0.0)
    assert rec.optimality_gap == pytest.approx(prob.value_grad(c + 1)[0])
    assert rec.t_k is None


def test_trace_csv_roundtrip(tmp_path):
    trace = MetricTrace()
    trace.append(MetricRecord(0, 1.0, 0.5, 0.0, None, 0.0))
    trace.append(MetricRecord(5, 1.25, 0.1 / 3, 1e-300, 2.5e-17, None))
    trace.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    back = MetricTrace.from_csv(tmp_path / "t.csv")
    assert back.records == trace.records


def test_epochs_to_reach():
    trace = MetricTrace([MetricRecord(k, k / 2, 1.0 / (k + 1), 0.0) for k in range(10)])
    assert trace.epochs_to_reach("stationarity_gap", 0.25) == 1.5
    assert trace.epochs_to_reach("stationarity_gap", 1e-3) is None


def test_heterogeneity_examples():
    theta = np.tile(np.array([[[0.6, 0.8], [1.0, 0.0]]]), (3, 1, 1))
    prob = GlmProblem(theta=theta, labels=np.ones((3, 2)))
    x0 = np.array([0.3, -0.2])
    assert heterogeneity_measure(prob, x0) == pytest.approx(
        float(np.sum(prob.value_grad(x0)[1] ** 2)), rel=1e-12)
    c = np.array([0.5, 0.5])
    quad = make_quadratic_problem(3, 2, 2, seed=0, center=c)
    assert heterogeneity_measure(quad, c) == 0.0


def test_heterogeneity_cancellation():
    # two nodes with opposite gradients v and -v at the origin
    v = np.array([0.6, 0.8])
    theta = np.array([[v], [v]])
    prob = GlmProblem(theta=theta, labels=np.array([[1.0], [-1.0]]))
    grad_node = -0.25 * v
    assert heterogeneity_measure(prob, np.zeros(2)) == pytest.approx(grad_node @ grad_node)
    assert np.allclose(prob.value_grad(np.zeros(2))[1], 0)


# Rate fitting


def test_fit_exact_geometric():
    fit = fit_linear_rate(0.9 ** np.arange(100))
    assert fit.rate == pytest.approx(0.9, rel=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert not fit.truncated


def test_fit_constant_sequence():
    fit = fit_linear_rate(np.full(50, 3.0))
    assert fit.rate == pytest.approx(1.0)


def test_fit_truncates_at_floor():
    gap = np.concatenate([0.5 ** np.arange(40), np.zeros(10)])
    fit = fit_linear_rate(gap)
    assert fit.truncated and fit.stop == 40
    assert fit.rate == pytest.approx(0.5, rel=1e-10)


def test_fit_burn_in_and_errors():
    gap = np.concatenate([np.full(20, 1.0), 0.8 ** np.arange(80)])
    assert fit_linear_rate(gap, burn_in=20).rate == pytest.approx(0.8, rel=1e-10)
    with pytest.raises(ValueError):
        fit_linear_rate(np.array([1.0, 0.0, 0.0]))
    trace = MetricTrace([MetricRecord(0, 0.0, 1.0, 0.0)])
    with pytest.raises(ValueError):
        fit_linear_rate(trace)


def test_fit_uses_iteration_index_of_trace():
    trace = MetricTrace([MetricRecord(10 * k, 0.0, 1.0, 0.0, optimality_gap=0.99 ** (10 * k))
                         for k in range(30)])
    assert fit_linear_rate(trace).rate == pytest.approx(0.99, rel=1e-12)


# Contraction matrices


def test_G_at_zero_lambda():
    G = build_G_alpha(0.0, 5, 3, 2.0, 0.7)
    assert G[0, 2] == 0 and G[0, 0] == 0.5 and G[2, 2] == 0.5


def test_G_single_component():
    G = build_G_alpha(0.3, 1, 3, 1.0, 0.01)
    assert G[1, 1] == 0.75 and G[1, 0] == 2.25


def test_G_concrete_entries():
    lam, m, L, a = 0.6, 10, 1.0, 1e-3
    u = 1 - lam**2
    expected = np.array([
        [(1 + lam**2) / 2, 0, 2 * lam**2 * a**2 * L**2 / u],
        [9 / (4 * m), 1 - 1 / (4 * m), 0],
        [30.5 / u, 97 / 8, (1 + lam**2) / 2],
    ])
    assert np.allclose(build_G_alpha(lam, m, 4, L, a), expected, rtol=1e-15, atol=0)


def test_G_exact_matches_float():
    Gx = build_G_alpha(0.6, 10, 4, 1.0, 1e-3, exact=True)
    assert all(isinstance(v, Fraction) for v in Gx.ravel())
    assert np.allclose(Gx.astype(float), build_G_alpha(0.6, 10, 4, 1.0, 1e-3), rtol=1e-15)


def test_G_offset_vector():
    off = g_alpha_offset(0.5, 4, 0.1)
    assert np.allclose(off, [0, 4 * 4 * 0.01, 16 * 0.25 * 0.01 / 0.75])


def test_H_at_zero_lambda():
    H = build_H_alpha(0.0, 5, 3, 2.0, 0.5, 0.01)
    assert H[0, 3] == 0 and H[3, 0] == 31 and H[3, 1] == 0


def test_H_small_step_diagonal():
    H = build_H_alpha(0.4, 5, 3, 2.0, 0.5, 1e-12)
    assert np.allclose(np.diag(H), [(1 + 0.16) / 2, 1, 1 - 1 / 20, (1 + 0.16) / 2], atol=1e-11)


def test_H_concrete_entries():
    lam, m, n, L, mu = 0.6, 5, 20, 8.0, 0.1755
    a = max_step_pl(lam, n, m, L, mu)
    u = 1 - lam**2
    expected = np.array([
        [(1 + lam**2) / 2, 0, 0, 2 * lam**2 * a**2 * L**2 / u],
        [a * L, 1 - mu * a, a**2 * L**2 / n, 0],
        [8 * m * a**2 * L**2 + 9 / (4 * m), 16 * m * a**2 * L**2, 1 - 1 / (4 * m), 0],
        [31 / u, 64 * lam**2 * a**2 * L**2 / u, 97 / 8, (1 + lam**2) / 2],
    ])
    assert np.allclose(build_H_alpha(lam, m, n, L, mu, a), expected, rtol=1e-14, atol=0)


def test_matrix_lambda_checked():
    with pytest.raises(ValueError):
        build_G_alpha(1.0, 1, 1, 1, 0.1)
    with pytest.raises(ValueError):
        build_H_alpha(1.2, 1, 1, 1, 1, 0.1)


def test_spectral_radius_examples():
    assert spectral_radius(np.diag([0.5, 0.2])) == pytest.approx(0.5)
    assert spectral_radius(np.full((4, 4), 0.25)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        spectral_radius(np.ones((2, 3)))


def test_G_contracts_at_contraction_step():
    alpha = max_step_g_contraction(0.6, 10, 10, 1.0)
    assert alpha == pytest.approx(min(0.64**2 / 21, np.sqrt(10 / 80)))
    assert spectral_radius(build_G_alpha(0.6, 10, 10, 1.0, alpha)) < 1


# Certificates


def test_certificate_zero_matrix():
    assert positive_vector_certificate(np.zeros((3, 3)), np.ones(3), 0.1)


def test_certificate_input_errors():
    with pytest.raises(ValueError):
        positive_vector_certificate(np.eye(2), np.array([1.0, 0.0]), 1)
    with pytest.raises(ValueError):
        positive_vector_certificate(-np.eye(2), np.ones(2), 1)
    with pytest.raises(ValueError):
        positive_vector_certificate(np.eye(2), np.ones(3), 1)


def test_certificate_no_slack():
    M = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert positive_vector_certificate(M, np.ones(2), 1.0)
    assert not positive_vector_certificate(M, np.ones(2), 1.0 - 1e-16 * 2)


@pytest.mark.parametrize("lam", [0.0, 0.3, 0.6, 0.9, 0.99])
def test_G_certificate_at_nonconvex_step(lam):
    n, m, L = 20, 50, 4 / 3
    alpha = max_step_nonconvex(lam, n, m, L)
    G = build_G_alpha(lam, m, n, L, alpha, exact=True)
    assert positive_vector_certificate(G, g_certificate_vector(lam, exact=True), 1)


@pytest.mark.parametrize("lam", [0.0, 0.3, 0.6, 0.9, 0.99])
def test_H_certificate_at_pl_step(lam):
    n, m, L, mu = 20, 5, 9.0, 0.1755
    alpha = max_step_pl(lam, n, m, L, mu)
    H = build_H_alpha(lam, m, n, L, mu, alpha, exact=True)
    s = h_certificate_vector(lam, n, m, L, mu, alpha, exact=True)
    beta = 1 - Fraction(mu) * Fraction(alpha) / 2
    assert positive_vector_certificate(H, s, beta)
    assert spectral_radius(H.astype(float)) <= float(beta) + 1e-12


def test_H_certificate_fails_beyond_bound():
    n, m, L, mu, lam = 20, 5, 9.0, 0.1755, 0.6
    alpha = 50 * max_step_pl(lam, n, m, L, mu)
    H = build_H_alpha(lam, m, n, L, mu, alpha, exact=True)
    s = h_certificate_vector(lam, n, m, L, mu, alpha, exact=True)
    assert not positive_vector_certificate(H, s, 1 - Fraction(mu) * Fraction(alpha) / 2)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31), st.floats(0.05, 3.0))
def test_certificate_soundness(size, seed, beta):
    rng = np.random.default_rng(seed)
    M = rng.random((size, size)) * rng.random((size, size)) ** 3
    x = rng.random(size) + 0.05
    if positive_vector_certificate(M, x, beta):
        assert spectral_radius(M) <= beta + 1e-9
    # a tight instance: the Perron vector of M certifies its own radius
    vals, vecs = np.linalg.eig(M)
    k = np.argmax(np.abs(vals))
    perron = np.abs(np.real(vecs[:, k]))
    if np.all(perron > 1e-8):
        rho = spectral_radius(M)
        assert positive_vector_certificate(M, perron, rho * (1 + 1e-9) + 1e-12)


def test_t_sequence_recorded_in_run(rng):
    prob = small_glm(n=4, m=5, p=3, seed=0)
    w = build_mixing_matrix(build_topology("ring", 4))
    net = init_network(prob, rng.standard_normal(3), seed=0)
    trace = run(net, w, prob, AlgoConfig("gt_saga", 0.05, 50))
    t = trace.column("t_k")
    assert t[0] <= 1e-30 and np.all(t[1:] > 0) and np.all(np.isfinite(t))
