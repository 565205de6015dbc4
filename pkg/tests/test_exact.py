import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_oracle.exact import (DegenerateGap, bottom_k_embedding, cluster_means, directional_variance,
                                   exact_dot, exact_projected_quantities, mean_embedding_spectrum,
                                   normalized_laplacian, tail_fraction)
from spectral_oracle.graph import CapabilityError, RegularGraph, UsageError, degree_regularize, disjoint_cliques
from spectral_oracle.linalg import SingularMatrix, gauss_jordan_inverse, symmetric_eig


def cycle(n):
    return degree_regularize([[(v - 1) % n, (v + 1) % n] for v in range(n)], 2)


@pytest.fixture(scope="module")
def instance():
    from spectral_oracle.graph import generate_clusterable

    return generate_clusterable(3, [300, 300, 300], 12, 0.3, seed=21)


# symmetric_eig

def test_eig_identity_and_diagonal():
    w, _ = symmetric_eig(np.eye(4))
    assert np.allclose(w, 1)
    w, v = symmetric_eig(np.diag([1.0, 3.0]))
    assert w.tolist() == [3.0, 1.0]
    assert np.allclose(np.abs(v), [[0, 1], [1, 0]])


@pytest.mark.parametrize("method", ["jacobi", "lapack"])
def test_eig_reconstruction(method):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((30, 30))
    m = a + a.T
    w, v = symmetric_eig(m, method=method)
    assert np.all(np.diff(w) <= 0)
    assert np.abs(v.T @ v - np.eye(30)).max() <= 1e-8
    assert np.linalg.norm(v @ np.diag(w) @ v.T - m) <= 1e-8
    assert np.abs(m @ v - v * w).max() <= 1e-8 * np.linalg.norm(m, 2)


def test_jacobi_agrees_with_lapack():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((40, 40))
    m = a @ a.T
    assert np.allclose(symmetric_eig(m, "jacobi")[0], symmetric_eig(m, "lapack")[0], atol=1e-9)


def test_eig_rejects_asymmetric():
    with pytest.raises(UsageError):
        symmetric_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_gauss_jordan():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((6, 6)) + 6 * np.eye(6)
    assert np.allclose(gauss_jordan_inverse(x) @ x, np.eye(6), atol=1e-12)
    with pytest.raises(SingularMatrix):
        gauss_jordan_inverse(np.ones((2, 2)))


# Laplacian and embedding

def test_laplacian_examples():
    assert normalized_laplacian(degree_regularize([[]], 3)).tolist() == [[0.0]]
    two = RegularGraph([[1, 1, 1], [0, 0, 0]])
    assert normalized_laplacian(two).tolist() == [[1.0, -1.0], [-1.0, 1.0]]


def test_cycle_spectrum_closed_form():
    lam = np.linalg.eigvalsh(normalized_laplacian(cycle(6)))
    expected = np.sort(1 - np.cos(2 * np.pi * np.arange(6) / 6))
    assert np.allclose(lam, expected, atol=1e-12)


def test_laplacian_limit():
    with pytest.raises(CapabilityError):
        normalized_laplacian(cycle(20), limit=10)


def test_constant_bottom_vector():
    emb = bottom_k_embedding(cycle(9), 1)
    assert emb.eigenvalues[0] == pytest.approx(0, abs=1e-12)
    assert np.allclose(np.abs(emb.F[0]), 1 / 3)
    assert exact_dot(emb, 4, 4) == pytest.approx(1 / 9)


def test_cliques_gram_is_block_indicator():
    inst = disjoint_cliques([5, 7], 8)
    emb = bottom_k_embedding(inst.graph, 2)
    G = emb.gram()
    lab = inst.labels
    sizes = np.array([5, 7])
    expected = np.where(lab[:, None] == lab[None, :], 1.0 / sizes[lab][:, None], 0.0)
    assert np.abs(G - expected).max() <= 1e-8
    assert abs(exact_dot(emb, 0, 9)) <= 1e-9


def test_eigensolver_quality(instance):
    emb = bottom_k_embedding(instance.graph, 3)
    lap = normalized_laplacian(instance.graph)
    F = emb.F
    assert np.abs(F @ F.T - np.eye(3)).max() <= 1e-8
    assert np.abs(lap @ F.T - F.T * emb.eigenvalues[:3]).max() <= 1e-8
    assert np.all(np.diff(emb.eigenvalues) >= 0)
    assert 0 <= emb.eigenvalues[0] and emb.eigenvalues[-1] <= 2


def test_gram_matches_independent_product(instance):
    emb = bottom_k_embedding(instance.graph, 3)
    rng = np.random.default_rng(3)
    full = np.einsum("ij,ik->jk", emb.F, emb.F)
    for x, y in rng.integers(900, size=(20, 2)):
        assert exact_dot(emb, x, y) == pytest.approx(full[x, y], abs=1e-15)


def test_gram_invariant_under_relabeling(instance):
    g = instance.graph
    emb = bottom_k_embedding(g, 3)
    assert emb.gap >= 1e-6
    perm = np.random.default_rng(4).permutation(g.n)
    inv = np.argsort(perm)
    relabeled = RegularGraph(inv[g.slots[perm]])
    emb2 = bottom_k_embedding(relabeled, 3)
    G = emb.gram()
    G2 = emb2.gram()[np.ix_(inv, inv)]
    assert np.abs(G - G2).max() <= 1e-7


def test_degenerate_gap_warns():
    inst = disjoint_cliques([5, 5, 5], 6)
    with pytest.warns(DegenerateGap):
        emb = bottom_k_embedding(inst.graph, 1)
    assert emb.degenerate


def test_spectral_certificate(instance):
    md = instance.metadata
    assert md["lambda_k"] <= 2 * md["eps_hat"]
    assert md["lambda_k1"] >= md["phi_hat"] ** 2 / 2 - 1e-12


# means, variance, tails

def test_single_cluster_mean():
    emb = bottom_k_embedding(cycle(16), 1)
    means = cluster_means(emb, [np.arange(16)])
    assert abs(means.mu[0, 0]) == pytest.approx(0.25)


def test_clique_means_norms():
    inst = disjoint_cliques([5, 8, 6], 8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateGap)
        emb = bottom_k_embedding(inst.graph, 3)
    means = cluster_means(emb, inst.clusters)
    assert np.allclose(means.norms2(), [1 / 5, 1 / 8, 1 / 6], atol=1e-12)


def test_cluster_mean_bounds(instance):
    eps, phi = instance.eps_hat, instance.phi_hat
    emb = bottom_k_embedding(instance.graph, 3)
    means = cluster_means(emb, instance.clusters)
    sizes = means.sizes
    assert np.all(np.abs(means.norms2() - 1 / sizes) <= 4 * math.sqrt(eps) / phi / sizes)
    G = means.mu.T @ means.mu
    for i in range(3):
        for j in range(3):
            if i != j:
                assert abs(G[i, j]) <= 8 * math.sqrt(eps) / phi / math.sqrt(sizes[i] * sizes[j])


def test_variance_zero_on_cliques():
    inst = disjoint_cliques([5, 6], 6)
    emb = bottom_k_embedding(inst.graph, 2)
    for a in ([1.0, 0.0], [0.6, 0.8]):
        assert directional_variance(emb, inst.clusters, a) == pytest.approx(0, abs=1e-9)


def test_variance_brute_force():
    inst = disjoint_cliques([3, 4], 4)
    g = RegularGraph(inst.graph.slots)
    emb = bottom_k_embedding(g, 2)
    clusters = [[0, 1, 2, 3], [4, 5, 6]]  # deliberately not the true split
    total = 0.0
    for c in clusters:
        mean = sum(emb.F[0, x] for x in c) / len(c)
        total += sum((emb.F[0, x] - mean) ** 2 for x in c)
    assert directional_variance(emb, clusters, [1.0, 0.0]) == pytest.approx(total, rel=1e-12)


def test_variance_bound(instance):
    emb = bottom_k_embedding(instance.graph, 3)
    rng = np.random.default_rng(5)
    bound = 4 * instance.eps_hat / instance.phi_hat ** 2
    for _ in range(100):
        a = rng.standard_normal(3)
        assert directional_variance(emb, instance.clusters, a / np.linalg.norm(a)) <= bound


def test_variance_rejects_non_unit():
    inst = disjoint_cliques([5, 6], 6)
    emb = bottom_k_embedding(inst.graph, 2)
    with pytest.raises(UsageError):
        directional_variance(emb, inst.clusters, [1.0, 1.0])


def test_tail_fraction_examples():
    u = np.full(100, 0.1)
    assert tail_fraction(u, 2.0, 30) == 0.0
    ind = np.zeros(12)
    ind[:4] = 0.5
    assert tail_fraction(ind, 1.0001, 4 * 10 * 4) == 4 / 12
    with pytest.raises(UsageError):
        tail_fraction(u, 1.0, 30)


def test_tail_bound(instance):
    emb = bottom_k_embedding(instance.graph, 3)
    eps, phi = instance.eps_hat, instance.phi_hat
    for row in emb.F:
        for beta in (1.5, 2.5, 4.0):
            bound = (beta / 2) ** (-phi ** 2 / (20 * eps))
            assert tail_fraction(row, beta, instance.min_cluster_size) <= 2 * bound


# projections

def test_projection_identity_and_full_removal():
    inst = disjoint_cliques([5, 7], 8)
    emb = bottom_k_embedding(inst.graph, 2)
    pq = exact_projected_quantities(emb, inst.clusters, [])
    assert np.array_equal(pq.pi, np.eye(2))
    pq = exact_projected_quantities(emb, inst.clusters, [0, 1])
    assert np.abs(pq.projected_means).max() <= 1e-12


def test_projected_norm_bound(instance):
    emb = bottom_k_embedding(instance.graph, 3)
    pq = exact_projected_quantities(emb, instance.clusters, [0, 1])
    nm = pq.means.norms2()
    slack = 16 * math.sqrt(instance.eps_hat) / instance.phi_hat
    assert abs(pq.norm2(2) - nm[2]) <= slack * nm[2]
    assert pq.dot(0, 5) == pytest.approx(emb.F[:, 0] @ pq.pi @ emb.F[:, 5])


@settings(max_examples=25)
@given(st.integers(0, 2**32), st.integers(1, 3))
def test_projector_is_orthogonal(seed, r):
    from spectral_oracle.exact import projector_complement

    vecs = np.random.default_rng(seed).standard_normal((4, r))
    pi = projector_complement(vecs)
    assert np.allclose(pi, pi.T, atol=1e-12)
    assert np.allclose(pi @ pi, pi, atol=1e-12)
    assert np.abs(pi @ vecs).max() <= 1e-10 * max(1.0, np.abs(vecs).max())


def test_mean_embedding_spectrum(instance):
    emb = bottom_k_embedding(instance.graph, 3)
    w = mean_embedding_spectrum(cluster_means(emb, instance.clusters))
    assert np.all(np.abs(w - 1) <= 4 * math.sqrt(instance.eps_hat) / instance.phi_hat)


def test_collision_variance_by_enumeration():
    import itertools

    pa = np.array([0.5, 0.3, 0.2])
    pb = np.array([0.1, 0.6, 0.3])
    R1, R2 = 2, 3
    mean = second = 0.0
    for xs in itertools.product(range(3), repeat=R1):
        for ys in itertools.product(range(3), repeat=R2):
            w = np.prod(pa[list(xs)]) * np.prod(pb[list(ys)])
            z = sum(x == y for x in xs for y in ys) / (R1 * R2)
            mean += w * z
            second += w * z * z
    from spectral_oracle.exact import collision_variance

    var = collision_variance(pa[:, None], pb[:, None], R1, R2)[0, 0]
    assert mean == pytest.approx(pa @ pb)
    assert var == pytest.approx(second - mean ** 2, rel=1e-12)
