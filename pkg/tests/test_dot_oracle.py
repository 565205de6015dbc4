import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_oracle.dot_oracle import (DotProductOracle, InitFailure, OracleParams, default_repetitions,
                                        default_walk_length, dumps, initialize_oracle, load_oracle, loads,
                                        save_oracle, spectral_dot_product)
from spectral_oracle.exact import bottom_k_embedding
from spectral_oracle.graph import UsageError, degree_regularize, disjoint_cliques, generate_clusterable
from spectral_oracle.randomness import Seed

SEED = Seed(0xD07)


@pytest.fixture(scope="module")
def expander():
    inst = generate_clusterable(1, [400], 12, 0.0, seed=2)
    g = inst.graph
    params = OracleParams.desk_scale(g.n, 1, inst.phi_hat, c_R=1, c_t=5, m=3)
    return g, initialize_oracle(g, params, SEED)


@pytest.fixture(scope="module")
def two_cluster():
    inst = generate_clusterable(2, [300, 300], 12, 0.2, seed=8)
    g = inst.graph
    params = OracleParams.desk_scale(g.n, 2, inst.phi_hat, c_R=1, c_t=5, m=3)
    return inst, initialize_oracle(g, params, SEED)


def test_params_validation():
    with pytest.raises(UsageError):
        OracleParams(k=1, t=5, R_init=10, R_query=10, s=4, m=4)
    with pytest.raises(UsageError):
        OracleParams(k=1, t=5, R_init=10, R_query=10, s=4, m=3, delta=0.7)
    with pytest.raises(UsageError):
        OracleParams(k=1, t=5, R_init=0, R_query=10, s=4, m=3)


def test_desk_scale_formulas():
    p = OracleParams.desk_scale(10_000, 2, 0.5, delta=0.5, xi=0.5, c_R=1, c_s=10, c_t=20)
    assert p.R_init == p.R_query == 1600  # 100 * 4 / 0.25
    assert p.s == 40 * 10  # ceil(ln 10^4) = 10
    assert p.t == default_walk_length(10_000, 0.5) == 737
    assert p.m == default_repetitions(10_000) == 29


def test_single_absorbing_vertex():
    g = degree_regularize([[]], 4)
    D = initialize_oracle(g, OracleParams(k=1, t=3, R_init=5, R_query=5, s=1, m=1), SEED)
    assert D.psi.tolist() == [[1.0]]
    assert spectral_dot_product(g, 0, 0, D) == pytest.approx(1.0)


def test_isolated_vertices_psi_follows_scaled_gram():
    # G = [1] for an absorbing start; (n/s) G has eigenvalue n, so Psi = n * n^-2
    g = degree_regularize([[] for _ in range(4)], 3)
    D = initialize_oracle(g, OracleParams(k=1, t=3, R_init=5, R_query=5, s=1, m=1), SEED)
    assert D.psi[0, 0] == pytest.approx(0.25)


def test_rank_deficient_gram_fails():
    g = degree_regularize([[]], 2)
    with pytest.raises(InitFailure) as info:
        initialize_oracle(g, OracleParams(k=2, t=2, R_init=5, R_query=5, s=2, m=1), SEED)
    assert info.value.eigen_report == pytest.approx([1.0, 0.0])


def test_cliques_eigen_report():
    inst = disjoint_cliques([13, 13, 13], 12)
    g = inst.graph
    params = OracleParams(k=3, t=60, R_init=4000, R_query=400, s=30, m=3)
    D = initialize_oracle(g, params, SEED)
    # exact (n/s)(M^tS)^T(M^tS) has k eigenvalues of (n/s) * (#samples in C_i)/|C_i|
    counts = np.bincount(inst.labels[D.I_S], minlength=3)
    expected = np.sort(g.n / params.s * counts / 13)[::-1]
    assert np.allclose(D.eigen_report[:3], expected, rtol=0.25)
    assert abs(D.eigen_report[3]) <= 1e-3


def test_constant_vector_dots(expander):
    g, D = expander
    rng = np.random.default_rng(0)
    oracle = DotProductOracle(g, D)
    pairs = rng.integers(g.n, size=(200, 2))
    err = np.array([abs(oracle.dot(x, y) - 1 / g.n) for x, y in pairs])
    assert np.mean(err <= D.params.xi / g.n) >= 0.9


def test_two_cliques_separated():
    inst = disjoint_cliques([13, 13], 12)
    g = inst.graph
    D = initialize_oracle(g, OracleParams(k=2, t=40, R_init=2000, R_query=500, s=20, m=3), SEED)
    oracle = DotProductOracle(g, D)
    lab = inst.labels
    rng = np.random.default_rng(1)
    ok = 0
    for x, y, z in rng.integers(g.n, size=(100, 3)):
        same = [v for v in (y, z) if lab[v] == lab[x]]
        other = [v for v in (y, z) if lab[v] != lab[x]]
        if not same or not other:
            same, other = [x], [(x + 13) % 26]
        ok += oracle.dot(x, same[0]) - oracle.dot(x, other[0]) >= 1 / g.n
    assert ok >= 90


def test_accuracy_against_exact(two_cluster):
    inst, D = two_cluster
    g = inst.graph
    emb = bottom_k_embedding(g, 2)
    oracle = DotProductOracle(g, D)
    rng = np.random.default_rng(2)
    pairs = rng.integers(g.n, size=(300, 2))
    err = np.array([abs(oracle.dot(x, y) - emb.gram(x, y)) for x, y in pairs])
    assert np.median(err) <= D.params.xi / g.n


def test_symmetric_and_deterministic(two_cluster):
    inst, D = two_cluster
    g = inst.graph
    a = spectral_dot_product(g, 3, 500, D)
    assert a == spectral_dot_product(g, 3, 500, D)
    assert abs(a - spectral_dot_product(g, 500, 3, D)) <= 2 * D.params.xi / g.n
    oracle = DotProductOracle(g, D)
    assert oracle.dot(3, 500) == oracle.dot(500, 3)
    assert oracle.dot(3, 500) == pytest.approx(a, rel=1e-9, abs=1e-15)


def test_batch_and_single_embeddings_identical(two_cluster):
    inst, D = two_cluster
    g = inst.graph
    xs = [5, 77, 5, 412]
    assert np.array_equal(D.alpha_batch(g, xs), np.stack([D.alpha(g, x) for x in xs]))
    single = DotProductOracle(g, D)
    batch = DotProductOracle(g, D)
    batch.warm(xs)
    for x in xs:
        assert np.array_equal(single.embedding(x), batch.embedding(x))


def test_query_probe_budget(two_cluster):
    inst, D = two_cluster
    g = inst.graph
    p = D.params
    before = g.probe_counter
    spectral_dot_product(g, 10, 20, D)
    assert 0 < g.probe_counter - before <= 2 * p.m * p.R_query * p.t


@settings(max_examples=30)
@given(st.integers(0, 2**32))
def test_psi_psd(seed):
    # fixture-free so hypothesis can reuse it across examples
    D = _psd_oracle()
    a = np.random.default_rng(seed).standard_normal(D.psi.shape[0])
    assert np.allclose(D.psi, D.psi.T)
    assert a @ D.psi @ a >= -1e-10 * np.linalg.norm(D.psi, 2) * (a @ a)


_CACHE = {}


def _psd_oracle():
    if "D" not in _CACHE:
        inst = generate_clusterable(2, [100, 100], 8, 0.3, seed=4)
        params = OracleParams.desk_scale(200, 2, inst.phi_hat, c_R=1, c_t=5, m=3)
        _CACHE["D"] = initialize_oracle(inst.graph, params, SEED)
    return _CACHE["D"]


def test_serialization_round_trip(two_cluster, tmp_path):
    inst, D = two_cluster
    buf = dumps(D)
    assert buf[:8] == b"SPECORC1"
    E = loads(buf)
    assert dumps(E) == buf
    assert np.array_equal(E.psi, D.psi) and np.array_equal(E.I_S, D.I_S)
    assert E.params == D.params and E.seed == D.seed
    save_oracle(tmp_path / "o.bin", D)
    F = load_oracle(tmp_path / "o.bin")
    assert spectral_dot_product(inst.graph, 1, 2, F) == spectral_dot_product(inst.graph, 1, 2, D)


def test_bad_magic():
    with pytest.raises(ValueError):
        loads(b"NOTANORC" + bytes(200))
