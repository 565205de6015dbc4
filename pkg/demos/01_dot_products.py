"""Oracle dot products against the exact spectral embedding.

Builds a three-cluster graph, initializes the sketch, and compares
n * <f_x, f_y> from walks with the exact value for a handful of pairs
inside and across clusters.
"""

import numpy as np

from spectral_oracle.dot_oracle import DotProductOracle, OracleParams, initialize_oracle
from spectral_oracle.exact import bottom_k_embedding
from spectral_oracle.graph import generate_clusterable
from spectral_oracle.randomness import Seed

inst = generate_clusterable(3, [600, 600, 600], 12, 0.1, seed=7)
g = inst.graph
print(f"n={g.n}  eps_hat={inst.eps_hat:.4f}  phi_hat={inst.phi_hat:.3f}")

params = OracleParams.desk_scale(g.n, 3, inst.phi_hat, c_R=1, c_t=10, m=5)
data = initialize_oracle(g, params, Seed(42))
print(f"s={params.s}  t={params.t}  R_init={params.R_init}  R_query={params.R_query}  "
      f"init probes={data.init_probes:,}")

oracle = DotProductOracle(g, data)
emb = bottom_k_embedding(g, 3)

# same-cluster pairs sit near n/|C| = 3, cross pairs near 0
pairs = [(0, 1), (5, 400), (700, 1100), (1300, 1799), (0, 700), (650, 1500), (10, 1700)]
print(f"\n{'x':>5} {'y':>5} {'n*apx':>8} {'n*exact':>8} {'n*|err|':>8}")
for x, y in pairs:
    before = g.probe_counter
    apx = oracle.dot(x, y)
    exact = emb.F[:, x] @ emb.F[:, y]
    used = g.probe_counter - before
    # per-vertex vectors are cached, so repeated endpoints cost nothing
    print(f"{x:>5} {y:>5} {g.n * apx:8.3f} {g.n * exact:8.3f} {g.n * abs(apx - exact):8.3f}"
          f"   ({f'{used:,} probes' if used else 'cached'})")

rng = np.random.default_rng(0)
xs, ys = rng.integers(g.n, size=300), rng.integers(g.n, size=300)
oracle.warm(np.unique(np.concatenate([xs, ys])))
err = np.array([abs(oracle.dot(x, y) - emb.F[:, x] @ emb.F[:, y]) for x, y in zip(xs, ys)]) * g.n
print(f"\n300 random pairs: {np.mean(err <= params.xi):.1%} within xi/n, median n*err {np.median(err):.3f}")
