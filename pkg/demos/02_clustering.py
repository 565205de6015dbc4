"""End to end: generate, build the sketch, search for centers, label every
vertex through the query surface, and score against the planted clusters.
"""

from spectral_oracle.harness import RunConfig, cmd_full_pipeline

cfg = RunConfig(k=3, sizes=[800, 800, 800], p_cross=0.3, gen_seed=3, seed="5eed")
art = {}
rep = cmd_full_pipeline(cfg, art)

inst = rep.instance
print(f"n={inst['n']}  k={inst['k']}  eps_hat={inst['eps_hat']:.4f}  phi_hat={inst['phi_hat']:.3f}")
print(f"search: mode={rep.search['mode']}  stages={rep.search['stages']}  "
      f"candidates tried={rep.search['candidates_tried']}")
print(f"probes: init={rep.probes['init']:,}  per vertex={rep.probes['per_vertex']:,.0f}")

print("\ncluster  sym-diff/|C|  output conductance  true conductance")
for i, (r, c, e) in enumerate(zip(rep.ratios, rep.conductances, rep.exact_conductances)):
    print(f"{i:>7}  {r:12.4f}  {c:18.4f}  {e:16.4f}")
print(f"\nthreshold {rep.threshold:.3f}: {'passed' if rep.passed else 'missed'}")
print("dot error quantiles (units of 1/n):",
      {key: round(v, 3) for key, v in rep.dot_error_quantiles.items()})

# one vertex, queried on its own against a fresh oracle
from spectral_oracle.clustering import ClusteringOracle
from spectral_oracle.dot_oracle import DotProductOracle

g = art["instance"].graph
co = ClusteringOracle(art["partition"], DotProductOracle(g, art["oracle_data"]), art["oracle_data"].seed)
members = {m for c in art["partition"].all_centers for m in c.members}
x = next(v for v in range(1234, g.n) if v not in members)  # center members are already cached
before = g.probe_counter
label = co.query(x)
print(f"\nvertex {x} -> label {label} (swept label {art['labels'][x]}), {g.probe_counter - before:,} probes")
