"""How query and preprocessing cost grow with n at delta = 1/2.

Query walks scale like n^delta and preprocessing like n^(1-delta), up to
the ln n growth of the walk length.
"""

from spectral_oracle.harness import RunConfig, cmd_bench_scaling

rows = cmd_bench_scaling(RunConfig(k=2, p_cross=0.3, c_t=5), [5000, 10_000, 20_000], queries=50)
print(f"{'n':>7} {'t':>4} {'R_query':>8} {'query probes':>13} {'init probes':>13} {'ratio':>6}")
for row in rows:
    ratio = row.get("query_ratio")
    print(f"{row['n']:>7} {row['t']:>4} {row['R_query']:>8} {row['query_probes']:>13,.0f} "
          f"{row['init_probes']:>13,} {'' if ratio is None else f'{ratio:6.3f}'}")
print("\nsqrt(2) = 1.414 per doubling; the rest is the walk length growing with ln n")
