"""Command-line interface: ``spectral-oracle <subcommand> ...``.

Output files default to ``$SPECTRAL_ORACLE_OUT`` (or the working directory).
Every JSON artifact carries the seed and, where a run config is involved,
its config hash.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

OUT_ENV = "SPECTRAL_ORACLE_OUT"


def _out_path(name: str | None, default: str) -> Path:
    base = Path(os.environ.get(OUT_ENV, "."))
    return Path(name) if name else base / default


def _emit(obj, path: Path | None = None) -> None:
    from .harness import _plain

    text = json.dumps(_plain(obj), sort_keys=True, indent=1)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")
    print(text)


def _seed(text: str | None):
    from .randomness import Seed

    return Seed.from_hex(text) if text else Seed(1)


def _load_graph(path):
    from .graph import read_graph

    return read_graph(path)


def cmd_gen(args) -> int:
    from .graph import generate_clusterable, write_graph

    sizes = [int(v) for v in args.sizes.split(",")]
    inst = generate_clusterable(args.k, sizes, args.d, args.pcross, args.seed,
                                max_size_ratio=args.max_size_ratio)
    out = _out_path(args.out, "graph.txt")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_graph(out, inst.graph, inst.clusters)
    meta = {key: v for key, v in inst.metadata.items()}
    meta.update(graph=str(out), seed=args.seed, k=args.k, sizes=sizes, d=args.d, p_cross=args.pcross,
                max_size_ratio=args.max_size_ratio)
    _emit(meta, Path(str(out) + ".meta.json"))
    return 0


def cmd_spectrum(args) -> int:
    from .exact import bottom_k_embedding

    g, clusters = _load_graph(args.graph)
    emb = bottom_k_embedding(g, args.k)
    lam = emb.eigenvalues.tolist()
    _emit({"graph": args.graph, "k": args.k, "eigenvalues": lam, "lambda_k": lam[args.k - 1],
           "lambda_k1": lam[args.k], "gap": emb.gap, "degenerate": emb.degenerate,
           "phi_hat": (2 * max(lam[args.k], 0)) ** 0.5})
    return 0


def cmd_walk_stats(args) -> int:
    from .dot_oracle import default_walk_length
    from .randomness import Tag, sample_vertices
    from .walks import walk_stats

    g, _ = _load_graph(args.graph)
    seed = _seed(args.seed)
    t = args.t if args.t is not None else default_walk_length(g.n, args.phi)
    starts = sample_vertices(seed, Tag.WALK_DIAGNOSTIC, args.starts, g.n, replace=False)
    _emit(walk_stats(g, starts, args.R, t, seed))
    return 0


def cmd_init_oracle(args) -> int:
    from .dot_oracle import InitFailure, OracleParams, initialize_oracle, save_oracle

    g, _ = _load_graph(args.graph)
    seed = _seed(args.seed)
    overrides = {key: getattr(args, key) for key in ("t", "R_init", "R_query", "s")
                 if getattr(args, key) is not None}
    params = OracleParams.desk_scale(g.n, args.k, args.phi, delta=args.delta, xi=args.xi, c_R=args.c_R,
                                     c_s=args.c_s, c_t=args.c_t, m=args.m, **overrides)
    try:
        data = initialize_oracle(g, params, seed)
    except InitFailure as exc:
        _emit({"error": str(exc), "eigen_report": exc.eigen_report, "seed": seed.hex})
        return 3
    out = _out_path(args.out, "oracle.bin")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_oracle(out, data)
    _emit({"oracle": str(out), "graph": args.graph, "seed": seed.hex, "init_probes": data.init_probes,
           "eigen_report": data.eigen_report.tolist(), "params": params.__dict__})
    return 0


def cmd_dot(args) -> int:
    from .dot_oracle import load_oracle, spectral_dot_product

    g, _ = _load_graph(args.graph)
    data = load_oracle(args.oracle)
    before = g.probe_counter
    value = spectral_dot_product(g, args.x, args.y, data)
    _emit({"x": args.x, "y": args.y, "dot": value, "n_times_dot": value * g.n,
           "probes": g.probe_counter - before, "seed": data.seed.hex})
    return 0


def _cluster_config(args, g, clusters, data):
    from .clustering import ClusteringConfig
    from .exact import certify_instance
    from .graph import ClusterableInstance

    eps, phi = args.eps_hat, args.phi_hat
    if (eps is None or phi is None) and clusters:
        inst = ClusterableInstance(g, clusters, len(clusters), float("nan"), float("nan"), 0)
        cert = certify_instance(inst)
        eps = cert["eps_hat"] if eps is None else eps
        phi = cert["phi_hat"] if phi is None else phi
    if eps is None or phi is None:
        raise SystemExit("--eps-hat and --phi-hat are required when the graph has no clusters")
    k = data.params.k
    floor = args.size_floor or (min(len(c) for c in clusters) if clusters
                                else g.n / (k * args.max_size_ratio))
    return ClusteringConfig(k=k, eps_hat=eps, phi_hat=phi, size_floor=floor, c_tau=args.c_tau,
                            s1=args.s1, s2=args.s2)


def cmd_find_centers(args) -> int:
    import numpy as np

    from .clustering import SearchFailure, find_centers, save_partition
    from .dot_oracle import DotProductOracle, load_oracle

    g, clusters = _load_graph(args.graph)
    data = load_oracle(args.oracle)
    cfg = _cluster_config(args, g, clusters, data)
    truth = None
    if args.mode == "ground-truth-warmstart":
        truth = np.empty(g.n, dtype=np.int64)
        for i, c in enumerate(clusters):
            truth[c] = i
    oracle = DotProductOracle(g, data)
    try:
        res = find_centers(g, oracle, cfg, args.eta, data.seed, mode=args.mode,
                           sample_size=args.sample_size, ground_truth=truth)
    except SearchFailure as exc:
        _emit({"error": str(exc), "rounds": exc.rounds, "seed": data.seed.hex})
        return 4
    out = _out_path(args.out, "partition.json")
    extra = {"graph": args.graph, "oracle": args.oracle, "seed": data.seed.hex, "round": res.round,
             "candidates_tried": res.candidates_tried, "eps_hat": cfg.eps_hat, "phi_hat": cfg.phi_hat}
    out.parent.mkdir(parents=True, exist_ok=True)
    save_partition(out, res.partition, extra)
    _emit({"partition": str(out), **extra, "stages": [len(t) for t in res.partition.stages],
           "mode": args.mode})
    return 0


def _clustering_oracle(args):
    from .clustering import ClusteringOracle, load_partition
    from .dot_oracle import DotProductOracle, load_oracle

    part, meta = load_partition(args.partition)
    graph = args.graph or meta["graph"]
    g, clusters = _load_graph(graph)
    data = load_oracle(getattr(args, "oracle", None) or meta["oracle"])
    return ClusteringOracle(part, DotProductOracle(g, data), data.seed), g, clusters, meta


def cmd_query(args) -> int:
    co, g, _, meta = _clustering_oracle(args)
    before = g.probe_counter
    label = co.query(args.x)
    _emit({"x": args.x, "label": label, "raw": co.raw_label(args.x), "probes": g.probe_counter - before,
           "seed": co.seed.hex})
    return 0


def cmd_eval(args) -> int:
    import numpy as np

    from .clustering import evaluate_clustering

    co, g, clusters, meta = _clustering_oracle(args)
    if not clusters:
        raise SystemExit("graph file has no ground-truth clusters")
    truth = np.empty(g.n, dtype=np.int64)
    for i, c in enumerate(clusters):
        truth[c] = i
    before = g.probe_counter
    labels = co.sweep()
    rep = evaluate_clustering(labels, truth, co.k, g)
    _emit({**rep.to_json(), "probes": g.probe_counter - before, "seed": co.seed.hex,
           "partition": args.partition}, _out_path(args.out, "eval.json") if args.out else None)
    return 0


def _run_config(args):
    from .harness import RunConfig

    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for key, value in vars(args).items():
        if key.startswith("cfg_") and value is not None:
            setattr(cfg, key[4:], value)
    if cfg.output_dir is None:
        cfg.output_dir = os.environ.get(OUT_ENV, ".")
    return cfg


def cmd_full_pipeline(args) -> int:
    from .harness import cmd_full_pipeline as run

    cfg = _run_config(args)
    report = run(cfg)
    out = Path(args.out) if args.out else Path(cfg.output_dir) / f"report-{cfg.config_hash()}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json() + "\n")
    print(report.to_json())
    if report.error:
        print(f"stage {report.stage} failed: {report.error}", file=sys.stderr)
        return 2
    return 0 if report.passed else 1


def cmd_bench_scaling(args) -> int:
    import csv

    from .harness import cmd_bench_scaling as run

    cfg = _run_config(args)
    rows = run(cfg, [int(v) for v in args.n_list.split(",")], queries=args.queries, phi=args.phi)
    out = Path(args.out) if args.out else Path(cfg.output_dir) / f"scaling-{cfg.config_hash()}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    keys = sorted({key for row in rows for key in row})
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)
    _emit({"config_hash": cfg.config_hash(), "seed": cfg.seed, "rows": rows, "csv": str(out)})
    return 0


def _add_config_flags(p):
    p.add_argument("--config", help="RunConfig JSON file; flags below override it")
    p.add_argument("--k", dest="cfg_k", type=int)
    p.add_argument("--d", dest="cfg_d", type=int)
    p.add_argument("--pcross", dest="cfg_p_cross", type=float)
    p.add_argument("--delta", dest="cfg_delta", type=float)
    p.add_argument("--xi", dest="cfg_xi", type=float)
    p.add_argument("--mode", dest="cfg_mode")
    p.add_argument("--seed", dest="cfg_seed")
    p.add_argument("--threads", dest="cfg_threads", type=int)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spectral-oracle", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a clusterable instance")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--sizes", required=True, help="comma-separated cluster sizes")
    p.add_argument("--d", type=int, default=12)
    p.add_argument("--pcross", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--max-size-ratio", type=float, default=4.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("spectrum", help="exact bottom eigenvalues of the normalized Laplacian")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("walk-stats", help="TV distance of sampled walks to exact distributions")
    p.add_argument("--graph", required=True)
    p.add_argument("--R", type=int, default=100_000)
    p.add_argument("--t", type=int)
    p.add_argument("--phi", type=float, default=0.9)
    p.add_argument("--starts", type=int, default=20)
    p.add_argument("--seed")
    p.set_defaults(func=cmd_walk_stats)

    p = sub.add_parser("init-oracle", help="build and save the dot-product sketch")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--phi", type=float, required=True, help="inner conductance used for the walk length")
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--xi", type=float, default=0.5)
    p.add_argument("--c-R", dest="c_R", type=float, default=1.0)
    p.add_argument("--c-s", dest="c_s", type=float, default=10.0)
    p.add_argument("--c-t", dest="c_t", type=float, default=20.0)
    p.add_argument("--m", type=int, default=5)
    for name in ("t", "R_init", "R_query", "s"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=int)
    p.add_argument("--seed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_init_oracle)

    p = sub.add_parser("dot", help="approximate <f_x, f_y>")
    p.add_argument("--graph", required=True)
    p.add_argument("--oracle", required=True)
    p.add_argument("--x", type=int, required=True)
    p.add_argument("--y", type=int, required=True)
    p.set_defaults(func=cmd_dot)

    p = sub.add_parser("find-centers", help="search for an accepted ordered partition")
    p.add_argument("--graph", required=True)
    p.add_argument("--oracle", required=True)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--mode", choices=["exhaustive", "ground-truth-warmstart"], default="exhaustive")
    p.add_argument("--sample-size", type=int)
    p.add_argument("--eps-hat", type=float)
    p.add_argument("--phi-hat", type=float)
    p.add_argument("--size-floor", type=float)
    p.add_argument("--max-size-ratio", type=float, default=4.0)
    p.add_argument("--c-tau", type=float, default=8.0)
    p.add_argument("--s1", type=int)
    p.add_argument("--s2", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_find_centers)

    p = sub.add_parser("query", help="cluster label of one vertex")
    p.add_argument("--partition", required=True)
    p.add_argument("--x", type=int, required=True)
    p.add_argument("--graph")
    p.add_argument("--oracle")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="sweep all vertices and compare with ground truth")
    p.add_argument("--partition", required=True)
    p.add_argument("--graph")
    p.add_argument("--oracle")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("full-pipeline", help="gen, init, find-centers, sweep, evaluate")
    _add_config_flags(p)
    p.set_defaults(func=cmd_full_pipeline)

    p = sub.add_parser("bench-scaling", help="query/init probe counts across n")
    _add_config_flags(p)
    p.add_argument("--n-list", default="10000,40000")
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--phi", type=float, default=0.9)
    p.set_defaults(func=cmd_bench_scaling)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = getattr(args, "cfg_threads", None)
    if threads:
        # numba reads this once, at import
        os.environ.setdefault("NUMBA_NUM_THREADS", str(threads))
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
