"""Run configuration, metrics reports, and the end-to-end experiments
(full pipeline, probe scaling)."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .clustering import (ClusteringConfig, ClusteringOracle, SearchFailure, evaluate_clustering,
                         find_centers)
from .dot_oracle import DotProductOracle, InitFailure, OracleParams, initialize_oracle, spectral_dot_product
from .exact import DENSE_LIMIT, bottom_k_embedding
from .graph import ClusterableInstance, GenerationError, disjoint_cliques, generate_clusterable
from .randomness import Tag, as_seed, sample_vertices

# fields that change how a run executes but not what it computes
RUNTIME_FIELDS = ("threads", "output_dir")


@dataclass
class RunConfig:
    # instance
    generator: str = "clusterable"  # or "cliques"
    k: int = 3
    sizes: list[int] = field(default_factory=lambda: [1000, 1000, 1000])
    d: int = 12
    p_cross: float = 0.3
    gen_seed: int = 1
    max_size_ratio: float = 4.0
    lambda_floor: float = 0.05
    # oracle
    delta: float = 0.5
    xi: float = 0.5
    c_R: float = 1.0
    c_s: float = 10.0
    c_t: float = 5.0
    m: int = 5
    phi: float | None = None  # walk-length parameter; None = certified phi_hat
    t: int | None = None
    R_init: int | None = None
    R_query: int | None = None
    s: int | None = None
    # clustering
    c_tau: float = 8.0
    s1: int | None = None
    s2: int | None = None
    eta: float = 0.1
    mode: str = "ground-truth-warmstart"
    sample_size: int | None = None
    extra_stages: int = 0
    size_floor: float | None = None  # None = smallest ground-truth cluster
    # evaluation
    max_ratio: float | None = None  # None = max(0.05, 10 eps log k / phi^3)
    dot_pairs: int = 200
    # run
    seed: str = "0" * 31 + "1"
    threads: int | None = None
    output_dir: str | None = None

    def semantic_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in RUNTIME_FIELDS:
            d.pop(key)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class MetricsReport:
    config: dict
    config_hash: str
    seed: str
    stage: str
    passed: bool
    instance: dict = field(default_factory=dict)
    ratios: list[float] = field(default_factory=list)
    conductances: list[float] = field(default_factory=list)
    exact_conductances: list[float] = field(default_factory=list)
    dot_error_quantiles: dict = field(default_factory=dict)
    probes: dict = field(default_factory=dict)
    threshold: float | None = None
    search: dict = field(default_factory=dict)
    error: str | None = None
    wall_clock: float = 0.0

    def to_dict(self, include_wall_clock: bool = True) -> dict:
        d = dataclasses.asdict(self)
        if not include_wall_clock:
            d.pop("wall_clock")
        return d

    def to_json(self, include_wall_clock: bool = True) -> str:
        return json.dumps(_plain(self.to_dict(include_wall_clock)), sort_keys=True, indent=1)


def _plain(obj: Any):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    return obj


def build_instance(cfg: RunConfig) -> ClusterableInstance:
    if cfg.generator == "cliques":
        return disjoint_cliques(cfg.sizes, cfg.d)
    if cfg.generator == "clusterable":
        return generate_clusterable(cfg.k, cfg.sizes, cfg.d, cfg.p_cross, cfg.gen_seed,
                                    max_size_ratio=cfg.max_size_ratio, lambda_floor=cfg.lambda_floor,
                                    certify=sum(cfg.sizes) <= DENSE_LIMIT)
    raise ValueError(f"unknown generator {cfg.generator!r}")


def oracle_params(cfg: RunConfig, n: int, phi: float) -> OracleParams:
    overrides = {key: getattr(cfg, key) for key in ("t", "R_init", "R_query", "s")
                 if getattr(cfg, key) is not None}
    return OracleParams.desk_scale(n, cfg.k, phi, delta=cfg.delta, xi=cfg.xi, c_R=cfg.c_R, c_s=cfg.c_s,
                                   c_t=cfg.c_t, m=cfg.m, **overrides)


def recovery_threshold(eps_hat: float, phi_hat: float, k: int) -> float:
    return max(0.05, 10.0 * eps_hat * math.log(k) / phi_hat ** 3)


def set_threads(threads: int | None) -> None:
    if threads is None:
        return
    import numba

    numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))


def cmd_full_pipeline(cfg: RunConfig, artifacts: dict | None = None) -> MetricsReport:
    """gen -> init -> find-centers -> sweep -> evaluate against the exact
    baseline.  ``passed`` iff every stage ran and max ratio <= threshold.

    If ``artifacts`` is a dict it receives the instance, oracle data,
    partition and swept labels as they are produced."""
    if artifacts is None:
        artifacts = {}
    set_threads(cfg.threads)
    start = time.perf_counter()
    seed = as_seed(cfg.seed)
    report = MetricsReport(config=cfg.semantic_dict(), config_hash=cfg.config_hash(), seed=seed.hex,
                           stage="gen", passed=False)
    try:
        inst = build_instance(cfg)
        g = inst.graph
        md = inst.metadata
        artifacts["instance"] = inst
        report.instance = {"n": g.n, "d": g.d, "k": inst.k, "sizes": [len(c) for c in inst.clusters],
                           **{key: md[key] for key in ("eps_hat", "phi_hat", "lambda_k", "lambda_k1")
                              if key in md}}
        report.exact_conductances = list(md["outer_conductance"])
        phi = cfg.phi or md["phi_hat"]

        report.stage = "init"
        params = oracle_params(cfg, g.n, phi)
        data = initialize_oracle(g, params, seed)
        oracle = DotProductOracle(g, data)
        artifacts["oracle_data"] = data
        report.probes["init"] = data.init_probes
        report.instance["oracle_params"] = dataclasses.asdict(params)
        report.instance["eigen_report"] = data.eigen_report.tolist()

        report.stage = "find-centers"
        ccfg = ClusteringConfig(k=cfg.k, eps_hat=md["eps_hat"], phi_hat=md["phi_hat"],
                                size_floor=cfg.size_floor or inst.min_cluster_size, c_tau=cfg.c_tau,
                                s1=cfg.s1, s2=cfg.s2, extra_stages=cfg.extra_stages)
        before = g.probe_counter
        result = find_centers(g, oracle, ccfg, cfg.eta, seed, mode=cfg.mode, sample_size=cfg.sample_size,
                              ground_truth=inst.labels)
        report.probes["find_centers"] = g.probe_counter - before
        artifacts["partition"] = result.partition
        report.search = {"round": result.round, "candidates_tried": result.candidates_tried,
                         "mode": cfg.mode, "stages": [len(t) for t in result.partition.stages],
                         "log": result.log}

        report.stage = "sweep"
        before = g.probe_counter
        labels = ClusteringOracle(result.partition, oracle, seed).sweep()
        report.probes["sweep"] = g.probe_counter - before
        artifacts["labels"] = labels
        report.probes["per_vertex"] = report.probes["sweep"] / g.n

        report.stage = "evaluate"
        ev = evaluate_clustering(labels, inst.labels, cfg.k, g)
        report.ratios = ev.ratios
        report.conductances = ev.conductances
        if g.n <= DENSE_LIMIT and cfg.dot_pairs > 0:
            report.dot_error_quantiles = dot_error_quantiles(inst, oracle, seed, cfg.dot_pairs)
        eps_hat, phi_hat = md["eps_hat"], md["phi_hat"]
        report.threshold = cfg.max_ratio if cfg.max_ratio is not None else recovery_threshold(
            eps_hat, phi_hat, cfg.k)
        report.stage = "done"
        report.passed = ev.max_ratio <= report.threshold
    except (GenerationError, InitFailure, SearchFailure, ValueError) as exc:
        report.error = f"{type(exc).__name__}: {exc}"
    report.wall_clock = time.perf_counter() - start
    return report


def dot_error_quantiles(inst: ClusterableInstance, oracle: DotProductOracle, seed, pairs: int) -> dict:
    """Quantiles of n * |<f_x,f_y>_apx - <f_x,f_y>| over sampled pairs."""
    g = inst.graph
    emb = bottom_k_embedding(g, inst.k)
    xs = sample_vertices(seed, Tag.SAMPLE_S, pairs, g.n, context=(0xD07, 1))
    ys = sample_vertices(seed, Tag.SAMPLE_S, pairs, g.n, context=(0xD07, 2))
    apx = np.array([oracle.dot(x, y) for x, y in zip(xs.tolist(), ys.tolist())])
    exact = np.einsum("ij,ij->j", emb.F[:, xs], emb.F[:, ys])
    err = np.abs(apx - exact) * g.n
    return {f"q{int(q * 100)}": float(np.quantile(err, q)) for q in (0.5, 0.9, 0.99)} | {
        "max": float(err.max()), "frac_within_xi": float(np.mean(err <= oracle.data.params.xi))}


def cmd_bench_scaling(cfg: RunConfig, n_list: list[int], queries: int = 100, phi: float = 0.9) -> list[dict]:
    """Probe counts per n at the configured delta; ratios between
    consecutive n.  ``phi`` fixes the walk length parameter across n."""
    set_threads(cfg.threads)
    seed = as_seed(cfg.seed)
    rows = []
    for n in n_list:
        sizes = [n // cfg.k] * cfg.k
        sizes[-1] += n - sum(sizes)
        try:
            inst = generate_clusterable(cfg.k, sizes, cfg.d, cfg.p_cross, cfg.gen_seed,
                                        max_size_ratio=cfg.max_size_ratio, certify=False)
        except GenerationError as exc:
            raise GenerationError(f"n={n}: {exc}") from exc
        g = inst.graph
        params = oracle_params(cfg, n, cfg.phi or phi)
        data = initialize_oracle(g, params, seed)
        xs = sample_vertices(seed, Tag.SAMPLE_S, queries, n, context=(0xBE, 1))
        ys = sample_vertices(seed, Tag.SAMPLE_S, queries, n, context=(0xBE, 2))
        before = g.probe_counter
        for x, y in zip(xs.tolist(), ys.tolist()):
            spectral_dot_product(g, x, y, data)
        q = (g.probe_counter - before) / queries
        rows.append({"n": n, "delta": params.delta, "t": params.t, "R_init": params.R_init,
                     "R_query": params.R_query, "s": params.s, "m": params.m,
                     "init_probes": data.init_probes, "query_probes": q,
                     "init_per_n_pow": data.init_probes / n ** (1 - params.delta)})
    for prev, row in zip(rows, rows[1:]):
        row["query_ratio"] = row["query_probes"] / prev["query_probes"]
        row["init_ratio"] = row["init_probes"] / prev["init_probes"]
        row["init_ratio_normalized"] = row["init_per_n_pow"] / prev["init_per_n_pow"]
    return rows


def replay_matches(a: MetricsReport, b: MetricsReport) -> bool:
    return a.to_json(include_wall_clock=False) == b.to_json(include_wall_clock=False)

