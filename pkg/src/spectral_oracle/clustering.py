"""Clustering oracle: threshold-set membership, staged hyperplane
partitioning, sampled outer-conductance tests, center search, and the
consistent per-vertex query surface."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dot_oracle import DotProductOracle
from .graph import RegularGraph, UsageError, outer_conductance
from .randomness import Tag, as_seed, sample_vertices, uniform_index
from .subspace import (CenterRef, ContextFailure, SubspaceContext, build_subspace, center_vector,
                       identity_context)

THETA = 0.93
UNASSIGNED = 0
INFINITY = math.inf


class CandidateInvalid(RuntimeError):
    """A center set produced a singular subspace Gram matrix."""


class SearchFailure(RuntimeError):
    def __init__(self, message: str, rounds: list[dict]):
        super().__init__(message)
        self.rounds = rounds


@dataclass(frozen=True)
class OrderedPartition:
    stages: tuple[tuple[CenterRef, ...], ...]
    all_centers: tuple[CenterRef, ...]
    mode: str = "exhaustive"

    def __post_init__(self):
        seen = [c for stage in self.stages for c in stage]
        if len(set(seen)) != len(seen):
            raise UsageError("stages must be pairwise disjoint")
        if not set(seen) <= set(self.all_centers):
            raise UsageError("stage centers must come from all_centers")

    @property
    def is_final(self) -> bool:
        return {c for stage in self.stages for c in stage} == set(self.all_centers)

    def label_of(self, center: CenterRef) -> int:
        """1-based label: the center's position in all_centers."""
        return self.all_centers.index(center) + 1

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "centers": [list(c.members) for c in self.all_centers],
            "stages": [[self.all_centers.index(c) for c in stage] for stage in self.stages],
            "stage_members": [[list(c.members) for c in stage] for stage in self.stages],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "OrderedPartition":
        centers = tuple(CenterRef(tuple(m)) for m in obj["centers"])
        stages = tuple(tuple(centers[i] for i in stage) for stage in obj["stages"])
        return cls(stages=stages, all_centers=centers, mode=obj.get("mode", "exhaustive"))


@dataclass(frozen=True)
class ConductanceEstimate:
    value: float
    size_estimate: float
    samples_used: tuple[int, int]
    a: int = 0
    e: int = 0
    note: str = ""

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)


@dataclass(frozen=True)
class ClusteringConfig:
    """Constants of the clustering stage.

    ``eps_hat`` and ``phi_hat`` feed the acceptance threshold
    tau(i) = c_tau * eps_hat * i * ln(k+1) / phi_hat^2; ``size_floor`` is the
    assumed smallest cluster size (candidates estimated below half of it
    are rejected).
    """

    k: int
    eps_hat: float
    phi_hat: float
    size_floor: float
    c_tau: float = 8.0
    s1: int | None = None
    s2: int | None = None
    extra_stages: int = 0
    theta: float = THETA
    s2_cap: int = 4000

    def tau(self, stage: int) -> float:
        return self.c_tau * self.eps_hat * stage * math.log(self.k + 1) / self.phi_hat ** 2

    @property
    def max_stages(self) -> int:
        return max(1, math.ceil(math.log2(self.k))) + self.extra_stages

    def samples(self) -> tuple[int, int]:
        k = self.k
        s1 = self.s1 or max(1, math.ceil(40 * k * max(math.log(k), 1.0)))
        if self.s2:
            return s1, self.s2
        if self.eps_hat > 0:
            s2 = min(self.s2_cap, math.ceil(40 * k * self.phi_hat ** 2 / self.eps_hat))
        else:
            s2 = self.s2_cap
        return s1, s2


# ---------------------------------------------------------------- membership

class StagedMembership:
    """Owner lookup for a partial partition (T_1..T_b) and remaining set S.

    For each vertex x, :meth:`owner` returns the center mu in S with
    IsInside(x, mu, (T_1..T_b), S) = True, or None; IsInside is true for at
    most one center because membership at the final stage is exclusive.
    Stage contexts are built once (the projections are fixed per stage).
    """

    def __init__(self, oracle: DotProductOracle, stages: Sequence[Sequence[CenterRef]],
                 remaining: Sequence[CenterRef], theta: float = THETA, xi_inner: float | None = None):
        self.oracle = oracle
        self.stages = [tuple(t) for t in stages]
        self.remaining = tuple(remaining)
        self.theta = theta
        self._levels = []
        removed: list[CenterRef] = []
        b = len(self.stages)
        for i in range(b + 1):
            # level i: projection removes T_1..T_{i-1}; tested set S_i
            if i < b:
                tested = tuple(c for t in self.stages[i:] for c in t) + self.remaining
                claim = self.stages[i]
            else:
                tested = self.remaining
                claim = self.remaining
            ctx = self._context(removed, xi_inner)
            self._levels.append(_Level(ctx, tested, claim, theta))
            if i < b:
                removed = removed + list(self.stages[i])

    def _context(self, removed, xi_inner) -> SubspaceContext:
        if not removed:
            return identity_context(self.oracle)
        try:
            return build_subspace(self.oracle, removed, xi_inner=xi_inner)
        except ContextFailure as exc:
            raise CandidateInvalid(str(exc)) from exc

    def owner(self, x: int) -> CenterRef | None:
        u = self.oracle.embedding(x)
        for level in self._levels[:-1]:
            if level.claimant(u) is not None:
                return None
        return self._levels[-1].claimant(u)

    def owners(self, xs) -> list[CenterRef | None]:
        xs = np.asarray(xs, dtype=np.int64)
        self.oracle.warm(np.unique(xs))
        return [self.owner(x) for x in xs.tolist()]

    def is_inside(self, x: int, mu: CenterRef) -> bool:
        return self.owner(x) == mu


class _Level:
    def __init__(self, ctx: SubspaceContext, tested, claim, theta):
        self.ctx = ctx
        self.tested = tested
        self.claim = set(claim)
        if tested:
            inner = ctx.inner or ctx.oracle
            self.vectors = np.stack([center_vector(inner, c) for c in tested], axis=1)
            norms = np.array([ctx.project_dot(self.vectors[:, j], self.vectors[:, j])
                              for j in range(len(tested))])
            self.raw_norms = norms
            self.thresholds = theta * np.maximum(norms, 0.0)

    def claimant(self, u: np.ndarray) -> CenterRef | None:
        if not self.tested:
            return None
        scores = self.ctx.project_dot(u, self.vectors)
        hit = np.flatnonzero(scores >= self.thresholds)
        if hit.size == 1 and self.tested[hit[0]] in self.claim:
            return self.tested[hit[0]]
        return None


def is_inside(x: int, mu_hat: CenterRef, stages: Sequence[Sequence[CenterRef]], S: Sequence[CenterRef],
              oracle: DotProductOracle, theta: float = THETA) -> bool:
    """False if an earlier stage claims x; otherwise true iff x passes the
    threshold test for mu_hat and for no other center of S."""
    if mu_hat not in S:
        raise UsageError("mu_hat must belong to S")
    return StagedMembership(oracle, stages, S, theta).is_inside(x, mu_hat)


def hyperplane_partitioning(x: int, partition: OrderedPartition, oracle: DotProductOracle,
                            membership: StagedMembership | None = None) -> int:
    """1-based center label of x, or UNASSIGNED."""
    if not partition.is_final:
        raise UsageError("partition is not final")
    if membership is None:
        membership = final_membership(partition, oracle)
    return _classify(x, membership, partition)


def final_membership(partition: OrderedPartition, oracle: DotProductOracle) -> StagedMembership:
    # with S empty the last level tests nothing, so each earlier level claims
    # exclusively among S_i = T_i u T_{i+1} u ...
    return StagedMembership(oracle, partition.stages, (), THETA)


def _classify(x: int, membership: StagedMembership, partition: OrderedPartition) -> int:
    u = membership.oracle.embedding(x)
    for level in membership._levels[:-1]:
        c = level.claimant(u)
        if c is not None:
            return partition.label_of(c)
    return UNASSIGNED


# ------------------------------------------------------- outer conductance

def outer_conductance_core(g: RegularGraph, inside: Callable[[int], bool], n_samples: tuple[int, int],
                           size_gate: float, seed, context: tuple[int, ...] = ()) -> ConductanceEstimate:
    """Two-phase sampled estimate for the set {x : inside(x)}.

    Phase 1 estimates the size from s1 uniform vertices and returns
    INFINITY below ``size_gate``; phase 2 draws s2 uniform vertices and,
    for those inside, one uniform neighbor each, and returns the fraction
    of those neighbors that fall outside.
    """
    s1, s2 = n_samples
    if s1 < 1 or s2 < 1:
        raise UsageError("s1 and s2 must be >= 1")
    seed = as_seed(seed)
    n = g.n
    xs = sample_vertices(seed, Tag.CONDUCTANCE, s1, n, context=context + (1,))
    cnt = sum(1 for x in xs.tolist() if inside(x))
    size = n / s1 * cnt
    if size < size_gate:
        return ConductanceEstimate(INFINITY, size, (s1, s2), note="size below floor")
    xs = sample_vertices(seed, Tag.CONDUCTANCE, s2, n, context=context + (2,))
    a = e = 0
    for j, x in enumerate(xs.tolist()):
        slot = uniform_index(seed, Tag.CONDUCTANCE, g.d, *context, 3, j)
        y = g.neighbor(x, slot)
        if inside(x):
            a += 1
            if not inside(y):
                e += 1
    if a == 0:
        return ConductanceEstimate(INFINITY, size, (s1, s2), note="no phase-2 sample inside")
    return ConductanceEstimate(e / a, size, (s1, s2), a=a, e=e)


def outer_conductance_estimate(g: RegularGraph, mu_hat: CenterRef, stages, S, s1: int, s2: int,
                               oracle: DotProductOracle, seed, size_floor: float,
                               context: tuple[int, ...] = (), membership: StagedMembership | None = None
                               ) -> ConductanceEstimate:
    """Sampled outer conductance of the candidate cluster of mu_hat."""
    if membership is None:
        membership = StagedMembership(oracle, stages, S)
    cache: dict[int, bool] = {}

    def inside(x: int) -> bool:
        v = cache.get(x)
        if v is None:
            v = cache[x] = membership.owner(x) == mu_hat
        return v

    _warm_samples(g, oracle, seed, (s1, s2), context)
    return outer_conductance_core(g, inside, (s1, s2), size_floor / 2.0, seed, context)


def _warm_samples(g, oracle, seed, n_samples, context):
    """Batch the query walks for every vertex the estimator will touch."""
    s1, s2 = n_samples
    seed = as_seed(seed)
    xs1 = sample_vertices(seed, Tag.CONDUCTANCE, s1, g.n, context=context + (1,))
    xs2 = sample_vertices(seed, Tag.CONDUCTANCE, s2, g.n, context=context + (2,))
    ys = [int(g.slots[x, uniform_index(seed, Tag.CONDUCTANCE, g.d, *context, 3, j)])
          for j, x in enumerate(xs2.tolist())]
    oracle.warm(np.unique(np.concatenate([xs1, xs2, np.asarray(ys, dtype=np.int64)])))


def compute_ordered_partition(g: RegularGraph, centers: Sequence[CenterRef], oracle: DotProductOracle,
                              cfg: ClusteringConfig, seed, context: tuple[int, ...] = ()
                              ) -> tuple[bool, OrderedPartition | None, list[dict]]:
    """Stage-wise acceptance of centers whose candidate clusters have small
    estimated outer conductance.  Returns (accepted, partition, log)."""
    centers = tuple(centers)
    if len(set(centers)) != len(centers):
        return False, None, [{"error": "duplicate centers"}]
    s1, s2 = cfg.samples()
    S = list(centers)
    stages: list[tuple[CenterRef, ...]] = []
    log = []
    for i in range(1, cfg.max_stages + 1):
        try:
            membership = StagedMembership(oracle, stages, S, cfg.theta)
        except CandidateInvalid as exc:
            log.append({"stage": i, "error": str(exc)})
            return False, None, log
        T_i = []
        for mu in S:
            j = centers.index(mu)
            est = outer_conductance_estimate(g, mu, stages, S, s1, s2, oracle, seed, cfg.size_floor,
                                             context=context + (i, j), membership=membership)
            passed = est.value <= cfg.tau(i)
            log.append({"stage": i, "center": j, "psi": est.value, "size": est.size_estimate,
                        "tau": cfg.tau(i), "passed": passed})
            if passed:
                T_i.append(mu)
        S = [c for c in S if c not in T_i]
        stages.append(tuple(T_i))
        if not S:
            stages = [t for t in stages if t]
            return True, OrderedPartition(tuple(stages), centers), log
    return False, None, log


# ------------------------------------------------------------ center search

def restricted_growth_strings(s: int, k: int) -> Iterator[tuple[int, ...]]:
    """Set partitions of range(s) into exactly k nonempty blocks, as
    restricted growth strings in lexicographic order."""
    if k < 1 or s < k:
        return
    a = [0] * s

    def rec(i: int, used: int):
        if s - i < k - used:
            return
        if i == s:
            if used == k:
                yield tuple(a)
            return
        for v in range(min(used + 1, k)):
            a[i] = v
            yield from rec(i + 1, max(used, v + 1))

    yield from rec(0, 0)


def exhaustive_sample_cap(k: int, budget: int) -> int:
    if k <= 1:
        return budget
    return int(math.floor(math.log(budget) / math.log(k) + 1e-12))


@dataclass
class SearchResult:
    partition: OrderedPartition
    round: int
    candidates_tried: int
    log: list[dict] = field(default_factory=list)


def find_centers(g: RegularGraph, oracle: DotProductOracle, cfg: ClusteringConfig, eta: float, seed,
                 mode: str = "exhaustive", sample_size: int | None = None, budget: int = 200_000,
                 ground_truth: np.ndarray | None = None, max_candidates: int | None = None) -> SearchResult:
    """Try ceil(log2(2/eta)) sampled rounds; return the first accepted
    ordered partition."""
    seed = as_seed(seed)
    k = cfg.k
    if mode not in ("exhaustive", "ground-truth-warmstart"):
        raise UsageError(f"unknown mode {mode!r}")
    if mode == "ground-truth-warmstart" and ground_truth is None:
        raise UsageError("warmstart mode needs ground-truth labels")
    rounds = max(1, math.ceil(math.log2(2.0 / eta)))
    if mode == "exhaustive":
        cap = exhaustive_sample_cap(k, budget)
        size = min(sample_size or cap, cap, g.n)
    else:
        size = min(sample_size or 20 * k, g.n)
    if size < k:
        raise UsageError(f"sample size {size} smaller than k={k}")
    diagnostics = []
    tried = 0
    for r in range(rounds):
        S = sample_vertices(seed, Tag.SAMPLE_S, size, g.n, replace=False, context=(r,))
        oracle.warm(S)
        if mode == "exhaustive":
            labelings = restricted_growth_strings(size, k)
        else:
            labelings = _warmstart_labelings(S, ground_truth, k)
        for c, lab in enumerate(labelings):
            if max_candidates is not None and tried >= max_candidates:
                break
            tried += 1
            lab = np.asarray(lab)
            centers = tuple(CenterRef.of(S[lab == i]) for i in range(k))
            ok, part, log = compute_ordered_partition(g, centers, oracle, cfg, seed, context=(r, c))
            if ok:
                part = OrderedPartition(part.stages, part.all_centers, mode=mode)
                return SearchResult(part, r, tried, log)
        diagnostics.append({"round": r, "sample": S.tolist(), "candidates": tried})
    raise SearchFailure(f"no candidate accepted in {rounds} rounds", diagnostics)


def _warmstart_labelings(S: np.ndarray, ground_truth: np.ndarray, k: int):
    """The sample's true labels, then single-vertex moves as perturbations."""
    base = np.asarray(ground_truth)[S]
    present = np.unique(base)
    if present.size < k:
        return
    yield tuple(base.tolist())
    for j in range(S.size):
        moved = base.copy()
        moved[j] = (moved[j] + 1) % k
        if np.unique(moved).size == k:
            yield tuple(moved.tolist())


# ------------------------------------------------------------- query surface

class ClusteringOracle:
    """Consistent per-vertex labels for an accepted ordered partition.

    Vertices no stage claims get a uniform label from a hash of
    (seed, x), so every answer is a pure function of the graph, the seed,
    and x.
    """

    def __init__(self, partition: OrderedPartition, oracle: DotProductOracle, seed):
        if not partition.is_final:
            raise UsageError("partition is not final")
        self.partition = partition
        self.oracle = oracle
        self.seed = as_seed(seed)
        self.k = len(partition.all_centers)
        self.membership = final_membership(partition, oracle)

    def raw_label(self, x: int) -> int:
        return _classify(x, self.membership, self.partition)

    def query(self, x: int) -> int:
        lab = self.raw_label(x)
        if lab == UNASSIGNED:
            lab = uniform_index(self.seed, Tag.TIE_BREAK, self.k, int(x)) + 1
        return lab

    def sweep(self, xs=None, batch: int = 4096) -> np.ndarray:
        xs = np.arange(self.oracle.n) if xs is None else np.asarray(xs, dtype=np.int64)
        out = np.empty(xs.size, dtype=np.int64)
        for a in range(0, xs.size, batch):
            chunk = xs[a:a + batch]
            self.oracle.warm(np.unique(chunk))
            out[a:a + batch] = [self.query(x) for x in chunk.tolist()]
        return out


def assign_query(x: int, partition: OrderedPartition, oracle: DotProductOracle, seed) -> int:
    return ClusteringOracle(partition, oracle, seed).query(x)


# ----------------------------------------------------------------- evaluation

@dataclass
class EvaluationReport:
    ratios: list[float]
    permutation: list[int]  # ground-truth cluster i -> output label permutation[i] (1-based)
    sizes: list[int]
    output_sizes: list[int]
    conductances: list[float] = field(default_factory=list)

    @property
    def max_ratio(self) -> float:
        return max(self.ratios)

    def to_json(self) -> dict:
        return {"ratios": self.ratios, "max_ratio": self.max_ratio, "permutation": self.permutation,
                "sizes": self.sizes, "output_sizes": self.output_sizes, "conductances": self.conductances}


def evaluate_clustering(labels, ground_truth, k: int | None = None, g: RegularGraph | None = None
                        ) -> EvaluationReport:
    """Permutation minimizing max_i |C_i sym-diff C'_pi(i)| / |C_i|.

    ``labels`` are 1-based output labels; ``ground_truth`` are 0-based
    cluster ids.  Missing labels are padded as empty clusters.
    """
    labels = np.asarray(labels, dtype=np.int64)
    truth = np.asarray(ground_truth, dtype=np.int64)
    if labels.shape != truth.shape:
        raise UsageError("labels and ground truth differ in length")
    if labels.size and labels.min() < 1:
        raise UsageError("labels must be resolved (1-based) before evaluation")
    k_true = int(truth.max()) + 1
    k = max(k or 0, k_true, int(labels.max(initial=0)))
    sizes = np.bincount(truth, minlength=k)[:k_true]
    out_sizes = np.bincount(labels - 1, minlength=k)[:k]
    overlap = np.zeros((k_true, k), dtype=np.int64)
    np.add.at(overlap, (truth, labels - 1), 1)
    # |C_i sym-diff C'_j| = |C_i| + |C'_j| - 2 |C_i & C'_j|
    cost = (sizes[:, None] + out_sizes[None, :] - 2 * overlap) / sizes[:, None]
    perm = _bottleneck_assignment(cost)
    ratios = [float(cost[i, perm[i]]) for i in range(k_true)]
    report = EvaluationReport(ratios=ratios, permutation=[int(p) + 1 for p in perm],
                              sizes=sizes.tolist(), output_sizes=out_sizes.tolist())
    if g is not None:
        report.conductances = [outer_conductance(g, np.flatnonzero(labels == j + 1))
                               if out_sizes[j] else 0.0 for j in perm]
    return report


def _bottleneck_assignment(cost: np.ndarray) -> np.ndarray:
    """Assignment minimizing the maximum cost; ties broken by total cost."""
    values = np.unique(cost)
    lo, hi = 0, values.size - 1
    best = None
    while lo <= hi:
        mid = (lo + hi) // 2
        mask = cost <= values[mid]
        big = cost.sum() + 1.0
        trial = np.where(mask, cost, big)
        rows, cols = linear_sum_assignment(trial)
        if mask[rows, cols].all():
            best = cols.copy()
            hi = mid - 1
        else:
            lo = mid + 1
    return best


# ------------------------------------------------------------ serialization

def save_partition(path, partition: OrderedPartition, extra: dict | None = None) -> None:
    obj = partition.to_json()
    if extra:
        obj.update(extra)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)


def load_partition(path) -> tuple[OrderedPartition, dict]:
    with open(path) as fh:
        obj = json.load(fh)
    return OrderedPartition.from_json(obj), obj
