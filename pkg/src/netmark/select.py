"""Sensitive-net selection: cluster nets by trace, score, pick one per cluster."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .netlist import Netlist, NetId, fanin_cone_sizes, immediate_fanin
from .sim import ActivityProfile, TraceMatrix, activity, pack_lanes, unpack_lanes

RAW_ROW_LIMIT = 10_000
SUBSAMPLE_ROWS = 4_096
_CHUNK_CELLS = 1 << 22  # unpacked cells per assignment chunk (~32 MiB as float64)


def trace_distance(trace: TraceMatrix, net_i: NetId, net_j: NetId) -> float:
    """Euclidean distance between two 0/1 trace columns (= sqrt of Hamming)."""
    trace._check_net(net_i)
    trace._check_net(net_j)
    diff = trace.packed[net_i] ^ trace.packed[net_j]
    return math.sqrt(int(np.bitwise_count(diff).sum()))


@dataclass(frozen=True, eq=False)
class ClusterModel:
    k: int
    assignment: np.ndarray  # per net; -1 for excluded (constant) nets
    centroids: np.ndarray  # (k, rows) float64
    iterations_run: int
    seed: int
    distortion_history: tuple[float, ...]
    rows: Optional[np.ndarray] = None  # subsampled row indices, if any

    @property
    def distortion(self) -> float:
        return self.distortion_history[-1]

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster)


def _gather_points(trace: TraceMatrix, nets: np.ndarray, rows: Optional[np.ndarray]) -> np.ndarray:
    """Packed trace words of ``nets``, restricted to ``rows`` when given."""
    words = trace.packed[nets]
    if rows is None:
        return words
    cols = unpack_lanes(words, trace.n_vectors)[:, rows]
    return pack_lanes(cols.T)


def cluster_nets(trace: TraceMatrix, k: int, seed: int, max_iters: int = 100,
                 constant: Optional[np.ndarray] = None) -> ClusterModel:
    """Seeded k-means (k-means++ start, Lloyd iterations) over net trace columns.

    Nets that never toggle are excluded. Empty clusters are refilled with the
    point farthest from its current centroid. Distances are evaluated against
    integer cluster sums so the assignment step is exact and schedule-free.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if constant is None:
        constant = activity(trace).constant
    nets = np.flatnonzero(~np.asarray(constant, dtype=bool))
    if k < 1 or k > len(nets):
        raise ValueError(f"k={k} exceeds the {len(nets)} non-constant nets")
    rng = np.random.default_rng(seed)

    rows = None
    n_rows = trace.n_vectors
    if n_rows > RAW_ROW_LIMIT:
        rows = np.sort(rng.choice(n_rows, size=SUBSAMPLE_ROWS, replace=False))
        n_rows = SUBSAMPLE_ROWS
    packed = _gather_points(trace, nets, rows)
    norms = _kernels.popcount_rows(packed).astype(np.float64)
    n = len(nets)

    centers = _kmeanspp(packed, k, rng)
    # initial assignment: nearest seed point by Hamming distance (exact)
    dist = np.stack([_kernels.hamming_to_row(packed, packed[c]) for c in centers], axis=1)
    assign = np.argmin(dist, axis=1)
    history = []
    chunk = max(1, _CHUNK_CELLS // max(1, n_rows))

    def cluster_sums(assign):
        sums = np.zeros((k, n_rows), dtype=np.float64)
        counts = np.bincount(assign, minlength=k).astype(np.float64)
        for lo in range(0, n, chunk):
            x = unpack_lanes(packed[lo:lo + chunk], n_rows).astype(np.float64)
            onehot = np.zeros((k, x.shape[0]))
            onehot[assign[lo:lo + chunk], np.arange(x.shape[0])] = 1.0
            sums += onehot @ x
        return sums, counts

    def distances(sums, counts):
        # ||x - s/c||^2 = |x| - 2 x.s / c + |s|^2 / c^2, with x.s an exact integer
        safe = np.where(counts > 0, counts, 1.0)
        cnorm = (sums * sums).sum(axis=1) / (safe * safe)
        out = np.empty((n, k))
        for lo in range(0, n, chunk):
            x = unpack_lanes(packed[lo:lo + chunk], n_rows).astype(np.float64)
            out[lo:lo + chunk] = norms[lo:lo + chunk, None] - 2.0 * (x @ sums.T) / safe + cnorm
        out[:, counts == 0] = np.inf
        return np.maximum(out, 0.0)

    sums, counts = cluster_sums(assign)
    assign, sums, counts = _repair_empty(assign, sums, counts, distances, cluster_sums, k)
    d = distances(sums, counts)
    history.append(_distortion(d, assign))
    iters = 0
    for iters in range(1, max_iters + 1):
        new = np.argmin(d, axis=1)
        changed = not np.array_equal(new, assign)
        assign = new
        sums, counts = cluster_sums(assign)
        assign, sums, counts = _repair_empty(assign, sums, counts, distances, cluster_sums, k, d)
        d = distances(sums, counts)
        history.append(_distortion(d, assign))
        if not changed:
            break

    full = np.full(trace.n_nets, -1, dtype=np.int64)
    full[nets] = assign
    centroids = sums / np.where(counts > 0, counts, 1.0)[:, None]
    return ClusterModel(k=k, assignment=full, centroids=centroids, iterations_run=iters,
                        seed=seed, distortion_history=tuple(history), rows=rows)


def _distortion(d, assign):
    return float(d[np.arange(len(assign)), assign].sum())


def _repair_empty(assign, sums, counts, distances, cluster_sums, k, d=None):
    empty = np.flatnonzero(counts == 0)
    if len(empty) == 0:
        return assign, sums, counts
    if d is None:
        d = distances(sums, counts)
    assign = assign.copy()
    own = d[np.arange(len(assign)), assign]
    sizes = np.bincount(assign, minlength=k)
    for e in empty:
        donors = sizes[assign] > 1
        cand = np.flatnonzero(donors)
        # farthest point, lowest index on ties
        p = cand[np.argmax(own[cand])]
        sizes[assign[p]] -= 1
        assign[p] = e
        sizes[e] = 1
        own[p] = -1.0
    sums, counts = cluster_sums(assign)
    return assign, sums, counts


def _kmeanspp(packed: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    """k-means++ seeding with integer D^2 weights (exact, seed-reproducible)."""
    n = packed.shape[0]
    centers = [int(rng.integers(n))]
    best = _kernels.hamming_to_row(packed, packed[centers[0]]).astype(np.int64)
    for _ in range(1, k):
        w = best * best
        total = int(w.sum())
        if total == 0:
            # fewer distinct points than clusters: take the lowest unused index
            chosen = set(centers)
            nxt = next(i for i in range(n) if i not in chosen)
        else:
            r = int(rng.integers(total))
            nxt = int(np.searchsorted(np.cumsum(w), r, side="right"))
        centers.append(nxt)
        best = np.minimum(best, _kernels.hamming_to_row(packed, packed[nxt]))
    return centers


@dataclass(frozen=True)
class NetScore:
    net: NetId
    sw: float
    fanin_norm: float

    @property
    def p(self) -> float:
        return 0.5 * self.sw + 0.5 * self.fanin_norm


@dataclass(frozen=True, eq=False)
class ScoreTable:
    sw: np.ndarray
    fanin_norm: np.ndarray

    @property
    def p(self) -> np.ndarray:
        return 0.5 * self.sw + 0.5 * self.fanin_norm

    def __getitem__(self, net: NetId) -> NetScore:
        return NetScore(int(net), float(self.sw[net]), float(self.fanin_norm[net]))

    def __len__(self):
        return len(self.sw)


def score_nets(netlist: Netlist, activity: ActivityProfile, fanin: str = "cone") -> ScoreTable:
    """Combined score ``0.5*SW + 0.5*fanin/max(fanin)`` for every net.

    ``fanin="cone"`` counts gates in the transitive fan-in; ``"immediate"``
    uses the driving gate's input count instead.
    """
    if fanin == "cone":
        f = np.asarray(fanin_cone_sizes(netlist), dtype=np.float64)
    elif fanin == "immediate":
        f = np.asarray(immediate_fanin(netlist), dtype=np.float64)
    else:
        raise ValueError(f"unknown fanin mode {fanin!r}")
    top = f.max() if len(f) else 0.0
    norm = f / top if top > 0 else np.zeros_like(f)
    sw = np.asarray(activity.sw, dtype=np.float64)
    if len(sw) != netlist.net_count:
        raise ValueError("activity profile does not match netlist")
    return ScoreTable(sw=sw, fanin_norm=norm)


@dataclass(frozen=True, eq=False)
class SensitiveSet:
    nets: tuple[NetId, ...]
    clusters: tuple[int, ...]
    scores: tuple[NetScore, ...]
    seed: int
    k: int
    threshold: float
    skipped_clusters: tuple[int, ...] = ()
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.nets)

    def __iter__(self):
        return iter(self.nets)

    def to_json(self, netlist: Netlist) -> str:
        """Audit export. Schema: ``{"version", "circuit", "k", "threshold",
        "select_seed", "skipped_clusters", "config", "nets": [{"name", "id",
        "cluster", "sw", "fanin_norm", "p"}]}``."""
        doc = {
            "version": 1,
            "circuit": netlist.name,
            "k": self.k,
            "threshold": self.threshold,
            "select_seed": self.seed,
            "skipped_clusters": list(self.skipped_clusters),
            "config": self.extra,
            "nets": [
                {"name": netlist.net_names[n], "id": int(n), "cluster": int(c),
                 "sw": s.sw, "fanin_norm": s.fanin_norm, "p": s.p}
                for n, c, s in zip(self.nets, self.clusters, self.scores)
            ],
        }
        return json.dumps(doc, indent=2) + "\n"


def candidate_pool_size(cluster_size: int, threshold: float) -> int:
    # rounding guards 0.1 * 30 = 3.0000000000000004 against ceil -> 4
    return max(1, math.ceil(round(threshold * cluster_size, 9)))


def select_sensitive(model: ClusterModel, scores: ScoreTable, threshold: float = 0.1,
                     seed: int = 0) -> SensitiveSet:
    """One net per cluster, drawn uniformly from the cluster's top-p pool."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    p = scores.p
    nets, clusters, picked, skipped = [], [], [], []
    for c in range(model.k):
        members = model.members(c)
        if len(members) == 0:
            skipped.append(c)
            continue
        order = members[np.lexsort((members, -p[members]))]
        pool = order[:candidate_pool_size(len(members), threshold)]
        net = int(pool[rng.integers(len(pool))])
        nets.append(net)
        clusters.append(c)
        picked.append(scores[net])
    return SensitiveSet(nets=tuple(nets), clusters=tuple(clusters), scores=tuple(picked),
                        seed=seed, k=model.k, threshold=threshold,
                        skipped_clusters=tuple(skipped))
