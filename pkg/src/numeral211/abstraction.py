"""Abstraction maps: KrwEmd and EHS clustering, plus passthrough partitions.

An AbstractionMap sends each canonical observation index of a phase to a
bucket id.  KrwEmd clusters the recall-winrate classes of a phase under
the phase-weighted EMD (k-means++ seeding, Lloyd iterations, weighted
mean centroids); EHS is 1-D k-means on scalar equity; passthrough maps
reuse an isomorphism partition unchanged.

Clustering runs in the line-metric CDF embedding where the weighted EMD
is exactly the cityblock distance and the mean centroid commutes with
the embedding, so no per-pair LP solves are needed (see emd.py).  A
non-default ground matrix falls back to a direct LP path that is only
meant for small ablations.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .emd import check_phase_weights, emd_exact, is_line_metric, line_embedding
from .features import FeatureSet
from .signal_index import SignalIndex

CDIST_CHUNK = 2_000_000  # target elements per distance block


@dataclass
class AbstractionMap:
    """Per-phase observation-to-bucket assignment with provenance metadata."""

    phases: dict[int, np.ndarray]
    meta: dict = field(default_factory=dict)

    def bucket_count(self, phase: int) -> int:
        return int(self.phases[phase].max()) + 1

    def bucket_of(self, phase: int, key_index: int) -> int:
        return int(self.phases[phase][key_index])

    def validate(self, index: SignalIndex) -> None:
        for phase, assign in self.phases.items():
            if len(assign) != index.count(phase):
                raise ValueError(f"phase {phase}: map does not cover every key")
            n = self.bucket_count(phase)
            occ = np.bincount(assign, minlength=n)
            if assign.min() < 0 or np.any(occ == 0):
                raise ValueError(f"phase {phase}: bucket ids not dense and occupied")

    def merged_with(self, other: "AbstractionMap") -> "AbstractionMap":
        overlap = set(self.phases) & set(other.phases)
        if overlap:
            raise ValueError(f"phases defined twice: {sorted(overlap)}")
        phases = dict(self.phases)
        phases.update(other.phases)
        meta = {"parts": [self.meta, other.meta]}
        return AbstractionMap(phases, meta)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for phase in sorted(self.phases):
            h.update(struct.pack("<B", phase))
            h.update(np.ascontiguousarray(self.phases[phase], dtype=np.int32).tobytes())
        return h.hexdigest()

    # -- persistence: binary map + JSON sidecar ----------------------------

    MAGIC = b"N211ABSM"
    VERSION = 1

    def save(self, path) -> None:
        path = str(path)
        with open(path, "wb") as f:
            f.write(self.MAGIC)
            f.write(struct.pack("<IB", self.VERSION, len(self.phases)))
            for phase in sorted(self.phases):
                arr = np.ascontiguousarray(self.phases[phase], dtype=np.uint32)
                f.write(struct.pack("<BIQ", phase, self.bucket_count(phase), len(arr)))
                f.write(arr.tobytes())
        with open(path + ".json", "w") as f:
            json.dump(self.meta, f, sort_keys=True, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "AbstractionMap":
        path = str(path)
        phases = {}
        with open(path, "rb") as f:
            if f.read(8) != cls.MAGIC:
                raise ValueError(f"{path}: not an abstraction map")
            version, n_phases = struct.unpack("<IB", f.read(5))
            if version != cls.VERSION:
                raise ValueError(f"{path}: unsupported version {version}")
            for _ in range(n_phases):
                phase, buckets, count = struct.unpack("<BIQ", f.read(13))
                arr = np.frombuffer(f.read(4 * count), dtype="<u4").astype(np.int32)
                if arr.max() + 1 != buckets:
                    raise ValueError(f"{path}: bucket count mismatch in phase {phase}")
                phases[phase] = arr
        try:
            with open(path + ".json") as f:
                meta = json.load(f)
        except FileNotFoundError:
            meta = {}
        return cls(phases, meta)


# ---------------------------------------------------------------------------
# Weighted k-means with cityblock distance in an embedding space.


def _weighted_pick(rng: np.random.Generator, mass: np.ndarray) -> int:
    total = mass.sum()
    if total <= 0:
        raise ValueError("no remaining probability mass to sample from")
    r = rng.random() * total
    return int(min(np.searchsorted(np.cumsum(mass), r, side="right"), len(mass) - 1))


def _min_dist_to(points: np.ndarray, centroid: np.ndarray, running: np.ndarray) -> None:
    np.minimum(running, np.abs(points - centroid[None, :]).sum(axis=1), out=running)


def kmeanspp_seed(points: np.ndarray, weights: np.ndarray, k: int, rng_seed: int) -> np.ndarray:
    """k-means++ centroid rows: first pick weight-uniform, then weight x D^2."""
    points = np.asarray(points, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    distinct = len(np.unique(points, axis=0))
    if k > distinct:
        raise ValueError(f"k={k} exceeds {distinct} distinct points")
    rng = np.random.default_rng(rng_seed)
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = _weighted_pick(rng, weights)
    dist = np.full(len(points), np.inf)
    for t in range(1, k):
        _min_dist_to(points, points[chosen[t - 1]], dist)
        chosen[t] = _weighted_pick(rng, weights * dist * dist)
    return points[chosen].copy()


@dataclass
class ClusterResult:
    assignment: np.ndarray
    centroids: np.ndarray
    iterations: int
    converged: bool
    objective: list[float]
    repairs: int


def _assign_chunked(points: np.ndarray, cents: np.ndarray):
    """Nearest centroid per point (lowest id on ties) and that distance."""
    n, k = len(points), len(cents)
    assign = np.empty(n, dtype=np.int32)
    best = np.empty(n, dtype=np.float64)
    rows = max(1, CDIST_CHUNK // max(k, 1))
    for lo in range(0, n, rows):
        hi = min(n, lo + rows)
        d = cdist(points[lo:hi], cents, "cityblock")
        assign[lo:hi] = np.argmin(d, axis=1)
        best[lo:hi] = d[np.arange(hi - lo), assign[lo:hi]]
    return assign, best


def _update_centroids(points, weights, assign, k, rule: str) -> np.ndarray:
    d = points.shape[1]
    if rule == "mean":
        sums = np.zeros((k, d))
        np.add.at(sums, assign, points * weights[:, None])
        mass = np.bincount(assign, weights=weights, minlength=k)
        return sums / np.maximum(mass, 1e-300)[:, None]
    if rule == "median":
        # weighted per-coordinate median: the exact L1 barycenter
        cents = np.zeros((k, d))
        for b in range(k):
            member = assign == b
            pts, w = points[member], weights[member]
            for j in range(d):
                order = np.argsort(pts[:, j], kind="stable")
                cw = np.cumsum(w[order])
                cents[b, j] = pts[order[np.searchsorted(cw, 0.5 * cw[-1])], j]
        return cents
    raise ValueError(f"unknown centroid rule {rule!r}")


def lloyd_cluster(
    points: np.ndarray,
    weights: np.ndarray,
    k: int,
    rng_seed: int,
    max_iter: int = 1000,
    centroid_rule: str = "mean",
) -> ClusterResult:
    """Weighted Lloyd iterations under cityblock distance until a fixpoint.

    Ties go to the lowest centroid id; an empty bucket steals the point
    farthest from its assigned centroid (lowest index on ties).
    """
    points = np.asarray(points, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    cents = kmeanspp_seed(points, weights, k, rng_seed)
    prev = None
    objective: list[float] = []
    repairs = 0
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        assign, dist = _assign_chunked(points, cents)
        occupancy = np.bincount(assign, minlength=k)
        for b in np.flatnonzero(occupancy == 0):
            donor_ok = occupancy[assign] > 1
            cand = np.where(donor_ok, dist, -np.inf)
            steal = int(np.argmax(cand))
            occupancy[assign[steal]] -= 1
            occupancy[b] += 1
            assign[steal] = b
            dist[steal] = 0.0
            repairs += 1
        objective.append(float(np.dot(weights, dist)))
        if prev is not None and np.array_equal(assign, prev):
            converged = True
            break
        prev = assign
        cents = _update_centroids(points, weights, assign, k, centroid_rule)
    return ClusterResult(prev, cents, iterations, converged, objective, repairs)


# ---------------------------------------------------------------------------
# Abstraction builders.


def _class_points(features: FeatureSet, phase: int, k: int):
    """One clustering point per recall-winrate class: histograms + total weight."""
    class_ids = features.krwi_class(phase, k)
    n_classes = int(class_ids.max()) + 1
    first = np.full(n_classes, len(class_ids), dtype=np.int64)
    np.minimum.at(first, class_ids, np.arange(len(class_ids)))
    mult = features.index.multiplicity(phase).astype(np.float64)
    class_weight = np.bincount(class_ids, weights=mult, minlength=n_classes)
    hists = features.krwf_histograms(phase, k)[first]
    return class_ids, hists, class_weight


def build_krwemd(
    phase: int,
    recall_k: int,
    weights,
    buckets: int,
    seed: int,
    features: FeatureSet,
    max_iter: int = 1000,
    ground_distance=None,
    centroid_rule: str = "mean",
) -> AbstractionMap:
    """Cluster the (phase, recall_k) winrate classes into ``buckets`` buckets."""
    w = check_phase_weights(weights)
    if len(w) != recall_k + 1:
        raise ValueError("need one weight per recall slot")
    class_ids, hists, class_weight = _class_points(features, phase, recall_k)
    if buckets > len(class_weight):
        raise ValueError(f"{buckets} buckets exceed {len(class_weight)} classes")
    if ground_distance is not None and not is_line_metric(np.asarray(ground_distance)):
        res = _lloyd_generic_emd(
            hists, class_weight, buckets, seed, w, np.asarray(ground_distance), max_iter
        )
    else:
        emb = line_embedding(hists, w)
        res = lloyd_cluster(emb, class_weight, buckets, seed, max_iter, centroid_rule)
    assign = res.assignment[class_ids].astype(np.int32)
    meta = {
        "algorithm": "krwemd",
        "phase": phase,
        "recall": recall_k,
        "weights": [float(x) for x in w],
        "buckets": buckets,
        "seed": seed,
        "iterations": res.iterations,
        "converged": res.converged,
        "repairs": res.repairs,
        "objective": res.objective,
        "centroid_rule": centroid_rule,
    }
    return AbstractionMap({phase: assign}, meta)


def _lloyd_generic_emd(hists, weights, k, seed, phase_w, D, max_iter):
    """Direct-LP Lloyd loop for non-line ground matrices (small inputs only)."""
    n, slots, bins = hists.shape
    flat = hists.reshape(n, slots * bins)
    cents = kmeanspp_seed(flat, weights, k, seed)  # seeding metric: cityblock proxy
    prev = None
    objective = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d = np.empty((n, k))
        for i in range(n):
            for c in range(k):
                hc = cents[c].reshape(slots, bins)
                d[i, c] = sum(
                    phase_w[j] * emd_exact(hists[i, j], hc[j], D) for j in range(slots)
                )
        assign = np.argmin(d, axis=1).astype(np.int32)
        objective.append(float(np.dot(weights, d[np.arange(n), assign])))
        if prev is not None and np.array_equal(assign, prev):
            converged = True
            break
        prev = assign
        sums = np.zeros((k, slots * bins))
        np.add.at(sums, assign, flat * weights[:, None])
        mass = np.bincount(assign, weights=weights, minlength=k)
        cents = sums / np.maximum(mass, 1e-300)[:, None]
    return ClusterResult(prev, cents, iterations, converged, objective, 0)


def build_ehs(phase: int, buckets: int, seed: int, features: FeatureSet,
              max_iter: int = 1000) -> AbstractionMap:
    """1-D weighted k-means on equity = win - loss (distinct values as points)."""
    eq = features.equity_array(phase)
    uniq, inv = np.unique(eq, return_inverse=True)
    if buckets > len(uniq):
        raise ValueError(f"{buckets} buckets exceed {len(uniq)} distinct equities")
    mult = features.index.multiplicity(phase).astype(np.float64)
    w = np.bincount(inv, weights=mult, minlength=len(uniq))
    res = lloyd_cluster(uniq[:, None], w, buckets, seed, max_iter)
    assign = res.assignment[inv].astype(np.int32)
    meta = {
        "algorithm": "ehs",
        "phase": phase,
        "buckets": buckets,
        "seed": seed,
        "iterations": res.iterations,
        "converged": res.converged,
        "repairs": res.repairs,
        "objective": res.objective,
    }
    return AbstractionMap({phase: assign}, meta)


PARTITION_KINDS = ("li", "pawi", "krwi", "paoi", "kroi")


def passthrough_map(kind: str, phase: int, features: FeatureSet,
                    k: int | None = None) -> AbstractionMap:
    """Bucket id = equivalence class id of an isomorphism partition."""
    kind = kind.lower()
    if kind == "li":
        assign = np.arange(features.index.count(phase), dtype=np.int32)
    elif kind == "pawi":
        assign = features.krwi_class(phase, 0)
    elif kind == "krwi":
        if k is None:
            raise ValueError("krwi passthrough needs a recall depth")
        assign = features.krwi_class(phase, k)
    elif kind == "paoi":
        assign = features.paoi[phase].astype(np.int32)
    elif kind == "kroi":
        if k is None:
            raise ValueError("kroi passthrough needs a recall depth")
        assign = features.kroi_class(phase, k)
    else:
        raise ValueError(f"unknown partition kind {kind!r}; expected {PARTITION_KINDS}")
    meta = {"algorithm": f"passthrough:{kind}", "phase": phase, "recall": k}
    return AbstractionMap({phase: assign.astype(np.int32)}, meta)


def merge_maps(maps: list[AbstractionMap]) -> AbstractionMap:
    out = maps[0]
    for m in maps[1:]:
        out = out.merged_with(m)
    return out
