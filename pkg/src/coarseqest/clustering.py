"""Macro-states: k-means over the embedded states and the coarsening map.

The partition is fitted on the embedding coordinates with k-means++
initialisation and Lloyd iterations (best of several restarts by
within-cluster sum of squares); out-of-sample states are routed through
GP prediction, a JSD row against the embedding's training distributions
and the MDS extension before nearest-centroid assignment.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.random import Philox, SeedSequence

from coarseqest.embedding import MdsEmbedding, jsd_rows, mds_extend_batch

_KMEANS_STREAM = 6


@dataclass
class MacroStatePartition:
    """k-means result: every training state belongs to exactly one
    macro-state and every macro-state id has at least one member."""

    centroids: np.ndarray  # [k, n]
    labels: np.ndarray  # [m]
    sse: float
    sse_history: list = field(default_factory=list, repr=False)
    state_index: dict | None = None  # state tuple -> training row

    @property
    def k(self) -> int:
        return len(self.centroids)

    def label_of_state(self, state) -> int:
        return int(self.labels[self.state_index[tuple(state)]])


def _sse(coords, centroids, labels) -> float:
    return float(((coords - centroids[labels]) ** 2).sum())


def _kmeans_pp_init(coords, k, rng):
    m = len(coords)
    centroids = np.empty((k, coords.shape[1]))
    first = int(rng.integers(0, m))
    centroids[0] = coords[first]
    d2 = ((coords - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(0, m))
        else:
            u = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), u, side="right"))
            idx = min(idx, m - 1)
        centroids[j] = coords[idx]
        d2 = np.minimum(d2, ((coords - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _lloyd(coords, centroids, max_iter=300):
    history = []
    labels = None
    for _ in range(max_iter):
        d2 = ((coords[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)  # argmin takes the lowest id on ties
        for j in range(len(centroids)):
            members = new_labels == j
            if not members.any():
                # reseed an empty cluster to the farthest point
                far = int(np.argmax(d2.min(axis=1)))
                centroids[j] = coords[far]
                new_labels[far] = j
                members = new_labels == j
            centroids[j] = coords[members].mean(axis=0)
        history.append(_sse(coords, centroids, new_labels))
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
    return centroids, labels, history


def kmeans(coords: np.ndarray, k: int, seed=0, restarts: int = 10) -> MacroStatePartition:
    """Best-of-``restarts`` k-means++ / Lloyd partition, deterministic given
    the seed; raises when k exceeds the number of points."""
    coords = np.asarray(coords, dtype=np.float64)
    m = len(coords)
    if k > m:
        raise ValueError(f"k={k} exceeds the number of points {m}")
    if not np.isfinite(coords).all():
        raise ValueError("coordinates must be finite")
    if isinstance(seed, SeedSequence):
        seedseq = seed
    else:
        seedseq = SeedSequence(seed, spawn_key=(_KMEANS_STREAM,))
    rng = np.random.Generator(Philox(seedseq))

    best = None
    for _ in range(restarts):
        centroids = _kmeans_pp_init(coords, k, rng)
        centroids, labels, history = _lloyd(coords, centroids.copy())
        sse = history[-1]
        if best is None or sse < best[0]:
            best = (sse, centroids, labels, history)
    sse, centroids, labels, history = best
    return MacroStatePartition(
        centroids=centroids, labels=labels.astype(np.int64), sse=sse, sse_history=history
    )


def assign(partition: MacroStatePartition, coord) -> int:
    """Nearest centroid by Euclidean distance; ties go to the lowest id."""
    coord = np.asarray(coord, dtype=np.float64)
    if coord.shape != (partition.centroids.shape[1],):
        raise ValueError(
            f"coordinate has shape {coord.shape}, expected ({partition.centroids.shape[1]},)"
        )
    d2 = ((partition.centroids - coord) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def assign_batch(partition: MacroStatePartition, coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.float64)
    d2 = ((coords[:, None, :] - partition.centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1).astype(np.int64)


class CoarseningMap:
    """Total, memoised map from fine states to macro-state ids.

    States the partition was trained on resolve to their k-means label;
    unseen states go through GP prediction -> JSD row against the
    embedding's training distributions -> MDS extension -> nearest
    centroid.
    """

    def __init__(self, partition, embedding: MdsEmbedding, gp_model, network, pmap):
        if partition.state_index is None:
            raise ValueError("partition has no state_index; fit it through the pipeline")
        self.partition = partition
        self.embedding = embedding
        self.gp_model = gp_model
        self.network = network
        self.pmap = pmap
        # training distributions in embedding row order (the JSD rows of an
        # unseen state must align with the retained dissimilarity matrix)
        by_row = sorted(partition.state_index.items(), key=lambda kv: kv[1])
        self._training_probs = np.stack([pmap.distribution(s).probs for s, _ in by_row])
        self._cache = {
            state: int(partition.labels[row]) for state, row in partition.state_index.items()
        }

    @property
    def k(self) -> int:
        return self.partition.k

    def __call__(self, state) -> int:
        state = tuple(int(c) for c in state)
        hit = self._cache.get(state)
        if hit is not None:
            return hit
        label = int(self.assign_unseen([state])[0])
        self._cache[state] = label
        return label

    def assign_unseen(self, states) -> np.ndarray:
        """GP -> JSD -> MDS-extension -> nearest-centroid for new states."""
        if self.gp_model is None:
            raise ValueError("no GP model available for out-of-sample states")
        from coarseqest.gp import predict

        dists = np.stack([d.probs for d in predict(self.gp_model, states)])
        rows = jsd_rows(dists, self._training_probs)
        coords = mds_extend_batch(self.embedding, rows * rows)
        return assign_batch(self.partition, coords)

    def lookup_table(self, states) -> np.ndarray:
        """Materialised fine->macro table aligned with ``states``."""
        return np.array([self(s) for s in states], dtype=np.int64)


def coarsening_map(partition, embedding, gp_model, network, pmap) -> CoarseningMap:
    """The surjective fine-state -> macro-state function of the fitted pipeline."""
    return CoarseningMap(partition, embedding, gp_model, network, pmap)
