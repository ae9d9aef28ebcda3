"""Jensen-Shannon dissimilarities and classical MDS with out-of-sample extension.

The JSD between satisfaction distributions (base-2 logs, so values live
in [0, 1]) is the behavioural metric; classical MDS double-centers the
squared dissimilarities and keeps the top non-negative eigenpairs.  New
points are projected without refitting by replacing the centering means
with expectations over the training points.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Philox, SeedSequence
from scipy.special import xlogy

_LN2 = np.log(2.0)

# fixed Lanczos start vector seed: the embedding must be reproducible
_EIGSH_SEED = 0x1D5EED

# full symmetric decomposition below this size, iterative top-k above
DENSE_EIG_LIMIT = 2000


def _entropy_bits(p: np.ndarray, axis=-1) -> np.ndarray:
    return -xlogy(p, p).sum(axis=axis) / _LN2


def jsd(p, q) -> float:
    """Jensen-Shannon divergence in bits: H((P+Q)/2) - (H(P)+H(Q))/2.

    Both inputs must be distributions of the same length; 0*log(0) is 0,
    the result is symmetric, non-negative and at most 1.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    mid = 0.5 * (p + q)
    val = _entropy_bits(mid) - 0.5 * (_entropy_bits(p) + _entropy_bits(q))
    return float(min(max(val, 0.0), 1.0))


def jsd_rows(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """JSD of every row of P against every row of Q: [len(P), len(Q)]."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    hp = _entropy_bits(P)
    hq = _entropy_bits(Q)
    mid = 0.5 * (P[:, None, :] + Q[None, :, :])
    hm = _entropy_bits(mid, axis=2)
    out = hm - 0.5 * (hp[:, None] + hq[None, :])
    return np.clip(out, 0.0, 1.0)


def jsd_matrix(pmap, states, block: int = 256) -> np.ndarray:
    """Symmetric pairwise JSD matrix over the given states (zero diagonal)."""
    missing = [s for s in states if tuple(s) not in pmap.entries]
    if missing:
        raise KeyError(f"states missing from the property map: {missing[:3]}...")
    P = np.stack([pmap.distribution(s).probs for s in states])
    m = len(P)
    D = np.empty((m, m), dtype=np.float64)
    for lo in range(0, m, block):
        hi = min(lo + block, m)
        D[lo:hi] = jsd_rows(P[lo:hi], P)
    np.fill_diagonal(D, 0.0)
    return D


@dataclass
class MdsEmbedding:
    """Classical MDS result plus everything the out-of-sample kernel needs."""

    coords: np.ndarray  # [m, n]
    eigenvalues: np.ndarray  # kept (non-negative, non-increasing)
    row_means: np.ndarray  # row means of the squared dissimilarities
    grand_mean: float
    training_d2: np.ndarray = field(repr=False)  # retained squared dissimilarities
    deficient: bool = False  # fewer positive eigenvalues than requested

    @property
    def n_components(self) -> int:
        return self.coords.shape[1]


def _canonical_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip eigenvector signs so the largest-magnitude entry is positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        idx = int(np.argmax(np.abs(out[:, j])))
        if out[idx, j] < 0:
            out[:, j] = -out[:, j]
    return out


def mds_fit(D: np.ndarray, n: int) -> MdsEmbedding:
    """Embed a dissimilarity matrix into n dimensions by double-centering
    the squared dissimilarities and keeping the n largest non-negative
    eigenpairs; negative eigenvalues are discarded (zero-padded columns
    plus a warning flag when fewer than n remain)."""
    D = np.asarray(D, dtype=np.float64)
    m = D.shape[0]
    if D.shape != (m, m):
        raise ValueError("dissimilarity matrix must be square")
    if not 1 <= n <= max(m - 1, 1):
        raise ValueError(f"target dimension {n} outside [1, {m - 1}]")

    S = D * D
    row_means = S.mean(axis=1)
    grand = float(S.mean())
    B = -0.5 * (S - row_means[:, None] - row_means[None, :] + grand)

    if m <= DENSE_EIG_LIMIT:
        evals, evecs = np.linalg.eigh(B)
        order = np.argsort(evals)[::-1][:n]
        evals = evals[order]
        evecs = evecs[:, order]
    else:
        from scipy.sparse.linalg import eigsh

        k = min(n + 2, m - 1)
        rng = np.random.Generator(Philox(SeedSequence(_EIGSH_SEED)))
        v0 = rng.standard_normal(m)
        evals, evecs = eigsh(B, k=k, which="LA", v0=v0)
        order = np.argsort(evals)[::-1][:n]
        evals = evals[order]
        evecs = evecs[:, order]

    evecs = _canonical_signs(evecs)
    positive = evals > 0.0
    kept = int(positive.sum())
    coords = np.zeros((m, n))
    lams = np.zeros(n)
    coords[:, :kept] = evecs[:, positive] * np.sqrt(evals[positive])
    lams[:kept] = evals[positive]
    deficient = kept < n
    if deficient:
        warnings.warn(
            f"only {kept} positive eigenvalues for {n} requested dimensions; "
            "remaining coordinates are zero",
            stacklevel=2,
        )
    return MdsEmbedding(
        coords=coords,
        eigenvalues=lams,
        row_means=row_means,
        grand_mean=grand,
        training_d2=S,
        deficient=deficient,
    )


def mds_extend(emb: MdsEmbedding, d2_new: np.ndarray) -> np.ndarray:
    """Project one new point from its squared dissimilarities to the m
    training points; applying this to a training point's own row
    reproduces its stored coordinates."""
    return mds_extend_batch(emb, np.asarray(d2_new, dtype=np.float64)[None, :])[0]


def mds_extend_batch(emb: MdsEmbedding, D2_new: np.ndarray) -> np.ndarray:
    """Vectorised out-of-sample extension: rows of squared dissimilarities."""
    D2_new = np.asarray(D2_new, dtype=np.float64)
    m = len(emb.row_means)
    if D2_new.ndim != 2 or D2_new.shape[1] != m:
        raise ValueError(f"need rows of length {m}, got {D2_new.shape}")
    ktilde = -0.5 * (
        D2_new
        - D2_new.mean(axis=1, keepdims=True)
        - emb.row_means[None, :]
        + emb.grand_mean
    )
    n = emb.n_components
    out = np.zeros((len(D2_new), n))
    zero_dims = []
    for i in range(n):
        lam = emb.eigenvalues[i]
        if lam <= 0.0:
            zero_dims.append(i)
            continue
        # eigenvector i = coords[:, i] / sqrt(lam); coordinate = v . ktilde / sqrt(lam)
        out[:, i] = (ktilde @ emb.coords[:, i]) / lam
    if zero_dims:
        warnings.warn(
            f"zero eigenvalue in kept dimensions {zero_dims}; coordinates set to 0",
            stacklevel=2,
        )
    return out


def pairwise_euclidean(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
