"""Spectral normalized cuts over a sparse affinity matrix.

The eigensolver is a Lanczos iteration with full reorthogonalization and
Rayleigh-Ritz extraction on the degree-normalized affinity S; breakdowns
restart with a fresh orthogonalized vector, so invariant subspaces of
disconnected graphs are handled. Two-way cuts sweep quantile thresholds
of the rescaled second eigenvector; k-way cuts cluster the eigenvector
embedding with seeded k-means.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSplit,
    EmptyCluster,
    IndexOutOfRange,
    NoConvergence,
    NoConvergenceWarning,
)
from .graph import NormalizedOperators, SparseWeightMatrix, normalize


@dataclass(frozen=True)
class SpectralConfig:
    eig_tol: float = 1e-8
    eig_max_iter: int = 5000  # matvec budget
    n_eigenvectors: int = 2
    split_candidates: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.eig_tol <= 0:
            raise ValueError("eig_tol must be > 0")
        if self.n_eigenvectors < 2:
            raise ValueError("n_eigenvectors must be >= 2")


@dataclass(frozen=True)
class Segmentation:
    """Per-pixel region labels plus the cut objective of the chosen split."""

    labels: np.ndarray  # (N,) int region ids 0..k-1
    k: int
    ncut_value: float

    def __post_init__(self):
        uniq = np.unique(self.labels)
        if len(uniq) != self.k or uniq.min() != 0 or uniq.max() != self.k - 1:
            raise ValueError(f"labels must take exactly the values 0..{self.k - 1}")
        if self.ncut_value < 0:
            raise ValueError("ncut_value must be >= 0")


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column positive."""
    for j in range(vectors.shape[1]):
        idx = int(np.argmax(np.abs(vectors[:, j])))
        if vectors[idx, j] < 0:
            vectors[:, j] = -vectors[:, j]
    return vectors


def _lanczos_top(ops: NormalizedOperators, m: int, cfg: SpectralConfig):
    """Top-m eigenpairs of S via Lanczos + Rayleigh-Ritz on the grown basis."""
    s = ops.s_u.csr
    n = ops.n
    rng = np.random.default_rng(cfg.seed)

    q_basis = np.zeros((n, min(n, max(2 * m + 10, 30))))
    sq_basis = np.zeros_like(q_basis)
    j = 0
    matvecs = 0

    def _fresh_vector():
        """Random vector orthogonalized against the current basis."""
        for _ in range(50):
            v = rng.standard_normal(n)
            v -= q_basis[:, :j] @ (q_basis[:, :j].T @ v)
            nrm = np.linalg.norm(v)
            if nrm > 1e-10:
                return v / nrm
        return None

    def _append(vec):
        nonlocal j, q_basis, sq_basis, matvecs
        if j == q_basis.shape[1]:
            grow = np.zeros((n, min(n, q_basis.shape[1] * 2) - q_basis.shape[1]))
            q_basis = np.hstack([q_basis, grow])
            sq_basis = np.hstack([sq_basis, grow.copy()])
        q_basis[:, j] = vec
        sq_basis[:, j] = s @ vec
        matvecs += 1
        j += 1

    v0 = _fresh_vector()
    if v0 is None:
        raise RuntimeError("could not draw a start vector")
    _append(v0)

    target = min(n, max(2 * m + 10, 30))
    converged = False
    values = vectors = residuals = None
    while True:
        while j < target and matvecs < cfg.eig_max_iter:
            w = sq_basis[:, j - 1].copy()
            # Full reorthogonalization, twice for numerical safety.
            for _ in range(2):
                w -= q_basis[:, :j] @ (q_basis[:, :j].T @ w)
            nrm = np.linalg.norm(w)
            if nrm > 1e-10:
                _append(w / nrm)
            else:
                fresh = _fresh_vector()  # invariant subspace; restart
                if fresh is None:
                    break
                _append(fresh)

        h = q_basis[:, :j].T @ sq_basis[:, :j]
        h = 0.5 * (h + h.T)
        eigvals, eigvecs = np.linalg.eigh(h)
        order = np.argsort(eigvals)[::-1][:m]
        values = eigvals[order]
        vectors = q_basis[:, :j] @ eigvecs[:, order]
        residuals = np.linalg.norm(
            sq_basis[:, :j] @ eigvecs[:, order] - vectors * values, axis=0
        )
        if np.all(residuals <= cfg.eig_tol) or j >= n:
            converged = bool(np.all(residuals <= cfg.eig_tol))
            break
        if matvecs >= cfg.eig_max_iter:
            break
        target = min(n, target + max(m, 20))

    if not converged and np.any(residuals > cfg.eig_tol):
        warnings.warn(
            f"eigensolver residual {residuals.max():.2e} above tolerance "
            f"after {matvecs} matvecs",
            NoConvergenceWarning,
        )
    return values, _fix_signs(vectors), residuals


def top_eigenvectors(w: SparseWeightMatrix, m: int, cfg: SpectralConfig):
    """The m largest eigenpairs of S = D^{-1/2} W D^{-1/2}, sorted descending."""
    if m > w.n:
        raise ValueError(f"requested {m} eigenpairs from a {w.n}-node graph")
    ops = normalize(w)
    values, vectors, _ = _lanczos_top(ops, m, cfg)
    return values, vectors


def ncut_value_from_labels(w: SparseWeightMatrix, labels: np.ndarray) -> float:
    """Sum over regions of cut(A, V\\A) / assoc(A, V); zero-degree regions
    contribute 0 (their cut is necessarily 0 too)."""
    labels = np.asarray(labels)
    k = int(labels.max()) + 1 if labels.size else 0
    deg = w.degrees()
    assoc = np.bincount(labels, weights=deg, minlength=k)
    coo = w.csr.tocoo()
    same = labels[coo.row] == labels[coo.col]
    within = np.bincount(
        labels[coo.row[same]], weights=coo.data[same], minlength=k
    )
    total = 0.0
    for c in range(k):
        cut = assoc[c] - within[c]
        if assoc[c] > 0:
            total += cut / assoc[c]
    return float(total)


def _labels_from_mask(mask: np.ndarray) -> np.ndarray:
    """0/1 labels with region 0 = the region containing the smallest pixel."""
    labels = mask.astype(np.int64)
    if labels[0] == 1:
        labels = 1 - labels
    return labels


def two_way_cut(w: SparseWeightMatrix, cfg: SpectralConfig) -> Segmentation:
    """Bipartition minimizing the normalized cut over a threshold sweep of
    the degree-rescaled second eigenvector."""
    n = w.n
    if n < 2:
        raise ValueError("need at least 2 nodes to cut")
    ops = normalize(w)
    _, vectors, _ = _lanczos_top(ops, 2, cfg)
    y = ops.degree_rsqrt * vectors[:, 1]

    qs = np.linspace(0.0, 1.0, cfg.split_candidates + 2)[1:-1]
    taus = np.quantile(y, qs)
    best_mask = None
    best_value = np.inf
    for tau in taus:
        mask = y > tau
        cnt = int(mask.sum())
        if cnt == 0 or cnt == n:
            continue
        value = ncut_value_from_labels(w, mask.astype(np.int64))
        if value < best_value - 1e-15:
            best_value = value
            best_mask = mask

    if best_mask is None:
        # Degenerate sweep (all candidate splits one-sided): median fallback,
        # then an index split if every value is identical.
        mask = y > np.median(y)
        cnt = int(mask.sum())
        if cnt == 0 or cnt == n:
            order = np.argsort(y, kind="stable")
            mask = np.zeros(n, dtype=bool)
            mask[order[n // 2 :]] = True
        best_mask = mask
        best_value = ncut_value_from_labels(w, best_mask.astype(np.int64))

    labels = _labels_from_mask(best_mask)
    return Segmentation(labels=labels, k=2, ncut_value=float(best_value))


def _kmeans_once(points: np.ndarray, k: int, seed: int, max_iter: int = 100):
    """Lloyd iterations with k-means++ style seeding; raises EmptyCluster."""
    n = points.shape[0]
    rng = np.random.default_rng(seed)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(rng.integers(n))]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            cum = np.cumsum(d2 / total)
            idx = int(np.searchsorted(cum, rng.random(), side="right"))
            idx = min(idx, n - 1)
        centers[c] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dists = (
            np.sum(points**2, axis=1)[:, None]
            - 2.0 * points @ centers.T
            + np.sum(centers**2, axis=1)[None, :]
        )
        new_labels = np.argmin(dists, axis=1)
        counts = np.bincount(new_labels, minlength=k)
        if np.any(counts == 0):
            raise EmptyCluster("a cluster lost all members")
        for c in range(k):
            centers[c] = points[new_labels == c].mean(axis=0)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels


def _relabel_by_first_member(labels: np.ndarray) -> np.ndarray:
    """Renumber regions by the ascending index of their smallest member."""
    uniq, first = np.unique(labels, return_index=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(uniq))
    return rank[np.searchsorted(uniq, labels)]


def k_way_cut(
    w: SparseWeightMatrix, k: int, cfg: SpectralConfig, recursive: bool = False
) -> Segmentation:
    """k-region segmentation from the top-k eigenvector embedding (rows
    normalized to unit length) clustered with seeded k-means. Recursive
    two-way bisection is available behind the flag."""
    n = w.n
    if not 2 <= k <= n:
        raise ValueError(f"k must lie in [2, {n}], got {k}")
    if k == n:
        labels = np.arange(n, dtype=np.int64)
        return Segmentation(labels=labels, k=k, ncut_value=ncut_value_from_labels(w, labels))
    if recursive:
        return _recursive_bisection(w, k, cfg)

    ops = normalize(w)
    _, vectors, _ = _lanczos_top(ops, k, cfg)
    norms = np.linalg.norm(vectors, axis=1)
    emb = vectors / np.where(norms > 1e-12, norms, 1.0)[:, None]

    labels = None
    for attempt in range(5):
        try:
            labels = _kmeans_once(emb, k, cfg.seed + attempt)
            break
        except EmptyCluster:
            continue
    if labels is None:
        raise NoConvergence(f"k-means failed to fill {k} clusters in 5 attempts")

    labels = _relabel_by_first_member(labels)
    return Segmentation(labels=labels, k=k, ncut_value=ncut_value_from_labels(w, labels))


def _recursive_bisection(w: SparseWeightMatrix, k: int, cfg: SpectralConfig) -> Segmentation:
    regions = [np.arange(w.n, dtype=np.int64)]
    total_value = 0.0
    while len(regions) < k:
        best = None  # (value, region_idx, submask)
        for ridx, nodes in enumerate(regions):
            if len(nodes) < 2:
                continue
            sub = SparseWeightMatrix(w.csr[nodes, :][:, nodes].tocsr())
            seg = two_way_cut(sub, cfg)
            if best is None or seg.ncut_value < best[0] - 1e-15:
                best = (seg.ncut_value, ridx, seg.labels == 1)
        if best is None:
            raise DegenerateSplit("not enough splittable regions to reach k")
        value, ridx, submask = best
        nodes = regions.pop(ridx)
        regions.insert(ridx, nodes[~submask])
        regions.insert(ridx + 1, nodes[submask])
        total_value += value
    labels = np.empty(w.n, dtype=np.int64)
    for c, nodes in enumerate(regions):
        labels[nodes] = c
    labels = _relabel_by_first_member(labels)
    return Segmentation(labels=labels, k=k, ncut_value=float(total_value))


def spectral_learning_edit(w: SparseWeightMatrix, cs) -> SparseWeightMatrix:
    """Direct affinity editing baseline: must-link pairs get the maximum
    stored weight, cannot-link pairs get zero, everything else untouched."""
    if not cs.must and not cs.cannot:
        return SparseWeightMatrix(w.csr.copy())
    for i, j in cs.must | cs.cannot:
        if not (0 <= i < w.n and 0 <= j < w.n):
            raise IndexOutOfRange(f"constraint pixel pair ({i},{j}) out of range")
    w_max = float(w.csr.data.max()) if w.nnz else 1.0
    edited = w.csr.tolil(copy=True)
    for i, j in sorted(cs.must):
        edited[i, j] = w_max
        edited[j, i] = w_max
    for i, j in sorted(cs.cannot):
        edited[i, j] = 0.0
        edited[j, i] = 0.0
    out = edited.tocsr()
    out.eliminate_zeros()
    return SparseWeightMatrix(out)


# Fixed, visually-distinct region palette; regions beyond it get
# golden-angle hues so any k still maps to distinct colors.
_PALETTE = np.array(
    [
        (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
        (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
        (188, 189, 34), (23, 190, 207), (174, 199, 232), (255, 187, 120),
        (152, 223, 138), (255, 152, 150), (197, 176, 213), (196, 156, 148),
    ],
    dtype=np.uint8,
)


def region_colors(k: int) -> np.ndarray:
    if k <= len(_PALETTE):
        return _PALETTE[:k].copy()
    import colorsys

    extra = []
    for i in range(k - len(_PALETTE)):
        h = (i * 0.61803398875) % 1.0
        extra.append(tuple(int(255 * c) for c in colorsys.hsv_to_rgb(h, 0.8, 0.95)))
    return np.vstack([_PALETTE, np.array(extra, dtype=np.uint8)])


def rle_encode(labels: np.ndarray) -> list:
    """Row-major run-length encoding as [value, count] pairs."""
    labels = np.asarray(labels).ravel()
    if labels.size == 0:
        return []
    change = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [labels.size]])
    return [[int(labels[s]), int(e - s)] for s, e in zip(starts, ends)]


def rle_decode(runs: list) -> np.ndarray:
    if not runs:
        return np.array([], dtype=np.int64)
    return np.repeat(
        np.array([v for v, _ in runs], dtype=np.int64),
        np.array([c for _, c in runs], dtype=np.int64),
    )


def save_segmentation(seg: Segmentation, width: int, height: int, png_path, json_path):
    """Write the PNG label map (distinct color per region) and its JSON
    sidecar {"k", "ncut_value", "labels_rle"}."""
    from PIL import Image

    colors = region_colors(seg.k)
    rgb = colors[seg.labels.reshape(height, width)]
    Image.fromarray(rgb, mode="RGB").save(png_path)
    with open(json_path, "w") as fh:
        json.dump(
            {
                "k": seg.k,
                "ncut_value": seg.ncut_value,
                "labels_rle": rle_encode(seg.labels),
            },
            fh,
        )


def load_segmentation_json(path) -> Segmentation:
    with open(path) as fh:
        doc = json.load(fh)
    labels = rle_decode(doc["labels_rle"])
    return Segmentation(labels=labels, k=int(doc["k"]), ncut_value=float(doc["ncut_value"]))
