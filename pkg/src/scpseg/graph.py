"""Sparse pixel affinity graphs.

Builds the k-NN weight matrix over all pixels, restricts it to a selected
subset, and provides the degree-normalized affinity S = D^{-1/2} W D^{-1/2}
(so the normalized Laplacian is L = I - S) plus the sparse products the
propagation solver needs.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, IndexOutOfRange, IoError, KTooLarge


@dataclass(frozen=True)
class SparseWeightMatrix:
    """Symmetric nonnegative sparse affinity matrix without self-loops.

    Backed by a CSR matrix in canonical form (sorted column indices, no
    explicit zeros). Treat instances as immutable.
    """

    csr: sp.csr_matrix

    def __post_init__(self):
        m = self.csr
        if m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"weight matrix must be square, got {m.shape}")
        if not m.has_canonical_format:
            m.sum_duplicates()
        m.sort_indices()

    @property
    def n(self) -> int:
        return self.csr.shape[0]

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    def row(self, i: int):
        """Sorted (columns, weights) adjacency of node i."""
        lo, hi = self.csr.indptr[i], self.csr.indptr[i + 1]
        return self.csr.indices[lo:hi], self.csr.data[lo:hi]

    def degrees(self) -> np.ndarray:
        return np.asarray(self.csr.sum(axis=1)).ravel()

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def max_asymmetry(self) -> float:
        diff = self.csr - self.csr.T
        return float(np.abs(diff.data).max()) if diff.nnz else 0.0

    def validate(self, tol: float = 1e-12):
        """Check symmetry, nonnegativity, finiteness, empty diagonal."""
        d = self.csr.data
        if d.size and (not np.all(np.isfinite(d)) or d.min() < 0):
            raise ValueError("weights must be finite and nonnegative")
        if np.any(self.csr.diagonal() != 0):
            raise ValueError("affinity matrix must have an empty diagonal")
        if self.max_asymmetry() > tol:
            raise ValueError("weight matrix is not symmetric")
        return self


def from_coo(n: int, rows, cols, weights) -> SparseWeightMatrix:
    m = sp.coo_matrix((weights, (rows, cols)), shape=(n, n)).tocsr()
    m.eliminate_zeros()
    return SparseWeightMatrix(m)


def from_dense(dense: np.ndarray) -> SparseWeightMatrix:
    m = sp.csr_matrix(dense)
    m.eliminate_zeros()
    return SparseWeightMatrix(m)


@dataclass(frozen=True)
class NormalizedOperators:
    """S = D^{-1/2} W_u D^{-1/2} with the D^{-1/2} diagonal kept alongside.

    The normalized Laplacian is implied: L = I - S. Isolated nodes get
    degree_rsqrt = 0 and an empty row/column in S.
    """

    s_u: SparseWeightMatrix
    degree_rsqrt: np.ndarray

    @property
    def n(self) -> int:
        return self.s_u.n


@dataclass(frozen=True)
class GraphConfig:
    window_radius: int = 7
    sigma: float | None = None  # kernel bandwidth; None = median heuristic


def _window_offsets(radius: int, width: int):
    """Offsets (dy, dx) in raster order, self excluded, with the flat
    pixel-index deltas dy*width+dx. Raster order makes neighbor indices
    increase monotonically, which a stable sort later exploits for
    deterministic tie-breaking by smaller pixel index."""
    offs = []
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            offs.append((dy, dx, dy * width + dx))
    return offs


def build_knn_graph(
    fm, width: int, height: int, k: int, cfg: GraphConfig
) -> SparseWeightMatrix:
    """k-NN affinity graph over the pixel grid.

    Candidates for each pixel are the pixels inside a square window of
    radius cfg.window_radius; the k feature-space-nearest candidates are
    linked with Gaussian weights exp(-d^2 / (2 sigma^2)) and the directed
    graph is symmetrized by elementwise max. Ties in distance break toward
    the smaller pixel index. sigma defaults to the median selected-edge
    distance (falling back to 1.0 if that median is zero).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = width * height
    if fm.n != n:
        raise DimensionMismatch(f"feature map has {fm.n} rows, image has {n} pixels")
    r = cfg.window_radius
    min_window = (min(r, width - 1) + 1) * (min(r, height - 1) + 1)
    if min_window < k + 1:
        raise KTooLarge(
            f"corner window has {min_window} pixels, need > k={k}; "
            f"increase window_radius or lower k"
        )

    feats = np.ascontiguousarray(fm.data, dtype=np.float64)
    dim = feats.shape[1]
    grid = feats.reshape(height, width, dim)
    padded = np.full((height + 2 * r, width + 2 * r, dim), np.nan)
    padded[r : r + height, r : r + width] = grid

    offsets = _window_offsets(r, width)
    n_off = len(offsets)
    deltas = np.array([o[2] for o in offsets], dtype=np.int64)

    # Process the image in row blocks to bound peak memory at
    # block_rows * width * n_off doubles.
    block_rows = max(1, int(4_000_000 // max(1, width * n_off)))
    rows_sel = np.empty((n, k), dtype=np.int64)
    cols_sel = np.empty((n, k), dtype=np.int64)
    d2_sel = np.empty((n, k), dtype=np.float64)

    for y0 in range(0, height, block_rows):
        y1 = min(height, y0 + block_rows)
        nb = (y1 - y0) * width
        d2 = np.empty((y1 - y0, width, n_off))
        block = grid[y0:y1]
        for o, (dy, dx, _) in enumerate(offsets):
            nbr = padded[y0 + r + dy : y1 + r + dy, r + dx : r + dx + width]
            diff = block - nbr
            d2[:, :, o] = np.einsum("ijk,ijk->ij", diff, diff)
        d2 = d2.reshape(nb, n_off)
        np.nan_to_num(d2, copy=False, nan=np.inf)

        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        base = np.arange(y0 * width, y1 * width, dtype=np.int64)
        sl = slice(y0 * width, y1 * width)
        rows_sel[sl] = base[:, None]
        cols_sel[sl] = base[:, None] + deltas[order]
        d2_sel[sl] = np.take_along_axis(d2, order, axis=1)

    if not np.all(np.isfinite(d2_sel)):
        raise KTooLarge("some pixel has fewer than k candidates in its window")

    if cfg.sigma is not None:
        sigma = float(cfg.sigma)
    else:
        sigma = float(np.median(np.sqrt(d2_sel)))
        if sigma <= 0.0:
            sigma = 1.0  # degenerate case: all selected edges at distance 0
    weights = np.exp(-d2_sel / (2.0 * sigma * sigma))

    directed = sp.coo_matrix(
        (weights.ravel(), (rows_sel.ravel(), cols_sel.ravel())), shape=(n, n)
    ).tocsr()
    sym = directed.maximum(directed.T)
    sym.eliminate_zeros()
    return SparseWeightMatrix(sym)


def restrict(w: SparseWeightMatrix, sel) -> SparseWeightMatrix:
    """Weight matrix over the selected subset: w_u(i, j) = w(P_u(i), P_u(j))."""
    p_u = np.asarray(sel.p_u, dtype=np.int64)
    if p_u.size and (p_u.min() < 0 or p_u.max() >= w.n):
        raise IndexOutOfRange("selection index out of range for this graph")
    sub = w.csr[p_u, :][:, p_u].tocsr()
    sub.eliminate_zeros()
    return SparseWeightMatrix(sub)


def normalize(w_u: SparseWeightMatrix) -> NormalizedOperators:
    """Degree-normalize: S(i,j) = w(i,j) / sqrt(D_ii D_jj).

    Isolated nodes (zero degree) get degree_rsqrt = 0, leaving their S
    row and column empty rather than dividing by zero.
    """
    deg = w_u.degrees()
    rsqrt = np.zeros_like(deg)
    nz = deg > 0
    rsqrt[nz] = 1.0 / np.sqrt(deg[nz])

    m = w_u.csr.tocoo(copy=True)
    data = m.data * rsqrt[m.row] * rsqrt[m.col]
    s = sp.coo_matrix((data, (m.row, m.col)), shape=m.shape).tocsr()
    s.eliminate_zeros()
    return NormalizedOperators(s_u=SparseWeightMatrix(s), degree_rsqrt=rsqrt)


def spmv(m: SparseWeightMatrix, x: np.ndarray) -> np.ndarray:
    if x.shape[0] != m.n:
        raise DimensionMismatch(f"vector length {x.shape[0]} != {m.n}")
    return m.csr @ x


def spmm_dense(m: SparseWeightMatrix, x: np.ndarray, side: str = "left") -> np.ndarray:
    """Sparse-dense product: 'left' computes m @ X, 'right' computes X @ m."""
    if side == "left":
        if x.shape[0] != m.n:
            raise DimensionMismatch(f"operand rows {x.shape[0]} != {m.n}")
        return m.csr @ x
    if side == "right":
        if x.shape[-1] != m.n:
            raise DimensionMismatch(f"operand cols {x.shape[-1]} != {m.n}")
        return (m.csr.T @ x.T).T
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def spectral_radius_estimate(m: SparseWeightMatrix, iters: int = 100, seed: int = 0):
    """Power-iteration estimate of the spectral radius (|.| of extreme eig)."""
    if m.n == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m.n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = m.csr @ v
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        lam = float(v @ w)
        v = w / nrm
    return abs(lam)


_MAGIC = b"SCPG"
_VERSION = 1


def dump_graph(w: SparseWeightMatrix, path):
    """Write the documented binary layout: magic 'SCPG', version u32,
    n u64, nnz u64, then per-row entry counts (u32) followed by that row's
    (column u32, weight f64) pairs. Little-endian throughout."""
    csr = w.csr
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", _VERSION))
            fh.write(struct.pack("<QQ", w.n, w.nnz))
            counts = np.diff(csr.indptr).astype("<u4")
            for i in range(w.n):
                fh.write(counts[i : i + 1].tobytes())
                lo, hi = csr.indptr[i], csr.indptr[i + 1]
                row = np.empty(hi - lo, dtype=[("col", "<u4"), ("w", "<f8")])
                row["col"] = csr.indices[lo:hi]
                row["w"] = csr.data[lo:hi]
                fh.write(row.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write graph to {path}: {exc}") from exc


def load_graph(path) -> SparseWeightMatrix:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read graph from {path}: {exc}") from exc
    if blob[:4] != _MAGIC:
        raise IoError(f"{path}: bad magic, not a graph dump")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _VERSION:
        raise IoError(f"{path}: unsupported graph dump version {version}")
    n, nnz = struct.unpack_from("<QQ", blob, 8)
    pos = 24
    indptr = np.zeros(n + 1, dtype=np.int64)
    indices = np.empty(nnz, dtype=np.int64)
    data = np.empty(nnz, dtype=np.float64)
    at = 0
    for i in range(n):
        (cnt,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        row = np.frombuffer(blob, dtype=[("col", "<u4"), ("w", "<f8")], count=cnt, offset=pos)
        pos += cnt * 12
        indices[at : at + cnt] = row["col"]
        data[at : at + cnt] = row["w"]
        at += cnt
        indptr[i + 1] = at
    if at != nnz:
        raise IoError(f"{path}: row counts disagree with header nnz")
    return SparseWeightMatrix(sp.csr_matrix((data, indices, indptr), shape=(n, n)))
