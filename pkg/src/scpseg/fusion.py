"""Fuse propagated constraints into the affinity graph.

The adjusted selected-subset weights solve, entry by entry,

    min_{z >= 0}  1/2 (z - x)^2 + lambda |z - y|

with x the propagated constraint value and y the original weight. The
closed-form minimizer is a two-candidate soft threshold; the adjusted
block is then patched back into the full-image weight matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, IndexOutOfRange
from .graph import SparseWeightMatrix


@dataclass(frozen=True)
class FusionParams:
    lam: float = 0.001  # L1 pull toward the original weights

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError("lambda must be finite and >= 0")


def soft_thr(x, y, lam):
    """Closed-form minimizer over z >= 0 of 1/2 (z-x)^2 + lam |z-y|.

    Candidates: z1 = max(x - lam, y) and z2 = max(0, min(x + lam, y));
    the one with the smaller objective wins, z1 on ties. Accepts scalars
    or broadcastable arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z1 = np.maximum(x - lam, y)
    z2 = np.maximum(0.0, np.minimum(x + lam, y))
    f1 = (z1 - x) ** 2 + 2.0 * lam * np.abs(z1 - y)
    f2 = (z2 - x) ** 2 + 2.0 * lam * np.abs(z2 - y)
    out = np.where(f1 <= f2, z1, z2)
    return float(out) if out.ndim == 0 else out


def adjust_weights(f_u, w_u: SparseWeightMatrix, p: FusionParams) -> SparseWeightMatrix:
    """Elementwise soft threshold of the propagated values against the
    selected-subset weights.

    The problem is separable, and entries with x = y = 0 stay 0, so only
    the union support matters; the dense propagated block is small enough
    to process directly. The result is symmetrized by averaging and its
    diagonal is dropped (affinity matrices carry no self-loops).
    """
    fu = np.asarray(f_u.f_u if hasattr(f_u, "f_u") else f_u, dtype=np.float64)
    if fu.shape != (w_u.n, w_u.n):
        raise DimensionMismatch(
            f"propagated matrix is {fu.shape}, weights are {w_u.n}x{w_u.n}"
        )
    adjusted = soft_thr(fu, w_u.to_dense(), p.lam)
    adjusted = 0.5 * (adjusted + adjusted.T)
    np.fill_diagonal(adjusted, 0.0)
    m = sp.csr_matrix(adjusted)
    m.eliminate_zeros()
    return SparseWeightMatrix(m)


def patch_weights(
    w: SparseWeightMatrix, w_u_new: SparseWeightMatrix, sel
) -> SparseWeightMatrix:
    """Replace the P_u x P_u block of the full weight matrix with the
    adjusted weights; all entries with an endpoint outside P_u are kept
    bit-identical."""
    p_u = np.asarray(sel.p_u, dtype=np.int64)
    if p_u.size and (p_u.min() < 0 or p_u.max() >= w.n):
        raise IndexOutOfRange("selection index out of range for this graph")
    if w_u_new.n != len(p_u):
        raise DimensionMismatch(
            f"adjusted block is {w_u_new.n}x{w_u_new.n}, selection has {len(p_u)}"
        )

    selected = np.zeros(w.n, dtype=bool)
    selected[p_u] = True

    outer = w.csr.tocoo()
    keep = ~(selected[outer.row] & selected[outer.col])
    kept = sp.coo_matrix(
        (outer.data[keep], (outer.row[keep], outer.col[keep])), shape=(w.n, w.n)
    )

    inner = w_u_new.csr.tocoo()
    lifted = sp.coo_matrix(
        (inner.data, (p_u[inner.row], p_u[inner.col])), shape=(w.n, w.n)
    )

    out = (kept + lifted).tocsr()
    out.eliminate_zeros()
    return SparseWeightMatrix(out)
