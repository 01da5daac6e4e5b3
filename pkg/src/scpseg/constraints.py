"""Pairwise constraints and the selected pixel subset.

Labeled pixels induce must-link pairs (same label) and cannot-link pairs
(different labels). Constrained pixels P_c are always selected; a seeded
uniform random sample P_s of the remaining image is added, and the union
P_u carries bidirectional index maps. The initial constraint matrix Z is
+1 on must-links, -1 on cannot-links, 0 elsewhere, with a zero diagonal.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    IndexOutOfRange,
    SampleTooLarge,
    SingleLabel,
    UnselectedConstraintPixel,
)


@dataclass(frozen=True)
class LabeledPixels:
    """(pixel index, region label) pairs; pixel indices unique."""

    entries: tuple  # of (pixel: int, label: int)

    def __post_init__(self):
        seen = set()
        for pix, _ in self.entries:
            if pix in seen:
                raise ValueError(f"pixel {pix} labeled twice")
            seen.add(pix)

    @property
    def pixels(self) -> np.ndarray:
        return np.array([p for p, _ in self.entries], dtype=np.int64)

    @property
    def labels(self) -> np.ndarray:
        return np.array([l for _, l in self.entries], dtype=np.int64)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class ConstraintSet:
    """Unordered must-link / cannot-link pixel pairs, disjoint, no (i, i)."""

    must: frozenset  # of (i, j) with i < j
    cannot: frozenset

    def __post_init__(self):
        if self.must & self.cannot:
            raise ValueError("a pair cannot be both must-link and cannot-link")
        for i, j in list(self.must) + list(self.cannot):
            if i == j:
                raise ValueError(f"self-pair ({i},{i}) not allowed")
            if i > j:
                raise ValueError("pairs must be stored with i < j")

    @property
    def pixels(self) -> np.ndarray:
        """Sorted constrained-pixel set P_c."""
        out = set()
        for i, j in self.must | self.cannot:
            out.add(i)
            out.add(j)
        return np.array(sorted(out), dtype=np.int64)

    def __len__(self):
        return len(self.must) + len(self.cannot)


def _norm_pair(i: int, j: int):
    return (i, j) if i < j else (j, i)


def derive_constraints(
    lp: LabeledPixels, budget: int | None = None, seed: int = 0
) -> ConstraintSet:
    """All same-label pairs become must-links, different-label pairs
    cannot-links. A finite budget keeps a seeded uniform subsample of the
    combined pair set."""
    pixels = lp.pixels
    labels = lp.labels
    must, cannot = [], []
    for a in range(len(pixels)):
        for b in range(a + 1, len(pixels)):
            pair = _norm_pair(int(pixels[a]), int(pixels[b]))
            if labels[a] == labels[b]:
                must.append(pair)
            else:
                cannot.append(pair)
    if len(pixels) >= 2 and len(set(labels.tolist())) < 2:
        warnings.warn(
            "only one label present; cannot-link set is empty", SingleLabel
        )

    if budget is not None and budget < len(must) + len(cannot):
        pool = sorted(must) + sorted(cannot)  # deterministic order
        keep_idx = _sample_without_replacement(len(pool), budget, seed)
        keep = {pool[i] for i in keep_idx}
        must = [p for p in must if p in keep]
        cannot = [p for p in cannot if p in keep]
    return ConstraintSet(must=frozenset(must), cannot=frozenset(cannot))


@dataclass(frozen=True)
class SelectionIndex:
    """P_u = P_s (random sample) union P_c (constrained), with index maps.

    fwd maps pixel -> local index (-1 when unselected); inv(i) = p_u[i].
    """

    n: int
    p_c: np.ndarray
    p_s: np.ndarray
    p_u: np.ndarray
    fwd: np.ndarray  # length n, -1 for unselected pixels

    @property
    def n_c(self) -> int:
        return len(self.p_c)

    @property
    def n_s(self) -> int:
        return len(self.p_s)

    @property
    def n_u(self) -> int:
        return len(self.p_u)

    def inv(self, local: int) -> int:
        return int(self.p_u[local])

    def local_of(self, pixel: int) -> int:
        loc = int(self.fwd[pixel])
        if loc < 0:
            raise IndexOutOfRange(f"pixel {pixel} is not in the selection")
        return loc


def _sample_without_replacement(n: int, size: int, seed: int) -> np.ndarray:
    """Partial Fisher-Yates over [0, n) driven by numpy's PCG64 generator;
    deterministic for a given seed across platforms."""
    rng = np.random.Generator(np.random.PCG64(seed))
    arr = np.arange(n, dtype=np.int64)
    for i in range(min(size, n)):
        j = i + int(rng.integers(0, n - i))
        arr[i], arr[j] = arr[j], arr[i]
    return arr[:size]


def make_selection(n: int, p_s, p_c) -> SelectionIndex:
    """Assemble a SelectionIndex from an explicit sample and constrained set."""
    p_s = np.unique(np.asarray(p_s, dtype=np.int64))
    p_c = np.unique(np.asarray(p_c, dtype=np.int64))
    for arr, name in ((p_s, "p_s"), (p_c, "p_c")):
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise IndexOutOfRange(f"{name} contains indices outside [0, {n})")
    p_u = np.union1d(p_s, p_c)
    fwd = np.full(n, -1, dtype=np.int64)
    fwd[p_u] = np.arange(len(p_u))
    return SelectionIndex(n=n, p_c=p_c, p_s=p_s, p_u=p_u, fwd=fwd)


def select_pixels(n: int, cs: ConstraintSet, n_s: int, seed: int) -> SelectionIndex:
    """Draw P_s (n_s distinct pixels, uniform, seeded) and form P_u."""
    if n_s < 0 or n_s > n:
        raise SampleTooLarge(f"n_s={n_s} outside [0, {n}]")
    p_s = np.sort(_sample_without_replacement(n, n_s, seed))
    return make_selection(n, p_s, cs.pixels)


@dataclass(frozen=True)
class ConstraintMatrix:
    """Dense n_u x n_u matrix: +1 must-link, -1 cannot-link, 0 otherwise."""

    z: np.ndarray

    @property
    def n_u(self) -> int:
        return self.z.shape[0]


def build_z(cs: ConstraintSet, sel: SelectionIndex) -> ConstraintMatrix:
    n_u = sel.n_u
    z = np.zeros((n_u, n_u))
    for pairs, val in ((cs.must, 1.0), (cs.cannot, -1.0)):
        for i, j in pairs:
            if sel.fwd[i] < 0 or sel.fwd[j] < 0:
                raise UnselectedConstraintPixel(
                    f"constraint pair ({i},{j}) has a pixel outside P_u"
                )
            a, b = sel.fwd[i], sel.fwd[j]
            z[a, b] = val
            z[b, a] = val
    return ConstraintMatrix(z=z)


def load_scribbles(path, width: int, height: int) -> tuple:
    """Read a scribble/constraint JSON file.

    Two accepted forms:
      {"image": ..., "labeled": [{"x": int, "y": int, "label": str}, ...]}
      {"must": [[i, j], ...], "cannot": [[i, j], ...]}

    Returns (LabeledPixels | None, ConstraintSet | None, label_names) where
    exactly one of the first two is not None and label_names maps the
    integer class ids back to the original label strings.
    """
    with open(path) as fh:
        doc = json.load(fh)
    return parse_scribbles(doc, width, height)


def parse_scribbles(doc: dict, width: int, height: int):
    n = width * height
    if "labeled" in doc:
        names = sorted({str(e["label"]) for e in doc["labeled"]})
        name_to_id = {name: i for i, name in enumerate(names)}
        entries = []
        seen = {}
        for e in doc["labeled"]:
            x, y = int(e["x"]), int(e["y"])
            if not (0 <= x < width and 0 <= y < height):
                raise IndexOutOfRange(f"scribble ({x},{y}) outside {width}x{height}")
            pix = y * width + x
            lab = name_to_id[str(e["label"])]
            if seen.get(pix, lab) != lab:
                raise ValueError(f"pixel ({x},{y}) carries two different labels")
            seen[pix] = lab
        entries = sorted(seen.items())
        return LabeledPixels(entries=tuple(entries)), None, names
    if "must" in doc or "cannot" in doc:
        must = frozenset(_norm_pair(int(i), int(j)) for i, j in doc.get("must", []))
        cannot = frozenset(_norm_pair(int(i), int(j)) for i, j in doc.get("cannot", []))
        for i, j in must | cannot:
            if not (0 <= i < n and 0 <= j < n):
                raise IndexOutOfRange(f"constraint pixel pair ({i},{j}) out of range")
        return None, ConstraintSet(must=must, cannot=cannot), []
    raise ValueError("scribble file must contain 'labeled' or 'must'/'cannot'")
