"""Segmentation quality metrics and propagated-label inference.

The adjusted Rand index is computed from the pair-counting contingency
table; label inference over the selected subset treats the initially
labeled pixels as voters weighted by the propagated constraint values.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, MissingGroundTruth, UnselectedLabeledPixel


@dataclass(frozen=True)
class GroundTruth:
    labels: np.ndarray  # (N,) region ids
    k: int

    @classmethod
    def from_labels(cls, labels) -> "GroundTruth":
        labels = np.asarray(labels, dtype=np.int64)
        return cls(labels=labels, k=int(len(np.unique(labels))))


@dataclass
class MetricReport:
    ar_index: float | None
    runtime_seconds: dict
    params_echo: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "ar_index": self.ar_index,
                "runtime_seconds": self.runtime_seconds,
                "params_echo": self.params_echo,
            },
            indent=2,
            default=str,
        )


def _pair_sum(counts: np.ndarray) -> int:
    """Sum of C(c, 2) over counts, exact in Python ints."""
    return int(sum(int(c) * (int(c) - 1) // 2 for c in counts))


def adjusted_rand(a, b) -> float:
    """Chance-corrected pair-counting agreement between two labelings.

    Degenerate denominator (both partitions all-singletons or single
    cluster) is defined as 1.0 when the partitions are identical and 0.0
    otherwise.
    """
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise LengthMismatch(f"labelings have lengths {a.size} and {b.size}")
    n = a.size
    if n < 2:
        raise LengthMismatch("need at least 2 elements")

    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka, kb = ai.max() + 1, bi.max() + 1
    contingency = np.bincount(ai * kb + bi, minlength=ka * kb).reshape(ka, kb)

    sum_cells = _pair_sum(contingency.ravel())
    sum_a = _pair_sum(contingency.sum(axis=1))
    sum_b = _pair_sum(contingency.sum(axis=0))
    total = n * (n - 1) // 2

    expected = sum_a * sum_b / total
    numerator = sum_cells - expected
    denominator = 0.5 * (sum_a + sum_b) - expected
    if denominator == 0.0:
        same = bool(np.array_equal(ai, bi) or _same_partition(ai, bi))
        return 1.0 if same else 0.0
    return float(numerator / denominator)


def _same_partition(ai: np.ndarray, bi: np.ndarray) -> bool:
    """True when the two label vectors induce the same partition."""
    seen = {}
    for x, y in zip(ai.tolist(), bi.tolist()):
        if seen.setdefault(x, y) != y:
            return False
    return len(set(seen.values())) == len(seen)


def infer_selected_labels(f_u, sel, lp) -> np.ndarray:
    """Vote region labels for every selected pixel.

    For selected pixel j, class c scores the sum of propagated values
    between j and every pixel labeled c; j takes the argmax class (ties
    to the smaller class id). Labeled pixels keep their given labels.
    """
    fu = np.asarray(f_u.f_u if hasattr(f_u, "f_u") else f_u, dtype=np.float64)
    classes = sorted(set(int(l) for _, l in lp.entries))
    n_u = fu.shape[0]
    scores = np.zeros((n_u, len(classes)))
    for pix, lab in lp.entries:
        if sel.fwd[pix] < 0:
            raise UnselectedLabeledPixel(f"labeled pixel {pix} is outside P_u")
        scores[:, classes.index(int(lab))] += fu[sel.fwd[pix], :]
    out = np.array([classes[c] for c in np.argmax(scores, axis=1)], dtype=np.int64)
    for pix, lab in lp.entries:
        out[sel.fwd[pix]] = lab
    return out


def load_ground_truth(path, expected_n: int | None = None) -> GroundTruth:
    """Read ground truth as a PNG label map (distinct colors = regions) or
    a JSON sidecar with run-length encoded labels."""
    path = str(path)
    try:
        if path.endswith(".json"):
            with open(path) as fh:
                doc = json.load(fh)
            from .ncut import rle_decode

            labels = rle_decode(doc["labels_rle"])
        else:
            from PIL import Image

            with Image.open(path) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
            flat = arr.reshape(-1, 3)
            _, labels = np.unique(flat, axis=0, return_inverse=True)
    except OSError as exc:
        raise MissingGroundTruth(f"cannot read ground truth {path}: {exc}") from exc
    if expected_n is not None and labels.size != expected_n:
        raise MissingGroundTruth(
            f"ground truth has {labels.size} pixels, expected {expected_n}"
        )
    return GroundTruth.from_labels(labels)
