"""Benchmark reporting: delimited results plus rendered figures.

Writes the per-run CSV table (image, method, n_s, ari, seconds) with
method-level summary rows appended, and renders the method comparison and
the sample-size sweep as PNG figures next to the CSV.
"""
from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .pipeline import BenchResult


def write_csv(result: BenchResult, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "method", "n_s", "ari", "seconds"])
        for row in result.rows:
            writer.writerow(
                [row["image"], row["method"], row["n_s"],
                 f"{row['ari']:.6f}", f"{row['seconds']:.4f}"]
            )
        for s in result.summary:
            writer.writerow(
                ["MEAN", s["method"], s["n_s"],
                 f"{s['mean_ari']:.6f}", f"{s['mean_seconds']:.4f}"]
            )


def render_propagated_labels(img, sel, inferred, class_names, path):
    """Scatter the voted labels of the selected pixels over the image
    ('o' markers for the first class, 'x' for the second), the
    visualization companion to the propagation output."""
    import numpy as np

    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    ax.imshow(img.pixels, interpolation="nearest")
    xs = sel.p_u % img.width
    ys = sel.p_u // img.width
    markers = ("o", "x", "s", "^")
    colors = ("#2563eb", "#eab308", "#dc2626", "#16a34a")
    for cid, name in enumerate(class_names):
        pick = inferred == cid
        if not np.any(pick):
            continue
        ax.scatter(
            xs[pick], ys[pick],
            marker=markers[cid % len(markers)],
            s=12, linewidths=0.8,
            facecolors="none" if markers[cid % len(markers)] == "o" else None,
            edgecolors=colors[cid % len(colors)],
            color=colors[cid % len(colors)],
            label=name,
        )
    ax.legend(loc="lower right", fontsize=7)
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_figures(result: BenchResult, out_dir) -> list:
    """Render method-comparison bars and, when an n_s sweep is present,
    the ARI-vs-sample-size curve. Returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    methods = sorted({s["method"] for s in result.summary})
    best_ns = {}
    for s in result.summary:
        cur = best_ns.get(s["method"])
        if cur is None or s["n_s"] > cur:
            best_ns[s["method"]] = s["n_s"]
    means = [
        next(
            s["mean_ari"]
            for s in result.summary
            if s["method"] == m and s["n_s"] == best_ns[m]
        )
        for m in methods
    ]

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(methods, means, color=["#7f7f7f", "#1f77b4", "#2ca02c"][: len(methods)])
    ax.set_ylabel("mean adjusted Rand index")
    ax.set_title("Segmentation quality by method")
    for i, v in enumerate(means):
        ax.text(i, v + 0.01, f"{v:.3f}", ha="center", fontsize=9)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    fig.tight_layout()
    path = os.path.join(out_dir, "methods_ari.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    sweep = sorted(
        (s["n_s"], s["mean_ari"])
        for s in result.summary
        if s["method"] == "ncut_scp"
    )
    if len(sweep) > 1:
        xs = [p[0] for p in sweep]
        ys = [p[1] for p in sweep]
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(xs, ys, marker="o", color="#2ca02c")
        ax.set_xlabel("random sample size $N_s$")
        ax.set_ylabel("mean adjusted Rand index")
        ax.set_title("Effect of the selected sample size")
        ax.spines["right"].set_visible(False)
        ax.spines["top"].set_visible(False)
        fig.tight_layout()
        path = os.path.join(out_dir, "ns_sweep.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
