"""End-to-end segmentation runs and the benchmark driver.

The full constrained path is: features -> k-NN weight matrix -> selected
subset and constraint matrix -> propagation -> L1 weight fusion -> patch
-> normalized cuts. Baselines reuse the same graph: plain cuts, and the
direct affinity-edit variant.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import constraints as cons
from . import features as feat
from . import fusion, graph, ncut, scp
from .errors import ConfigError, MissingGroundTruth
from .evaluation import GroundTruth, MetricReport, adjusted_rand

METHODS = ("ncut", "ncut_sl", "ncut_scp")


@dataclass(frozen=True)
class RunConfig:
    image: str | None = None
    scribbles: str | None = None
    method: str = "ncut_scp"
    n_s: int = 2500
    k: int = 60
    alpha: float = 0.9
    beta: float = 0.1
    eps: float = 1e-7
    lam: float = 0.001
    k_regions: int = 2
    seed: int = 0
    constraint_budget: int | None = None
    out_dir: str | None = None
    dump_graph: str | None = None
    load_graph: str | None = None
    dump_fu: str | None = None
    feature: feat.FeatureConfig = field(default_factory=feat.FeatureConfig)
    graph: graph.GraphConfig = field(default_factory=graph.GraphConfig)
    spectral: ncut.SpectralConfig = field(default_factory=ncut.SpectralConfig)
    scp_inner_tol: float = 1e-6
    scp_inner_max_iter: int = 1000
    scp_outer_tol: float = 1e-5
    scp_outer_max_iter: int = 10

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.n_s < 0:
            raise ConfigError("n_s must be >= 0")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not 0 < self.alpha < 1 or not 0 < self.beta < 1:
            raise ConfigError("alpha and beta must lie in (0, 1)")
        if self.eps < 0 or self.lam < 0:
            raise ConfigError("eps and lambda must be >= 0")
        if self.k_regions < 2:
            raise ConfigError("k_regions must be >= 2")
        return self

    def scp_params(self) -> scp.ScpParams:
        return scp.ScpParams(
            alpha=self.alpha,
            beta=self.beta,
            eps=self.eps,
            inner_tol=self.scp_inner_tol,
            inner_max_iter=self.scp_inner_max_iter,
            outer_tol=self.scp_outer_tol,
            outer_max_iter=self.scp_outer_max_iter,
        )

    def echo(self) -> dict:
        return {
            "image": self.image,
            "scribbles": self.scribbles,
            "method": self.method,
            "n_s": self.n_s,
            "k": self.k,
            "alpha": self.alpha,
            "beta": self.beta,
            "eps": self.eps,
            "lambda": self.lam,
            "k_regions": self.k_regions,
            "seed": self.seed,
            "constraint_budget": self.constraint_budget,
            "window_radius": self.graph.window_radius,
            "smoothing_sigma": self.feature.smoothing_sigma,
            "texture_scale": self.feature.texture_scale,
        }


_CONFIG_KEYS = {
    "image": str,
    "scribbles": str,
    "method": str,
    "n_s": int,
    "k": int,
    "alpha": float,
    "beta": float,
    "eps": float,
    "lambda": float,
    "k_regions": int,
    "seed": int,
    "constraint_budget": int,
    "out_dir": str,
    "dump_graph": str,
    "load_graph": str,
    "dump_fu": str,
    "scp_inner_tol": float,
    "scp_inner_max_iter": int,
    "scp_outer_tol": float,
    "scp_outer_max_iter": int,
}


def config_from_dict(doc: dict, base: RunConfig | None = None) -> RunConfig:
    """Build a RunConfig from a JSON document; unknown keys are rejected."""
    cfg = base or RunConfig()
    updates = {}
    sub_feature = dict(smoothing_sigma=cfg.feature.smoothing_sigma,
                       texture_scale=cfg.feature.texture_scale)
    sub_graph = dict(window_radius=cfg.graph.window_radius, sigma=cfg.graph.sigma)
    sub_spec = dict(
        eig_tol=cfg.spectral.eig_tol,
        eig_max_iter=cfg.spectral.eig_max_iter,
        n_eigenvectors=cfg.spectral.n_eigenvectors,
        split_candidates=cfg.spectral.split_candidates,
        seed=cfg.spectral.seed,
    )
    for key, value in doc.items():
        if key in ("lambda", "lam"):
            updates["lam"] = float(value)
        elif key in _CONFIG_KEYS:
            conv = _CONFIG_KEYS[key]
            updates[key] = None if value is None else conv(value)
        elif key in ("smoothing_sigma", "texture_scale"):
            sub_feature[key] = float(value)
        elif key in ("window_radius",):
            sub_graph[key] = int(value)
        elif key in ("kernel_sigma",):
            sub_graph["sigma"] = None if value is None else float(value)
        elif key in ("eig_tol",):
            sub_spec["eig_tol"] = float(value)
        elif key in ("eig_max_iter", "n_eigenvectors", "split_candidates"):
            sub_spec[key] = int(value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    updates["feature"] = feat.FeatureConfig(**sub_feature)
    updates["graph"] = graph.GraphConfig(**sub_graph)
    sub_spec["seed"] = updates.get("seed", cfg.seed)
    updates["spectral"] = ncut.SpectralConfig(**sub_spec)
    return replace(cfg, **updates)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(doc)


@dataclass
class GraphCache:
    """Per-image products reused across methods or interactive calls."""

    fm: feat.FeatureMap | None = None
    w: graph.SparseWeightMatrix | None = None
    p_s: np.ndarray | None = None
    graph_builds: int = 0


class _Timer:
    def __init__(self):
        self.stages = {}

    def stage(self, name):
        return _StageTimer(self, name)


class _StageTimer:
    def __init__(self, timer, name):
        self.timer, self.name = timer, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.timer.stages[self.name] = (
            self.timer.stages.get(self.name, 0.0) + time.perf_counter() - self.t0
        )
        return False


@dataclass
class RunArtifacts:
    """Intermediate products surfaced for visualization and the service."""

    segmentation: ncut.Segmentation
    report: MetricReport
    method: str
    selection: cons.SelectionIndex | None = None
    propagation: scp.PropagationResult | None = None
    labeled: cons.LabeledPixels | None = None


def segment_arrays(
    img: feat.RasterImage,
    lp: cons.LabeledPixels | None,
    cs: cons.ConstraintSet | None,
    cfg: RunConfig,
    cache: GraphCache | None = None,
    gt: GroundTruth | None = None,
) -> RunArtifacts:
    """Run one segmentation on in-memory inputs.

    `lp` gives labeled pixels (constraints derived from them); `cs` gives
    explicit pairs. The cache, when provided, holds features, the weight
    matrix, and the random sample so interactive callers only pay for the
    graph once.
    """
    cfg.validate()
    timer = _Timer()
    t_total = time.perf_counter()
    cache = cache if cache is not None else GraphCache()

    with timer.stage("features"):
        if cache.fm is None:
            cache.fm = feat.extract_features(img, cfg.feature)
        fm = cache.fm

    with timer.stage("graph"):
        if cache.w is None:
            if cfg.load_graph:
                cache.w = graph.load_graph(cfg.load_graph)
            else:
                cache.w = graph.build_knn_graph(
                    fm, img.width, img.height, cfg.k, cfg.graph
                )
            cache.graph_builds += 1
        w = cache.w
        if cfg.dump_graph:
            graph.dump_graph(w, cfg.dump_graph)

    if cs is None and lp is not None:
        cs = cons.derive_constraints(lp, budget=cfg.constraint_budget, seed=cfg.seed)
    if cs is None:
        cs = cons.ConstraintSet(must=frozenset(), cannot=frozenset())

    method = cfg.method
    sel = None
    prop = None

    if method == "ncut":
        w_final = w
    elif method == "ncut_sl":
        with timer.stage("affinity_edit"):
            w_final = ncut.spectral_learning_edit(w, cs)
    else:  # ncut_scp
        with timer.stage("select"):
            n_c = len(cs.pixels)
            if cfg.n_s + n_c > img.n:
                raise ConfigError(
                    f"n_s={cfg.n_s} plus {n_c} constrained pixels exceeds "
                    f"the {img.n}-pixel image"
                )
            if cache.p_s is None:
                cache.p_s = np.sort(
                    cons._sample_without_replacement(img.n, cfg.n_s, cfg.seed)
                )
            sel = cons.make_selection(img.n, cache.p_s, cs.pixels)
            z = cons.build_z(cs, sel)
        with timer.stage("propagate"):
            w_u = graph.restrict(w, sel)
            ops = graph.normalize(w_u)
            prop = scp.propagate(ops, z, cfg.scp_params())
        with timer.stage("fuse"):
            w_u_new = fusion.adjust_weights(prop, w_u, fusion.FusionParams(lam=cfg.lam))
            w_final = fusion.patch_weights(w, w_u_new, sel)

    with timer.stage("cut"):
        spectral = replace(cfg.spectral, seed=cfg.seed)
        if cfg.k_regions == 2:
            seg = ncut.two_way_cut(w_final, spectral)
        else:
            seg = ncut.k_way_cut(w_final, cfg.k_regions, spectral)

    ar = None
    if gt is not None:
        if gt.labels.size != img.n:
            raise MissingGroundTruth(
                f"ground truth has {gt.labels.size} labels for {img.n} pixels"
            )
        ar = adjusted_rand(seg.labels, gt.labels)

    timings = dict(timer.stages)
    timings["total"] = time.perf_counter() - t_total
    report = MetricReport(ar_index=ar, runtime_seconds=timings, params_echo=cfg.echo())
    return RunArtifacts(
        segmentation=seg,
        report=report,
        method=method,
        selection=sel,
        propagation=prop,
        labeled=lp,
    )


def run_scp_segmentation(cfg: RunConfig, gt: GroundTruth | None = None):
    """File-driven entry: load image and scribbles, run, optionally write
    outputs to cfg.out_dir. Returns (Segmentation, MetricReport)."""
    cfg.validate()
    if not cfg.image:
        raise ConfigError("no input image configured")
    img = feat.load_image(cfg.image)

    lp = cs = None
    names = []
    if cfg.scribbles:
        lp, cs, names = cons.load_scribbles(cfg.scribbles, img.width, img.height)
    arts = segment_arrays(img, lp, cs, cfg, gt=gt)

    if cfg.dump_fu and arts.propagation is not None:
        scp.dump_propagation(arts.propagation, cfg.dump_fu)

    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        stem = os.path.splitext(os.path.basename(cfg.image))[0]
        ncut.save_segmentation(
            arts.segmentation,
            img.width,
            img.height,
            os.path.join(cfg.out_dir, f"{stem}_labels.png"),
            os.path.join(cfg.out_dir, f"{stem}_labels.json"),
        )
        with open(os.path.join(cfg.out_dir, f"{stem}_report.json"), "w") as fh:
            fh.write(arts.report.to_json())
        if arts.propagation is not None and arts.selection is not None and lp:
            from .evaluation import infer_selected_labels
            from .report import render_propagated_labels

            inferred = infer_selected_labels(arts.propagation, arts.selection, lp)
            render_propagated_labels(
                img, arts.selection, inferred, names or ["0", "1"],
                os.path.join(cfg.out_dir, f"{stem}_propagated.png"),
            )
    return arts.segmentation, arts.report


@dataclass
class BenchResult:
    rows: list  # dicts: image, method, n_s, ari, seconds
    summary: list  # dicts: method, n_s, mean_ari, mean_seconds

    def mean_ari(self, method: str, n_s: int | None = None) -> float:
        vals = [
            r["ari"]
            for r in self.rows
            if r["method"] == method and (n_s is None or r["n_s"] == n_s)
        ]
        return float(np.mean(vals))


def run_benchmark(
    corpus_dir,
    base_cfg: RunConfig,
    methods=("ncut", "ncut_sl", "ncut_scp"),
    n_s_values=None,
    limit: int | None = None,
    workers: int = 1,
) -> BenchResult:
    """Evaluate methods over a synthetic corpus directory (see `synth`).

    Every (image, method[, n_s]) combination becomes one row; the per-image
    graph is shared across methods. n_s sweeps apply to ncut_scp only.
    """
    manifest_path = os.path.join(corpus_dir, "corpus.json")
    if not os.path.exists(manifest_path):
        raise MissingGroundTruth(f"no corpus manifest at {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    entries = manifest["entries"][: limit or None]

    tasks = [(corpus_dir, entry, base_cfg, methods, n_s_values) for entry in entries]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_image = list(pool.map(_bench_one_image, tasks))
    else:
        per_image = [_bench_one_image(t) for t in tasks]

    rows = [row for chunk in per_image for row in chunk]
    summary = []
    combos = sorted({(r["method"], r["n_s"]) for r in rows})
    for method, n_s in combos:
        sub = [r for r in rows if r["method"] == method and r["n_s"] == n_s]
        summary.append(
            {
                "method": method,
                "n_s": n_s,
                "mean_ari": float(np.mean([r["ari"] for r in sub])),
                "mean_seconds": float(np.mean([r["seconds"] for r in sub])),
            }
        )
    return BenchResult(rows=rows, summary=summary)


def _bench_one_image(task):
    corpus_dir, entry, base_cfg, methods, n_s_values = task
    img = feat.load_image(os.path.join(corpus_dir, entry["image"]))
    from .evaluation import load_ground_truth

    gt = load_ground_truth(os.path.join(corpus_dir, entry["ground_truth"]), img.n)
    lp, cs, _ = cons.load_scribbles(
        os.path.join(corpus_dir, entry["scribbles"]), img.width, img.height
    )
    cache = GraphCache()
    rows = []
    for method in methods:
        sweeps = n_s_values if (method == "ncut_scp" and n_s_values) else [base_cfg.n_s]
        for n_s in sweeps:
            cfg = replace(base_cfg, method=method, n_s=n_s, image=entry["image"])
            # The cached random sample depends on n_s; reset it per sweep.
            cache.p_s = None
            arts = segment_arrays(img, lp, cs, cfg, cache=cache, gt=gt)
            rows.append(
                {
                    "image": entry["image"],
                    "method": method,
                    "n_s": n_s,
                    "ari": arts.report.ar_index,
                    "seconds": arts.report.runtime_seconds["total"],
                }
            )
    return rows
