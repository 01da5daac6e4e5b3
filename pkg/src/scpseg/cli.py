"""Command-line interface.

Subcommands: `run` (segment one image), `bench` (evaluate methods over a
corpus, writing CSV + figures), `synth` (generate the synthetic corpus),
`serve` (start the interactive HTTP service).

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import errors
from .pipeline import RunConfig, config_from_dict, load_config

_DATA_ERRORS = (
    errors.IoError,
    errors.UnsupportedFormat,
    errors.CorruptImage,
    errors.ImageTooSmall,
    errors.MissingGroundTruth,
    errors.IndexOutOfRange,
    errors.SampleTooLarge,
    errors.UnselectedConstraintPixel,
    errors.UnselectedLabeledPixel,
)
_NUMERICAL_ERRORS = (
    errors.NonFinite,
    errors.NoConvergence,
    errors.NumericalFailure,
    errors.KTooLarge,
)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="scpseg",
        description="Constrained image segmentation with selective "
        "constraint propagation and normalized cuts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="segment a single image")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--image", help="input image (PNG or binary PPM)")
    run.add_argument("--scribbles", help="scribble/constraint JSON file")
    run.add_argument("--method", choices=("ncut", "ncut_sl", "ncut_scp"))
    run.add_argument("--ns", type=int, dest="n_s", help="random sample size")
    run.add_argument("--k", type=int, help="graph neighbors per pixel")
    run.add_argument("--alpha", type=float)
    run.add_argument("--beta", type=float)
    run.add_argument("--eps", type=float)
    run.add_argument("--lambda", type=float, dest="lam")
    run.add_argument("--k-regions", type=int, dest="k_regions")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", dest="out_dir", help="output directory")
    run.add_argument("--ground-truth", help="label map for AR scoring")
    run.add_argument("--dump-graph", help="write the weight matrix here")
    run.add_argument("--load-graph", help="reuse a dumped weight matrix")
    run.add_argument("--dump-fu", help="write the propagated constraint matrix here")

    bench = sub.add_parser("bench", help="benchmark methods over a corpus")
    bench.add_argument("--config", required=True, help="bench JSON config")
    bench.add_argument("--out", required=True, help="output CSV path")
    bench.add_argument("--workers", type=int, default=1)

    synth = sub.add_parser("synth", help="generate the synthetic corpus")
    synth.add_argument("--out", required=True, help="corpus directory")
    synth.add_argument("--count", type=int, default=20)
    synth.add_argument("--seed", type=int, default=1)
    synth.add_argument("--size", type=int, default=64)
    synth.add_argument("--stroke-len", type=int, default=12, dest="stroke_len")

    serve = sub.add_parser("serve", help="start the interactive service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--ui-dir", help="static directory with the built UI")
    serve.add_argument("--size-cap", type=int, default=512)
    serve.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for key in (
        "image", "scribbles", "method", "n_s", "k", "alpha", "beta",
        "eps", "lam", "k_regions", "seed", "out_dir", "dump_graph",
        "load_graph", "dump_fu",
    ):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    cfg = config_from_dict(overrides, base=cfg).validate()

    gt = None
    if args.ground_truth:
        from .evaluation import load_ground_truth

        gt = load_ground_truth(args.ground_truth)

    from .pipeline import run_scp_segmentation

    seg, rep = run_scp_segmentation(cfg, gt=gt)
    out = {
        "method": cfg.method,
        "k_regions": seg.k,
        "ncut_value": seg.ncut_value,
        "ar_index": rep.ar_index,
        "runtime_seconds": rep.runtime_seconds,
    }
    print(json.dumps(out, indent=2))
    return 0


def _cmd_bench(args) -> int:
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise errors.ConfigError(f"cannot read bench config {args.config}: {exc}")
    if not isinstance(doc, dict) or "corpus_dir" not in doc:
        raise errors.ConfigError("bench config must set 'corpus_dir'")
    corpus_dir = doc.pop("corpus_dir")
    methods = tuple(doc.pop("methods", ("ncut", "ncut_sl", "ncut_scp")))
    n_s_values = doc.pop("n_s_values", None)
    limit = doc.pop("limit", None)
    base = config_from_dict(doc).validate()

    from .pipeline import run_benchmark
    from .report import render_figures, write_csv

    result = run_benchmark(
        corpus_dir,
        base,
        methods=methods,
        n_s_values=n_s_values,
        limit=limit,
        workers=args.workers,
    )
    write_csv(result, args.out)
    figures = render_figures(result, os.path.dirname(args.out) or ".")
    for s in result.summary:
        print(
            f"{s['method']:>9s}  n_s={s['n_s']:<6d} "
            f"mean ARI {s['mean_ari']:+.4f}  mean {s['mean_seconds']:.2f}s"
        )
    print(f"wrote {args.out} and {len(figures)} figure(s)")
    return 0


def _cmd_synth(args) -> int:
    from .synth import SynthConfig, generate_corpus

    cfg = SynthConfig(
        count=args.count, size=args.size, seed=args.seed,
        stroke_length=args.stroke_len,
    )
    manifest = generate_corpus(args.out, cfg)
    print(f"wrote {manifest['count']} images to {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    app = create_app(
        ServiceConfig(size_cap=args.size_cap, seed=args.seed, ui_dir=args.ui_dir)
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {
        "run": _cmd_run,
        "bench": _cmd_bench,
        "synth": _cmd_synth,
        "serve": _cmd_serve,
    }[args.command]
    try:
        return handler(args)
    except errors.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
