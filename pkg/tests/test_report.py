import csv
import json

import numpy as np
import pytest

import scpseg.features as F
from scpseg.pipeline import BenchResult, RunConfig, run_benchmark
from scpseg.report import render_figures, write_csv
from scpseg.synth import SynthConfig, generate_corpus


@pytest.fixture(scope="module")
def tiny_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_corpus")
    generate_corpus(out, SynthConfig(count=2, size=32, seed=3, stroke_length=8))
    return out


@pytest.fixture(scope="module")
def bench_result(tiny_corpus):
    base = RunConfig(
        n_s=80, k=8, seed=0,
        feature=F.FeatureConfig(smoothing_sigma=1.0, texture_scale=1.0),
    )
    return run_benchmark(
        tiny_corpus, base, methods=("ncut", "ncut_scp"), n_s_values=[40, 80]
    )


def test_benchmark_row_shape(bench_result):
    # 2 images x (ncut + scp at two sample sizes) = 6 rows
    assert len(bench_result.rows) == 6
    methods = {(r["method"], r["n_s"]) for r in bench_result.rows}
    assert ("ncut", 80) in methods
    assert ("ncut_scp", 40) in methods and ("ncut_scp", 80) in methods
    assert len(bench_result.summary) == 3
    for row in bench_result.rows:
        assert -1.0 <= row["ari"] <= 1.0
        assert row["seconds"] > 0


def test_csv_layout(bench_result, tmp_path):
    path = tmp_path / "results.csv"
    write_csv(bench_result, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["image", "method", "n_s", "ari", "seconds"]
    assert len(rows) == 1 + len(bench_result.rows) + len(bench_result.summary)
    means = [r for r in rows if r[0] == "MEAN"]
    assert len(means) == len(bench_result.summary)


def test_figures_rendered(bench_result, tmp_path):
    written = render_figures(bench_result, tmp_path)
    names = {p.split("/")[-1] for p in written}
    assert "methods_ari.png" in names
    assert "ns_sweep.png" in names  # sweep present in this bench
    for p in written:
        with open(p, "rb") as fh:
            assert fh.read(8) == b"\x89PNG\r\n\x1a\n"


def test_parallel_workers_match_serial(tiny_corpus):
    base = RunConfig(
        n_s=60, k=8, seed=0,
        feature=F.FeatureConfig(smoothing_sigma=1.0, texture_scale=1.0),
    )
    serial = run_benchmark(tiny_corpus, base, methods=("ncut",))
    parallel = run_benchmark(tiny_corpus, base, methods=("ncut",), workers=2)
    a = sorted((r["image"], r["ari"]) for r in serial.rows)
    b = sorted((r["image"], r["ari"]) for r in parallel.rows)
    assert a == b


def test_mean_ari_helper(bench_result):
    m = bench_result.mean_ari("ncut_scp", 80)
    manual = np.mean(
        [r["ari"] for r in bench_result.rows
         if r["method"] == "ncut_scp" and r["n_s"] == 80]
    )
    assert m == pytest.approx(manual)
