"""Acceptance criteria 1-10, each checked at its stated tolerance.

Every test prints one ``[PASS]``/``[FAIL]`` line for its criterion. Benchmark
numbers are means over seeds 0..9 with fit and score on the same data.
Datasets live in ``data/``; a missing file fails its items with
"dataset unavailable".
"""

from __future__ import annotations

import time
import warnings
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest
from oracles import (
    best_split_oracle,
    pairwise_auroc,
    random_metric_instances,
    random_split_instances,
    threshold_aupr,
)

from guidedforest.cli import run_bench
from guidedforest.data import ColumnMatrix, RowSubset
from guidedforest.depth import expected_depth
from guidedforest.forest import fit_forest, model_to_json, preset, score_matrix
from guidedforest.io import SyntheticSpec, gen_synthetic, load_csv, score_grid
from guidedforest.metrics import aupr, auroc
from guidedforest.rng import derive_stream
from guidedforest.split import SplitCriterion, best_split
from guidedforest.tree import TerminationPolicy, TreeConfig, build_tree

DATA_DIR = Path(__file__).resolve().parents[1] / "data"
SEEDS = range(10)
BENCH_THREADS = 8
# 10 sdevs from the blob center, along the (1, -1) diagonal
PLANTED = (10.0 / np.sqrt(2.0), -10.0 / np.sqrt(2.0))


class Unavailable(Exception):
    pass


@lru_cache(maxsize=None)
def dataset(name: str):
    path = DATA_DIR / f"{name}.csv"
    if not path.is_file():
        raise Unavailable(f"{name}: dataset unavailable")
    return load_csv(path)


@lru_cache(maxsize=None)
def bench(name: str, preset_name: str, **overrides):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = preset(preset_name, **overrides)
        t0 = time.perf_counter()
        result = run_bench(dataset(name), cfg, SEEDS, BENCH_THREADS, preset_name)
    return result, time.perf_counter() - t0


def bench_cached(name, preset_name, overrides=()):
    return bench(name, preset_name, **dict(overrides))


class Report:
    def __init__(self, label: str):
        self.label = label
        self.items: list[tuple[bool, str]] = []

    def check(self, ok: bool, text: str) -> None:
        self.items.append((bool(ok), text))

    def near(self, what: str, got: float, target: float, tol: float) -> None:
        self.check(abs(got - target) <= tol, f"{what} {got:.4f} (target {target} +-{tol})")

    def roc(self, what, name, preset_name, target, tol, overrides=(), max_seconds=None):
        try:
            res, secs = bench_cached(name, preset_name, overrides)
        except Unavailable as exc:
            self.check(False, f"{what}: {exc}")
            return None
        self.near(what, res.mean_auroc, target, tol)
        if max_seconds is not None:
            self.check(secs < max_seconds, f"{what} run {secs:.1f}s (< {max_seconds}s)")
        return res

    def finish(self) -> None:
        capsys = self.capsys
        ok = all(passed for passed, _ in self.items) and bool(self.items)
        detail = "; ".join(("" if passed else "FAIL ") + text for passed, text in self.items)
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {self.label}: {detail}")
        failed = [text for passed, text in self.items if not passed]
        assert not failed, "; ".join(failed)


@pytest.fixture
def report(request, capsys):
    r = Report(request.node.get_closest_marker("criterion").args[0])
    r.capsys = capsys
    return r


def test_warm_up_jit():
    # compile kernels once so timed criteria measure steady-state work
    X = ColumnMatrix(np.random.default_rng(0).normal(size=(64, 3)))
    for name in ("fcf", "iforest", "sciforest-like"):
        score_matrix(X, fit_forest(X, preset(name, n_trees=2, sample_size=32), 0, threads=2), threads=2)


@pytest.mark.criterion("1 heuristic comparison")
def test_criterion_1(report):
    report.roc("Satellite uniform", "satellite", "iforest", 0.718, 0.03, max_seconds=60)
    report.roc("Satellite pooled", "satellite", "iforest", 0.857, 0.03, (("criterion", "pooled"),), 60)
    report.roc("Annthyroid uniform", "annthyroid", "iforest", 0.827, 0.03, max_seconds=60)
    report.roc("Annthyroid kurtosis", "annthyroid", "iforest", 0.979, 0.03, (("col_select", "kurtosis"),), 60)
    report.roc("Pendigits uniform", "pendigits", "iforest", 0.957, 0.03, max_seconds=60)
    report.finish()


@pytest.mark.criterion("2 termination criteria (SpamBase)")
def test_criterion_2(report):
    if_d8 = report.roc("iForest depth-8", "spambase", "iforest", 0.6405, 0.03)
    if if_d8 is not None:
        nodes = float(np.mean([r["nodes"] for r in if_d8.per_seed]))
        report.check(abs(nodes - 22_346) <= 0.15 * 22_346, f"iForest depth-8 nodes {nodes:.0f} (target 22346 +-15%)")
    if_iso = report.roc("iForest isolation", "spambase", "iforest", 0.6926, 0.03, (("max_depth", None),))
    # the published termination table was produced with 3 trials per node
    fcf_iso = report.roc("FCF isolation", "spambase", "fcf", 0.6220, 0.04, (("trials", 3),))
    fcf_d8, _ = bench_cached("spambase", "fcf", (("trials", 3), ("max_depth", 8)))
    if if_d8 is not None and if_iso is not None:
        report.check(if_iso.mean_auroc > if_d8.mean_auroc, "iForest isolation > depth-8")
    if fcf_iso is not None:
        report.check(fcf_iso.mean_auroc > fcf_d8.mean_auroc, f"FCF isolation > depth-8 ({fcf_d8.mean_auroc:.4f})")
    report.finish()


@pytest.mark.criterion("3 trials trend (SpamBase)")
def test_criterion_3(report):
    r1 = report.roc("trials=1", "spambase", "fcf", 0.7245, 0.03)
    r3 = report.roc("trials=3", "spambase", "fcf", 0.6220, 0.04, (("trials", 3),))
    r10 = report.roc("trials=10", "spambase", "fcf", 0.4986, 0.05, (("trials", 10),))
    if None not in (r1, r3, r10):
        report.check(r1.mean_auroc > r3.mean_auroc > r10.mean_auroc, "strict ordering 1 > 3 > 10")
    report.finish()


@pytest.mark.criterion("4 Satellite FCF p=1")
def test_criterion_4(report):
    report.roc("FCF p=1 trials=1", "satellite", "fcf", 0.8368, 0.03, (("ndim", 1),))
    report.finish()


@pytest.mark.criterion("5 headline benchmark rows")
def test_criterion_5(report):
    sat = report.roc("FCF Satellite ROC", "satellite", "fcf", 0.8253, 0.03)
    if sat is not None:
        report.near("FCF Satellite PR", sat.mean_aupr, 0.7300, 0.04)
    report.roc("FCF Pima ROC", "pima", "fcf", 0.7362, 0.03)
    report.roc("FCF Annthyroid ROC", "annthyroid", "fcf", 0.8712, 0.03)
    report.roc("IF Pendigits ROC", "pendigits", "iforest", 0.9549, 0.02)
    report.roc("SCiF Pendigits ROC", "pendigits", "sciforest-like", 0.9788, 0.02)
    report.roc("SCiF SpamBase ROC", "spambase", "sciforest-like", 0.4517, 0.05)
    report.finish()


def isolation_depth(values: np.ndarray, seed: int) -> float:
    m = ColumnMatrix(values[:, None])
    cfg = TreeConfig(p=1, criterion=SplitCriterion("uniform"), termination=TerminationPolicy())
    tree = build_tree(m, RowSubset.full(values.size), cfg, derive_stream(seed, 0))
    return float(np.mean([d for _, d, _ in tree.terminals()]))


@pytest.mark.criterion("6 depth formulas")
def test_criterion_6(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    for m in (16, 64, 256):
        observed = np.mean([isolation_depth(rng.uniform(size=m), s) for s in range(500)])
        target = expected_depth("harmonic", m)
        report.check(abs(observed - target) <= 0.02 * target, f"harmonic m={m} MC {observed:.4f} vs {target:.4f}")
    report.check(all(expected_depth("pooled", 2**k) == k for k in range(11)), "pooled(2^k) == k, k<=10")
    report.check(expected_depth("averaged", 4) == 2.25, "averaged(4) == 2.25")
    secs = time.perf_counter() - t0
    report.check(secs < 30, f"runtime {secs:.1f}s (< 30s)")
    report.finish()


@pytest.mark.criterion("7 oracle suites")
def test_criterion_7(report):
    for pooled, crit in ((True, SplitCriterion("pooled")), (False, SplitCriterion("averaged"))):
        bad = 0
        for z in random_split_instances(np.random.default_rng(7 + pooled), 1000):
            i, g = best_split_oracle(z, pooled)
            s, got = best_split(z, crit)
            bad += int(np.sum(z <= s)) != i or abs(got - g) > 1e-9
        report.check(bad == 0, f"best_split {crit.kind.value}: {bad}/1000 mismatches")
    bad = 0
    for s, y in random_metric_instances(np.random.default_rng(77), 10_000):
        bad += abs(auroc(s, y) - pairwise_auroc(s, y)) > 1e-12 or abs(aupr(s, y) - threshold_aupr(s, y)) > 1e-12
    report.check(bad == 0, f"auroc/aupr: {bad}/10000 mismatches")
    report.finish()


@pytest.mark.criterion("8 determinism across threads")
def test_criterion_8(report, tmp_path):
    try:
        ds = dataset("satellite")
    except Unavailable as exc:
        report.check(False, str(exc))
        report.finish()
        return
    files = {}
    for threads in (1, 8):
        model = fit_forest(ds.matrix, preset("fcf"), base_seed=123, threads=threads)
        scores = score_matrix(ds.matrix, model, threads=threads)
        mp, sp = tmp_path / f"m{threads}.json", tmp_path / f"s{threads}.csv"
        mp.write_text(model_to_json(model))
        sp.write_text("".join(f"{i},{v!r}\n" for i, v in enumerate(scores.tolist())))
        files[threads] = (mp.read_bytes(), sp.read_bytes())
    report.check(files[1][0] == files[8][0], "model files identical")
    report.check(files[1][1] == files[8][1], "score files identical")
    report.finish()


@pytest.mark.criterion("9 synthetic qualitative")
def test_criterion_9(report):
    for name in ("iforest", "fcf"):
        hits = 0
        for seed in SEEDS:
            ds = gen_synthetic(SyntheticSpec.blob(1000, (0.0, 0.0), 1.0, (PLANTED,), seed=seed))
            scores = score_matrix(ds.matrix, fit_forest(ds.matrix, preset(name), seed))
            top = np.flatnonzero(scores == scores.max())
            hits += top.tolist() == [1000]
        report.check(hits == 10, f"{name}: planted point ranked first {hits}/10")
    ds = gen_synthetic(SyntheticSpec.bimodal(500, ((0.0, 0.0), (10.0, 10.0)), 1.0, seed=0))
    g = score_grid(fit_forest(ds.matrix, preset("fcf"), 0), ((-10, 20), (-10, 20)), 100)
    dist = np.minimum(np.linalg.norm(g[:, :2], axis=1), np.linalg.norm(g[:, :2] - 10.0, axis=1))
    near, far = g[dist <= 1.0, 2].mean(), g[dist > 5.0, 2].mean()
    report.check(near < far, f"bimodal grid near {near:.3f} < far {far:.3f}")
    report.finish()


@pytest.mark.criterion("10 performance")
def test_criterion_10(report):
    try:
        ds = dataset("satellite")
    except Unavailable as exc:
        report.check(False, str(exc))
        report.finish()
        return
    t0 = time.perf_counter()
    model = fit_forest(ds.matrix, preset("fcf"), base_seed=0, threads=8)
    score_matrix(ds.matrix, model, threads=8)
    secs = time.perf_counter() - t0
    report.check(secs < 5.0, f"FCF Satellite fit+score {secs:.2f}s (< 5s)")
    report.finish()
