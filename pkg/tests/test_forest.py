import json

import numpy as np
import pytest

from guidedforest.data import ColumnMatrix, ContractError
from guidedforest.depth import expected_depth
from guidedforest.forest import (
    FORMAT_VERSION,
    PRESETS,
    ForestConfig,
    NothingToSplit,
    fit_forest,
    load_model,
    mean_depths,
    model_from_json,
    model_to_json,
    normalize,
    preset,
    save_model,
    score_matrix,
    score_point,
)
from guidedforest.io import SyntheticSpec, gen_synthetic
from guidedforest.rng import GENERATOR_VERSION
from guidedforest.tree import tree_score


@pytest.fixture(scope="module")
def small():
    return ColumnMatrix(np.random.default_rng(0).normal(size=(300, 5)))


def test_presets():
    fcf = PRESETS["fcf"]
    assert (fcf.n_trees, fcf.sample_size, fcf.ndim, fcf.criterion, fcf.trials) == (200, 256, 2, "pooled", 1)
    assert fcf.max_depth is None and fcf.gain_threshold is None
    iso = PRESETS["iforest"]
    assert (iso.n_trees, iso.sample_size, iso.ndim, iso.criterion, iso.max_depth) == (100, 256, 1, "uniform", 8)
    sci = PRESETS["sciforest-like"]
    assert (sci.n_trees, sci.ndim, sci.criterion, sci.trials, sci.max_depth) == (100, 2, "averaged", 10, 8)


def test_preset_overrides():
    assert preset("fcf", trials=3).trials == 3
    assert preset("iforest", sample_size=1024).max_depth == 10
    assert preset("iforest", sample_size=1024, max_depth=4).max_depth == 4
    with pytest.raises(ContractError):
        preset("nope")


def test_config_round_trip():
    cfg = ForestConfig(n_trees=3, criterion="averaged", trials=4, max_depth=5, depth_formula="harmonic")
    assert ForestConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_smallest_fit():
    X = ColumnMatrix(np.array([[0.0, 1.0], [2.0, 3.0]]))
    model = fit_forest(X, ForestConfig(n_trees=1, sample_size=2), base_seed=3)
    assert model.n_trees == 1 and model.normalizer_q == expected_depth("pooled", 2)
    assert model.node_count == 3


def test_sample_size_clamped(small):
    with pytest.warns(UserWarning, match="clamped"):
        model = fit_forest(small, ForestConfig(n_trees=2, sample_size=1000))
    assert model.sample_size == 300
    assert model.normalizer_q == expected_depth("pooled", 300)


def test_nothing_to_split():
    with pytest.raises(NothingToSplit, match="nothing to split"):
        fit_forest(ColumnMatrix(np.ones((10, 3))), ForestConfig(n_trees=2, sample_size=8))


def test_normalizer_follows_formula(small):
    for crit, formula in (("uniform", "harmonic"), ("averaged", "averaged"), ("pooled", "pooled")):
        m = fit_forest(small, ForestConfig(n_trees=1, criterion=crit, trials=1), 0)
        assert m.normalizer_q == expected_depth(formula, 256)
    m = fit_forest(small, ForestConfig(n_trees=1, criterion="averaged", depth_formula="harmonic"), 0)
    assert m.normalizer_q == expected_depth("harmonic", 256)


def test_normalize_examples():
    q = 7.3
    assert normalize(q, q) == 0.5
    assert normalize(0.0, q) == 1.0
    assert normalize(2 * q, q) == 0.25
    d = np.linspace(0, 50, 200)
    assert np.all(np.diff(normalize(d, q)) < 0)


def test_scores_in_range_and_order_preserving(small):
    model = fit_forest(small, ForestConfig(n_trees=1, sample_size=300), 1)
    scores = score_matrix(small, model)
    assert np.all((scores > 0) & (scores <= 1))
    perm = np.random.default_rng(2).permutation(small.rows)
    np.testing.assert_array_equal(score_matrix(small.values[perm], model), scores[perm])
    assert score_point(small.values[5], model) == scores[5]


def test_column_mismatch(small):
    model = fit_forest(small, ForestConfig(n_trees=2), 0)
    with pytest.raises(ContractError):
        score_matrix(np.zeros((3, 4)), model)


@pytest.mark.parametrize("name", ["fcf", "iforest", "sciforest-like"])
def test_thread_count_does_not_change_anything(name):
    X = ColumnMatrix(np.random.default_rng(5).normal(size=(3000, 6)))
    cfg = preset(name, n_trees=20)
    a = fit_forest(X, cfg, 42, threads=1)
    b = fit_forest(X, cfg, 42, threads=8)
    assert model_to_json(a) == model_to_json(b)
    np.testing.assert_array_equal(score_matrix(X, a, threads=1), score_matrix(X, b, threads=8))


def test_seed_changes_model(small):
    cfg = ForestConfig(n_trees=3)
    assert model_to_json(fit_forest(small, cfg, 0)) != model_to_json(fit_forest(small, cfg, 1))


def test_json_round_trip_bit_exact(small, tmp_path):
    cfg = ForestConfig(n_trees=10, criterion="averaged", trials=2, max_depth=6, col_select="kurtosis")
    model = fit_forest(small, cfg, 7)
    path = tmp_path / "m.json"
    save_model(model, path)
    back = load_model(path)
    assert all(a.equals(b) for a, b in zip(model.trees, back.trees))
    np.testing.assert_array_equal(score_matrix(small, model), score_matrix(small, back))
    assert model_to_json(back) == path.read_text()
    doc = json.loads(path.read_text())
    assert doc["format_version"] == FORMAT_VERSION and doc["generator_version"] == GENERATOR_VERSION
    assert {"base_seed", "config", "q"} <= doc.keys()
    root = doc["trees"][0]
    assert {"columns", "coeffs", "means", "sdevs", "threshold", "left", "right"} <= root.keys()


def test_unknown_format_version(small):
    doc = json.loads(model_to_json(fit_forest(small, ForestConfig(n_trees=1), 0)))
    doc["format_version"] = 99
    with pytest.raises(ValueError, match="format version"):
        model_from_json(json.dumps(doc))


def test_deep_model_round_trip():
    X = ColumnMatrix((2.0 ** np.arange(800))[:, None] / 2.0**800)
    model = fit_forest(X, ForestConfig(n_trees=1, sample_size=800, ndim=1, criterion="averaged"), 0)
    back = model_from_json(model_to_json(model))
    assert back.trees[0].equals(model.trees[0])


def test_replacement_sampling(small):
    model = fit_forest(small, ForestConfig(n_trees=5, sample_size=300, replacement=True), 0)
    full = fit_forest(small, ForestConfig(n_trees=5, sample_size=300), 0)
    assert model_to_json(model) != model_to_json(full)
    # without replacement on all rows every tree sees the same data
    assert all(t.node_count == 2 * 300 - 1 for t in full.trees)


def test_global_weight_scope(small):
    cfg = ForestConfig(n_trees=3, col_select="range", weight_scope="global")
    assert fit_forest(small, cfg, 0).n_trees == 3


def test_mean_depths_equal_tree_average(small):
    model = fit_forest(small, ForestConfig(n_trees=4, max_depth=5), 0)
    x = small.values[:20]
    manual = [np.mean([tree_score(r, t) for t in model.trees]) for r in x]
    np.testing.assert_allclose(mean_depths(x, model), manual, rtol=0, atol=1e-12)


@pytest.mark.parametrize("name", ["fcf", "iforest"])
def test_planted_outlier_ranks_first(name):
    for seed in range(3):
        ds = gen_synthetic(SyntheticSpec.blob(n=1000, outliers=((10.0, -10.0),), seed=seed))
        scores = score_matrix(ds.matrix, fit_forest(ds.matrix, preset(name), seed))
        assert int(np.argmax(scores)) == 1000
