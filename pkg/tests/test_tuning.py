import numpy as np
import pytest

from wsnthin import dataset, gbt, tuning

BASE = gbt.GbtParams(early_stopping_rounds=5, max_rounds=40)


@pytest.fixture(scope="module")
def network(small_network):
    _, table = small_network
    return table, dataset.make_folds(table, seed=2, rows=table.train_rows)


def test_expand_grid_is_cartesian_product():
    pts = tuning.expand_grid({"learning_rate": (0.1, 0.3), "max_depth": (2, 4, 6)}, BASE)
    assert len(pts) == 6
    assert {(p.learning_rate, p.max_depth) for p in pts} == \
        {(a, b) for a in (0.1, 0.3) for b in (2, 4, 6)}
    assert all(p.max_rounds == 40 for p in pts)


@pytest.mark.parametrize("grid", [{}, {"learning_rate": ()}])
def test_expand_grid_rejects_empty(grid):
    with pytest.raises(ValueError):
        tuning.expand_grid(grid)


def test_single_point_grid_wins(network):
    table, folds = network
    best, res = tuning.tune(table, folds, [3], {"learning_rate": [0.3], "max_depth": [3]},
                            seed=0, test_folds=[0], base=BASE)
    assert best[3].learning_rate == 0.3 and best[3].max_depth == 3
    assert list(res.columns) == tuning.GRID_COLUMNS and len(res) == 1


@pytest.fixture(scope="module")
def tuned(network):
    table, folds = network
    # a vanishing learning rate cannot fit within the round budget
    grid = {"learning_rate": [1e-4, 0.3], "max_depth": [1, 4]}
    return tuning.tune(table, folds, [6, 2], grid, seed=4, test_folds=[0, 1], base=BASE)


def test_winner_has_lowest_mean_score(tuned):
    best, res = tuned
    for k, p in best.items():
        means = res[res["size"] == k].groupby(["lr", "depth"])["rmse_scaled"].mean()
        assert means[(p.learning_rate, p.max_depth)] == means.min()
        assert p.learning_rate == 0.3


def test_results_cover_every_cell(tuned):
    _, res = tuned
    assert len(res) == 2 * 4 * 2
    assert np.isfinite(res["rmse_scaled"]).all()


def test_tuning_is_deterministic(network, tuned):
    table, folds = network
    grid = {"learning_rate": [1e-4, 0.3], "max_depth": [1, 4]}
    best, res = tuning.tune(table, folds, [6, 2], grid, seed=4, test_folds=[0, 1], base=BASE)
    assert best == tuned[0]
    assert res.equals(tuned[1])


def test_size_larger_than_network_raises(network):
    table, folds = network
    with pytest.raises(ValueError, match="exceeds"):
        tuning.tune(table, folds, [7], {"learning_rate": [0.3]}, base=BASE)


def test_random_subset_sorted_and_unique(rng):
    ids = [f"S{i}" for i in range(10)]
    sub = tuning.random_subset(ids, 4, rng)
    assert len(set(sub)) == 4 and sub == sorted(sub, key=ids.index)
