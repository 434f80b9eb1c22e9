"""Grid search of boosting hyperparameters separately for each predictor-subset size."""

from __future__ import annotations

import itertools
import logging

import numpy as np
import pandas as pd

from . import gbt
from .dataset import FoldAssignment, ObservationTable, build_training_instances, mask_station_columns
from .modeling import derive_seed, run_jobs, train_fold_model
from .thinning import removal_objective

log = logging.getLogger(__name__)

DEFAULT_GRID = {"learning_rate": (0.1, 0.3, 0.5), "max_depth": (6, 10), "subsample": (0.5, 1.0)}
GRID_COLUMNS = ["size", "lr", "depth", "subsample", "fold", "rmse_scaled"]


def expand_grid(grid: dict, base: gbt.GbtParams = gbt.GbtParams()) -> list[gbt.GbtParams]:
    """Cartesian product of ``grid`` values applied on top of ``base``."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid must be non-empty")
    keys = list(grid)
    return [base.replace(**dict(zip(keys, combo)))
            for combo in itertools.product(*(grid[k] for k in keys))]


def random_subset(station_ids, size: int, rng: np.random.Generator) -> list[str]:
    ids = list(station_ids)
    if not 1 <= size <= len(ids):
        raise ValueError(f"subset size {size} outside 1..{len(ids)}")
    pick = rng.choice(len(ids), size=size, replace=False)
    return [ids[i] for i in sorted(pick)]


def tune(table: ObservationTable, folds: FoldAssignment, sizes, grid=DEFAULT_GRID,
         seed: int = 0, test_folds=None, base: gbt.GbtParams = gbt.GbtParams(),
         workers: int = 1) -> tuple[dict[int, gbt.GbtParams], pd.DataFrame]:
    """Pick the best grid point for each subset size.

    For every (size, test fold) one random predictor subset is drawn; a model
    is trained for each grid point and scored on the test fold by the
    station- and variable-averaged scaled RMSE. The winner per size has the
    lowest mean over folds; ties go to the earlier grid point.

    Returns
    -------
    best : dict
        Size -> winning ``GbtParams``.
    results : DataFrame
        One row per (size, grid point, fold) with ``GRID_COLUMNS``.
    """
    points = expand_grid(grid, base) if isinstance(grid, dict) else list(grid)
    if not points:
        raise ValueError("grid must be non-empty")
    S = table.n_stations
    sizes = [int(k) for k in sizes]
    for k in sizes:
        if k > S or k < 1:
            raise ValueError(f"subset size {k} exceeds the {S} available stations")
    test_folds = list(range(folds.n_folds)) if test_folds is None else list(test_folds)

    test_sets = {f: build_training_instances(table, folds.rows(table, [f]), "test")
                 for f in test_folds}
    jobs = []
    for k in sizes:
        for f in test_folds:
            rng = np.random.default_rng(derive_seed(seed, "tune-subset", k, f))
            subset = random_subset(table.station_ids, k, rng)
            mask = np.isin(table.station_ids, subset)
            for gi, p in enumerate(points):
                jobs.append((k, f, gi, p, mask))

    def run(job):
        k, f, gi, p, mask = job
        model = train_fold_model(table, folds, f, mask, p, derive_seed(seed, "tune", k, f, gi))
        test = test_sets[f]
        X = mask_station_columns(test.X, np.flatnonzero(~mask), S)
        return removal_objective(model.predict(X), test.y, test.station, test.var, S)

    scores = run_jobs(run, jobs, workers)
    results = pd.DataFrame([{"size": k, "lr": p.learning_rate, "depth": p.max_depth,
                             "subsample": p.subsample, "fold": f, "rmse_scaled": s,
                             "_gi": gi}
                            for (k, f, gi, p, _), s in zip(jobs, scores)])
    best = {}
    for k in sizes:
        means = results[results["size"] == k].groupby("_gi")["rmse_scaled"].mean()
        gi = int(means.idxmin())   # first minimum in grid order
        best[k] = points[gi]
        log.info("size %d: best %s (mean rmse %.5f)", k, points[gi], means.min())
    return best, results.drop(columns="_gi")[GRID_COLUMNS]
