"""Fold-level model fitting shared by tuning, thinning and final training."""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import gbt
from .dataset import FoldAssignment, Instances, ObservationTable, build_training_instances


def derive_seed(seed: int, *keys) -> int:
    """Deterministic child seed for a job identified by ``keys`` (ints or strings)."""
    ints = [k if isinstance(k, (int, np.integer)) else zlib.crc32(str(k).encode()) for k in keys]
    return int(np.random.SeedSequence([int(seed), *map(int, ints)]).generate_state(1)[0])


def station_mask(table: ObservationTable, station_ids) -> np.ndarray:
    ids = set(station_ids)
    unknown = ids - set(table.station_ids)
    if unknown:
        raise ValueError(f"unknown stations: {sorted(unknown)}")
    return np.array([sid in ids for sid in table.station_ids])


def fold_train_val(table: ObservationTable, folds: FoldAssignment, test_fold: int,
                   predictor_mask, seed: int) -> tuple[Instances, Instances]:
    train_f, val_f, _ = folds.roles(test_fold)
    rng = np.random.default_rng(seed)
    tr = build_training_instances(table, folds.rows(table, train_f), "train", rng, predictor_mask)
    va = build_training_instances(table, folds.rows(table, [val_f]), "train", rng, predictor_mask)
    return tr, va


def train_fold_model(table: ObservationTable, folds: FoldAssignment, test_fold: int,
                     predictor_mask, params: gbt.GbtParams, seed: int) -> gbt.TreeEnsemble:
    tr, va = fold_train_val(table, folds, test_fold, predictor_mask, derive_seed(seed, "data"))
    return gbt.train(tr.X, tr.y, va.X, va.y, params, seed=derive_seed(seed, "boost"))


def params_for_size(params_by_size: dict, n: int) -> gbt.GbtParams:
    """Tuned parameters of the tuned size closest to ``n`` (ties go to the larger size)."""
    if not params_by_size:
        raise ValueError("no tuned parameters available")
    size = min(params_by_size, key=lambda k: (abs(k - n), -k))
    return params_by_size[size]


def run_jobs(fn, jobs, workers: int = 1) -> list:
    """Map ``fn`` over ``jobs`` preserving order; threads release the GIL inside kernels."""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))
