"""Greedy backward elimination of predictor stations with scheduled retraining.

At every step each remaining station is tentatively deleted from the
predictors of the test-fold instances, all stations and both variables are
predicted, and the station whose deletion hurts the network-wide objective
least is removed for good. The imputation model is retrained on the surviving
stations whenever the remaining count reaches a retraining point.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import gbt
from .dataset import FoldAssignment, ObservationTable, build_training_instances, mask_station_columns
from .modeling import derive_seed, params_for_size, run_jobs, train_fold_model

log = logging.getLogger(__name__)

RETRAINING_POINTS = (35, 28, 21, 14, 10, 7, 4, 3, 2)
SEQUENCE_COLUMNS = ["fold", "step", "removed_station", "remaining_count",
                    "objective_rmse_scaled", "retrained_flag"]


class EliminationError(RuntimeError):
    def __init__(self, msg, partial):
        super().__init__(msg)
        self.partial = partial


def removal_objective(pred, obs, station, var, n_stations: int, weights=None,
                      observed=None) -> float:
    """Weighted mean over stations of the per-station RMSE averaged over variables.

    Parameters
    ----------
    pred, obs : array
        Aligned scaled predictions and observations.
    station, var : int arrays
        Target station and variable index of every pair.
    weights : array of length ``n_stations``, optional
        Non-negative station weights; uniform when omitted.
    observed : bool array, optional
        Stations treated as measured (error 0) rather than predicted.

    Stations without pairs drop out of the mean with a warning.
    """
    w = np.ones(n_stations) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be non-negative with at least one positive entry")
    d2 = (np.asarray(pred, float) - np.asarray(obs, float)) ** 2
    station = np.asarray(station)
    var = np.asarray(var)
    n_var = int(var.max()) + 1 if len(var) else 1
    n_var = max(n_var, 2)
    sums = np.zeros((n_stations, n_var))
    counts = np.zeros((n_stations, n_var))
    np.add.at(sums, (station, var), d2)
    np.add.at(counts, (station, var), 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rmse = np.sqrt(sums / counts)
    has = counts > 0
    per_station = np.where(has.any(axis=1),
                           np.nansum(np.where(has, rmse, 0.0), axis=1) / np.maximum(has.sum(axis=1), 1),
                           np.nan)
    if observed is not None:
        per_station = np.where(np.asarray(observed, bool), 0.0, per_station)
    empty = np.isnan(per_station) & (w > 0)
    if empty.any():
        warnings.warn(f"stations without prediction pairs excluded: {np.flatnonzero(empty).tolist()}",
                      RuntimeWarning, stacklevel=2)
    ok = ~np.isnan(per_station)
    if not np.any(w[ok] > 0):
        return float("nan")
    return float(np.sum(w[ok] * per_station[ok]) / np.sum(w[ok]))


@dataclass
class RemovalStep:
    step: int
    removed: list[str]
    remaining_count: int
    objective: float
    retrained: bool
    candidate_scores: dict[str, float] = field(repr=False, default_factory=dict)


@dataclass
class RemovalSequence:
    fold: int
    stations: list[str]
    steps: list[RemovalStep] = field(default_factory=list)
    retraining_points: tuple[int, ...] = RETRAINING_POINTS
    # model used at each step (not persisted)
    models: dict[int, gbt.TreeEnsemble] = field(default_factory=dict, repr=False)

    @property
    def order(self) -> list[str]:
        return [s for st in self.steps for s in st.removed]

    def to_frame(self) -> pd.DataFrame:
        rows = [{"fold": self.fold, "step": st.step, "removed_station": s,
                 "remaining_count": st.remaining_count, "objective_rmse_scaled": st.objective,
                 "retrained_flag": int(st.retrained)}
                for st in self.steps for s in st.removed]
        return pd.DataFrame(rows, columns=SEQUENCE_COLUMNS)

    @classmethod
    def from_frame(cls, df: pd.DataFrame, stations) -> list["RemovalSequence"]:
        out = []
        for fold, grp in df.groupby("fold", sort=True):
            seq = cls(fold=int(fold), stations=list(stations))
            for step, g in grp.groupby("step", sort=True):
                seq.steps.append(RemovalStep(step=int(step), removed=g["removed_station"].tolist(),
                                             remaining_count=int(g["remaining_count"].iloc[0]),
                                             objective=float(g["objective_rmse_scaled"].iloc[0]),
                                             retrained=bool(g["retrained_flag"].iloc[0])))
            out.append(seq)
        return out


def extract_subsets(sequence: RemovalSequence, sizes) -> dict[int, list[str]]:
    """Stations remaining after ``len(stations) - k`` removals, for each size ``k``."""
    n = len(sequence.stations)
    order = sequence.order
    out = {}
    for k in sizes:
        if not 1 <= k <= n or n - k > len(order):
            raise ValueError(f"invalid subset size {k} for {n} stations")
        gone = set(order[:n - k])
        out[k] = [s for s in sequence.stations if s not in gone]
    return out


def rank_candidates(scores, ids) -> list[int]:
    """Positions ordered by score, ties broken by station id; NaN scores rank last."""
    return sorted(range(len(scores)),
                  key=lambda i: (np.inf if np.isnan(scores[i]) else scores[i], ids[i]))


def eliminate(table: ObservationTable, folds: FoldAssignment, test_fold: int,
              params_by_size: dict[int, gbt.GbtParams], weights=None, seed: int = 0,
              retraining_points=RETRAINING_POINTS, step_size: int = 1,
              objective_scope: str = "all", min_remaining: int = 1,
              workers: int = 1) -> RemovalSequence:
    """Run the backward elimination for one CV test fold.

    Parameters
    ----------
    params_by_size : dict
        Tuned parameters per subset size; each (re)trained model uses the
        entry closest to the current station count.
    weights : array, optional
        Per-station weights of the removal objective.
    retraining_points : iterable of int
        Remaining-station counts at which the model is retrained.
    step_size : int
        Stations removed per step (1 reproduces the one-at-a-time procedure).
    objective_scope : {"all", "removed"}
        ``all`` scores predictions of every station; ``removed`` treats kept
        stations as measured and scores only removed ones plus the candidate.
    """
    if step_size < 1:
        raise ValueError("step_size must be >= 1")
    if objective_scope not in ("all", "removed"):
        raise ValueError(f"unknown objective scope {objective_scope!r}")
    S = table.n_stations
    ids = table.station_ids
    points = sorted({int(p) for p in retraining_points}, reverse=True)
    w = np.ones(S) if weights is None else np.asarray(weights, dtype=float)

    _, _, test_f = folds.roles(test_fold)
    test = build_training_instances(table, folds.rows(table, [test_f]), "test")
    seq = RemovalSequence(fold=test_fold, stations=list(ids), retraining_points=tuple(points))

    current = list(range(S))
    removed: list[int] = []
    pending = [p for p in points if p < S]
    model = None
    step = 0
    while len(current) > min_remaining:
        step += 1
        n = len(current)
        hit = [p for p in pending if p >= n]
        pending = [p for p in pending if p < n]
        retrained = bool(hit) or (step == 1 and n in points)
        if model is None or hit:
            mask = np.zeros(S, bool)
            mask[current] = True
            try:
                model = train_fold_model(table, folds, test_fold, mask,
                                         params_for_size(params_by_size, n),
                                         derive_seed(seed, "thin", test_fold, n))
            except Exception as exc:
                raise EliminationError(f"retraining at {n} stations failed: {exc}", seq) from exc
        seq.models[step] = model

        X_base = mask_station_columns(test.X, removed, S)

        def score(cand, X_base=X_base, model=model):
            keep = np.ones(len(test), bool)
            observed = None
            if objective_scope == "removed":
                observed = np.ones(S, bool)
                observed[removed + [cand]] = False
                keep = ~observed[test.station]
            X = mask_station_columns(X_base[keep], [cand], S)
            pred = model.predict(X)
            return removal_objective(pred, test.y[keep], test.station[keep], test.var[keep],
                                     S, w, observed)

        candidates = list(current)
        scores = run_jobs(score, candidates, workers)
        ranked = rank_candidates(scores, [ids[c] for c in candidates])
        k = min(step_size, n - min_remaining)
        chosen = [candidates[i] for i in ranked[:k]]
        for c in chosen:
            current.remove(c)
            removed.append(c)
        seq.steps.append(RemovalStep(step=step, removed=[ids[c] for c in chosen],
                                     remaining_count=len(current), objective=float(scores[ranked[0]]),
                                     retrained=retrained,
                                     candidate_scores={ids[c]: float(v) for c, v in zip(candidates, scores)}))
        log.debug("fold %d step %d removed %s", test_fold, step, [ids[c] for c in chosen])
    return seq
