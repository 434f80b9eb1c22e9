"""Reference models: per-station interaction GLMs and random predictor subsets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .dataset import ObservationTable
from .domain import Variable, e_to_rh, saturation_vapor_pressure
from .evaluation import PAIR_COLUMNS
from .modeling import derive_seed

MIN_GLM_ROWS = 5
COEF_COLUMNS = ["station", "variable", "b0", "b1", "b2", "b3", "n_obs", "r2_train"]


class RankDeficientError(ValueError):
    def __init__(self, msg, condition_number):
        super().__init__(msg)
        self.condition_number = condition_number


@dataclass(frozen=True)
class GlmModel:
    """``y = b0 + b1 x1 + b2 x2 + b3 x1 x2`` fitted by least squares."""
    station: str
    variable: str
    references: tuple[str, str]
    coef: np.ndarray
    n_obs: int
    r2_train: float

    def predict(self, x1, x2) -> np.ndarray:
        return design(x1, x2) @ self.coef


def design(x1, x2) -> np.ndarray:
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return np.column_stack([np.ones_like(x1), x1, x2, x1 * x2])


def fit_glm(y, x1, x2, station: str = "", variable: str = "",
            references: tuple[str, str] = ("", ""), rcond: float = 1e-10) -> GlmModel:
    """Ordinary least squares on complete cases of ``(y, x1, x2)``.

    Raises
    ------
    ValueError
        Fewer than five complete rows.
    RankDeficientError
        The design ``[1, x1, x2, x1*x2]`` is (numerically) rank deficient.
    """
    y = np.asarray(y, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    ok = ~(np.isnan(y) | np.isnan(x1) | np.isnan(x2))
    if ok.sum() < MIN_GLM_ROWS:
        raise ValueError(f"{station}/{variable}: only {ok.sum()} complete rows")
    A = design(x1[ok], x2[ok])
    # column scaling keeps the rank test independent of physical units
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = 1.0
    sv = np.linalg.svd(A / norms, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if sv[-1] <= rcond * sv[0]:
        raise RankDeficientError(f"{station}/{variable}: rank-deficient GLM design "
                                 f"(condition number {cond:.3g})", cond)
    coef, *_ = np.linalg.lstsq(A, y[ok], rcond=None)
    resid = y[ok] - A @ coef
    sst = np.sum((y[ok] - y[ok].mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / sst if sst > 0 else np.nan
    return GlmModel(station=station, variable=variable, references=tuple(references),
                    coef=coef, n_obs=int(ok.sum()), r2_train=float(r2))


def _physical(table: ObservationTable, rows):
    ta = table.raw[rows, :, 0]
    e = table.raw[rows, :, 1]
    with np.errstate(invalid="ignore"):
        rh = np.where(np.isnan(ta) | np.isnan(e), np.nan,
                      e_to_rh(np.nan_to_num(e), np.nan_to_num(ta), warn=False))
    return ta, rh


def glm_baseline(table: ObservationTable, references: tuple[str, str], train_period,
                 eval_period, variant: str = "") -> tuple[list[GlmModel], pd.DataFrame]:
    """Fit Ta and RH GLMs for every non-reference station and predict the eval period.

    Vapour pressure predictions are derived from the predicted RH and Ta.
    Returns the fitted models and a pairs frame (Ta and e) for the evaluation suite.
    """
    if len(set(references)) != 2:
        raise ValueError("two distinct reference stations are required")
    r1, r2 = (table.station_index(r) for r in references)
    tr = table.rows_between(*train_period)
    ev = table.rows_between(*eval_period)
    ta_tr, rh_tr = _physical(table, tr)
    ta_ev, rh_ev = _physical(table, ev)
    models, frames = [], []
    for s, sid in enumerate(table.station_ids):
        if s in (r1, r2):
            continue
        m_ta = fit_glm(ta_tr[:, s], ta_tr[:, r1], ta_tr[:, r2], sid, Variable.TA.value, references)
        m_rh = fit_glm(rh_tr[:, s], rh_tr[:, r1], rh_tr[:, r2], sid, Variable.RH.value, references)
        models += [m_ta, m_rh]
        ta_hat = m_ta.predict(ta_ev[:, r1], ta_ev[:, r2])
        rh_hat = np.maximum(m_rh.predict(rh_ev[:, r1], rh_ev[:, r2]), 0.0)
        ok_ta = ~np.isnan(ta_hat)
        e_hat = np.full_like(ta_hat, np.nan)
        e_hat[ok_ta] = rh_hat[ok_ta] / 100.0 * saturation_vapor_pressure(ta_hat[ok_ta])
        for v, pred in ((0, ta_hat), (1, e_hat)):
            obs = table.raw[ev, s, v]
            keep = ~np.isnan(obs)
            frames.append(pd.DataFrame({
                "variant": variant, "model": "GLM", "size": 2, "repeat": 0, "fold": -1,
                "timestamp": table.timestamps[ev[keep]], "station": sid,
                "variable": (Variable.TA if v == 0 else Variable.E).value,
                "pred": pred[keep], "obs": obs[keep],
            }))
    pairs = pd.concat(frames, ignore_index=True)[PAIR_COLUMNS] if frames \
        else pd.DataFrame(columns=PAIR_COLUMNS)
    return models, pairs


def coefficients_frame(models) -> pd.DataFrame:
    return pd.DataFrame([{"station": m.station, "variable": m.variable,
                          "b0": m.coef[0], "b1": m.coef[1], "b2": m.coef[2], "b3": m.coef[3],
                          "n_obs": m.n_obs, "r2_train": m.r2_train} for m in models],
                        columns=COEF_COLUMNS)


def random_subsets(station_ids, sizes, n_folds: int, repeats: int = 10,
                   seed: int = 0) -> dict[tuple[int, int], list[list[str]]]:
    """Uniform random predictor subsets for each (size, fold), ``repeats`` per cell.

    Each subset lists its stations in input order.
    """
    ids = list(station_ids)
    out = {}
    for k in sizes:
        if not 1 <= k <= len(ids):
            raise ValueError(f"subset size {k} outside 1..{len(ids)}")
        for f in range(n_folds):
            rng = np.random.default_rng(derive_seed(seed, "random-subsets", k, f))
            out[(k, f)] = [[ids[i] for i in sorted(rng.choice(len(ids), size=k, replace=False))]
                           for _ in range(repeats)]
    return out
