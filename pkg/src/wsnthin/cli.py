"""Command-line pipeline: simulate, qc, build, tune, thin, fit, baseline, evaluate, report.

Each stage reads the artifacts of earlier stages from the output directory
and writes CSV files headed by a manifest (config hash, seed, code version).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, baselines, dataset, evaluation, gbt, qc, synth, thinning, tuning
from .config import ConfigError, PipelineConfig, bundled_config_path, load_config
from .domain import DomainError
from .io import MissingArtifactError, read_csv, write_csv
from .modeling import derive_seed

log = logging.getLogger("wsnthin")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
STAGES = ("simulate", "qc", "build", "tune", "thin", "fit", "baseline", "evaluate", "report")


class DataError(RuntimeError):
    pass


class Context:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self._table = None

    def manifest(self, stage: str) -> dict:
        return {"config_hash": self.cfg.digest(), "seed": self.cfg.seed,
                "code_version": __version__, "stage": stage}

    def write(self, name: str, df: pd.DataFrame, stage: str) -> None:
        write_csv(self.out / name, df, self.manifest(stage))
        log.info("wrote %s (%d rows)", self.out / name, len(df))

    def read(self, name: str, stage: str, **kw) -> pd.DataFrame:
        return read_csv(self.out / name, stage=stage, **kw)

    def seed(self, name: str) -> int:
        return derive_seed(self.cfg.seed, name)

    # -- shared inputs ---------------------------------------------------------------
    def stations(self):
        path = self.cfg.paths.metadata or self.out / "metadata.csv"
        return dataset.stations_from_frame(read_csv(path, stage="simulate"))

    def table(self) -> dataset.ObservationTable:
        if self._table is None:
            series = self.read("series_10min.csv", "qc", parse_dates=["timestamp"])
            self._table = dataset.build_wide_table(series, self.stations(), self.cfg.year1)
        return self._table

    def folds(self) -> dataset.FoldAssignment:
        return dataset.FoldAssignment.from_frame(self.read("folds.csv", "build"), self.cfg.n_folds)

    def sizes(self) -> list[int]:
        S = self.table().n_stations
        sizes = sorted({k for k in self.cfg.subset_sizes if 2 <= k <= S} | {S}, reverse=True)
        return sizes

    def params_by_size(self) -> dict[int, gbt.GbtParams]:
        base = self.cfg.base_params()
        if not self.cfg.tuning.enabled:
            return {self.table().n_stations: base}
        best = self.read("best_params.csv", "tune")
        return {int(r.size): base.replace(learning_rate=float(r.lr), max_depth=int(r.depth),
                                          subsample=float(r.subsample))
                for r in best.itertuples(index=False)}

    def variants(self) -> dict[str, evaluation.RunVariant]:
        return evaluation.standard_variants(self.cfg.year1, self.cfg.year2)


# -- stages ------------------------------------------------------------------------------

def stage_simulate(ctx: Context) -> None:
    res = synth.generate(ctx.cfg.scenario_config(), seed=ctx.seed("simulate"))
    obs = res.observed_long()
    obs["timestamp"] = obs["timestamp"].dt.strftime("%Y-%m-%d %H:%M:%S")
    ctx.write("observations.csv", obs, "simulate")
    ctx.write("metadata.csv", dataset.stations_to_frame(res.stations), "simulate")
    truth = res.truth_long()
    truth["timestamp"] = truth["timestamp"].dt.strftime("%Y-%m-%d %H:%M:%S")
    ctx.write("truth.csv", truth, "simulate")


def stage_qc(ctx: Context) -> None:
    path = ctx.cfg.paths.observations or ctx.out / "observations.csv"
    obs = read_csv(path, stage="simulate", parse_dates=["timestamp"])
    missing = {"timestamp", "station", "variable", "value"} - set(obs.columns)
    if missing:
        raise DataError(f"observations lack columns {sorted(missing)}")
    exclusions = []
    if ctx.cfg.paths.exclusions:
        ex = read_csv(ctx.cfg.paths.exclusions, parse_dates=["start", "end"])
        exclusions = [qc.ExclusionWindow(r.station, r.variable, r.start, r.end)
                      for r in ex.itertuples(index=False)]
    cleaned, report = qc.run_qc_long(obs, ctx.cfg.qc_config(), exclusions)
    ctx.write("qc_report.csv", report, "qc")
    series = qc.to_model_series(cleaned)
    series["timestamp"] = series["timestamp"].dt.strftime("%Y-%m-%d %H:%M:%S")
    ctx.write("series_10min.csv", series.dropna(subset=["value"]), "qc")


def stage_build(ctx: Context) -> None:
    table = ctx.table()
    rows = []
    for s, sid in enumerate(table.station_ids):
        for v, var in enumerate(dataset.MODELED_VARIABLES):
            rows.append({"station": sid, "variable": var.value, "min": table.scale_min[s, v],
                         "max": table.scale_max[s, v]})
    ctx.write("scaling.csv", pd.DataFrame(rows), "build")
    folds = dataset.make_folds(table, ctx.seed("folds"), ctx.cfg.n_folds)
    ctx.write("folds.csv", folds.to_frame(), "build")


def stage_tune(ctx: Context) -> None:
    table, folds = ctx.table(), ctx.folds()
    sizes = ctx.cfg.tuning.sizes or ctx.sizes()
    best, results = tuning.tune(table, folds, sizes, ctx.cfg.tuning.grid, seed=ctx.seed("tune"),
                                test_folds=ctx.cfg.tuning.test_folds, base=ctx.cfg.base_params(),
                                workers=ctx.cfg.workers)
    ctx.write("grid_results.csv", results, "tune")
    ctx.write("best_params.csv", pd.DataFrame(
        [{"size": k, "lr": p.learning_rate, "depth": p.max_depth, "subsample": p.subsample}
         for k, p in sorted(best.items())]), "tune")


def _weights(ctx: Context, table):
    w = ctx.cfg.thinning.weights
    if w is None:
        return None
    unknown = set(w) - set(table.station_ids)
    if unknown:
        raise ConfigError(f"weights name unknown stations {sorted(unknown)}")
    return np.array([float(w.get(sid, 1.0)) for sid in table.station_ids])


def stage_thin(ctx: Context) -> None:
    table, folds = ctx.table(), ctx.folds()
    th = ctx.cfg.thinning
    fold_ids = th.folds if th.folds is not None else range(folds.n_folds)
    params = ctx.params_by_size()
    frames = []
    for f in fold_ids:
        try:
            seq = thinning.eliminate(table, folds, f, params, weights=_weights(ctx, table),
                                     seed=ctx.seed("thin"), retraining_points=th.retraining_points,
                                     step_size=th.step_size, objective_scope=th.objective_scope,
                                     workers=ctx.cfg.workers)
        except thinning.EliminationError as exc:
            ctx.write("removal_sequence.partial.csv", exc.partial.to_frame(), "thin")
            raise
        frames.append(seq.to_frame())
    ctx.write("removal_sequence.csv", pd.concat(frames, ignore_index=True), "thin")


def _guided_subsets(ctx: Context, table) -> dict[int, dict[int, list[str]]]:
    seq_df = ctx.read("removal_sequence.csv", "thin")
    seqs = thinning.RemovalSequence.from_frame(seq_df, table.station_ids)
    out = {}
    for k in ctx.sizes():
        per_fold = {}
        for f in range(ctx.cfg.n_folds):
            seq = seqs[f % len(seqs)]
            per_fold[f] = thinning.extract_subsets(seq, [k])[k]
        out[k] = per_fold
    return out


def stage_fit(ctx: Context) -> None:
    table = ctx.table()
    subsets = _guided_subsets(ctx, table)
    params = ctx.params_by_size()
    variants = ctx.variants()
    frames = []
    for name in ctx.cfg.variants:
        run = evaluation.fit_final(table, subsets, params, variants[name], seed=ctx.seed("final"),
                                   n_folds=ctx.cfg.n_folds, test_folds=ctx.cfg.final_test_folds,
                                   model_label="EGB", workers=ctx.cfg.workers)
        frames.append(run.pairs)
    ctx.write("predictions.csv", _fmt_pairs(pd.concat(frames, ignore_index=True)), "fit")


def _fmt_pairs(pairs: pd.DataFrame) -> pd.DataFrame:
    out = pairs.copy()
    out["timestamp"] = pd.DatetimeIndex(out["timestamp"]).strftime("%Y-%m-%d %H:%M:%S")
    return out


def stage_baseline(ctx: Context) -> None:
    table = ctx.table()
    bc = ctx.cfg.baselines
    refs = bc.glm_references or sorted(table.station_ids)[:2]
    models, glm_pairs = baselines.glm_baseline(table, tuple(refs), ctx.cfg.year1, ctx.cfg.year2,
                                               variant="1->2")
    ctx.write("glm_coefficients.csv", baselines.coefficients_frame(models), "baseline")

    S = table.n_stations
    sizes = [k for k in ctx.sizes() if k < S]
    subsets = baselines.random_subsets(table.station_ids, sizes, ctx.cfg.n_folds,
                                       bc.random_repeats, seed=ctx.seed("random"))
    frames = [glm_pairs]
    params = ctx.params_by_size()
    for name in bc.random_variants:
        for r in range(bc.random_repeats):
            rep = {k: {f: subsets[(k, f)][r] for f in range(ctx.cfg.n_folds)} for k in sizes}
            run = evaluation.fit_final(table, rep, params, ctx.variants()[name],
                                       seed=derive_seed(ctx.seed("random-fit"), r),
                                       n_folds=ctx.cfg.n_folds,
                                       test_folds=ctx.cfg.final_test_folds,
                                       model_label="random", repeat=r, workers=ctx.cfg.workers)
            frames.append(run.pairs)
    ctx.write("baseline_predictions.csv", _fmt_pairs(pd.concat(frames, ignore_index=True)),
              "baseline")


def _all_pairs(ctx: Context) -> pd.DataFrame:
    pairs = [ctx.read("predictions.csv", "fit", parse_dates=["timestamp"])]
    if (ctx.out / "baseline_predictions.csv").exists():
        pairs.append(ctx.read("baseline_predictions.csv", "baseline", parse_dates=["timestamp"]))
    return pd.concat(pairs, ignore_index=True)


def stage_evaluate(ctx: Context) -> None:
    pairs = evaluation.with_rh(_all_pairs(ctx))
    metrics = evaluation.metrics_table(pairs, by=("variant", "model", "size", "station", "variable"))
    ctx.write("metrics.csv", metrics, "evaluate")
    egb = pairs[pairs["model"] == "EGB"]
    ctx.write("indicators.csv", evaluation.indicator_table(egb), "evaluate")
    ta = pairs[pairs["variable"] == "Ta"]
    ctx.write("error_percentiles.csv",
              evaluation.error_splits(ta, tuple(ctx.cfg.day_hours), ctx.cfg.hot_threshold),
              "evaluate")
    bias_variant = "1->2" if "1->2" in set(egb["variant"]) else egb["variant"].iloc[0]
    bias = evaluation.bias_timeseries(egb[(egb["variant"] == bias_variant)
                                          & (egb["variable"] == "Ta")])
    bias["timestamp"] = pd.DatetimeIndex(bias["timestamp"]).strftime("%Y-%m-%d %H:%M:%S")
    ctx.write("bias_timeseries.csv", bias, "evaluate")


def stage_report(ctx: Context) -> None:
    metrics = ctx.read("metrics.csv", "evaluate")
    net = metrics[metrics["station"] == "network_mean"]
    t1 = net.pivot_table(index=["model", "variant", "size"], columns="variable",
                         values=["rmse", "mae", "r2", "mbe"], aggfunc="first")
    t1.columns = [f"{var}_{m}" for m, var in t1.columns]
    t1 = t1.reset_index().sort_values(["model", "variant", "size"], ascending=[True, True, False])
    ctx.write("table1_metrics.csv", t1[sorted(t1.columns, key=_t1_order)], "report")

    ind = ctx.read("indicators.csv", "evaluate")
    t2 = ind.groupby(["variant", "size", "indicator"], sort=True).agg(
        observed=("observed", "sum"), predicted=("predicted", "sum"),
        deviation=("deviation", "sum"),
        mean_abs_station_deviation=("deviation", lambda d: float(np.mean(np.abs(d))))).reset_index()
    ctx.write("table2_indicators.csv", t2, "report")

    seq = ctx.read("removal_sequence.csv", "thin")
    seq = seq.assign(rank=seq.groupby("fold").cumcount() + 1)
    order = seq.groupby("removed_station")["rank"].agg(["mean", "min", "max", "count"])
    order = order.reset_index().rename(columns={"removed_station": "station",
                                                "mean": "mean_rank", "min": "min_rank",
                                                "max": "max_rank", "count": "n_folds"})
    ctx.write("removal_order.csv", order.sort_values(["mean_rank", "station"]), "report")

    per = metrics[(metrics["station"] != "network_mean") & (metrics["model"] == "EGB")]
    ctx.write("station_bias.csv",
              per[["variant", "size", "station", "variable", "mbe", "rmse"]]
              .sort_values(["variant", "variable", "size", "station"]), "report")


def _t1_order(col: str):
    head = ["model", "variant", "size"]
    if col in head:
        return (0, head.index(col), "")
    var, _, metric = col.partition("_")
    return (1, ["Ta", "RH", "e"].index(var) if var in ("Ta", "RH", "e") else 9,
            ["rmse", "mae", "r2", "mbe"].index(metric))


STAGE_FUNCS = {
    "simulate": stage_simulate, "qc": stage_qc, "build": stage_build, "tune": stage_tune,
    "thin": stage_thin, "fit": stage_fit, "baseline": stage_baseline,
    "evaluate": stage_evaluate, "report": stage_report,
}


def run_stages(cfg: PipelineConfig, stages) -> None:
    ctx = Context(cfg)
    ctx.out.mkdir(parents=True, exist_ok=True)
    for name in stages:
        if name == "tune" and not cfg.tuning.enabled:
            log.info("tuning disabled; using the base parameters")
            continue
        log.info("stage %s", name)
        STAGE_FUNCS[name](ctx)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wsnthin", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in STAGES + ("run-all",):
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None,
                        help="YAML config (default: the bundled small scenario)")
        sp.add_argument("--seed-override", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config or bundled_config_path())
        if args.seed_override is not None:
            cfg.seed = args.seed_override
        if args.workers is not None:
            cfg.workers = args.workers
        if args.out is not None:
            cfg.output_dir = args.out
        cfg.validate()
        stages = STAGES if args.command == "run-all" else (args.command,)
        run_stages(cfg, stages)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifactError, DataError, dataset.ConfigurationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (thinning.EliminationError, baselines.RankDeficientError, DomainError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
