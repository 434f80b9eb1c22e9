"""Guided (thinned) vs random predictor subsets on 12-station synthetic networks.

Example::

    python scripts/guided_vs_random.py --seeds 0 1 2 --size 3 --repeats 10 --extent 12
"""

import argparse

import numpy as np
import pandas as pd

from wsnthin import baselines, dataset, evaluation, gbt, synth, thinning
from wsnthin.modeling import derive_seed


def net_rmse(pairs: pd.DataFrame) -> pd.Series:
    m = evaluation.metrics_table(pairs)
    sel = (m["station"] == "network_mean") & (m["variable"] == "Ta")
    return m[sel].set_index(["variant", "size"])["rmse"]


def study(seed, size, repeats, extent, days, scope, test_folds, params):
    res = synth.generate(synth.ScenarioConfig(n_stations=12, n_days=2 * days, noise_ta=0.3,
                                              extent_km=extent), seed=seed)
    start = res.timestamps[0]
    mid, end = start + pd.Timedelta(days=days), start + pd.Timedelta(days=2 * days)
    table = dataset.build_wide_table(res.model_long(), res.stations, (start, mid))
    folds = dataset.make_folds(table, seed=seed, rows=table.rows_between(start, mid))
    seq = thinning.eliminate(table, folds, 0, {12: params}, seed=seed, objective_scope=scope,
                             min_remaining=size)
    variants = evaluation.standard_variants((start, mid), (mid, end))
    rows = []
    for name in ("1->1", "1->2"):
        guided = evaluation.fit_final(table, thinning.extract_subsets(seq, [size]), {12: params},
                                      variants[name], seed=seed, test_folds=test_folds)
        g = float(net_rmse(guided.pairs).iloc[0])
        subs = baselines.random_subsets(table.station_ids, [size], 10, repeats, seed=seed)
        rand = []
        for r in range(repeats):
            rep = {size: {f: subs[(size, f)][r] for f in range(10)}}
            run = evaluation.fit_final(table, rep, {12: params}, variants[name],
                                       seed=derive_seed(seed, "random", r), test_folds=test_folds)
            rand.append(float(net_rmse(run.pairs).iloc[0]))
        rows.append({"seed": seed, "variant": name, "guided": g, "random_mean": np.mean(rand),
                     "random_min": np.min(rand), "random_max": np.max(rand),
                     "removal_order": " ".join(seq.order)})
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(10)))
    ap.add_argument("--size", type=int, default=3)
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--extent", type=float, default=12.0, help="square side in km")
    ap.add_argument("--days", type=int, default=40, help="days per 'year'")
    ap.add_argument("--scope", choices=["all", "removed"], default="all")
    ap.add_argument("--out", default=None, help="optional CSV path")
    args = ap.parse_args()
    params = gbt.GbtParams(learning_rate=0.3, max_depth=6, early_stopping_rounds=20, max_rounds=400)
    rows = []
    for s in args.seeds:
        rows += study(s, args.size, args.repeats, args.extent, args.days, args.scope, [0, 1, 2],
                      params)
        print(pd.DataFrame(rows[-2:]).drop(columns="removal_order").to_string(index=False),
              flush=True)
    df = pd.DataFrame(rows)
    wins = (df["guided"] <= df["random_mean"]).groupby(df["variant"]).sum()
    print("\nguided <= random mean:", wins.to_dict(), "of", len(args.seeds))
    if args.out:
        df.to_csv(args.out, index=False)


if __name__ == "__main__":
    main()
