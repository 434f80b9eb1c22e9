"""QC flag counts on a faulty synthetic network as the thresholds vary.

Example::

    python scripts/qc_sensitivity.py --days 30
"""

import argparse

import pandas as pd

from wsnthin import qc, synth


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--days", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = synth.ScenarioConfig(
        n_stations=8, n_days=args.days, noise_ta=0.2,
        fronts=[synth.FrontEvent(day=args.days / 2, amplitude=-8.0, speed_kmh=3.0, ramp_hours=0.1)],
        gaps=[synth.Gap("S03", 5.0, 2.0)])
    obs = synth.generate(cfg, seed=args.seed).observed_long()
    rows = []
    for rate10 in (3.0, 5.0, 10.0):
        for hours in (2.0, 6.0, 12.0):
            qcfg = qc.QcConfig(rate_limits_ta=((1, 5.0), (10, rate10), (60, 15.0)),
                               persistence_ta_hours=hours)
            _, report = qc.run_qc_long(obs, qcfg)
            ta = report[report["variable"] == "Ta"].groupby("test")["flagged_count"].sum()
            rows.append({"rate_10min_K": rate10, "persistence_h": hours, **ta.to_dict()})
    print(pd.DataFrame(rows).to_string(index=False))


if __name__ == "__main__":
    main()
