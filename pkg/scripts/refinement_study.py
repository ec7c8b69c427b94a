"""Grid-doubling study: measured constants of the Bessel, CZ-packet and
restricted weak-type suites on the desk grid and on 2x and 4x refinements."""

import argparse
import json
from pathlib import Path

import numpy as np

from dyadsum.harness import experiments as X
from dyadsum.harness.config import load_config
from dyadsum.harness.reports import csv_text, stable


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config", default=None)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--factors", default="1,2,4")
    ap.add_argument("--out", default="runs/refinement")
    args = ap.parse_args()
    cfg = load_config(args.config, seed=args.seed, trials=args.trials)
    factors = tuple(int(f) for f in args.factors.split(","))
    rows = []
    for fac in factors:
        bes = [X.bessel_trial(cfg, i, (fac,)) for i in range(args.trials)]
        cz = [X.e4_trial(cfg, i, fac) for i in range(args.trials)]
        e1 = [X.e1_trial(cfg, i, (2.0,), fac) for i in range(args.trials)]
        rows.append({
            "factor": fac,
            "points": cfg.points * fac,
            "bessel_C": max(t[f"ratio_{fac}"] for t in bes),
            "C_gamma": max((p["ratio"] for t in cz for p in t.get("pairs", [])), default=0.0),
            "weak_type_C2": max(r["ratio"] for t in e1 for r in t["rows"] if r["p"] == 2.0 and r["level"] == len(cfg.scales)),
        })
        print(json.dumps(rows[-1], sort_keys=True), flush=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "refinement.csv").write_text(csv_text(rows))
    flags = {k: all(stable(a[k], b[k]) for a, b in zip(rows, rows[1:])) for k in ("bessel_C", "C_gamma", "weak_type_C2")}
    (out / "refinement.json").write_text(json.dumps({"rows": rows, "stable": flags}, sort_keys=True, indent=1) + "\n")
    print(json.dumps(flags, sort_keys=True))


if __name__ == "__main__":
    main()
