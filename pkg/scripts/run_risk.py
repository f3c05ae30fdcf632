"""Risk of SMC and LSF against shots per length (or longest sequence).

    python scripts/run_risk.py configs/risk_vs_K.json
    python scripts/run_risk.py configs/risk_vs_mmax.json --workers 4
"""

import argparse
import logging

from accelrb.config import load_config
from accelrb.harness import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--trials", type=int)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = load_config(args.config)
    cfg.workers = args.workers
    if args.trials:
        cfg.n_trials = args.trials
    res = run_experiment(cfg)
    print(f"{'est':4} {res.coord_name:>6} {'mse_trace':>11} {'bcrb_trace':>11} {'post_var':>11} {'mse_ptilde':>11}")
    for r in res.rows:
        print(f"{r.estimator:4} {r.coord:6d} {r.mse_trace:11.3e} {r.bcrb_trace:11.3e} "
              f"{r.mean_posterior_var_trace:11.3e} {r.mse_ptilde:11.3e}")
    print(f"wrote {cfg.output_path}")


if __name__ == "__main__":
    main()
