"""Gate-level study: SMC and LSF on simulated noisy-Clifford data with a far
(fixed) prior and a near (truth-centred) prior.

    python scripts/run_gate_study.py configs/gate_study.json
"""

import argparse
import logging

from accelrb.config import load_config
from accelrb.harness import run_gate_study
from accelrb.model import PARAM_NAMES


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--trials", type=int)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    cfg = load_config(args.config)
    if args.trials:
        cfg.n_trials = args.trials
    res = run_gate_study(cfg)
    for study, table in res.tables.items():
        print(f"\n{study} ({cfg.n_trials} repetitions, medians; ESS warnings: {res.warnings[study]})")
        print(f"{'':14}" + "".join(f"{n:>10}" for n in PARAM_NAMES))
        for label, vals in table.items():
            print(f"{label:14}" + "".join(f"{v:10.4f}" if label.endswith(("True", "Estimate")) else f"{v:10.1e}"
                                          for v in vals))
    print(f"\nwrote {cfg.output_path}")


if __name__ == "__main__":
    main()
