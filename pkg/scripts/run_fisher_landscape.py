"""Optimal interleaved sequence length over the SPAM parameters, plus the
large-dimension closed form against the exact scan.

    python scripts/run_fisher_landscape.py configs/fisher_landscape.json
"""

import argparse

from accelrb.config import load_config
from accelrb.harness import run_fisher_landscape


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    args = ap.parse_args()
    cfg = load_config(args.config)
    rows = run_fisher_landscape(cfg)
    for panel, A, B, F, m_scan, m_law in rows:
        if panel == "large_d":
            print(f"{panel:8} F={F:<7} scan {m_scan:6d}  closed form {m_law:9.2f}  ratio {m_scan / m_law:.3f}")
        else:
            print(f"{panel:8} A={A:<6} B={B:<6} m_opt {m_scan}")
    print(f"wrote {cfg.output_path}")


if __name__ == "__main__":
    main()
