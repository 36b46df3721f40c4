"""Run the desk-scale 2D study end to end and print the error table.

Equivalent to `qpat run --config scripts/configs/desk2d.json --out results/desk2d`
but prints a compact comparison at the end.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from qpat.config import load_config
from qpat.harness import run_experiment

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(HERE / "configs" / "desk2d.json"))
    ap.add_argument("--out", default="results/desk2d")
    args = ap.parse_args()

    cfg = load_config(args.config)
    summaries = run_experiment(cfg, args.out)

    print(f"\n{'method':8s} {'RE(mu) %':>9s} {'RE(kappa) %':>12s} "
          f"{'outers':>7s} {'fwd':>6s} {'adj':>6s}")
    for method, s in summaries.items():
        print(f"{method:8s} {s['re_mu']:9.2f} {s['re_kappa']:12.2f} "
              f"{s['outer_iterations']:7d} {s['acoustic_forwards']:6d} "
              f"{s['acoustic_adjoints']:6d}")


if __name__ == "__main__":
    main()
