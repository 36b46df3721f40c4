"""Run the paper-scale 2D study (128^2 generation, 64^2 reconstruction).

Expect roughly an order of magnitude more wall time than the desk study;
use `--method` via the qpat CLI instead if you only need one solver.
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
    ap.add_argument("--config", default=str(HERE / "configs" / "paper2d.json"))
    ap.add_argument("--out", default="results/paper2d")
    args = ap.parse_args()

    cfg = load_config(args.config)
    summaries = run_experiment(cfg, args.out)
    for method, s in summaries.items():
        print(f"{method}: RE(mu) = {s['re_mu']:.2f}%  RE(kappa) = {s['re_kappa']:.2f}%")


if __name__ == "__main__":
    main()
