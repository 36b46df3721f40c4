"""Tuning driver: generate desk data once, then run one method and report."""

import json
import sys
import time
from pathlib import Path

from qpat.config import load_config
from qpat.harness import generate_data, reconstruct

cfg_path, out_dir, method = sys.argv[1], Path(sys.argv[2]), sys.argv[3]
cfg = load_config(cfg_path)

t0 = time.perf_counter()
data_dir = out_dir / "data"
if not data_dir.exists():
    generate_data(cfg, out_dir)
    print(f"generation: {time.perf_counter() - t0:.1f}s", flush=True)

t1 = time.perf_counter()
summary = reconstruct(cfg, data_dir, out_dir, method)
print(f"{method}: {time.perf_counter() - t1:.1f}s", flush=True)
print(json.dumps(summary, indent=2), flush=True)
print((out_dir / f"recon_{method}" / "trace.csv").read_text(), flush=True)
