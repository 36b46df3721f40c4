"""Per-seed RE trajectories for ld/pdipm plus the admm endpoint.

usage: seed_sweep.py seed_phantom [seed_medium seed_data]
Writes tmp/sweep_s<seed>/ and prints a compact report.
"""
import json
import subprocess
import sys
import time
from pathlib import Path

root = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(root / "src"))

seed_p = int(sys.argv[1])
seed_m = int(sys.argv[2]) if len(sys.argv) > 2 else 23
seed_d = int(sys.argv[3]) if len(sys.argv) > 3 else 47

out = root / "tmp" / f"sweep_s{seed_p}_{seed_m}_{seed_d}"
out.mkdir(parents=True, exist_ok=True)

cfg = json.load(open(root / "tmp" / "desk_probe.json"))
cfg["seed_phantom"], cfg["seed_medium"], cfg["seed_data"] = seed_p, seed_m, seed_d
cfg["pdipm"]["max_outer"] = 16
cfg_path = out / "cfg.json"
json.dump(cfg, open(cfg_path, "w"), indent=2)

from qpat.config import load_config
from qpat.harness import generate_data, reconstruct

t0 = time.time()
data_dir = generate_data(load_config(cfg_path), out)
print(f"gen {time.time() - t0:.0f}s", flush=True)

for method in ("pdipm", "ld"):
    t0 = time.time()
    log = out / f"traj_{method}.log"
    with open(log, "w") as fh:
        subprocess.run(
            [sys.executable, str(root / "tmp" / "probe_traj.py"),
             str(cfg_path), str(data_dir), method],
            stdout=fh, stderr=subprocess.STDOUT, check=True)
    print(f"{method} {time.time() - t0:.0f}s", flush=True)
    print(log.read_text(), flush=True)

t0 = time.time()
summary = reconstruct(load_config(cfg_path), data_dir, out, "admm")
print(f"admm {time.time() - t0:.0f}s "
      f"re_kappa={summary['re_kappa']:.2f} re_mu={summary['re_mu']:.2f}",
      flush=True)
