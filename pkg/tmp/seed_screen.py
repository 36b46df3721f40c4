"""Cheap phantom-seed screen: short pdipm probe per seed.

usage: seed_screen.py seed [seed ...]
"""
import json
import subprocess
import sys
import time
from pathlib import Path

root = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(root / "src"))

from qpat.config import load_config
from qpat.harness import generate_data

for arg in sys.argv[1:]:
    seed = int(arg)
    out = root / "tmp" / f"screen_s{seed}"
    out.mkdir(parents=True, exist_ok=True)
    cfg = json.load(open(root / "tmp" / "desk_probe.json"))
    cfg["seed_phantom"] = seed
    cfg["pdipm"]["max_outer"] = 10
    cfg_path = out / "cfg.json"
    json.dump(cfg, open(cfg_path, "w"), indent=2)

    t0 = time.time()
    data_dir = generate_data(load_config(cfg_path), out)
    log = out / "traj_pdipm.log"
    with open(log, "w") as fh:
        subprocess.run(
            [sys.executable, str(root / "tmp" / "probe_traj.py"),
             str(cfg_path), str(data_dir), "pdipm"],
            stdout=fh, stderr=subprocess.STDOUT, check=True)
    rows = [ln for ln in log.read_text().splitlines()[1:] if "," in ln]
    print(f"seed {seed} ({time.time() - t0:.0f}s)", flush=True)
    for ln in rows[-4:]:
        print(" ", ln, flush=True)
