"""Record RE(kappa), RE(mu) at every outer iterate of one Newton method.

usage: probe_traj.py cfg.json data_dir method
"""
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from qpat.acoustic import AcousticMedium
from qpat.composite import ParamScaling
from qpat.config import load_config
from qpat.harness import (_model_for, add_awgn, build_setup, detector_indices,
                          draw_medium, load_series, medium_on_grid,
                          relative_error)
from qpat.io import read_array
from qpat.regularization import build_difference_operator
from qpat.solvers import run_ld, run_pdipm

cfg = load_config(sys.argv[1])
data_dir = Path(sys.argv[2])
method = sys.argv[3]

true_kappa = read_array(data_dir / "phantom_kappa.bin")
true_mu = read_array(data_dir / "phantom_mu.bin")
series = load_series(data_dir)

grid, mesh = build_setup(cfg, "reconstruction")
_, gen_mesh = build_setup(cfg, "generation")
draw = draw_medium(cfg, np.random.default_rng([cfg.seed_medium, 0]))
medium_clean = medium_on_grid(draw, grid, cfg)
rng_map = np.random.default_rng([cfg.seed_data, 1])
medium = AcousticMedium(
    sound_speed=add_awgn(medium_clean.sound_speed, cfg.medium.snr_db, rng_map),
    density=add_awgn(medium_clean.density, cfg.medium.snr_db, rng_map),
    alpha0_db=cfg.acoustic.alpha0_db,
    power_law_y=cfg.acoustic.power_law_y,
)
detectors = detector_indices(grid, cfg)

ne = mesh.num_elements
x0 = np.concatenate([
    np.full(ne, cfg.initial_scale * true_kappa.mean()),
    np.full(ne, cfg.initial_scale * true_mu.mean()),
])
model = _model_for(cfg, grid, mesh, medium, detectors, ParamScaling.log(x0))
D = build_difference_operator(mesh)


def res_of(xbar):
    phys = model.scaling.to_physical(xbar)
    half = phys.size // 2
    rk = relative_error(phys[:half], mesh, true_kappa, gen_mesh)
    rm = relative_error(phys[half:], mesh, true_mu, gen_mesh)
    return rk, rm


calls = [0]
orig_grad = model.gradient


def wrapped(xbar, data, offsets=None):
    out = orig_grad(xbar, data, offsets=offsets)
    rk, rm = res_of(xbar)
    print(f"{calls[0]},{out[0]:.6f},{rk:.3f},{rm:.3f}", flush=True)
    calls[0] += 1
    return out


model.gradient = wrapped
print("call,eps,re_kappa,re_mu", flush=True)
runner = run_ld if method == "ld" else run_pdipm
res = runner(model, series, D, getattr(cfg, method))
rk, rm = res_of(res.xbar)
print(f"final,{res.trace.rows[-1].objective:.6f},{rk:.3f},{rm:.3f}", flush=True)
print(f"converged={res.converged} outer={len(res.trace.rows)}", flush=True)
