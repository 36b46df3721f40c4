"""Experiment orchestration: phantoms, random media, data generation and the
reconstruction drivers wired together.

The generation and reconstruction stages run on different node lattices (the
config refuses matching ones unless explicitly allowed), the acoustic medium
is drawn as an analytic sum of Gaussian bumps so both lattices sample the
same underlying maps, and all randomness flows through seeded generators:
one for the phantom, one for the medium draw, one for noise.  Bundles on
disk hold a config echo, the mesh, raw coefficient and map arrays, per-source
detector series, solver traces and summary figures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import plots
from .acoustic import AcousticMedium, MeasurementSeries
from .composite import CompositeModel, ParamScaling
from .config import ExperimentConfig, save_config
from .errors import ConfigError
from .geometry import (
    FeMesh,
    Grid,
    GridSpec,
    build_grid,
    build_mesh,
    side_index,
    write_mesh_text,
)
from .io import read_array, write_array
from .optical import CoefficientPair, Illumination, illumination_on_sides
from .regularization import build_difference_operator
from .solvers import SolveResult, run_admm, run_ld, run_pdipm

__all__ = [
    "build_setup",
    "make_phantom",
    "draw_medium",
    "medium_on_grid",
    "add_awgn",
    "detector_indices",
    "make_illuminations",
    "relative_error",
    "generate_data",
    "reconstruct",
    "run_experiment",
]


# ---------------------------------------------------------------------------
# geometry helpers


def build_setup(cfg: ExperimentConfig, stage: str) -> tuple[Grid, FeMesh]:
    """Grid and mesh for one stage, ``"generation"`` or ``"reconstruction"``."""
    dom = cfg.domain
    ac = cfg.acoustic
    if stage == "generation":
        shape, pml = dom.generation_shape, ac.pml_points_generation
    elif stage == "reconstruction":
        shape, pml = dom.reconstruction_shape, ac.pml_points_reconstruction
    else:
        raise ValueError(f"unknown stage {stage!r}")
    spacing = tuple(L / (n - 1) for L, n in zip(dom.size_mm, shape))
    spec = GridSpec(shape=shape, spacing_mm=spacing, dt=ac.dt,
                    num_steps=ac.num_steps, pml_points=pml,
                    pml_alpha=ac.pml_alpha)
    grid = build_grid(spec)
    return grid, build_mesh(grid)


# ---------------------------------------------------------------------------
# phantom and medium draws


def make_phantom(mesh: FeMesh, cfg: ExperimentConfig, rng: np.random.Generator) -> CoefficientPair:
    """Disk phantom painted onto element centroids, later disks on top."""
    p = cfg.phantom
    size = np.asarray(cfg.domain.size_mm)
    origin = np.asarray(mesh.origin_mm)
    cent = mesh.element_centroids()

    kappa = np.full(mesh.num_elements, p.kappa_background)
    mu = np.full(mesh.num_elements, p.mu_background)
    r_lo, r_hi = p.radius_range_mm
    for target, count, lo, hi in (
        (mu, p.num_mu_disks, p.mu_low, p.mu_high),
        (kappa, p.num_kappa_disks, p.kappa_low, p.kappa_high),
    ):
        for _ in range(count):
            center = origin + size * rng.uniform(0.15, 0.85, size=size.size)
            radius = rng.uniform(r_lo, r_hi)
            value = rng.uniform(lo, hi)
            target[np.linalg.norm(cent - center, axis=1) <= radius] = value
    return CoefficientPair(kappa=kappa, mu=mu)


@dataclass
class MediumDraw:
    """Gaussian-bump parameters; evaluation is lattice-independent."""

    centers_c: np.ndarray
    widths_c: np.ndarray
    amps_c: np.ndarray
    centers_rho: np.ndarray
    widths_rho: np.ndarray
    amps_rho: np.ndarray


def draw_medium(cfg: ExperimentConfig, rng: np.random.Generator) -> MediumDraw:
    m = cfg.medium
    size = np.asarray(cfg.domain.size_mm)
    w_lo, w_hi = m.bump_width_mm

    def bumps():
        centers = size * rng.uniform(0.0, 1.0, size=(m.num_bumps, size.size))
        widths = rng.uniform(w_lo, w_hi, size=m.num_bumps)
        amps = rng.uniform(-1.0, 1.0, size=m.num_bumps)
        return centers, widths, amps

    cc, wc, ac = bumps()
    cr, wr, ar = bumps()
    return MediumDraw(cc, wc, ac, cr, wr, ar)


def _bump_field(points_mm: np.ndarray, centers, widths, amps) -> np.ndarray:
    out = np.zeros(points_mm.shape[0])
    for c, w, a in zip(centers, widths, amps):
        d2 = np.sum((points_mm - c) ** 2, axis=1)
        out += a * np.exp(-d2 / (2.0 * w * w))
    return out / max(1, len(amps))  # bound |field| by 1 independent of draw


def medium_on_grid(draw: MediumDraw, grid: Grid, cfg: ExperimentConfig) -> AcousticMedium:
    m = cfg.medium
    axes = [grid.axis_coords_mm(i) for i in range(grid.dim)]
    coords = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([c.ravel() for c in coords], axis=1)
    c_map = m.sound_speed_base + m.sound_speed_spread * _bump_field(
        pts, draw.centers_c, draw.widths_c, draw.amps_c)
    rho_map = m.density_base + m.density_spread * _bump_field(
        pts, draw.centers_rho, draw.widths_rho, draw.amps_rho)
    return AcousticMedium(
        sound_speed=c_map.reshape(grid.shape),
        density=rho_map.reshape(grid.shape),
        alpha0_db=cfg.acoustic.alpha0_db,
        power_law_y=cfg.acoustic.power_law_y,
    )


def add_awgn(arr: np.ndarray, snr_db: float | None, rng: np.random.Generator) -> np.ndarray:
    """White Gaussian noise at the given SNR relative to mean signal power."""
    if snr_db is None:
        return arr.copy()
    sigma = np.sqrt(np.mean(arr**2) / 10.0 ** (snr_db / 10.0))
    return arr + rng.normal(0.0, sigma, size=arr.shape)


# ---------------------------------------------------------------------------
# sensing


def detector_indices(grid: Grid, cfg: ExperimentConfig) -> np.ndarray:
    """Flat node indices of the detector lines, snapped to the lattice.

    Lines run along each listed box side, inset from all faces; a node shared
    by two lines (the common corner region) is kept once.
    """
    s = cfg.sensing
    size = np.asarray(cfg.domain.size_mm)
    spacing = np.asarray(grid.spec.spacing_mm)
    shape = grid.shape
    d = grid.dim

    chosen: list[int] = []
    seen: set[int] = set()
    for side in s.detector_sides:
        code = side_index(side, d)
        axis, high = code // 2, code % 2
        fixed = size[axis] - s.inset_mm if high else s.inset_mm
        fixed_idx = int(round(fixed / spacing[axis]))
        other = [i for i in range(d) if i != axis]
        lines = [np.linspace(s.inset_mm, size[i] - s.inset_mm, s.detectors_per_side)
                 for i in other]
        mesh_pts = np.meshgrid(*lines, indexing="ij") if len(lines) > 1 else [lines[0]]
        coords = np.stack([m.ravel() for m in mesh_pts], axis=1)
        for row in coords:
            idx = [0] * d
            idx[axis] = fixed_idx
            for i, val in zip(other, row):
                idx[i] = int(round(val / spacing[i]))
            flat = int(np.ravel_multi_index(idx, shape))
            if flat not in seen:
                seen.add(flat)
                chosen.append(flat)
    return np.asarray(chosen, dtype=np.int64)


def make_illuminations(mesh: FeMesh, cfg: ExperimentConfig) -> list[Illumination]:
    return [illumination_on_sides(mesh, list(sides)) for sides in cfg.sensing.illuminations]


# ---------------------------------------------------------------------------
# error metric


def relative_error(recon_values: np.ndarray, recon_mesh: FeMesh,
                   true_values: np.ndarray, true_mesh: FeMesh) -> float:
    """Percent l2 error on the generation mesh; the reconstruction is carried
    over by nearest-centroid prolongation."""
    tree = cKDTree(recon_mesh.element_centroids())
    _, nearest = tree.query(true_mesh.element_centroids())
    carried = recon_values[nearest]
    return 100.0 * float(
        np.linalg.norm(carried - true_values) / np.linalg.norm(true_values))


# ---------------------------------------------------------------------------
# pipeline stages


def _model_for(cfg: ExperimentConfig, grid: Grid, mesh: FeMesh,
               medium: AcousticMedium, detectors: np.ndarray,
               scaling: ParamScaling) -> CompositeModel:
    return CompositeModel(
        mesh=mesh, grid=grid, medium=medium, detectors=detectors,
        illuminations=make_illuminations(mesh, cfg), scaling=scaling,
        threads=cfg.threads, smooth_source=cfg.acoustic.smooth_source,
        real_fft=cfg.acoustic.real_fft)


def generate_data(cfg: ExperimentConfig, out_dir) -> Path:
    """Simulate detector data on the generation lattice and write the bundle."""
    cfg.validate()
    data_dir = Path(out_dir) / "data"
    data_dir.mkdir(parents=True, exist_ok=True)

    grid, mesh = build_setup(cfg, "generation")
    rng_phantom = np.random.default_rng([cfg.seed_phantom, 0])
    rng_medium = np.random.default_rng([cfg.seed_medium, 0])
    rng_noise = np.random.default_rng([cfg.seed_data, 0])

    phantom = make_phantom(mesh, cfg, rng_phantom)
    draw = draw_medium(cfg, rng_medium)
    medium = medium_on_grid(draw, grid, cfg)
    detectors = detector_indices(grid, cfg)

    scaling = ParamScaling.log(phantom.as_vector())  # identity start: exact phantom
    model = _model_for(cfg, grid, mesh, medium, detectors, scaling)
    series = model.forward_data(scaling.initial_xbar())

    save_config(cfg, data_dir / "config.json")
    write_mesh_text(mesh, data_dir / "mesh.txt")
    write_array(data_dir / "phantom_kappa.bin", phantom.kappa)
    write_array(data_dir / "phantom_mu.bin", phantom.mu)
    write_array(data_dir / "sound_speed.bin", medium.sound_speed)
    write_array(data_dir / "density.bin", medium.density)
    for q, s in enumerate(series):
        noisy = add_awgn(s.data, cfg.sensing.snr_db, rng_noise)
        MeasurementSeries(data=noisy, detectors=s.detectors, dt=s.dt).save(
            data_dir / f"series_q{q:02d}.bin")
    meta = {
        "num_sources": len(series),
        "num_detectors": int(detectors.size),
        "num_steps": int(cfg.acoustic.num_steps),
        "detector_indices": [int(i) for i in detectors],
    }
    with open(data_dir / "meta.json", "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    plots.save_phantom_figure(data_dir / "phantom.png", mesh, phantom)
    return data_dir


def load_series(data_dir) -> list[MeasurementSeries]:
    data_dir = Path(data_dir)
    with open(data_dir / "meta.json", "r", encoding="ascii") as fh:
        meta = json.load(fh)
    return [MeasurementSeries.load(data_dir / f"series_q{q:02d}.bin")
            for q in range(meta["num_sources"])]


def reconstruct(cfg: ExperimentConfig, data_dir, out_dir, method: str) -> dict:
    """Invert one method against a stored data bundle and write its results."""
    cfg.validate()
    if method not in ("admm", "ld", "pdipm"):
        raise ConfigError(f"unknown method {method!r}")
    data_dir = Path(data_dir)
    run_dir = Path(out_dir) / f"recon_{method}"
    run_dir.mkdir(parents=True, exist_ok=True)

    true_kappa = read_array(data_dir / "phantom_kappa.bin")
    true_mu = read_array(data_dir / "phantom_mu.bin")
    series = load_series(data_dir)

    grid, mesh = build_setup(cfg, "reconstruction")
    _, gen_mesh = build_setup(cfg, "generation")
    if series[0].num_steps != cfg.acoustic.num_steps:
        raise ConfigError("stored series length does not match the config")

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
    if detectors.size != series[0].num_detectors:
        raise ConfigError("detector layout does not match the stored series")

    ne = mesh.num_elements
    x0 = np.concatenate([
        np.full(ne, cfg.initial_scale * true_kappa.mean()),
        np.full(ne, cfg.initial_scale * true_mu.mean()),
    ])
    scaling = ParamScaling.linear(x0) if method == "admm" else ParamScaling.log(x0)
    model = _model_for(cfg, grid, mesh, medium, detectors, scaling)
    D = build_difference_operator(mesh)

    if method == "admm":
        result: SolveResult = run_admm(model, series, D, cfg.admm)
    elif method == "ld":
        result = run_ld(model, series, D, cfg.ld)
    else:
        result = run_pdipm(model, series, D, cfg.pdipm)

    half = result.physical.size // 2
    recon_kappa, recon_mu = result.physical[:half], result.physical[half:]
    re_kappa = relative_error(recon_kappa, mesh, true_kappa, gen_mesh)
    re_mu = relative_error(recon_mu, mesh, true_mu, gen_mesh)

    save_config(cfg, run_dir / "config.json")
    write_array(run_dir / "recon_kappa.bin", recon_kappa)
    write_array(run_dir / "recon_mu.bin", recon_mu)
    result.trace.to_csv(run_dir / "trace.csv")
    fw, ad = model.counters()
    summary = {
        "method": method,
        "converged": bool(result.converged),
        "outer_iterations": len(result.trace.rows),
        "objective_final": result.trace.rows[-1].objective if result.trace.rows else None,
        "re_kappa": re_kappa,
        "re_mu": re_mu,
        "acoustic_forwards": fw,
        "acoustic_adjoints": ad,
    }
    with open(run_dir / "results.json", "w", encoding="ascii") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    plots.save_recon_figure(
        run_dir / "recon_maps.png", gen_mesh,
        CoefficientPair(true_kappa, true_mu), mesh,
        CoefficientPair(recon_kappa, recon_mu))
    plots.save_convergence_figure(
        run_dir / "convergence.png", {method: result.trace.objectives()})
    plots.save_convergence_figure(
        run_dir / "convergence.svg", {method: result.trace.objectives()})
    return summary


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Generate data then run every configured method."""
    cfg.validate()
    out_dir = Path(out_dir)
    data_dir = generate_data(cfg, out_dir)
    summaries = {}
    for method in cfg.methods:
        summaries[method] = reconstruct(cfg, data_dir, out_dir, method)
    with open(out_dir / "summary.json", "w", encoding="ascii") as fh:
        json.dump(summaries, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summaries
