"""Shared small problem setups for the unit tests."""

import numpy as np
import pytest

from qpat.acoustic import AcousticMedium
from qpat.geometry import GridSpec, build_grid, build_mesh, build_node_element_maps
from qpat.optical import CoefficientPair, illumination_on_sides


def make_tiny_setup(shape=(5, 5), spacing=(0.5, 0.5), dt=4e-8, num_steps=24,
                    pml_points=0, seed=0, lossy=False):
    """Small grid/mesh pair with random positive coefficients and media."""
    rng = np.random.default_rng(seed)
    spec = GridSpec(shape=shape, spacing_mm=spacing, dt=dt, num_steps=num_steps,
                    pml_points=pml_points)
    grid = build_grid(spec)
    mesh = build_mesh(grid)
    maps = build_node_element_maps(mesh)
    x = CoefficientPair(
        kappa=rng.uniform(0.2, 0.5, mesh.num_elements),
        mu=rng.uniform(0.02, 0.4, mesh.num_elements),
    )
    medium = AcousticMedium(
        sound_speed=1500.0 + 100.0 * rng.uniform(-1, 1, shape),
        density=1000.0 + 80.0 * rng.uniform(-1, 1, shape),
        alpha0_db=(0.75 if lossy else 0.0),
        power_law_y=1.5,
    )
    dets = rng.choice(int(np.prod(shape)), size=max(3, int(np.prod(shape)) // 8),
                      replace=False).astype(np.int64)
    dets.sort()
    ills = [illumination_on_sides(mesh, ["left"]),
            illumination_on_sides(mesh, ["top"])]
    return {
        "grid": grid, "mesh": mesh, "maps": maps, "x": x,
        "medium": medium, "detectors": dets, "illuminations": ills,
        "rng": rng,
    }


@pytest.fixture
def tiny():
    return make_tiny_setup()
