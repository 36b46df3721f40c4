"""Print the derivative-consistency numbers for all three operator layers.

Quick confidence check after touching any of the forward/adjoint code:
optical dot test, acoustic dot test, and a finite-difference probe of the
composite gradient.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from qpat.acoustic import AcousticMedium, AcousticPropagator
from qpat.composite import CompositeModel, ParamScaling
from qpat.geometry import GridSpec, build_grid, build_mesh, build_node_element_maps
from qpat.optical import (
    CoefficientPair,
    OpticalModel,
    illumination_on_sides,
    jacobian_optical_adjoint,
    jacobian_optical_apply,
)

rng = np.random.default_rng(0)


def optical_dot_test() -> float:
    spec = GridSpec(shape=(6, 6), spacing_mm=(0.4, 0.4), dt=1e-8, num_steps=4)
    mesh = build_mesh(build_grid(spec))
    maps = build_node_element_maps(mesh)
    model = OpticalModel(mesh, maps)
    x = CoefficientPair(kappa=rng.uniform(0.2, 0.5, mesh.num_elements),
                        mu=rng.uniform(0.05, 0.3, mesh.num_elements))
    _, _, lu = model.factorize(x)
    phi = model.solve(lu, model.load_vector(illumination_on_sides(mesh, ["left"])))
    worst = 0.0
    vols = np.concatenate([mesh.volumes, mesh.volumes])
    for _ in range(20):
        dx = CoefficientPair(kappa=rng.standard_normal(mesh.num_elements),
                             mu=rng.standard_normal(mesh.num_elements))
        h = rng.standard_normal(mesh.num_elements)
        lhs = float(jacobian_optical_apply(model, lu, x, phi, dx) @ (mesh.volumes * h))
        rhs = float(dx.as_vector() @ (vols * jacobian_optical_adjoint(
            model, lu, x, phi, h).as_vector()))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-30))
    return worst


def acoustic_dot_test() -> float:
    shape = (16, 16)
    spec = GridSpec(shape=shape, spacing_mm=(0.5, 0.5), dt=4e-8, num_steps=32,
                    pml_points=3)
    grid = build_grid(spec)
    med = AcousticMedium(1500.0 + 100 * rng.uniform(-1, 1, shape),
                         1000.0 + 80 * rng.uniform(-1, 1, shape),
                         alpha0_db=0.75, power_law_y=1.5)
    dets = np.sort(rng.choice(16 * 16, size=24, replace=False)).astype(np.int64)
    prop = AcousticPropagator(grid, med, dets)
    p0 = rng.standard_normal(shape)
    y = rng.standard_normal((dets.size, spec.num_steps))
    lhs = float(np.sum(prop.forward(p0).data * y))
    rhs = float(np.sum(p0 * prop.adjoint(y)))
    return abs(lhs - rhs) / max(abs(lhs), 1e-30)


def composite_fd_check() -> float:
    spec = GridSpec(shape=(5, 5), spacing_mm=(0.5, 0.5), dt=4e-8, num_steps=24)
    grid = build_grid(spec)
    mesh = build_mesh(grid)
    med = AcousticMedium(np.full(grid.shape, 1500.0), np.full(grid.shape, 1000.0))
    dets = np.array([6, 12, 18], dtype=np.int64)
    ills = [illumination_on_sides(mesh, ["left"]),
            illumination_on_sides(mesh, ["top"])]
    x0 = np.concatenate([rng.uniform(0.2, 0.5, mesh.num_elements),
                         rng.uniform(0.05, 0.3, mesh.num_elements)])
    model = CompositeModel(mesh, grid, med, dets, ills, ParamScaling.log(x0))
    data = model.forward_data(model.scaling.initial_xbar())
    point = model.scaling.initial_xbar() + 0.1
    _, g, _ = model.gradient(point, data)
    h, worst = 1e-6, 0.0
    for _ in range(3):
        v = rng.standard_normal(g.size)
        v /= np.linalg.norm(v)
        ep, _ = model.objective(point + h * v, data)
        em, _ = model.objective(point - h * v, data)
        fd = (ep - em) / (2 * h)
        worst = max(worst, abs(fd - float(g @ v)) / max(abs(fd), 1e-30))
    return worst


def main():
    print(f"optical dot test, worst of 20:      {optical_dot_test():.3e}")
    print(f"acoustic dot test (lossy, hetero):  {acoustic_dot_test():.3e}")
    print(f"composite gradient vs central FD:   {composite_fd_check():.3e}")


if __name__ == "__main__":
    main()
