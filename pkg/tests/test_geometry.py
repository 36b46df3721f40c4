"""Mesh and grid construction against independent small-case enumerations."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from qpat.geometry import (
    GridSpec,
    build_grid,
    build_mesh,
    build_node_element_maps,
    element_to_node,
    node_to_element,
    side_index,
    write_mesh_text,
)


def test_side_index_codes():
    assert side_index("left", 2) == 0
    assert side_index("right", 2) == 1
    assert side_index("bottom", 2) == 2
    assert side_index("top", 2) == 3
    assert side_index("x0min", 2) == 0
    assert side_index("x2max", 3) == 5
    with pytest.raises(ValueError):
        side_index("x2min", 2)
    with pytest.raises(ValueError):
        side_index("sideways", 2)


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(shape=(2, 5), spacing_mm=(1.0, 1.0), dt=1e-8, num_steps=4)
    with pytest.raises(ValueError):
        GridSpec(shape=(8, 8), spacing_mm=(1.0, -1.0), dt=1e-8, num_steps=4)
    with pytest.raises(ValueError):
        GridSpec(shape=(8, 8), spacing_mm=(1.0, 1.0), dt=1e-8, num_steps=4,
                 pml_points=4)  # layer would swallow the whole grid
    with pytest.raises(ValueError):
        GridSpec(shape=(8,), spacing_mm=(1.0,), dt=1e-8, num_steps=4)


def test_wavenumbers_match_fft_convention():
    spec = GridSpec(shape=(8, 6), spacing_mm=(0.5, 0.25), dt=1e-8, num_steps=4)
    grid = build_grid(spec)
    # [TRIVIAL] k = 2 pi fftfreq(n, spacing_in_metres)
    k0 = 2 * np.pi * np.fft.fftfreq(8, d=0.5e-3)
    assert_allclose(grid.wavenumbers[0], k0, rtol=1e-14)
    assert_allclose(grid.shift_pos[0] * grid.shift_neg[0], np.ones(8), atol=1e-14)
    kmag = grid.wavenumber_magnitude()
    assert kmag.shape == (8, 6)
    assert kmag[0, 0] == 0.0


def test_pml_profile_shape_and_ends():
    spec = GridSpec(shape=(16, 16), spacing_mm=(0.2, 0.2), dt=1e-8, num_steps=4,
                    pml_points=4, pml_alpha=2.0)
    grid = build_grid(spec)
    prof = grid.pml_profile[0]
    assert prof[0] == pytest.approx(2.0)          # full strength at the face
    assert prof[3] == pytest.approx(2.0 / 4**4)   # quartic ramp
    assert np.all(prof[4:12] == 0.0)
    assert_allclose(prof, prof[::-1])             # symmetric
    factors = grid.pml_factor(1500.0)[0]
    assert np.all(factors > 0) and np.all(factors <= 1)
    interior = np.flatnonzero(prof == 0)
    assert_allclose(factors[interior], 1.0)


def test_mesh_2d_counts_and_volumes():
    # [DERIVED] a 3x3-node box splits into 8 triangles of equal area;
    # total area equals the box area, internal edges count 2*cells + node lines
    spec = GridSpec(shape=(4, 4), spacing_mm=(1.0, 2.0), dt=1e-8, num_steps=4)
    mesh = build_mesh(build_grid(spec))
    assert mesh.num_elements == 18
    assert_allclose(mesh.volumes, 1.0)            # each triangle: (1*2)/2 = 1
    assert_allclose(mesh.volumes.sum(), 3.0 * 6.0)
    # internal facets: 9 diagonals + 2*3 vertical + 2*3 horizontal interior
    assert mesh.num_internal_edges == 9 + 6 + 6
    assert mesh.boundary_facets.shape[0] == 12


def test_mesh_2d_connectivity_against_enumeration():
    # [DERIVED] independent hand enumeration of the 2x2-node single cell
    spec = GridSpec(shape=(4, 4), spacing_mm=(1.0, 1.0), dt=1e-8, num_steps=4)
    mesh = build_mesh(build_grid(spec))
    # first cell: nodes 0=(0,0), 4=(1,0), 5=(1,1), 1=(0,1) with n1=4
    assert mesh.elements[0].tolist() == [0, 4, 5]
    assert mesh.elements[1].tolist() == [0, 5, 1]
    # their shared facet is the diagonal (0, 5) with measure sqrt(2)
    first_edge = mesh.edges[0]
    assert first_edge.tolist() == [0, 1]
    assert mesh.edge_measures[0] == pytest.approx(np.sqrt(2.0))


def test_mesh_3d_counts_and_volumes():
    spec = GridSpec(shape=(4, 4, 4), spacing_mm=(0.5, 0.5, 0.5), dt=1e-8, num_steps=4)
    mesh = build_mesh(build_grid(spec))
    assert mesh.num_elements == 27 * 6
    assert_allclose(mesh.volumes.sum(), 1.5**3)
    assert_allclose(mesh.volumes, 0.5**3 / 6.0)   # six equal Kuhn tetrahedra
    mesh.validate()


def test_boundary_side_classification():
    spec = GridSpec(shape=(5, 4), spacing_mm=(0.5, 0.5), dt=1e-8, num_steps=4)
    mesh = build_mesh(build_grid(spec))
    for side, axis, target in (("left", 0, 0.0), ("right", 0, 2.0),
                               ("bottom", 1, 0.0), ("top", 1, 1.5)):
        code = side_index(side, 2)
        facets = mesh.boundary_facets[mesh.boundary_sides == code]
        assert facets.size > 0
        assert_allclose(mesh.nodes[facets][:, :, axis], target, atol=1e-12)


def test_node_order_matches_grid_ravel():
    # FEM nodes and the solver lattice must share flat indexing
    spec = GridSpec(shape=(5, 4), spacing_mm=(0.3, 0.7), dt=1e-8, num_steps=4,
                    origin_mm=(1.0, -2.0))
    grid = build_grid(spec)
    mesh = build_mesh(grid)
    axes = [grid.axis_coords_mm(i) for i in range(2)]
    coords = np.meshgrid(*axes, indexing="ij")
    expected = np.stack([c.ravel() for c in coords], axis=1)
    assert_allclose(mesh.nodes, expected)


def test_node_element_maps_are_weighted_adjoints(tiny):
    mesh, maps = tiny["mesh"], tiny["maps"]
    rng = np.random.default_rng(2)
    theta_n = rng.standard_normal(mesh.num_nodes)
    theta_e = rng.standard_normal(mesh.num_elements)
    lhs = np.sum(node_to_element(maps, theta_n) * mesh.volumes * theta_e)
    rhs = np.sum(theta_n * element_to_node(maps, theta_e))
    assert lhs == pytest.approx(rhs, rel=1e-13)
    # vertex means of a constant stay constant
    assert_allclose(node_to_element(maps, np.ones(mesh.num_nodes)), 1.0)


@settings(max_examples=25, deadline=None)
@given(
    n0=st.integers(min_value=4, max_value=9),
    n1=st.integers(min_value=4, max_value=9),
    s0=st.floats(min_value=0.1, max_value=2.0),
    s1=st.floats(min_value=0.1, max_value=2.0),
)
def test_mesh_partitions_the_box(n0, n1, s0, s1):
    spec = GridSpec(shape=(n0, n1), spacing_mm=(s0, s1), dt=1e-8, num_steps=4)
    mesh = build_mesh(build_grid(spec))
    box = (n0 - 1) * s0 * (n1 - 1) * s1
    assert mesh.volumes.sum() == pytest.approx(box, rel=1e-10)
    assert mesh.num_elements == 2 * (n0 - 1) * (n1 - 1)
    # every internal facet references two distinct elements
    assert np.all(mesh.edges[:, 0] != mesh.edges[:, 1])
    # boundary facet count: perimeter cells
    assert mesh.boundary_facets.shape[0] == 2 * ((n0 - 1) + (n1 - 1))


def test_mesh_text_export(tmp_path, tiny):
    mesh = tiny["mesh"]
    path = tmp_path / "mesh.txt"
    write_mesh_text(mesh, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# qpat mesh d=2")
    node_lines = [l for l in lines if not l.startswith("#")]
    assert len(node_lines) == mesh.num_nodes + mesh.num_elements + mesh.num_internal_edges
    # node coordinates parse back exactly
    first = node_lines[0].split()
    assert int(first[0]) == 0
    assert float(first[1]) == mesh.nodes[0, 0]


def test_maps_builder_shapes(tiny):
    mesh = tiny["mesh"]
    maps = build_node_element_maps(mesh)
    assert maps.to_element.shape == (mesh.num_elements, mesh.num_nodes)
    assert maps.to_node.shape == (mesh.num_nodes, mesh.num_elements)
    row = maps.to_element[0].toarray().ravel()
    assert row.sum() == pytest.approx(1.0)
