"""Rectilinear wave-solver grids and matched simplex meshes.

The acoustic and optical solvers share one node set.  The wave solver works on
a uniform rectilinear grid of ``N_1 x ... x N_d`` nodes; the optical FEM mesh
uses the same nodes as vertices and splits every grid cell into two triangles
(2D, cut along the lower-left to upper-right diagonal) or six Kuhn tetrahedra
(3D).  Consecutive pairs (2D) / groups of six (3D) of elements therefore tile
one grid cell, whose centroid sits half a spacing off the node lattice; the
offset is recorded on the mesh so initial-pressure transfers can state their
convention explicitly.

Coordinates are millimetres with node ``(0, ..., 0)`` at the box minimum
corner plus an optional origin shift.  Spectral quantities (wavenumbers) are
radians per metre so the acoustic module can work in SI units throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "GridSpec",
    "Grid",
    "FeMesh",
    "NodeElementMaps",
    "build_grid",
    "build_mesh",
    "build_node_element_maps",
    "node_to_element",
    "element_to_node",
    "write_mesh_text",
    "SIDE_ALIASES",
    "side_index",
]

MM = 1e-3  # metres per millimetre

# Canonical side names are "<axis><min|max>"; the aliases follow the usual
# image orientation with axis 0 horizontal and axis 1 vertical.
SIDE_ALIASES = {
    "left": "x0min",
    "right": "x0max",
    "bottom": "x1min",
    "top": "x1max",
    "front": "x2min",
    "back": "x2max",
}


def side_index(name: str, dim: int) -> int:
    """Map a side name ('x0min', 'left', ...) to ``2*axis + (0 low, 1 high)``."""
    name = SIDE_ALIASES.get(name, name)
    if len(name) != 5 or not name.startswith("x") or name[2:] not in ("min", "max"):
        raise ValueError(f"unknown side name {name!r}")
    axis = int(name[1])
    if not 0 <= axis < dim:
        raise ValueError(f"side {name!r} out of range for dimension {dim}")
    return 2 * axis + (0 if name.endswith("min") else 1)


@dataclass(frozen=True)
class GridSpec:
    """Geometry and stepping parameters of a rectilinear solver grid.

    Attributes:
        shape: nodes per coordinate, ``d`` entries with ``d`` in ``{2, 3}``.
        spacing_mm: node spacing per coordinate in millimetres.
        dt: time step in seconds.
        num_steps: number of recorded time samples ``N_t``.
        pml_points: absorbing-layer thickness in grid points on every face.
            The layer lies inside the computational box.
        pml_alpha: maximum layer absorption in nepers per grid point.
        c_ref: reference sound speed (m/s) for the spectral correction and the
            layer profile; ``None`` defers to ``max`` of the medium map.
        origin_mm: coordinates of node ``(0, ..., 0)``.
    """

    shape: tuple[int, ...]
    spacing_mm: tuple[float, ...]
    dt: float
    num_steps: int
    pml_points: int = 0
    pml_alpha: float = 2.0
    c_ref: float | None = None
    origin_mm: tuple[float, ...] = ()

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        spacing = tuple(float(s) for s in self.spacing_mm)
        origin = tuple(float(o) for o in self.origin_mm) if self.origin_mm else (0.0,) * len(shape)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing_mm", spacing)
        object.__setattr__(self, "origin_mm", origin)
        if len(shape) not in (2, 3):
            raise ValueError(f"grid dimension must be 2 or 3, got {len(shape)}")
        if len(spacing) != len(shape) or len(origin) != len(shape):
            raise ValueError("shape, spacing_mm and origin_mm must have equal length")
        if any(n < 3 for n in shape):
            raise ValueError(f"need at least 3 nodes per coordinate, got {shape}")
        if any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.num_steps < 2:
            raise ValueError(f"need at least 2 time steps, got {self.num_steps}")
        if self.pml_points < 0 or 2 * self.pml_points >= min(shape):
            raise ValueError(
                f"absorbing layer of {self.pml_points} points does not fit a grid of shape {shape}"
            )
        if self.pml_alpha < 0:
            raise ValueError("layer absorption must be non-negative")
        if self.c_ref is not None and not self.c_ref > 0:
            raise ValueError("reference sound speed must be positive")

    @property
    def dim(self) -> int:
        return len(self.shape)


@dataclass(frozen=True)
class Grid:
    """A validated grid plus the derived spectral and layer quantities.

    ``wavenumbers[i]`` holds the DFT angular wavenumbers along axis ``i`` in
    rad/m; ``shift_pos[i]`` / ``shift_neg[i]`` the half-spacing phase ramps
    ``exp(+-1j k_i dr_i / 2)`` used by the staggered derivatives; and
    ``pml_profile[i]`` the quartic absorption ramp in nepers per grid point
    (zeros outside the layer).
    """

    spec: GridSpec
    wavenumbers: list[np.ndarray]
    shift_pos: list[np.ndarray]
    shift_neg: list[np.ndarray]
    pml_profile: list[np.ndarray]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.spec.shape

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def spacing_m(self) -> tuple[float, ...]:
        return tuple(s * MM for s in self.spec.spacing_mm)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    def axis_coords_mm(self, axis: int) -> np.ndarray:
        return self.spec.origin_mm[axis] + self.spec.spacing_mm[axis] * np.arange(self.shape[axis])

    def wavenumber_magnitude(self) -> np.ndarray:
        """Full-grid ``|k|`` in rad/m."""
        axes = np.meshgrid(*self.wavenumbers, indexing="ij", sparse=True)
        return np.sqrt(sum(a**2 for a in axes))

    def pml_factor(self, c_ref: float) -> list[np.ndarray]:
        """Per-axis half-step attenuation factors ``exp(-alpha dt / 2)``.

        The profile is stated in nepers per grid point; a wave moving at
        ``c_ref`` crosses one point in ``dr / c_ref`` seconds, which converts
        the profile into the rate used in the sandwich update.
        """
        out = []
        for prof, dr in zip(self.pml_profile, self.spacing_m):
            rate = prof * (c_ref / dr)
            out.append(np.exp(-rate * self.spec.dt / 2.0))
        return out


def build_grid(spec: GridSpec) -> Grid:
    """Derive wavenumbers, staggering phases and the absorbing-layer profile."""
    wavenumbers, shift_pos, shift_neg, profiles = [], [], [], []
    for n, dr_mm in zip(spec.shape, spec.spacing_mm):
        dr = dr_mm * MM
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=dr)
        wavenumbers.append(k)
        shift_pos.append(np.exp(+0.5j * k * dr))
        shift_neg.append(np.exp(-0.5j * k * dr))
        prof = np.zeros(n)
        m = spec.pml_points
        if m > 0:
            ramp = (np.arange(1, m + 1)[::-1] / m) ** 4  # 1 at the outer face
            prof[:m] = spec.pml_alpha * ramp
            prof[n - m:] = spec.pml_alpha * ramp[::-1]
        profiles.append(prof)
    return Grid(spec, wavenumbers, shift_pos, shift_neg, profiles)


@dataclass(frozen=True)
class FeMesh:
    """First-order simplex mesh sharing its vertices with a solver grid.

    Attributes:
        nodes: vertex coordinates in mm, shape ``(N_n, d)``.
        elements: vertex indices per simplex, shape ``(N_e, d+1)``.
        volumes: element measures (mm^2 / mm^3).
        edges: the two elements incident to each internal facet, ``(N_l, 2)``.
        edge_measures: internal facet length (2D) or area (3D).
        boundary_facets: vertex indices of boundary facets, ``(N_b, d)``.
        boundary_measures: boundary facet measures.
        boundary_sides: box side of each boundary facet (``side_index`` code).
        grid_shape / spacing_mm / origin_mm: the generating lattice.
        cell_center_offset_mm: centroid of a grid cell relative to its lowest
            node; element ``2c``/``2c+1`` (2D) or ``6c..6c+5`` (3D) tile cell
            ``c``, so cell centres sit on the half-offset lattice.
    """

    nodes: np.ndarray
    elements: np.ndarray
    volumes: np.ndarray
    edges: np.ndarray
    edge_measures: np.ndarray
    boundary_facets: np.ndarray
    boundary_measures: np.ndarray
    boundary_sides: np.ndarray
    grid_shape: tuple[int, ...]
    spacing_mm: tuple[float, ...]
    origin_mm: tuple[float, ...]
    cell_center_offset_mm: tuple[float, ...]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def num_internal_edges(self) -> int:
        return self.edges.shape[0]

    def element_centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    def validate(self) -> None:
        d = self.dim
        n, m = self.num_nodes, self.num_elements
        if np.any(self.volumes <= 0):
            raise ValueError("non-positive element volume")
        if self.elements.min() < 0 or self.elements.max() >= n:
            raise ValueError("element connectivity out of range")
        expected = np.prod([s - 1 for s in self.grid_shape]) * (2 if d == 2 else 6)
        if m != expected:
            raise ValueError(f"expected {expected} elements, found {m}")
        if np.any(self.edge_measures <= 0) or np.any(self.boundary_measures <= 0):
            raise ValueError("non-positive facet measure")


def _cell_elements_2d(shape: tuple[int, int]) -> np.ndarray:
    n0, n1 = shape
    i, j = np.meshgrid(np.arange(n0 - 1), np.arange(n1 - 1), indexing="ij")
    i, j = i.ravel(), j.ravel()

    def nid(a, b):
        return a * n1 + b

    a = nid(i, j)          # lower-left
    b = nid(i + 1, j)      # lower-right
    c = nid(i + 1, j + 1)  # upper-right
    d = nid(i, j + 1)      # upper-left
    # diagonal runs lower-left -> upper-right: triangles (a,b,c) and (a,c,d)
    tris = np.empty((i.size, 2, 3), dtype=np.int64)
    tris[:, 0, 0], tris[:, 0, 1], tris[:, 0, 2] = a, b, c
    tris[:, 1, 0], tris[:, 1, 1], tris[:, 1, 2] = a, c, d
    return tris.reshape(-1, 3)


_KUHN_PATHS = [
    (0, 1, 2),
    (0, 2, 1),
    (1, 0, 2),
    (1, 2, 0),
    (2, 0, 1),
    (2, 1, 0),
]


def _cell_elements_3d(shape: tuple[int, int, int]) -> np.ndarray:
    n0, n1, n2 = shape
    i, j, k = np.meshgrid(
        np.arange(n0 - 1), np.arange(n1 - 1), np.arange(n2 - 1), indexing="ij"
    )
    i, j, k = i.ravel(), j.ravel(), k.ravel()

    def nid(a, b, c):
        return (a * n1 + b) * n2 + c

    corner = np.stack([i, j, k], axis=1)
    tets = np.empty((i.size, 6, 4), dtype=np.int64)
    unit = np.eye(3, dtype=np.int64)
    for t, path in enumerate(_KUHN_PATHS):
        v = corner.copy()
        tets[:, t, 0] = nid(v[:, 0], v[:, 1], v[:, 2])
        for s, axis in enumerate(path):
            v = v + unit[axis]
            tets[:, t, s + 1] = nid(v[:, 0], v[:, 1], v[:, 2])
    return tets.reshape(-1, 4)


def _facet_measures(nodes: np.ndarray, facets: np.ndarray) -> np.ndarray:
    pts = nodes[facets]
    if facets.shape[1] == 2:
        return np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1)
    u = pts[:, 1] - pts[:, 0]
    v = pts[:, 2] - pts[:, 0]
    return 0.5 * np.linalg.norm(np.cross(u, v), axis=1)


def build_mesh(grid: Grid | GridSpec) -> FeMesh:
    """Triangulate the grid cells into simplices and enumerate facets.

    Internal facets are listed in first-seen element order; each carries the
    ordered pair of incident elements so jump operators get a fixed sign
    convention.  Boundary facets are tagged with the box side they lie on.
    """
    spec = grid.spec if isinstance(grid, Grid) else grid
    shape, spacing, origin = spec.shape, spec.spacing_mm, spec.origin_mm
    d = len(shape)

    axes = [origin[i] + spacing[i] * np.arange(shape[i]) for i in range(d)]
    coords = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([c.ravel() for c in coords], axis=1).astype(np.float64)

    elements = _cell_elements_2d(shape) if d == 2 else _cell_elements_3d(shape)

    pts = nodes[elements]
    mats = pts[:, 1:, :] - pts[:, :1, :]
    volumes = np.abs(np.linalg.det(mats)) / math.factorial(d)

    # facet -> incident elements; a facet is any (d-1)-subsimplex of an element
    local_facets = [tuple(p for p in range(d + 1) if p != drop) for drop in range(d + 1)]
    seen: dict[tuple[int, ...], int] = {}
    first_elem: list[int] = []
    facet_nodes: list[tuple[int, ...]] = []
    edges: list[tuple[int, int]] = []
    edge_facet: list[tuple[int, ...]] = []
    boundary_mask: list[bool] = []
    for e in range(elements.shape[0]):
        conn = elements[e]
        for loc in local_facets:
            key = tuple(sorted(int(conn[p]) for p in loc))
            idx = seen.get(key)
            if idx is None:
                seen[key] = len(facet_nodes)
                facet_nodes.append(key)
                first_elem.append(e)
                boundary_mask.append(True)
            else:
                edges.append((first_elem[idx], e))
                edge_facet.append(key)
                boundary_mask[idx] = False

    boundary = np.array(
        [facet_nodes[i] for i, b in enumerate(boundary_mask) if b],
        dtype=np.int64,
    )
    edges_arr = np.array(edges, dtype=np.int64).reshape(-1, 2)
    edge_facets_arr = np.array(edge_facet, dtype=np.int64).reshape(-1, d)

    edge_measures = _facet_measures(nodes, edge_facets_arr)
    boundary_measures = _facet_measures(nodes, boundary)

    # classify boundary facets by the box face they lie on
    lo = np.array([axes[i][0] for i in range(d)])
    hi = np.array([axes[i][-1] for i in range(d)])
    sides = np.full(boundary.shape[0], -1, dtype=np.int64)
    bpts = nodes[boundary]
    for axis in range(d):
        tol = 1e-9 * max(spacing)
        on_lo = np.all(np.abs(bpts[:, :, axis] - lo[axis]) < tol, axis=1)
        on_hi = np.all(np.abs(bpts[:, :, axis] - hi[axis]) < tol, axis=1)
        sides[on_lo] = 2 * axis
        sides[on_hi] = 2 * axis + 1
    if np.any(sides < 0):
        raise ValueError("boundary facet not on any box side")

    mesh = FeMesh(
        nodes=nodes,
        elements=elements,
        volumes=volumes,
        edges=edges_arr,
        edge_measures=edge_measures,
        boundary_facets=boundary,
        boundary_measures=boundary_measures,
        boundary_sides=sides,
        grid_shape=shape,
        spacing_mm=spacing,
        origin_mm=origin,
        cell_center_offset_mm=tuple(s / 2.0 for s in spacing),
    )
    mesh.validate()
    return mesh


@dataclass(frozen=True)
class NodeElementMaps:
    """Averaging map between nodal and elemental fields and its companion.

    ``node_to_element`` takes the mean of a nodal field over each element's
    vertices.  ``element_to_node`` is the volume-weighted scatter
    ``(1/(d+1)) * sum_j S_j theta_j`` over elements incident to a node, which
    pairs with ``node_to_element`` under the volume-weighted inner product on
    elements: ``<I theta, S o Theta> = <theta, I+ Theta>``.
    """

    to_element: sp.csr_matrix  # (N_e, N_n), entries 1/(d+1)
    volumes: np.ndarray

    @property
    def to_node(self) -> sp.csr_matrix:
        return self._to_node

    def __post_init__(self):
        weighted = self.to_element.T.tocsr().multiply(self.volumes[None, :]).tocsr()
        object.__setattr__(self, "_to_node", weighted)


def build_node_element_maps(mesh: FeMesh) -> NodeElementMaps:
    d1 = mesh.dim + 1
    ne = mesh.num_elements
    rows = np.repeat(np.arange(ne), d1)
    cols = mesh.elements.ravel()
    vals = np.full(ne * d1, 1.0 / d1)
    to_elem = sp.csr_matrix((vals, (rows, cols)), shape=(ne, mesh.num_nodes))
    return NodeElementMaps(to_element=to_elem, volumes=mesh.volumes.copy())


def node_to_element(maps: NodeElementMaps, theta: np.ndarray) -> np.ndarray:
    """Vertex mean per element."""
    return maps.to_element @ theta


def element_to_node(maps: NodeElementMaps, theta: np.ndarray) -> np.ndarray:
    """Volume-weighted companion scatter (adjoint under the S-weighted pairing)."""
    return maps.to_node @ theta


def write_mesh_text(mesh: FeMesh, path) -> None:
    """Plain-text mesh dump: node, element and internal-edge tables."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# qpat mesh d={mesh.dim} nodes={mesh.num_nodes} "
                 f"elements={mesh.num_elements} edges={mesh.num_internal_edges}\n")
        fh.write("# nodes: index x_mm ...\n")
        for i, x in enumerate(mesh.nodes):
            fh.write(f"{i} " + " ".join(f"{v:.17g}" for v in x) + "\n")
        fh.write("# elements: index node_ids volume\n")
        for e in range(mesh.num_elements):
            ids = " ".join(str(v) for v in mesh.elements[e])
            fh.write(f"{e} {ids} {mesh.volumes[e]:.17g}\n")
        fh.write("# edges: index elem_a elem_b measure\n")
        for l in range(mesh.num_internal_edges):
            a, b = mesh.edges[l]
            fh.write(f"{l} {a} {b} {mesh.edge_measures[l]:.17g}\n")
