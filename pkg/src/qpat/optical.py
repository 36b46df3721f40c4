"""First-order FEM for the optical diffusion approximation.

Solves ``-div(kappa grad phi) + mu phi = 0`` with the Robin condition
``phi + (1/(2 g_d)) kappa dphi/dn = I_s / g_d`` on the boundary, where
``g_d = 1/pi`` in 2D and ``1/4`` in 3D.  In variational form the system
matrix splits into stiffness, mass and boundary parts,

    A[kappa, mu] = K[kappa] + C[mu] + R,

with piecewise-constant coefficients per element and P1 basis functions, and
the load is ``G_p = int 2 I_s phi_p ds`` over the irradiated boundary.  The
absorbed-energy density is elemental: ``h = mu o (vertex mean of phi)``.

Both the parameter-to-heating Jacobian and its adjoint are matrix-free: one
factorisation of ``A`` serves the base solve, every directional derivative and
every adjoint solve at a given linearisation point.  The adjoint returned by
:func:`jacobian_optical_adjoint` is taken with respect to the volume-weighted
inner product ``<a, b>_S = sum_j S_j a_j b_j`` on elemental vectors, which
makes it coincide with the plain transpose of the discrete Jacobian on the
uniform meshes produced by :mod:`qpat.geometry`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError
from .geometry import FeMesh, NodeElementMaps, side_index

__all__ = [
    "CoefficientPair",
    "Illumination",
    "PhotonSystem",
    "OpticalModel",
    "assemble",
    "forward_optical",
    "jacobian_optical_apply",
    "jacobian_optical_adjoint",
    "illumination_on_sides",
    "boundary_constant",
]


def boundary_constant(dim: int) -> float:
    """Dimension-dependent Robin constant: 1/pi in 2D, 1/4 in 3D."""
    if dim == 2:
        return 1.0 / np.pi
    if dim == 3:
        return 0.25
    raise ValueError(f"unsupported dimension {dim}")


@dataclass
class CoefficientPair:
    """Elemental diffusion (mm) and absorption (1/mm) coefficients."""

    kappa: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        self.kappa = np.asarray(self.kappa, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        if self.kappa.shape != self.mu.shape or self.kappa.ndim != 1:
            raise ValueError("kappa and mu must be flat vectors of equal length")

    def validate_positive(self) -> None:
        if not (np.all(self.kappa > 0) and np.all(self.mu > 0)):
            raise ValueError("optical coefficients must be strictly positive")

    @property
    def size(self) -> int:
        return self.kappa.size

    def as_vector(self) -> np.ndarray:
        """Stacked ``[kappa; mu]`` ordering used by the inversion."""
        return np.concatenate([self.kappa, self.mu])

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "CoefficientPair":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1 or vec.size % 2:
            raise ValueError("coefficient vector must have even length")
        half = vec.size // 2
        return cls(vec[:half].copy(), vec[half:].copy())

    def copy(self) -> "CoefficientPair":
        return CoefficientPair(self.kappa.copy(), self.mu.copy())


@dataclass
class Illumination:
    """Boundary current ``I_s`` per boundary facet (zero off the support)."""

    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)


def illumination_on_sides(mesh: FeMesh, sides, magnitude: float = 1.0) -> Illumination:
    """Uniform source over whole box sides, e.g. ``["left"]``."""
    if isinstance(sides, str):
        sides = [sides]
    codes = {side_index(s, mesh.dim) for s in sides}
    values = np.zeros(mesh.boundary_facets.shape[0])
    mask = np.isin(mesh.boundary_sides, list(codes))
    if not mask.any():
        raise ValueError(f"no boundary facets on sides {sides!r}")
    values[mask] = magnitude
    return Illumination(values=values, label="+".join(str(s) for s in sides))


@dataclass
class PhotonSystem:
    """Assembled optical system at one linearisation point and one source.

    The factorisation handle is shared between systems that differ only in
    their load, so one ``lu`` serves all illuminations of an experiment.
    """

    stiffness: sp.csc_matrix
    mass: sp.csc_matrix
    boundary: sp.csc_matrix
    load: np.ndarray
    lu: spla.SuperLU
    phi: np.ndarray

    @property
    def matrix(self) -> sp.csc_matrix:
        return (self.stiffness + self.mass + self.boundary).tocsc()


class OpticalModel:
    """Mesh-bound assembly tables and the matrix-free operator pieces.

    Precomputes, per element, the unit-coefficient local stiffness and mass
    matrices; taking inner products against them gives both the directional
    system perturbation ``(K[dkappa] + C[dmu]) v`` and the per-element adjoint
    contractions without assembling new sparse matrices.
    """

    def __init__(self, mesh: FeMesh, maps: NodeElementMaps):
        self.mesh = mesh
        self.maps = maps
        d = mesh.dim
        pts = mesh.nodes[mesh.elements]                      # (Ne, d+1, d)
        mats = pts[:, 1:, :] - pts[:, :1, :]                 # (Ne, d, d)
        inv = np.linalg.inv(mats)
        grads = np.empty((mesh.num_elements, d + 1, d))
        grads[:, 1:, :] = np.swapaxes(inv, 1, 2)
        grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
        vol = mesh.volumes
        self.stiff_local = vol[:, None, None] * np.einsum("eik,ejk->eij", grads, grads)
        ones = np.ones((d + 1, d + 1)) + np.eye(d + 1)
        self.mass_local = vol[:, None, None] * (ones / ((d + 1) * (d + 2)))

        d1 = d + 1
        conn = mesh.elements
        self._rows = np.repeat(conn, d1, axis=1).ravel()
        self._cols = np.tile(conn, (1, d1)).ravel()
        self._nn = mesh.num_nodes
        self.boundary_matrix = self._assemble_boundary()
        self.solve_count = 0

    def _assemble_boundary(self) -> sp.csc_matrix:
        mesh = self.mesh
        d = mesh.dim
        g = boundary_constant(d)
        nb = d  # nodes per boundary facet
        local = (np.ones((nb, nb)) + np.eye(nb)) / (nb * (nb + 1))
        vals = (2.0 * g) * mesh.boundary_measures[:, None, None] * local
        rows = np.repeat(mesh.boundary_facets, nb, axis=1).ravel()
        cols = np.tile(mesh.boundary_facets, (1, nb)).ravel()
        mat = sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(self._nn, self._nn))
        return mat.tocsc()

    def _scatter(self, local: np.ndarray) -> sp.csc_matrix:
        return sp.coo_matrix(
            (local.ravel(), (self._rows, self._cols)), shape=(self._nn, self._nn)
        ).tocsc()

    def stiffness_matrix(self, kappa: np.ndarray) -> sp.csc_matrix:
        return self._scatter(kappa[:, None, None] * self.stiff_local)

    def mass_matrix(self, mu: np.ndarray) -> sp.csc_matrix:
        return self._scatter(mu[:, None, None] * self.mass_local)

    def load_vector(self, illum: Illumination) -> np.ndarray:
        """``G_p = int 2 I_s phi_p ds``: each facet node gets 2 I_s m / d."""
        mesh = self.mesh
        vals = illum.values
        if vals.shape[0] != mesh.boundary_facets.shape[0]:
            raise ValueError("illumination must give one value per boundary facet")
        g = np.zeros(self._nn)
        contrib = 2.0 * vals * mesh.boundary_measures / mesh.dim
        np.add.at(g, mesh.boundary_facets.ravel(),
                  np.repeat(contrib, mesh.dim))
        return g

    def factorize(self, x: CoefficientPair, validate: bool = True):
        """Assemble ``K + C + R`` and return (K, C, lu)."""
        if validate:
            x.validate_positive()
        if x.size != self.mesh.num_elements:
            raise ValueError("coefficient length does not match the mesh")
        stiff = self.stiffness_matrix(x.kappa)
        mass = self.mass_matrix(x.mu)
        system = (stiff + mass + self.boundary_matrix).tocsc()
        try:
            lu = spla.splu(system)
        except RuntimeError as exc:  # singular factorisation
            raise NumericalError(f"optical system factorisation failed: {exc}") from exc
        return stiff, mass, lu

    def solve(self, lu, rhs: np.ndarray) -> np.ndarray:
        self.solve_count += 1
        out = lu.solve(rhs)
        if not np.all(np.isfinite(out)):
            raise NumericalError("optical solve produced non-finite values")
        return out

    def heating(self, x: CoefficientPair, phi: np.ndarray) -> np.ndarray:
        """Elemental absorbed energy ``h = mu o (vertex mean of phi)``."""
        return x.mu * (self.maps.to_element @ phi)

    def perturbation_apply(self, dkappa, dmu, vec: np.ndarray) -> np.ndarray:
        """Nodal ``(K[dkappa] + C[dmu]) vec`` without sparse assembly."""
        ve = vec[self.mesh.elements]                         # (Ne, d+1)
        local = np.einsum("e,eij,ej->ei", dkappa, self.stiff_local, ve)
        local += np.einsum("e,eij,ej->ei", dmu, self.mass_local, ve)
        out = np.zeros(self._nn)
        np.add.at(out, self.mesh.elements.ravel(), local.ravel())
        return out

    def system_derivative_contractions(self, left: np.ndarray, right: np.ndarray):
        """Per-element ``left^T (dA/dkappa_j) right`` and the mass analogue."""
        le = left[self.mesh.elements]
        re = right[self.mesh.elements]
        stiff = np.einsum("eij,ei,ej->e", self.stiff_local, le, re)
        mass = np.einsum("eij,ei,ej->e", self.mass_local, le, re)
        return stiff, mass


def assemble(mesh: FeMesh, x: CoefficientPair, illumination: Illumination,
             maps: NodeElementMaps | None = None, validate: bool = True) -> PhotonSystem:
    """Build and factorise the optical system for one illumination.

    ``validate=False`` allows non-positive coefficients for operator tests
    (e.g. checking that the system reduces to the boundary part at zero).
    """
    from .geometry import build_node_element_maps

    model = OpticalModel(mesh, maps or build_node_element_maps(mesh))
    if validate:
        x.validate_positive()
    stiff = model.stiffness_matrix(x.kappa)
    mass = model.mass_matrix(x.mu)
    load = model.load_vector(illumination)
    system = (stiff + mass + model.boundary_matrix).tocsc()
    try:
        lu = spla.splu(system)
    except RuntimeError as exc:
        raise NumericalError(f"optical system factorisation failed: {exc}") from exc
    phi = lu.solve(load)
    return PhotonSystem(stiffness=stiff, mass=mass, boundary=model.boundary_matrix,
                        load=load, lu=lu, phi=phi)


def forward_optical(system: PhotonSystem, x: CoefficientPair,
                    maps: NodeElementMaps) -> np.ndarray:
    """Elemental heating from an assembled system."""
    return x.mu * (maps.to_element @ system.phi)


def jacobian_optical_apply(model: OpticalModel, lu, x: CoefficientPair,
                           phi: np.ndarray, dx: CoefficientPair) -> np.ndarray:
    """Directional derivative of the heating map.

    Solves ``A dphi = -(K[dkappa] + C[dmu]) phi`` with the existing
    factorisation and returns ``dmu o (I phi) + mu o (I dphi)``.
    """
    rhs = -model.perturbation_apply(dx.kappa, dx.mu, phi)
    dphi = model.solve(lu, rhs)
    iphi = model.maps.to_element @ phi
    idphi = model.maps.to_element @ dphi
    return dx.mu * iphi + x.mu * idphi


def jacobian_optical_adjoint(model: OpticalModel, lu, x: CoefficientPair,
                             phi: np.ndarray, h_in: np.ndarray) -> CoefficientPair:
    """Adjoint of the heating Jacobian under the S-weighted elemental pairing.

    One extra solve of ``A htilde = -I+ (mu o h_in)`` followed by per-element
    contractions against the unit-coefficient local matrices:

        g_kappa_j = (1/S_j) htilde^T (dA/dkappa_j) phi
        g_mu_j    = (1/S_j) htilde^T (dA/dmu_j) phi + h_in_j (I phi)_j
    """
    maps = model.maps
    rhs = -(maps.to_node @ (x.mu * h_in))
    htilde = model.solve(lu, rhs)
    stiff, mass = model.system_derivative_contractions(htilde, phi)
    inv_vol = 1.0 / model.mesh.volumes
    g_kappa = inv_vol * stiff
    g_mu = inv_vol * mass + h_in * (maps.to_element @ phi)
    return CoefficientPair(g_kappa, g_mu)
