"""Total-variation machinery shared by the three solvers.

The element-wise unknown vector stacks two material maps, so the difference
operator is block diagonal: one copy of the weighted edge-difference matrix
per block.  Each row corresponds to an interior facet and carries +-(facet
measure) at the two incident elements, in enumeration order.  Everything
downstream (smoothed TV value, lagged-diffusivity weights, primal-dual
systems) is built from this one matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import FeMesh

__all__ = [
    "build_difference_operator",
    "tv_value",
    "tv_weights",
    "tv_gradient",
    "build_lagged_diffusivity_system",
    "build_primal_dual_system",
    "dual_step",
    "shrink",
    "TvOperator",
]


def build_difference_operator(mesh: FeMesh, blocks: int = 2) -> sp.csr_matrix:
    """Sparse weighted differences across interior facets, one block per map."""
    num_edges = len(mesh.edges)
    num_elems = len(mesh.elements)
    rows = np.repeat(np.arange(num_edges), 2)
    cols = np.asarray(mesh.edges, dtype=np.int64).ravel()
    vals = np.repeat(mesh.edge_measures, 2).astype(np.float64)
    vals[1::2] *= -1.0
    single = sp.csr_matrix((vals, (rows, cols)), shape=(num_edges, num_elems))
    if blocks == 1:
        return single
    return sp.block_diag([single] * blocks, format="csr")


@dataclass
class TvOperator:
    """Difference operator plus the smoothing parameter of the C1 TV surrogate
    ``TV(x) = sum_l sqrt((Dx)_l^2 + beta)``."""

    D: sp.csr_matrix
    beta: float

    def value(self, x: np.ndarray) -> float:
        return tv_value(self.D, x, self.beta)

    def weights(self, x: np.ndarray) -> np.ndarray:
        return tv_weights(self.D, x, self.beta)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return tv_gradient(self.D, x, self.beta)


def tv_value(D: sp.csr_matrix, x: np.ndarray, beta: float) -> float:
    return float(np.sum(np.sqrt((D @ x) ** 2 + beta)))


def tv_weights(D: sp.csr_matrix, x: np.ndarray, beta: float) -> np.ndarray:
    """Diagonal of C(x) = ((Dx)^2 + beta)^(-1/2), one value per edge row."""
    return 1.0 / np.sqrt((D @ x) ** 2 + beta)


def tv_gradient(D: sp.csr_matrix, x: np.ndarray, beta: float) -> np.ndarray:
    dx = D @ x
    return D.T @ (dx / np.sqrt(dx**2 + beta))


def build_lagged_diffusivity_system(D: sp.csr_matrix, x: np.ndarray,
                                    beta: float, gamma: float):
    """``M = D^T C(x) D + gamma I`` with a direct factorisation.

    Returned as (matrix, solve) where solve applies the inverse; used both as
    the lagged-diffusivity preconditioner-of-choice and as a reference matrix
    in tests.
    """
    c = tv_weights(D, x, beta)
    m = (D.T @ sp.diags(c) @ D + gamma * sp.eye(D.shape[1])).tocsc()
    lu = spla.splu(m)
    return m, lu.solve


def build_primal_dual_system(D: sp.csr_matrix, d: np.ndarray, chi: np.ndarray,
                             beta: float, gamma: float):
    """Primal-dual TV system at inner iterate (d, chi).

    Linearising the dual feasibility condition C(d)^(-1) chi = D d in d and
    chi and eliminating the dual step gives

        M = D^T diag(c * (1 - c * chi * Dd)) D + gamma I,

    with c the smoothed-TV weights at d.  The middle factor can touch zero or
    go slightly negative, so M is symmetric but not necessarily definite;
    a direct LU factorisation handles it either way.  At d = 0, chi = 0 this
    reduces to the lagged-diffusivity matrix.
    """
    dd = D @ d
    c = 1.0 / np.sqrt(dd**2 + beta)
    mid = c * (1.0 - c * chi * dd)
    m = (D.T @ sp.diags(mid) @ D + gamma * sp.eye(D.shape[1])).tocsc()
    lu = spla.splu(m)
    return m, lu.solve


def dual_step(D: sp.csr_matrix, d: np.ndarray, chi: np.ndarray,
              delta_d: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Dual update direction and its feasibility-limited step length.

    delta_chi comes from the same linearisation as the primal-dual system;
    the step is capped so every |chi + s delta_chi| stays within 1.
    """
    dd = D @ d
    c = 1.0 / np.sqrt(dd**2 + beta)
    ddelta = D @ delta_d
    delta_chi = c * (ddelta - (c * chi * dd) * ddelta) - chi + c * dd

    nz = delta_chi != 0.0
    if not np.any(nz):
        return delta_chi, 1.0
    room = (1.0 - chi[nz] * np.sign(delta_chi[nz])) / np.abs(delta_chi[nz])
    return delta_chi, float(min(1.0, room.min()))


def shrink(v: np.ndarray, nu: float) -> np.ndarray:
    """Soft threshold: exact proximal map of ``nu * |.|_1``."""
    return np.maximum(np.abs(v) - nu, 0.0) * np.sign(v)
