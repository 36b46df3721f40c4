"""Figure output for bundles.  Agg only, no display dependency."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import FeMesh  # noqa: E402
from .optical import CoefficientPair  # noqa: E402

__all__ = [
    "cell_image",
    "save_phantom_figure",
    "save_recon_figure",
    "save_convergence_figure",
]

matplotlib.rcParams["svg.hashsalt"] = "qpat"


def cell_image(mesh: FeMesh, values: np.ndarray) -> np.ndarray:
    """Element values averaged per grid cell; 3D meshes show the mid slice."""
    cells = tuple(n - 1 for n in mesh.grid_shape)
    per_cell = 2 if mesh.dim == 2 else 6
    img = values.reshape(-1, per_cell).mean(axis=1).reshape(cells)
    if mesh.dim == 3:
        img = img[:, :, cells[2] // 2]
    return img


def _imshow(ax, mesh: FeMesh, values: np.ndarray, title: str):
    img = cell_image(mesh, values)
    x0, y0 = mesh.origin_mm[0], mesh.origin_mm[1]
    lx = mesh.spacing_mm[0] * (mesh.grid_shape[0] - 1)
    ly = mesh.spacing_mm[1] * (mesh.grid_shape[1] - 1)
    im = ax.imshow(img.T, origin="lower", extent=(x0, x0 + lx, y0, y0 + ly),
                   cmap="viridis")
    ax.set_title(title, fontsize=9)
    ax.set_xlabel("mm", fontsize=8)
    return im


def save_phantom_figure(path, mesh: FeMesh, pair: CoefficientPair) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(7.2, 3.2), constrained_layout=True)
    for ax, vals, name in ((axes[0], pair.mu, "absorption"),
                           (axes[1], pair.kappa, "diffusion")):
        im = _imshow(ax, mesh, vals, name)
        fig.colorbar(im, ax=ax, shrink=0.85)
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_recon_figure(path, true_mesh: FeMesh, true_pair: CoefficientPair,
                      recon_mesh: FeMesh, recon_pair: CoefficientPair) -> None:
    fig, axes = plt.subplots(2, 2, figsize=(7.2, 6.4), constrained_layout=True)
    panels = (
        (axes[0, 0], true_mesh, true_pair.mu, "true absorption"),
        (axes[0, 1], recon_mesh, recon_pair.mu, "reconstructed absorption"),
        (axes[1, 0], true_mesh, true_pair.kappa, "true diffusion"),
        (axes[1, 1], recon_mesh, recon_pair.kappa, "reconstructed diffusion"),
    )
    for ax, mesh, vals, name in panels:
        im = _imshow(ax, mesh, vals, name)
        fig.colorbar(im, ax=ax, shrink=0.85)
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_convergence_figure(path, objectives: dict[str, np.ndarray]) -> None:
    fig, ax = plt.subplots(figsize=(5.4, 3.6), constrained_layout=True)
    for name, values in objectives.items():
        ax.semilogy(np.arange(len(values)), values, marker="o", ms=3, label=name)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("data misfit")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    meta = {"Date": None} if str(path).endswith(".svg") else None
    fig.savefig(path, dpi=130, metadata=meta)
    plt.close(fig)
