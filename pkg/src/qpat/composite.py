"""Composite opto-acoustic operator and its matrix-free derivatives.

For each illumination the chain runs: finite-element photon density, element
heating, volume-weighted projection onto the shared grid nodes, acoustic
propagation to detector traces.  The optical system matrix depends on the
coefficients but not on the illumination, so one factorisation per
linearisation point serves every source; a small cache keyed by the scaled
coefficient vector lets objective, gradient and Gauss-Newton products reuse
the factorisation and photon fields across a line search.

All derivative plumbing works on the scaled vector ``xbar`` through a
diagonal chain-rule factor supplied by the scaling, so the same code serves
the linearly scaled benchmark and the log-scaled Newton methods.
"""

from __future__ import annotations

from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .acoustic import AcousticMedium, AcousticPropagator, MeasurementSeries
from .geometry import FeMesh, Grid, NodeElementMaps, build_node_element_maps
from .optical import (
    CoefficientPair,
    Illumination,
    OpticalModel,
    jacobian_optical_adjoint,
    jacobian_optical_apply,
)

__all__ = ["ParamScaling", "LinearizedState", "CompositeModel", "build_transfer"]


@dataclass
class ParamScaling:
    """Change of variables between physical coefficients and solver unknowns.

    ``linear``: x = ref * xbar with one reference level per coefficient
    block.  ``log``: x = x0 * exp(xbar), which keeps iterates positive and
    equalises relative sensitivities.
    """

    kind: str
    x0: np.ndarray
    ref: np.ndarray

    @classmethod
    def linear(cls, x0: np.ndarray) -> "ParamScaling":
        x0 = np.asarray(x0, dtype=np.float64)
        half = x0.size // 2
        ref = np.concatenate([
            np.full(half, x0[:half].mean()),
            np.full(half, x0[half:].mean()),
        ])
        return cls(kind="linear", x0=x0.copy(), ref=ref)

    @classmethod
    def log(cls, x0: np.ndarray) -> "ParamScaling":
        x0 = np.asarray(x0, dtype=np.float64)
        if np.any(x0 <= 0):
            raise ValueError("log scaling needs positive baselines")
        return cls(kind="log", x0=x0.copy(), ref=x0.copy())

    def initial_xbar(self) -> np.ndarray:
        if self.kind == "linear":
            return self.x0 / self.ref
        return np.zeros_like(self.x0)

    def to_physical(self, xbar: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            return self.ref * xbar
        return self.x0 * np.exp(xbar)

    def chain(self, physical: np.ndarray) -> np.ndarray:
        """Diagonal of d(physical)/d(xbar) at the given physical point."""
        if self.kind == "linear":
            return self.ref
        return physical


def build_transfer(maps: NodeElementMaps) -> sp.csr_matrix:
    """Node values as volume-weighted means of incident element values.

    Row-normalised so constants are preserved; the exact transpose is used on
    the way back, keeping the composite adjoint an exact transpose too.
    """
    to_node = maps.to_node.tocsr(copy=True)
    row_sums = np.asarray(to_node.sum(axis=1)).ravel()
    if np.any(row_sums <= 0):
        raise ValueError("mesh has nodes with no incident elements")
    return sp.diags(1.0 / row_sums) @ to_node


@dataclass
class LinearizedState:
    """Everything reusable at one linearisation point."""

    xbar: np.ndarray
    x: CoefficientPair
    chain: np.ndarray
    lu: object
    phis: list[np.ndarray]
    heatings: list[np.ndarray]
    predictions: list[np.ndarray] | None = None


class CompositeModel:
    """Forward map, gradient and Gauss-Newton product for all illuminations."""

    def __init__(self, mesh: FeMesh, grid: Grid, medium: AcousticMedium,
                 detectors: np.ndarray, illuminations: list[Illumination],
                 scaling: ParamScaling, maps: NodeElementMaps | None = None,
                 threads: int = 1, smooth_source: bool = True,
                 real_fft: bool = True, cache_size: int = 3):
        if np.prod(grid.shape) != len(mesh.nodes):
            raise ValueError("mesh nodes and grid nodes must coincide")
        self.mesh = mesh
        self.maps = maps if maps is not None else build_node_element_maps(mesh)
        self.optical = OpticalModel(mesh, self.maps)
        self.propagator = AcousticPropagator(
            grid, medium, detectors, smooth_source=smooth_source, real_fft=real_fft)
        self.grid = grid
        self.illuminations = illuminations
        self.scaling = scaling
        self.threads = max(1, int(threads))
        self.transfer = build_transfer(self.maps)
        self.loads = [self.optical.load_vector(ill) for ill in illuminations]
        self.cache_size = cache_size
        self._cache: OrderedDict[bytes, LinearizedState] = OrderedDict()

    @property
    def num_sources(self) -> int:
        return len(self.illuminations)

    @property
    def num_unknowns(self) -> int:
        return 2 * len(self.mesh.elements)

    def counters(self) -> tuple[int, int]:
        return self.propagator.forward_count, self.propagator.adjoint_count

    # -- per-point state ---------------------------------------------------

    def linearize(self, xbar: np.ndarray) -> LinearizedState:
        xbar = np.asarray(xbar, dtype=np.float64)
        key = xbar.tobytes()
        state = self._cache.get(key)
        if state is not None:
            self._cache.move_to_end(key)
            return state
        physical = self.scaling.to_physical(xbar)
        x = CoefficientPair.from_vector(physical)
        _, _, lu = self.optical.factorize(x)
        phis = [self.optical.solve(lu, load) for load in self.loads]
        heatings = [self.optical.heating(x, phi) for phi in phis]
        state = LinearizedState(xbar=xbar.copy(), x=x,
                                chain=self.scaling.chain(physical),
                                lu=lu, phis=phis, heatings=heatings)
        self._cache[key] = state
        while len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return state

    def _map(self, fn, items):
        """Apply fn over per-source work; reduction order stays fixed."""
        if self.threads == 1 or len(items) == 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))

    def heating_on_grid(self, heating: np.ndarray) -> np.ndarray:
        return (self.transfer @ heating).reshape(self.grid.shape)

    def grid_to_elements(self, field: np.ndarray) -> np.ndarray:
        return self.transfer.T @ field.ravel()

    def predictions(self, state: LinearizedState) -> list[np.ndarray]:
        if state.predictions is None:
            state.predictions = self._map(
                lambda h: self.propagator.forward(self.heating_on_grid(h)).data,
                state.heatings)
        return state.predictions

    def residuals(self, state: LinearizedState, data, offsets=None) -> list[np.ndarray]:
        preds = self.predictions(state)
        out = []
        for q, pred in enumerate(preds):
            target = data[q].data if isinstance(data[q], MeasurementSeries) else data[q]
            r = pred - target
            if offsets is not None:
                r = r + offsets[q]
            out.append(r)
        return out

    # -- objective, gradient, curvature ------------------------------------

    def objective(self, xbar, data, offsets=None) -> tuple[float, LinearizedState]:
        state = self.linearize(xbar)
        eps = 0.0
        for r in self.residuals(state, data, offsets):
            eps += 0.5 * float(np.sum(r * r))
        return eps, state

    def gradient(self, xbar, data, offsets=None) -> tuple[float, np.ndarray, LinearizedState]:
        state = self.linearize(xbar)
        res = self.residuals(state, data, offsets)
        eps = sum(0.5 * float(np.sum(r * r)) for r in res)

        def backprop(args):
            q, r = args
            a = self.propagator.adjoint(r)
            h_back = self.grid_to_elements(a)
            pair = jacobian_optical_adjoint(
                self.optical, state.lu, state.x, state.phis[q], h_back)
            return pair.as_vector()

        parts = self._map(backprop, list(enumerate(res)))
        total = np.zeros(self.num_unknowns)
        for part in parts:
            total += part
        return eps, state.chain * total, state

    def hessian_apply(self, state: LinearizedState, vec: np.ndarray) -> np.ndarray:
        """Gauss-Newton product J^T J vec through two acoustic runs per source."""
        t = state.chain * np.asarray(vec, dtype=np.float64)
        half = t.size // 2
        dx = CoefficientPair(kappa=t[:half], mu=t[half:])

        def one_source(q):
            dh = jacobian_optical_apply(
                self.optical, state.lu, state.x, state.phis[q], dx)
            series = self.propagator.forward(self.heating_on_grid(dh))
            a = self.propagator.adjoint(series.data)
            pair = jacobian_optical_adjoint(
                self.optical, state.lu, state.x, state.phis[q],
                self.grid_to_elements(a))
            return pair.as_vector()

        parts = self._map(one_source, list(range(self.num_sources)))
        total = np.zeros(self.num_unknowns)
        for part in parts:
            total += part
        return state.chain * total

    def forward_data(self, xbar: np.ndarray) -> list[MeasurementSeries]:
        """Detector series for every illumination at the given unknowns."""
        state = self.linearize(xbar)
        preds = self.predictions(state)
        return [MeasurementSeries(data=p, detectors=self.propagator.detectors,
                                  dt=self.propagator.dt) for p in preds]
