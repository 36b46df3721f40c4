"""k-space pseudo-spectral acoustic propagation and its discrete adjoint.

First-order coupled equations on a staggered grid/time lattice, advanced with
spectral spatial derivatives and the temporal k-space correction

    d/dr_i^{+-} = F^{-1} { 1j k_i exp(+-1j k_i dr_i/2) sinc(c_ref |k| dt/2) F },

split-step absorbing layers applied as half-step diagonal factors, and
power-law absorption/dispersion through the fractional Laplacians

    Y_abs = F^{-1} |k|^(y-2) F,    Y_dis = F^{-1} |k|^(y-1) F,

with ``tau = -2 a0 c^(y-1)`` and ``eta = 2 a0 c^y tan(pi y / 2)`` (a0 in
nepers (rad/s)^-y / m).  An initial pressure enters as an additive mass
source ``s = (1/(2 d dt c^2)) S p0`` injected at the first two steps, where
``S`` is a symmetric frequency-domain Blackman smoother; pressure is recorded
at detector nodes after every step.

The adjoint is the discretise-then-adjoint construction: the exact transpose
of the forward time loop, rearranged into a forward-running recursion over
adjoint field variables driven by the time-reversed data.  Because every
factor of one step (diagonal media terms, layer factors, Fourier multipliers)
is transposed exactly, forward and adjoint agree with the dense transpose to
rounding precision, which is what the matrix-free Gauss-Newton inversion
relies on.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import NumericalError
from .geometry import Grid

__all__ = [
    "AcousticMedium",
    "AcousticState",
    "MeasurementSeries",
    "SpectralOps",
    "AcousticPropagator",
    "forward_acoustic",
    "adjoint_acoustic",
    "attenuation_db_to_nepers",
]


def attenuation_db_to_nepers(alpha0_db: float, y: float) -> float:
    """Convert dB MHz^-y cm^-1 to nepers (rad/s)^-y m^-1."""
    return 100.0 * alpha0_db * (1e-6 / (2.0 * np.pi)) ** y / (20.0 / np.log(10.0))


@dataclass
class AcousticMedium:
    """Heterogeneous sound speed (m/s), ambient density (kg/m^3) and power-law
    absorption ``alpha(f) = alpha0 f^y`` stated in dB MHz^-y cm^-1."""

    sound_speed: np.ndarray
    density: np.ndarray
    alpha0_db: float = 0.0
    power_law_y: float = 1.5

    def __post_init__(self):
        self.sound_speed = np.asarray(self.sound_speed, dtype=np.float64)
        self.density = np.asarray(self.density, dtype=np.float64)
        if self.sound_speed.shape != self.density.shape:
            raise ValueError("sound speed and density maps must share a shape")
        if not (np.all(self.sound_speed > 0) and np.all(self.density > 0)):
            raise ValueError("sound speed and density must be positive")
        if self.alpha0_db < 0:
            raise ValueError("absorption must be non-negative")
        if self.alpha0_db > 0 and not 1.0 < self.power_law_y < 2.0:
            raise ValueError("power-law exponent must lie in (1, 2) when absorbing")

    @property
    def lossy(self) -> bool:
        return self.alpha0_db > 0


@dataclass
class AcousticState:
    """Staggered state: velocities at half steps, densities and pressure at
    integer steps.  One array per coordinate for ``v`` and ``rho``."""

    v: list[np.ndarray]
    rho: list[np.ndarray]
    p: np.ndarray

    @classmethod
    def zeros(cls, shape: tuple[int, ...]) -> "AcousticState":
        d = len(shape)
        return cls(
            v=[np.zeros(shape) for _ in range(d)],
            rho=[np.zeros(shape) for _ in range(d)],
            p=np.zeros(shape),
        )


@dataclass
class MeasurementSeries:
    """Pressure traces, one row per detector, one column per time step."""

    data: np.ndarray
    detectors: np.ndarray
    dt: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.detectors = np.asarray(self.detectors, dtype=np.int64)
        if self.data.ndim != 2:
            raise ValueError("series data must be (num_detectors, num_steps)")
        if self.detectors.size != self.data.shape[0]:
            raise ValueError("one detector index per series row required")

    @property
    def num_detectors(self) -> int:
        return self.data.shape[0]

    @property
    def num_steps(self) -> int:
        return self.data.shape[1]

    def save(self, path) -> None:
        """Text header (sample counts and step) followed by row-major float64."""
        with open(path, "wb") as fh:
            fh.write(b"qpat-series 1\n")
            fh.write(f"ns={self.num_detectors} nt={self.num_steps} dt={self.dt!r}\n".encode("ascii"))
            fh.write(b"detectors=" + " ".join(str(i) for i in self.detectors).encode("ascii") + b"\n")
            fh.write(b"#data\n")
            fh.write(np.ascontiguousarray(self.data, dtype=np.float64).tobytes())

    @classmethod
    def load(cls, path) -> "MeasurementSeries":
        with open(path, "rb") as fh:
            magic = fh.readline()
            if magic.strip() != b"qpat-series 1":
                raise ValueError(f"not a measurement series file: {path}")
            fields = dict(item.split(b"=") for item in fh.readline().split())
            detline = fh.readline()
            if not detline.startswith(b"detectors="):
                raise ValueError("malformed series header")
            detectors = np.array([int(v) for v in detline[len(b"detectors="):].split()], dtype=np.int64)
            if fh.readline().strip() != b"#data":
                raise ValueError("malformed series header")
            ns, nt = int(fields[b"ns"]), int(fields[b"nt"])
            dt = float(fields[b"dt"])
            data = np.frombuffer(fh.read(ns * nt * 8), dtype=np.float64).reshape(ns, nt).copy()
        return cls(data=data, detectors=detectors, dt=dt)


class SpectralOps:
    """Fourier multipliers for one grid / reference speed / loss exponent.

    All multipliers are real-even or conjugate-symmetric so that every
    operator maps real fields to real fields and equals its own transpose up
    to the sign pattern of the staggered derivatives (``(d+)^T = -(d-)``).
    """

    def __init__(self, grid: Grid, c_ref: float, power_law_y: float = 1.5,
                 real_fft: bool = True):
        self.shape = grid.shape
        self.real_fft = real_fft
        dt = grid.spec.dt
        kmag = grid.wavenumber_magnitude()
        # sinc(x) = sin(x)/x with the numpy convention absorbed
        self.kspace_correction = np.sinc(c_ref * kmag * dt / (2.0 * np.pi))

        self.deriv_pos: list[np.ndarray] = []
        self.deriv_neg: list[np.ndarray] = []
        d = len(self.shape)
        for axis in range(d):
            bshape = [1] * d
            bshape[axis] = self.shape[axis]
            k = grid.wavenumbers[axis].reshape(bshape)
            sp = grid.shift_pos[axis].reshape(bshape)
            sn = grid.shift_neg[axis].reshape(bshape)
            self.deriv_pos.append(1j * k * sp * self.kspace_correction)
            self.deriv_neg.append(1j * k * sn * self.kspace_correction)

        y = power_law_y
        with np.errstate(divide="ignore"):
            yabs = kmag ** (y - 2.0)
        yabs[~np.isfinite(yabs)] = 0.0
        self.yabs_mult = yabs
        self.ydis_mult = kmag ** (y - 1.0)

        smooth = np.ones(self.shape)
        for axis in range(d):
            n = self.shape[axis]
            bshape = [1] * d
            bshape[axis] = n
            theta = 2.0 * np.pi * np.fft.fftfreq(n)
            win = 0.42 + 0.5 * np.cos(theta) + 0.08 * np.cos(2.0 * theta)
            smooth = smooth * win.reshape(bshape)
        self.smooth_mult = smooth

        if real_fft:
            half = self.shape[-1] // 2 + 1
            cut = (Ellipsis, slice(0, half))
            self.deriv_pos = [m[cut] for m in self.deriv_pos]
            self.deriv_neg = [m[cut] for m in self.deriv_neg]
            self.yabs_mult = self.yabs_mult[cut]
            self.ydis_mult = self.ydis_mult[cut]
            self.smooth_mult = self.smooth_mult[cut]

    # -- transforms --------------------------------------------------------

    def fft(self, field: np.ndarray) -> np.ndarray:
        if self.real_fft:
            return sfft.rfftn(field)
        return sfft.fftn(field)

    def ifft(self, spectrum: np.ndarray) -> np.ndarray:
        if self.real_fft:
            return sfft.irfftn(spectrum, s=self.shape)
        return sfft.ifftn(spectrum).real

    def apply(self, field: np.ndarray, mult: np.ndarray) -> np.ndarray:
        return self.ifft(self.fft(field) * mult)

    def deriv(self, field: np.ndarray, axis: int, positive: bool) -> np.ndarray:
        mult = self.deriv_pos[axis] if positive else self.deriv_neg[axis]
        return self.apply(field, mult)

    def smooth(self, field: np.ndarray) -> np.ndarray:
        return self.apply(field, self.smooth_mult)


def _staggered_density(rho: np.ndarray, axis: int) -> np.ndarray:
    """Arithmetic midpoint toward +axis with edge replication."""
    n = rho.shape[axis]
    idx = np.minimum(np.arange(n) + 1, n - 1)
    return 0.5 * (rho + rho.take(idx, axis=axis))


class AcousticPropagator:
    """Bound forward/adjoint wave operator for one grid, medium and detector set."""

    def __init__(self, grid: Grid, medium: AcousticMedium,
                 detectors: np.ndarray, smooth_source: bool = True,
                 real_fft: bool = True):
        if medium.sound_speed.shape != grid.shape:
            raise ValueError("medium maps must match the grid shape")
        self.grid = grid
        self.medium = medium
        self.detectors = np.asarray(detectors, dtype=np.int64)
        if self.detectors.ndim != 1 or self.detectors.size == 0:
            raise ValueError("need a flat, non-empty detector index list")
        if self.detectors.min() < 0 or self.detectors.max() >= grid.num_nodes:
            raise ValueError("detector index out of range")
        self.smooth_source = smooth_source

        self.dim = grid.dim
        self.dt = grid.spec.dt
        self.nt = grid.spec.num_steps
        c = medium.sound_speed
        self.c_ref = grid.spec.c_ref if grid.spec.c_ref is not None else float(c.max())
        self.ops = SpectralOps(grid, self.c_ref, medium.power_law_y, real_fft)

        self.c2 = c**2
        self.rho = medium.density
        self.inv_rho = 1.0 / medium.density
        self.rho_stag = [_staggered_density(medium.density, i) for i in range(self.dim)]
        self.dt_over_rho_stag = [self.dt / r for r in self.rho_stag]

        profs = grid.pml_factor(self.c_ref)
        self.pml = []
        for axis, a in enumerate(profs):
            bshape = [1] * self.dim
            bshape[axis] = grid.shape[axis]
            self.pml.append(a.reshape(bshape))

        if medium.lossy:
            a_np = attenuation_db_to_nepers(medium.alpha0_db, medium.power_law_y)
            y = medium.power_law_y
            self.tau = -2.0 * a_np * c ** (y - 1.0)
            self.eta = 2.0 * a_np * c**y * np.tan(np.pi * y / 2.0)
        else:
            self.tau = None
            self.eta = None

        self.source_scale = 1.0 / (2.0 * self.dim * self.c2)
        self.forward_count = 0
        self.adjoint_count = 0
        self._count_lock = threading.Lock()

    # -- source ------------------------------------------------------------

    def make_source(self, p0: np.ndarray) -> np.ndarray:
        """Per-coordinate injection ``dt * s = (1/(2 d c^2)) S p0``.

        The same array is added to every density component at the first two
        steps; dividing by ``dt`` recovers the source amplitude itself.
        """
        p0 = np.asarray(p0, dtype=np.float64)
        if p0.shape != self.grid.shape:
            raise ValueError("initial pressure must match the grid shape")
        src = self.ops.smooth(p0) if self.smooth_source else p0
        return self.source_scale * src

    # -- forward -----------------------------------------------------------

    def step_forward(self, state: AcousticState, inject: np.ndarray | None = None) -> None:
        """Advance one step in place; ``inject`` is the density source term."""
        ops, pml = self.ops, self.pml
        d = self.dim

        p_hat = ops.fft(state.p)
        for i in range(d):
            dp = ops.ifft(p_hat * ops.deriv_pos[i])
            state.v[i] = pml[i] * (pml[i] * state.v[i] - self.dt_over_rho_stag[i] * dp)

        rho_sum = None
        absorb = None
        for i in range(d):
            dv = ops.deriv(state.v[i], i, positive=False)
            advected = pml[i] * (self.rho * dv)
            if self.medium.lossy:
                absorb = advected if absorb is None else absorb + advected
            new_rho = pml[i] * (pml[i] * state.rho[i] - self.dt * self.rho * dv)
            if inject is not None:
                new_rho = new_rho + inject
            state.rho[i] = new_rho
            rho_sum = new_rho if rho_sum is None else rho_sum + new_rho

        if self.medium.lossy:
            p_new = (
                rho_sum
                - self.eta * ops.apply(rho_sum, ops.ydis_mult)
                + self.tau * ops.apply(absorb, ops.yabs_mult)
            )
        else:
            p_new = rho_sum
        state.p = self.c2 * p_new

    def forward(self, p0: np.ndarray) -> MeasurementSeries:
        """Run ``N_t`` steps from rest and record detector pressure per step."""
        inject = self.make_source(p0)
        state = AcousticState.zeros(self.grid.shape)
        out = np.empty((self.detectors.size, self.nt))
        for n in range(self.nt):
            self.step_forward(state, inject=inject if n < 2 else None)
            total = state.p.sum()
            if not np.isfinite(total):
                raise NumericalError(f"acoustic forward diverged at step {n}")
            out[:, n] = state.p.ravel()[self.detectors]
        with self._count_lock:
            self.forward_count += 1
        return MeasurementSeries(data=out, detectors=self.detectors, dt=self.dt)

    # -- adjoint -----------------------------------------------------------

    def _scatter_detectors(self, values: np.ndarray) -> np.ndarray:
        field = np.zeros(self.grid.num_nodes)
        np.add.at(field, self.detectors, values)
        return field.reshape(self.grid.shape)

    def adjoint(self, series: MeasurementSeries | np.ndarray) -> np.ndarray:
        """Exact transpose of :meth:`forward`, returning an initial-pressure
        shaped field.

        The recursion runs forward in its own step index while consuming the
        data in reverse; boundary steps inject single samples, interior steps
        the sum of two adjacent reversed samples, reflecting that the source
        enters the forward loop twice.
        """
        data = series.data if isinstance(series, MeasurementSeries) else np.asarray(series)
        if data.shape != (self.detectors.size, self.nt):
            raise ValueError("series shape does not match detectors/steps")
        ops, pml = self.ops, self.pml
        d, nt, dt = self.dim, self.nt, self.dt

        rho_h = [np.zeros(self.grid.shape) for _ in range(d)]
        v_h = [np.zeros(self.grid.shape) for _ in range(d)]
        p_bar = np.zeros(self.grid.shape)

        lossy = self.medium.lossy
        for m in range(nt):
            if m == 0:
                adj = self._scatter_detectors(data[:, nt - 1])
            else:
                adj = self._scatter_detectors(data[:, nt - m - 1] + data[:, nt - m])
            cp = self.c2 * p_bar
            u = cp - ops.apply(self.eta * cp, ops.ydis_mult) if lossy else cp
            for i in range(d):
                rho_h[i] = pml[i] * (pml[i] * rho_h[i] + self.rho * u)
            if lossy:
                w = ops.apply(self.tau * cp, ops.yabs_mult) / dt
            acc_hat = None
            for i in range(d):
                varg = rho_h[i] - self.rho * (pml[i] * w) if lossy else rho_h[i]
                dvarg = ops.deriv(varg, i, positive=True)
                v_h[i] = pml[i] * (pml[i] * v_h[i] + self.dt_over_rho_stag[i] * dvarg)
                term = ops.fft(v_h[i]) * ops.deriv_neg[i]
                acc_hat = term if acc_hat is None else acc_hat + term
            p_bar = dt * ops.ifft(acc_hat) + adj
            if not np.isfinite(p_bar.sum()):
                raise NumericalError(f"acoustic adjoint diverged at step {m}")

        cp = self.c2 * p_bar
        u_fin = cp - ops.apply(self.eta * cp, ops.ydis_mult) if lossy else cp
        acc = d * u_fin
        for i in range(d):
            acc = acc + pml[i] * (self.inv_rho * rho_h[i])
        out = self.source_scale * acc
        result = ops.smooth(out) if self.smooth_source else out
        with self._count_lock:
            self.adjoint_count += 1
        return result


def forward_acoustic(p0: np.ndarray, grid: Grid, medium: AcousticMedium,
                     detectors: np.ndarray, **kwargs) -> MeasurementSeries:
    """One-shot forward run (tests and scripts; solvers bind a propagator)."""
    return AcousticPropagator(grid, medium, detectors, **kwargs).forward(p0)


def adjoint_acoustic(series: MeasurementSeries, grid: Grid, medium: AcousticMedium,
                     detectors: np.ndarray, **kwargs) -> np.ndarray:
    """One-shot adjoint application."""
    return AcousticPropagator(grid, medium, detectors, **kwargs).adjoint(series)
