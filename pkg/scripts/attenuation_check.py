"""Measure power-law attenuation of a travelling plane wave.

Launches monochromatic waves along a thin periodic strip, projects each step
onto the launch mode, and fits the amplitude decay rate.  Printed against the
nominal alpha0 * f^y law.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from qpat.acoustic import AcousticMedium, AcousticPropagator, attenuation_db_to_nepers
from qpat.geometry import GridSpec, build_grid

SHAPE = (256, 4)
DX_MM = 0.1
DT = 2e-8
NT = 400
C0, RHO0 = 1500.0, 1000.0
ALPHA0_DB, Y = 0.75, 1.5
FIT_FROM = 20


def measure_mode(mode: int) -> tuple[float, float]:
    """Return (measured angular frequency, measured decay rate 1/s)."""
    spec = GridSpec(shape=SHAPE, spacing_mm=(DX_MM,) * 2, dt=DT, num_steps=NT)
    grid = build_grid(spec)
    med = AcousticMedium(np.full(SHAPE, C0), np.full(SHAPE, RHO0),
                         alpha0_db=ALPHA0_DB, power_law_y=Y)
    prop = AcousticPropagator(grid, med, np.array([0], dtype=np.int64),
                              smooth_source=False)

    k = 2 * np.pi * mode / (SHAPE[0] * DX_MM * 1e-3)
    x = np.arange(SHAPE[0]) * DX_MM * 1e-3
    omega0 = C0 * k
    p = np.cos(k * x)[:, None] * np.ones((1, SHAPE[1]))
    v = (1.0 / (RHO0 * C0)) * np.cos(k * (x + DX_MM * 1e-3 / 2) + omega0 * DT / 2)

    from qpat.acoustic import AcousticState
    st = AcousticState.zeros(SHAPE)
    st.p = p.copy()
    for i in range(2):
        st.rho[i] = p / (2 * med.sound_speed**2)
    st.v[0] = v[:, None] * np.ones((1, SHAPE[1]))

    probe = np.exp(-1j * k * x)
    amps = np.empty(NT, dtype=complex)
    for n in range(NT):
        prop.step_forward(st)
        amps[n] = (probe @ st.p[:, 0]) / SHAPE[0]

    steps = np.arange(FIT_FROM, NT)
    slope = np.polyfit(steps, np.log(np.abs(amps[FIT_FROM:])), 1)[0]
    phase = np.angle(amps[FIT_FROM + 1:] / amps[FIT_FROM:-1])
    omega = -np.median(phase) / DT
    return omega, -slope / DT


def main():
    a_np = attenuation_db_to_nepers(ALPHA0_DB, Y)
    print(f"alpha0 = {ALPHA0_DB} dB MHz^-{Y} cm^-1 = "
          f"{a_np * (2 * np.pi * 1e6) ** Y:.3f} Np/m at 1 MHz\n")
    print(f"{'f (MHz)':>9s} {'measured':>12s} {'nominal':>12s} {'rel err':>9s}")
    for mode in (17, 34):
        omega, rate = measure_mode(mode)
        k = 2 * np.pi * mode / (SHAPE[0] * DX_MM * 1e-3)
        measured_alpha = rate / (omega / k)          # Np/m at the measured f
        nominal_alpha = a_np * omega**Y
        rel = abs(measured_alpha - nominal_alpha) / nominal_alpha
        print(f"{omega / 2 / np.pi / 1e6:9.3f} {measured_alpha:12.3f} "
              f"{nominal_alpha:12.3f} {rel:9.2%}")


if __name__ == "__main__":
    main()
