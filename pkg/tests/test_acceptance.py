"""End-to-end acceptance checks.

Each test covers one shipped guarantee and reports a single PASS/FAIL line
on the live terminal (capture is bypassed for that one line).  The desk-scale
study behind the reconstruction-quality checks runs once per session and is
shared; expect the full module to take of the order of fifteen minutes.
"""

import time
from pathlib import Path

import numpy as np
import pytest

import qpat.solvers as solvers_mod
from qpat.acoustic import (
    AcousticMedium,
    AcousticPropagator,
    AcousticState,
    attenuation_db_to_nepers,
)
from qpat.composite import CompositeModel, ParamScaling
from qpat.config import load_config
from qpat.geometry import GridSpec, build_grid, build_mesh, build_node_element_maps
from qpat.harness import generate_data, reconstruct
from qpat.optical import (
    CoefficientPair,
    OpticalModel,
    illumination_on_sides,
    jacobian_optical_adjoint,
    jacobian_optical_apply,
)
from qpat.regularization import shrink
from qpat.solvers import PcgConfig, minimize_lbfgs, pcg_solve

CONFIG = Path(__file__).resolve().parents[1] / "scripts" / "configs" / "desk2d.json"


def report(capsys, ok: bool, label: str, detail: str):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, f"{label}: {detail}"


# ---------------------------------------------------------------------------
# criterion 1: optical adjoint exactness


def test_criterion_1_optical_adjoint(capsys):
    spec = GridSpec(shape=(3, 3), spacing_mm=(0.5, 0.5), dt=1e-8, num_steps=4)
    mesh = build_mesh(build_grid(spec))
    maps = build_node_element_maps(mesh)
    model = OpticalModel(mesh, maps)
    rng = np.random.default_rng(101)
    x = CoefficientPair(kappa=rng.uniform(0.2, 0.5, mesh.num_elements),
                        mu=rng.uniform(0.05, 0.3, mesh.num_elements))
    _, _, lu = model.factorize(x)
    phi = model.solve(lu, model.load_vector(illumination_on_sides(mesh, ["left"])))
    vols = mesh.volumes
    vols2 = np.concatenate([vols, vols])

    worst = 0.0
    for _ in range(100):
        dx = CoefficientPair(kappa=rng.standard_normal(mesh.num_elements),
                             mu=rng.standard_normal(mesh.num_elements))
        h = rng.standard_normal(mesh.num_elements)
        lhs = float(jacobian_optical_apply(model, lu, x, phi, dx) @ (vols * h))
        rhs = float(dx.as_vector() @ (vols2 * jacobian_optical_adjoint(
            model, lu, x, phi, h).as_vector()))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))

    # the weighted adjoint must also coincide with the dense transpose here
    n, m = mesh.num_elements, 2 * mesh.num_elements
    J = np.zeros((n, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = 1.0
        J[:, j] = jacobian_optical_apply(
            model, lu, x, phi, CoefficientPair.from_vector(e))
    Jt = np.zeros((m, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        Jt[:, i] = jacobian_optical_adjoint(model, lu, x, phi, e).as_vector()
    transpose_err = np.abs(Jt - J.T).max() / np.abs(J).max()

    ok = worst < 1e-10 and transpose_err < 1e-12
    report(capsys, ok, "criterion 1 (optical adjoint)",
           f"dot-test worst of 100 = {worst:.2e} (tol 1e-10), "
           f"dense-transpose err = {transpose_err:.2e} (tol 1e-12)")


# ---------------------------------------------------------------------------
# criterion 2: acoustic adjoint accuracy


def test_criterion_2_acoustic_adjoint(capsys):
    shape = (16, 16)
    spec = GridSpec(shape=shape, spacing_mm=(0.2, 0.2), dt=2e-8, num_steps=32,
                    pml_points=3)
    grid = build_grid(spec)
    rng = np.random.default_rng(102)
    c_het = 1500.0 + 150.0 * rng.uniform(-1, 1, shape)
    rho_het = 1000.0 + 100.0 * rng.uniform(-1, 1, shape)
    media = {
        "homogeneous-lossless": AcousticMedium(np.full(shape, 1500.0),
                                               np.full(shape, 1000.0)),
        "heterogeneous-lossless": AcousticMedium(c_het, rho_het),
        "heterogeneous-lossy": AcousticMedium(c_het, rho_het,
                                              alpha0_db=0.75, power_law_y=1.5),
    }
    det = np.sort(rng.choice(grid.num_nodes, size=12, replace=False)).astype(np.int64)
    worst = 0.0
    for med in media.values():
        prop = AcousticPropagator(grid, med, det)
        for _ in range(3):
            p0 = rng.standard_normal(shape)
            y = rng.standard_normal((det.size, spec.num_steps))
            lhs = float(np.sum(prop.forward(p0).data * y))
            rhs = float(np.sum(p0 * prop.adjoint(y)))
            worst = max(worst, abs(lhs - rhs) / abs(lhs))
    ok = worst < 1e-6
    report(capsys, ok, "criterion 2 (acoustic adjoint)",
           f"worst relative dot-test error over 3 media = {worst:.2e} (tol 1e-6)")


# ---------------------------------------------------------------------------
# criterion 3: dense-operator equivalence


def test_criterion_3_dense_oracle(capsys):
    shape = (8, 8)
    spec = GridSpec(shape=shape, spacing_mm=(0.2, 0.2), dt=2e-8, num_steps=6)
    grid = build_grid(spec)
    rng = np.random.default_rng(103)
    med = AcousticMedium(1500.0 + 150.0 * rng.uniform(-1, 1, shape),
                         1000.0 + 100.0 * rng.uniform(-1, 1, shape),
                         alpha0_db=0.75, power_law_y=1.5)
    det = np.array([9, 27, 45, 54], dtype=np.int64)
    prop = AcousticPropagator(grid, med, det)
    n = grid.num_nodes
    M = np.zeros((det.size * spec.num_steps, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        M[:, j] = prop.forward(e.reshape(shape)).data.ravel()
    fwd_err = adj_err = 0.0
    for _ in range(5):
        p0 = rng.standard_normal(shape)
        fwd_err = max(fwd_err, np.abs(
            prop.forward(p0).data.ravel() - M @ p0.ravel()).max())
        y = rng.standard_normal((det.size, spec.num_steps))
        adj_err = max(adj_err, np.abs(
            prop.adjoint(y).ravel() - M.T @ y.ravel()).max())
    ok = fwd_err < 1e-10 and adj_err < 1e-10
    report(capsys, ok, "criterion 3 (dense oracle)",
           f"forward err = {fwd_err:.2e}, adjoint err = {adj_err:.2e} "
           f"(tol 1e-10; operator entries up to {np.abs(M).max():.2f})")


# ---------------------------------------------------------------------------
# criterion 4: composite gradient vs finite differences


def test_criterion_4_gradient_fd(capsys):
    spec = GridSpec(shape=(5, 5), spacing_mm=(0.5, 0.5), dt=4e-8, num_steps=24)
    grid = build_grid(spec)
    mesh = build_mesh(grid)
    rng = np.random.default_rng(104)
    med = AcousticMedium(1500.0 + 100.0 * rng.uniform(-1, 1, grid.shape),
                         1000.0 + 80.0 * rng.uniform(-1, 1, grid.shape),
                         alpha0_db=0.75, power_law_y=1.5)
    det = np.sort(rng.choice(grid.num_nodes, size=6, replace=False)).astype(np.int64)
    ills = [illumination_on_sides(mesh, ["left"]),
            illumination_on_sides(mesh, ["top"])]
    x0 = np.concatenate([rng.uniform(0.2, 0.5, mesh.num_elements),
                         rng.uniform(0.05, 0.3, mesh.num_elements)])
    model = CompositeModel(mesh, grid, med, det, ills, ParamScaling.log(x0))
    data = model.forward_data(model.scaling.initial_xbar())
    point = model.scaling.initial_xbar() + 0.1
    _, grad, _ = model.gradient(point, data)
    h, worst = 1e-6, 0.0
    for _ in range(5):
        v = rng.standard_normal(model.num_unknowns)
        v /= np.linalg.norm(v)
        ep, _ = model.objective(point + h * v, data)
        em, _ = model.objective(point - h * v, data)
        fd = (ep - em) / (2 * h)
        worst = max(worst, abs(fd - float(grad @ v)) / max(abs(fd), 1e-300))
    ok = worst < 1e-4
    report(capsys, ok, "criterion 4 (composite gradient)",
           f"worst of 5 directions vs central FD = {worst:.2e} (tol 1e-4)")


# ---------------------------------------------------------------------------
# criterion 5: power-law attenuation


def _measure_attenuation(mode: int):
    shape, dx_mm, dt, nt = (256, 4), 0.1, 2e-8, 400
    c0, rho0 = 1500.0, 1000.0
    spec = GridSpec(shape=shape, spacing_mm=(dx_mm, dx_mm), dt=dt, num_steps=nt)
    grid = build_grid(spec)
    med = AcousticMedium(np.full(shape, c0), np.full(shape, rho0),
                         alpha0_db=0.75, power_law_y=1.5)
    prop = AcousticPropagator(grid, med, np.array([0], dtype=np.int64),
                              smooth_source=False)
    k = 2 * np.pi * mode / (shape[0] * dx_mm * 1e-3)
    x = np.arange(shape[0]) * dx_mm * 1e-3
    p = np.cos(k * x)[:, None] * np.ones((1, shape[1]))
    st = AcousticState.zeros(shape)
    st.p = p.copy()
    for i in range(2):
        st.rho[i] = p / (2 * med.sound_speed**2)
    st.v[0] = ((1.0 / (rho0 * c0))
               * np.cos(k * (x + dx_mm * 1e-3 / 2) + c0 * k * dt / 2))[:, None] \
        * np.ones((1, shape[1]))
    probe = np.exp(-1j * k * x)
    amps = np.empty(nt, dtype=complex)
    for n in range(nt):
        prop.step_forward(st)
        amps[n] = (probe @ st.p[:, 0]) / shape[0]
    steps = np.arange(20, nt)
    slope = np.polyfit(steps, np.log(np.abs(amps[20:])), 1)[0]
    omega = -np.median(np.angle(amps[21:] / amps[20:-1])) / dt
    alpha_measured = (-slope / dt) / (omega / k)   # Np/m at the measured freq
    alpha_nominal = attenuation_db_to_nepers(0.75, 1.5) * omega**1.5
    return omega / (2 * np.pi), alpha_measured, alpha_nominal


def test_criterion_5_power_law_attenuation(capsys):
    details = []
    ok = True
    for mode in (17, 34):    # roughly 1 MHz and 2 MHz
        freq, measured, nominal = _measure_attenuation(mode)
        rel = abs(measured - nominal) / nominal
        ok = ok and rel < 0.05
        details.append(f"{freq / 1e6:.2f} MHz: {rel:.2%}")
    report(capsys, ok, "criterion 5 (power-law attenuation)",
           "measured vs alpha0*f^y " + ", ".join(details) + " (tol 5%)")


# ---------------------------------------------------------------------------
# desk-scale study shared by criteria 6-9


class DeskStudy:
    def __init__(self, tmp: Path):
        self.cfg = load_config(CONFIG)
        self.out = tmp
        t0 = time.perf_counter()
        self.data_dir = generate_data(self.cfg, tmp)
        self.summaries = {}
        self.chi_feasibility: list[float] = []

        for method in ("ld", "pdipm", "admm"):
            if method == "pdipm":
                real = solvers_mod.dual_step

                def recording(D, d, chi, delta_d, beta, _real=real):
                    delta_chi, s = _real(D, d, chi, delta_d, beta)
                    self.chi_feasibility.append(
                        float(np.max(np.abs(chi + s * delta_chi))))
                    return delta_chi, s

                solvers_mod.dual_step = recording
                try:
                    self.summaries[method] = reconstruct(
                        self.cfg, self.data_dir, tmp, method)
                finally:
                    solvers_mod.dual_step = real
            else:
                self.summaries[method] = reconstruct(
                    self.cfg, self.data_dir, tmp, method)
        self.seconds = time.perf_counter() - t0

    def objectives(self, method: str) -> np.ndarray:
        rows = (self.out / f"recon_{method}" / "trace.csv").read_text().splitlines()
        return np.array([float(r.split(",")[1]) for r in rows[1:]])


@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    return DeskStudy(tmp_path_factory.mktemp("desk"))


def test_criterion_6_strict_descent(capsys, desk):
    drops = {}
    ok = True
    for method in ("ld", "pdipm"):
        eps = desk.objectives(method)
        strictly = bool(np.all(np.diff(eps) < 0)) and eps.size >= 2
        ok = ok and strictly
        drops[method] = f"{method}: {eps.size} outers, " \
                        f"{'strictly decreasing' if strictly else 'NOT monotone'}"
    full_step = not desk.cfg.ld.outer_armijo and not desk.cfg.pdipm.outer_armijo
    ok = ok and full_step
    report(capsys, ok, "criterion 6 (monotone descent)",
           "; ".join(drops.values()) + f"; unit outer steps = {full_step}")


def test_criterion_7_error_table(capsys, desk):
    s = desk.summaries
    lines = [f"{m}: RE(mu) = {s[m]['re_mu']:.2f}%, RE(kappa) = {s[m]['re_kappa']:.2f}%"
             for m in ("admm", "ld", "pdipm")]
    bounds = all(s[m][k] <= 15.0 for m in ("ld", "pdipm")
                 for k in ("re_mu", "re_kappa"))
    beats = all(s[m][k] < s["admm"][k] for m in ("ld", "pdipm")
                for k in ("re_mu", "re_kappa"))
    in_time = desk.seconds <= 30 * 60
    ok = bounds and beats and in_time
    report(capsys, ok, "criterion 7 (reconstruction error)",
           "; ".join(lines) + f"; newton methods beat admm on both maps = {beats}"
           f"; wall = {desk.seconds / 60:.1f} min (cap 30)")


def test_criterion_8_solver_oracles(capsys, desk):
    rng = np.random.default_rng(108)
    A = rng.standard_normal((5, 5))
    A = A @ A.T + 5 * np.eye(5)
    b = rng.standard_normal(5)
    res = pcg_solve(lambda v: A @ v, b, lambda r: r,
                    PcgConfig(max_iters=5, lookback=5, tol=0.0))
    pcg_err = float(np.linalg.norm(A @ res.x - b) / np.linalg.norm(b))

    Q = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]])
    c = np.array([1.0, -2.0, 0.5])
    xstar = np.linalg.solve(Q, -c)
    xl, _, _ = minimize_lbfgs(lambda v: 0.5 * v @ Q @ v + c @ v,
                              lambda v: Q @ v + c, np.zeros(3), max_iters=50)
    lbfgs_err = float(np.linalg.norm(xl - xstar) / np.linalg.norm(xstar))

    nu = 0.37
    v = np.concatenate([rng.uniform(-3, 3, 994),
                        [0.0, nu, -nu, nu / 2, -nu / 2, 2 * nu]])
    shrink_err = 0.0
    for vi in v:
        lo, hi = -abs(vi) - nu - 1.0, abs(vi) + nu + 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid - vi + (nu if mid >= 0.0 else -nu) <= 0.0:
                lo = mid
            else:
                hi = mid
        shrink_err = max(shrink_err, abs(
            float(shrink(np.array([vi]), nu)[0]) - 0.5 * (lo + hi)))

    chi_worst = max(desk.chi_feasibility) if desk.chi_feasibility else np.inf
    ok = (pcg_err < 1e-10 and lbfgs_err < 1e-8 and shrink_err < 1e-9
          and chi_worst <= 1.0 + 1e-12)
    report(capsys, ok, "criterion 8 (solver oracles)",
           f"pcg = {pcg_err:.2e} (1e-10), lbfgs = {lbfgs_err:.2e} (1e-8), "
           f"shrink = {shrink_err:.2e} (1e-9), "
           f"max|chi| = {chi_worst:.15f} over {len(desk.chi_feasibility)} "
           "inner iterations (1 + 1e-12)")


# ---------------------------------------------------------------------------
# criterion 9: bit-identical single-threaded reruns


def _bundle_digest(run_dir: Path) -> dict:
    out = {}
    for path in sorted(run_dir.iterdir()):
        if path.suffix not in (".bin", ".json", ".txt", ".csv"):
            continue
        blob = path.read_bytes()
        if path.name == "trace.csv":
            # wall-clock column is timing, not result
            lines = blob.decode().splitlines()
            cols = lines[0].split(",")
            sec = cols.index("seconds")
            body = [",".join(f.split(",")[:sec] + ["0"] + f.split(",")[sec + 1:])
                    for f in lines[1:]]
            blob = "\n".join([lines[0]] + body).encode()
        out[path.name] = blob
    return out


def test_criterion_9_determinism(capsys, desk, tmp_path):
    assert desk.cfg.threads == 1
    rerun_dir = tmp_path / "rerun"
    reconstruct(desk.cfg, desk.data_dir, rerun_dir, "ld")
    a = _bundle_digest(desk.out / "recon_ld")
    b = _bundle_digest(rerun_dir / "recon_ld")
    same_files = sorted(a) == sorted(b)
    diffs = [name for name in a if same_files and a[name] != b[name]]
    ok = same_files and not diffs
    report(capsys, ok, "criterion 9 (determinism)",
           f"{len(a)} result files byte-compared across two single-threaded "
           f"runs; mismatches: {diffs if diffs else 'none'}")
