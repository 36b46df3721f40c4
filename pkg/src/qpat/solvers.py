"""Iterative solvers for the scaled inverse problem.

Three reconstruction drivers share the building blocks in this module:

* ``run_admm``: split-variable benchmark.  TV enters through an auxiliary
  edge variable updated by soft thresholding, the data term through scaled
  multipliers, and the coefficient update is an inner box-constrained L-BFGS.
* ``run_ld``: inexact Newton where a lagged-diffusivity TV matrix serves as
  the conjugate-gradient preconditioner, so the prior acts through the Krylov
  basis rather than through a penalty term.
* ``run_pdipm``: like ``run_ld`` but the preconditioner tracks a primal-dual
  interior-point iteration on the TV subproblem, with a feasibility-capped
  dual variable.

All drivers work on the scaled coefficient vector and talk to the physics
through a small model interface: ``objective``, ``gradient``,
``hessian_apply`` (Gauss-Newton), plus ``scaling`` and ``counters``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .regularization import (
    build_lagged_diffusivity_system,
    build_primal_dual_system,
    dual_step,
    shrink,
    tv_value,
)

__all__ = [
    "PcgConfig",
    "PcgResult",
    "pcg_solve",
    "LbfgsMemory",
    "wolfe_search",
    "minimize_lbfgs",
    "AdmmConfig",
    "LdConfig",
    "PdipmConfig",
    "TraceRow",
    "SolveTrace",
    "SolveResult",
    "run_admm",
    "run_ld",
    "run_pdipm",
]


# ---------------------------------------------------------------------------
# preconditioned conjugate gradients


@dataclass
class PcgConfig:
    max_iters: int = 30
    lookback: int = 5
    tol: float = 0.0


@dataclass
class PcgResult:
    x: np.ndarray
    rz_final: float
    iterations: int
    history: list[float]


def pcg_solve(apply_op, rhs: np.ndarray, precond, cfg: PcgConfig) -> PcgResult:
    """Preconditioned CG from a zero initial guess.

    Termination is stagnation-based: stop once the preconditioned residual
    norm ``r.z`` has improved by a factor of less than ``tol`` relative to
    ``lookback`` iterations ago.  Non-positive curvature or a non-positive
    ``r.z`` (possible with an indefinite preconditioner) returns the current
    iterate, which keeps the outer Newton step usable.
    """
    x = np.zeros_like(rhs, dtype=np.float64)
    r = rhs.astype(np.float64).copy()
    z = precond(r)
    rz = float(r @ z)
    history = [rz]
    d = z.copy()
    i = 0
    while i < cfg.max_iters and (
        i < cfg.lookback or 1.0 - history[i] / history[i - cfg.lookback] > cfg.tol
    ):
        if rz <= 0.0:
            break
        hd = apply_op(d)
        dhd = float(d @ hd)
        if dhd <= 0.0:
            break
        alpha = rz / dhd
        x = x + alpha * d
        r = r - alpha * hd
        z = precond(r)
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        history.append(rz)
        d = z + beta * d
        i += 1
    return PcgResult(x=x, rz_final=rz, iterations=i, history=history)


# ---------------------------------------------------------------------------
# limited-memory BFGS with box projection


class LbfgsMemory:
    """Two-loop recursion over the last ``m`` curvature pairs.

    Pairs with non-positive ``y.s`` are discarded; the seed matrix is the
    usual ``(s.y / y.y) I`` from the newest retained pair.
    """

    def __init__(self, m: int = 5):
        self.m = m
        self.pairs: list[tuple[np.ndarray, np.ndarray]] = []

    def push(self, s: np.ndarray, y: np.ndarray) -> None:
        if float(y @ s) <= 0.0:
            return
        self.pairs.append((s.copy(), y.copy()))
        if len(self.pairs) > self.m:
            self.pairs.pop(0)

    def direction(self, grad: np.ndarray) -> np.ndarray:
        """Quasi-Newton descent direction ``-H grad``."""
        q = grad.copy()
        if not self.pairs:
            return -q
        alphas = []
        for s, y in reversed(self.pairs):
            rho = 1.0 / float(y @ s)
            a = rho * float(s @ q)
            alphas.append((a, rho, s, y))
            q = q - a * y
        s_last, y_last = self.pairs[-1]
        q = q * (float(s_last @ y_last) / float(y_last @ y_last))
        for a, rho, s, y in reversed(alphas):
            b = rho * float(y @ q)
            q = q + (a - b) * s
        return -q


def wolfe_search(fun, grad, x, d, f0, g0, c1=1e-4, c2=0.9,
                 backtrack=0.25, alpha0=1.0, min_alpha=1e-12):
    """Backtracking line search with Wolfe acceptance.

    The sufficient-decrease test runs first because it needs only function
    values; the curvature test (and its gradient evaluation) runs only on
    candidates that already decreased enough.  If curvature never holds
    before the step floor, the longest sufficiently-decreasing step is taken
    anyway.  Returns (alpha, f, g) or None when no decrease was found.
    """
    g0d = float(g0 @ d)
    alpha = alpha0
    armijo_fallback = None
    while alpha > min_alpha:
        xn = x + alpha * d
        fn = fun(xn)
        if fn <= f0 + c1 * alpha * g0d:
            gn = grad(xn)
            if float(gn @ d) >= c2 * g0d:
                return alpha, fn, gn
            if armijo_fallback is None:
                armijo_fallback = (alpha, fn, gn)
        alpha *= backtrack
    return armijo_fallback


def minimize_lbfgs(fun, grad, x0, bounds=None, memory=5, max_iters=15,
                   c1=1e-4, c2=0.9, backtrack=0.25):
    """Box-projected L-BFGS.

    The quasi-Newton direction is clipped so that a unit step stays inside
    the box, then a Wolfe backtracking search runs along the clipped
    direction.  Stops on iteration budget, a failed search, or a vanishing
    clipped direction.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    f = fun(x)
    g = grad(x)
    mem = LbfgsMemory(memory)
    for _ in range(max_iters):
        d = mem.direction(g)
        if bounds is not None:
            lo, hi = bounds
            d = np.clip(x + d, lo, hi) - x
        if float(g @ d) >= 0.0:
            d = -g
            if bounds is not None:
                d = np.clip(x + d, lo, hi) - x
            if float(g @ d) >= 0.0:
                break
        hit = wolfe_search(fun, grad, x, d, f, g, c1=c1, c2=c2, backtrack=backtrack)
        if hit is None:
            break
        alpha, fn, gn = hit
        s = alpha * d
        mem.push(s, gn - g)
        x = x + s
        f, g = fn, gn
    return x, f, g


# ---------------------------------------------------------------------------
# configs, traces, results


@dataclass
class AdmmConfig:
    rho: float = 1.0
    nu: float = 1e-3
    tol_out: float = 1e-2
    max_outer: int = 10
    inner_iters: int = 15
    memory: int = 5
    bounds: tuple[float, float] = (0.02, 50.0)


@dataclass
class LdConfig:
    gamma: float = 1e-6
    beta: float = 2e-5
    tol_out: float = 1e-3
    max_outer: int = 30
    outer_armijo: bool = False
    pcg: PcgConfig = field(default_factory=lambda: PcgConfig(max_iters=30, lookback=5, tol=0.0))


@dataclass
class PdipmConfig:
    gamma: float = 1e-6
    beta: float = 1e-6
    tol_out: float = 1e-3
    tol_med: float = 1e-3
    max_outer: int = 30
    inner_max: int = 20
    outer_armijo: bool = False
    pcg: PcgConfig = field(default_factory=lambda: PcgConfig(max_iters=30, lookback=5, tol=0.0))


@dataclass
class TraceRow:
    iteration: int
    objective: float
    grad_norm: float
    tv: float
    step_norm: float
    seconds: float
    forwards: int
    adjoints: int


class SolveTrace:
    """Per-outer-iteration log, writable as CSV."""

    columns = ("iteration", "objective", "grad_norm", "tv",
               "step_norm", "seconds", "forwards", "adjoints")

    def __init__(self):
        self.rows: list[TraceRow] = []

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.rows])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(",".join(self.columns) + "\n")
            for r in self.rows:
                fh.write(
                    f"{r.iteration},{r.objective!r},{r.grad_norm!r},{r.tv!r},"
                    f"{r.step_norm!r},{r.seconds:.3f},{r.forwards},{r.adjoints}\n"
                )


@dataclass
class SolveResult:
    xbar: np.ndarray
    physical: np.ndarray
    trace: SolveTrace
    converged: bool
    method: str


# ---------------------------------------------------------------------------
# drivers


def _trace_row(it, eps, gnorm, tv, step, t0, model):
    fw, ad = model.counters()
    return TraceRow(iteration=it, objective=eps, grad_norm=gnorm, tv=tv,
                    step_norm=step, seconds=time.perf_counter() - t0,
                    forwards=fw, adjoints=ad)


def run_admm(model, data, D: sp.csr_matrix, cfg: AdmmConfig) -> SolveResult:
    """Split benchmark: soft-thresholded edge variable, multiplier updates on
    both the edge constraint and the data misfit, inner box L-BFGS on the
    coefficient block.  Stops when the coefficient-block gradient of the
    augmented objective drops below ``tol_out`` times its initial value.
    """
    t0 = time.perf_counter()
    xbar = model.scaling.initial_xbar()
    thresh = cfg.nu / cfg.rho
    u_w = np.zeros(D.shape[0])
    u_p = [np.zeros_like(series.data) for series in data]

    def aug_grad(xb, w):
        eps, g_data, _ = model.gradient(xb, data, offsets=u_p)
        edge = D @ xb - w + u_w
        return eps, g_data + cfg.rho * (D.T @ edge)

    w = shrink(D @ xbar, thresh)
    _, g0 = aug_grad(xbar, w)
    ref_norm = float(np.linalg.norm(g0))
    trace = SolveTrace()
    converged = False

    for it in range(cfg.max_outer):
        w = shrink(D @ xbar + u_w, thresh)

        def fun(xb):
            eps, _ = model.objective(xb, data, offsets=u_p)
            edge = D @ xb - w + u_w
            return eps + 0.5 * cfg.rho * float(edge @ edge)

        def grad(xb):
            _, g = aug_grad(xb, w)
            return g

        x_prev = xbar
        xbar, _, _ = minimize_lbfgs(
            fun, grad, xbar, bounds=cfg.bounds, memory=cfg.memory,
            max_iters=cfg.inner_iters,
        )

        u_w = u_w + (D @ xbar - w)
        eps, _, state = model.gradient(xbar, data)  # true misfit, no offsets
        residuals = model.residuals(state, data)
        for q, r in enumerate(residuals):
            u_p[q] = u_p[q] + r

        _, g_now = aug_grad(xbar, w)
        gnorm = float(np.linalg.norm(g_now))
        trace.append(_trace_row(it, eps, gnorm, cfg.nu * float(np.abs(D @ xbar).sum()),
                                float(np.linalg.norm(xbar - x_prev)), t0, model))
        if gnorm <= cfg.tol_out * ref_norm:
            converged = True
            break

    return SolveResult(xbar=xbar, physical=model.scaling.to_physical(xbar),
                       trace=trace, converged=converged, method="admm")


def _newton_outer(model, data, D, cfg, method: str, inner_solve) -> SolveResult:
    """Shared outer loop of the two inexact-Newton drivers.

    Linearise, check the relative decrease of the misfit, take a unit step
    along the inner solution.  A step that fails to decrease the misfit is
    discarded (optionally retried with shrinking step lengths when
    ``outer_armijo`` is set), so the recorded objective history is strictly
    decreasing.
    """
    t0 = time.perf_counter()
    xbar = model.scaling.initial_xbar()
    trace = SolveTrace()
    converged = False
    eps_prev = None
    beta = cfg.beta

    k = 0
    while k < cfg.max_outer:
        eps, g, state = model.gradient(xbar, data)
        if eps_prev is not None and 1.0 - eps / eps_prev <= cfg.tol_out:
            accepted = False
            if eps < eps_prev:
                accepted = True  # small but genuine decrease: keep, then stop
            elif cfg.outer_armijo:
                for scale in (0.25, 0.0625, 0.015625):
                    xb_try = xbar_prev + scale * step_prev
                    eps_try, g_try, state_try = model.gradient(xb_try, data)
                    if eps_try < eps_prev:
                        xbar, eps, g, state = xb_try, eps_try, g_try, state_try
                        accepted = True
                        break
            if not accepted:
                xbar = xbar_prev
                converged = True
                break
            if 1.0 - eps / eps_prev <= cfg.tol_out:
                gnorm = float(np.linalg.norm(g))
                trace.append(_trace_row(k, eps, gnorm, tv_value(D, xbar, beta),
                                        float(np.linalg.norm(xbar - xbar_prev)), t0, model))
                converged = True
                break
        gnorm = float(np.linalg.norm(g))
        step_len = 0.0 if eps_prev is None else float(np.linalg.norm(xbar - xbar_prev))
        trace.append(_trace_row(k, eps, gnorm, tv_value(D, xbar, beta), step_len, t0, model))

        delta = inner_solve(xbar, g, state)
        xbar_prev = xbar
        step_prev = delta
        xbar = xbar + delta
        eps_prev = eps
        k += 1

    return SolveResult(xbar=xbar, physical=model.scaling.to_physical(xbar),
                       trace=trace, converged=converged, method=method)


def run_ld(model, data, D: sp.csr_matrix, cfg: LdConfig) -> SolveResult:
    """Inexact Newton with the lagged-diffusivity TV matrix as preconditioner."""

    def inner(xbar, g, state):
        _, solve = build_lagged_diffusivity_system(D, xbar, cfg.beta, cfg.gamma)
        res = pcg_solve(lambda v: model.hessian_apply(state, v), -g, solve, cfg.pcg)
        return res.x

    return _newton_outer(model, data, D, cfg, "ld", inner)


def run_pdipm(model, data, D: sp.csr_matrix, cfg: PdipmConfig) -> SolveResult:
    """Inexact Newton with a primal-dual interior-point TV preconditioner.

    The inner loop accumulates a Newton-type step ``d`` over refactorisations
    of the primal-dual system while advancing the dual variable under its
    feasibility cap; the Krylov tolerance sequence decides when the
    preconditioner has stopped paying for itself.
    """

    def inner(xbar, g, state):
        n = xbar.size
        d = np.zeros(n)
        chi = np.zeros(D.shape[0])
        rz_prev = None
        for kp in range(cfg.inner_max):
            _, solve = build_primal_dual_system(D, d, chi, cfg.beta, cfg.gamma)
            rhs = -g if kp == 0 else -(g + model.hessian_apply(state, d))
            res = pcg_solve(lambda v: model.hessian_apply(state, v), rhs, solve, cfg.pcg)
            d = d + res.x
            delta_chi, s = dual_step(D, d, chi, res.x, cfg.beta)
            chi = chi + s * delta_chi
            if np.max(np.abs(chi)) > 1.0 + 1e-12:
                raise AssertionError("dual iterate left the feasible box")
            if rz_prev is not None and 1.0 - res.rz_final / rz_prev <= cfg.tol_med:
                break
            rz_prev = res.rz_final
        return d

    return _newton_outer(model, data, D, cfg, "pdipm", inner)
