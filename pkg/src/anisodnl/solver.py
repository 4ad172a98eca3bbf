"""Backward-Euler time stepping with a damped Newton inner solve.

Two modes are supported.  In k-mode the unknown is the solution of the
truncated problem: the face flux acts on differences of u itself, scaled
by the truncated coefficient, and the data f, g, u0 are shifted by 1/k.
In direct mode the flux acts on differences of u^{m_j} and the data are
used as given.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import Grid, ScalarField, TimeSeries
from .model import ProblemSpec, truncate
from .analysis import vpm_distance

__all__ = [
    "SolverConfig",
    "StepReport",
    "SolveReport",
    "StepFailure",
    "implicit_step",
    "solve_problem",
    "manufactured_rhs",
    "CascadeResult",
    "regularization_cascade",
    "ordering_tolerance",
]


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    newton_tol: float = 1e-9
    newton_max: int = 40
    damping: float = 1.0
    eps_reg: float = 1e-8
    picard_fallback: bool = True
    k: int | str = "direct"
    guess_offset: float = 0.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.k != "direct" and (not isinstance(self.k, int) or self.k < 1):
            raise ValueError("k must be a positive integer or 'direct'")


@dataclass
class StepReport:
    iterations: int
    residual: float
    fallback: bool = False
    clamped: bool = False
    residual_history: list[float] = field(default_factory=list)


@dataclass
class SolveReport:
    steps: list[StepReport] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def total_iterations(self) -> int:
        return sum(s.iterations for s in self.steps)

    @property
    def max_residual(self) -> float:
        return max((s.residual for s in self.steps), default=0.0)

    @property
    def fallback_events(self) -> int:
        return sum(1 for s in self.steps if s.fallback)

    def as_dict(self) -> dict:
        return {
            "steps": [
                {"iterations": s.iterations, "residual": s.residual,
                 "fallback": s.fallback, "clamped": s.clamped}
                for s in self.steps
            ],
            "total_iterations": self.total_iterations,
            "max_residual": self.max_residual,
            "fallback_events": self.fallback_events,
        }


class StepFailure(RuntimeError):
    """Nonlinear solve failed to converge at one time step."""

    def __init__(self, step_index: int, residual_history: list[float]):
        self.step_index = step_index
        self.residual_history = residual_history
        super().__init__(
            f"step {step_index} failed, final residual "
            f"{residual_history[-1]:.3e}")


def ordering_tolerance(config: SolverConfig, T: float) -> float:
    """Accumulated residual tolerance for pointwise ordering checks."""
    return config.newton_tol * (1.0 + T / config.dt)


def _boundary_values(spec: ProblemSpec, grid: Grid, t: float,
                     shift: float) -> np.ndarray:
    x = grid.meshgrid()
    g = np.broadcast_to(np.asarray(spec.g(x, t), dtype=float), grid.counts)
    return g + shift


def _face_mean(u: np.ndarray, axis: int) -> np.ndarray:
    lo = np.take(u, range(0, u.shape[axis] - 1), axis=axis)
    hi = np.take(u, range(1, u.shape[axis]), axis=axis)
    return (lo + hi) / 2.0


class _StepProblem:
    """Residual and Jacobian assembly for one implicit step."""

    def __init__(self, spec: ProblemSpec, grid: Grid, config: SolverConfig,
                 u_prev: np.ndarray, t_next: float):
        self.spec = spec
        self.grid = grid
        self.config = config
        self.u_prev = u_prev
        self.t = t_next
        self.k = None if config.k == "direct" else int(config.k)
        self.n_nodes = int(np.prod(grid.counts))
        self.interior = grid.interior_mask()
        x = grid.meshgrid()
        self.f_vals = np.broadcast_to(
            np.asarray(spec.f(x, t_next), dtype=float), grid.counts)
        self.x_face = [tuple(_face_mean(c, j) for c in x)
                       for j in range(grid.dim)]
        self.bc = _boundary_values(
            spec, grid, t_next, 0.0 if self.k is None else 1.0 / self.k)

    def _face_data(self, u: np.ndarray, j: int):
        """Per-face coefficient c, diff D of the working power, and the
        derivative of the working power at both adjacent nodes."""
        spec, grid = self.spec, self.grid
        mj = spec.exponents.m[j]
        h = grid.spacings[j]
        uf = _face_mean(u, j)
        a = np.broadcast_to(
            np.asarray(spec.coeffs.funcs[j](self.x_face[j], self.t, uf),
                       dtype=float), uf.shape)
        lo = np.take(u, range(0, u.shape[j] - 1), axis=j)
        hi = np.take(u, range(1, u.shape[j]), axis=j)
        if self.k is None:
            if mj == 1.0:
                wlo, whi = lo, hi
                dlo = dhi = np.ones_like(lo)
            else:
                safe_lo = np.maximum(lo, 0.0)
                safe_hi = np.maximum(hi, 0.0)
                wlo = safe_lo ** mj
                whi = safe_hi ** mj
                dlo = mj * safe_lo ** (mj - 1.0)
                dhi = mj * safe_hi ** (mj - 1.0)
            c = a
        else:
            pj = spec.exponents.p[j]
            c = a * mj ** (pj - 1.0) * truncate(self.k, uf) \
                ** ((mj - 1.0) * (pj - 1.0))
            wlo, whi = lo, hi
            dlo = dhi = np.ones_like(lo)
        D = (whi - wlo) / h
        return c, D, dlo, dhi

    def residual(self, u: np.ndarray) -> np.ndarray:
        spec, grid = self.spec, self.grid
        R = (u - self.u_prev) / self.config.dt - self.f_vals
        for j in range(grid.dim):
            pj = spec.exponents.p[j]
            h = grid.spacings[j]
            c, D, _, _ = self._face_data(u, j)
            with np.errstate(divide="ignore", invalid="ignore"):
                F = np.where(D == 0.0, 0.0, c * np.abs(D) ** (pj - 2.0) * D)
            core = [slice(None)] * grid.dim
            core[j] = slice(1, -1)
            lo = [slice(None)] * grid.dim
            lo[j] = slice(0, -1)
            hi = [slice(None)] * grid.dim
            hi[j] = slice(1, None)
            div = np.zeros(grid.counts)
            div[tuple(core)] = (F[tuple(hi)] - F[tuple(lo)]) / h
            R -= div
        R[~self.interior] = u[~self.interior] - self.bc[~self.interior]
        return R

    def jacobian(self, u: np.ndarray, secant: bool = False) -> sp.csr_matrix:
        """Sparse Jacobian of the residual.

        Face slopes use the regularized power (D^2 + eps^2)^((p-2)/2); the
        coefficient dependence on u through the face mean is lagged.  With
        secant=True the slope drops the factor (p-1), which yields the
        lagged-diffusivity fixed-point matrix.
        """
        spec, grid, cfg = self.spec, self.grid, self.config
        eps = cfg.eps_reg
        n = self.n_nodes
        idx = np.arange(n).reshape(grid.counts)
        rows, cols, vals = [], [], []
        diag = np.full(grid.counts, 1.0 / cfg.dt)
        for j in range(grid.dim):
            pj = spec.exponents.p[j]
            h = grid.spacings[j]
            c, D, dlo, dhi = self._face_data(u, j)
            slope = c * (D * D + eps * eps) ** ((pj - 2.0) / 2.0)
            if not secant:
                slope = slope * (pj - 1.0)
            # face between node i (lo) and i+1 (hi) on axis j:
            # dF/du_lo = -slope*dlo/h, dF/du_hi = slope*dhi/h
            lo_sl = [slice(None)] * grid.dim
            lo_sl[j] = slice(0, -1)
            hi_sl = [slice(None)] * grid.dim
            hi_sl[j] = slice(1, None)
            i_lo = idx[tuple(lo_sl)]
            i_hi = idx[tuple(hi_sl)]
            g_lo = slope * dlo / (h * h)
            g_hi = slope * dhi / (h * h)
            # R_lo gains +F/h -> dR_lo/du_hi = -g_hi, dR_lo/du_lo += g_lo
            # R_hi gains -F/h -> dR_hi/du_lo = -g_lo, dR_hi/du_hi += g_hi
            diag[tuple(lo_sl)] += g_lo
            diag[tuple(hi_sl)] += g_hi
            rows.append(i_lo.ravel())
            cols.append(i_hi.ravel())
            vals.append((-g_hi).ravel())
            rows.append(i_hi.ravel())
            cols.append(i_lo.ravel())
            vals.append((-g_lo).ravel())
        rows.append(idx.ravel())
        cols.append(idx.ravel())
        vals.append(diag.ravel())
        J = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n)).tocsr()
        # boundary rows are identity
        bmask = (~self.interior).ravel()
        bidx = np.where(bmask)[0]
        keep = sp.diags((~bmask).astype(float))
        J = keep @ J
        J = J + sp.coo_matrix(
            (np.ones(len(bidx)), (bidx, bidx)), shape=(n, n)).tocsr()
        return J


def implicit_step(u_n: ScalarField, t_next: float, spec: ProblemSpec,
                  config: SolverConfig) -> tuple[ScalarField, StepReport]:
    """Advance one backward-Euler step.

    Solves (u - u_n)/dt = div F + f(., t_next) with boundary nodes pinned
    to g(., t_next) (plus 1/k in k-mode) by damped Newton with an exact
    residual.  If Newton stalls and the fallback is enabled, the step
    switches to the lagged-diffusivity iteration.
    """
    grid = u_n.grid
    prob = _StepProblem(spec, grid, config, u_n.values, t_next)
    u = u_n.values.copy()
    if config.guess_offset != 0.0:
        # perturb the initial Newton iterate; the converged state must not
        # depend on it beyond the residual tolerance
        u[prob.interior] += config.guess_offset
    u[~prob.interior] = prob.bc[~prob.interior]
    direct = config.k == "direct"
    clamped = False

    hist = []
    secant = False
    stall_ref = None
    for it in range(config.newton_max):
        R = prob.residual(u)
        res = float(np.max(np.abs(R)))
        hist.append(res)
        if res <= config.newton_tol:
            return (ScalarField(grid, u, t_next),
                    StepReport(iterations=it, residual=res, fallback=secant,
                               clamped=clamped, residual_history=hist))
        if (config.picard_fallback and not secant and it >= 5
                and stall_ref is not None and res > 0.9 * stall_ref):
            secant = True
        if it % 5 == 0:
            stall_ref = res
        J = prob.jacobian(u, secant=secant)
        delta = spla.spsolve(J, R.ravel()).reshape(grid.counts)
        lam = config.damping if not secant else 1.0
        accepted = False
        for _ in range(10):
            trial = u - lam * delta
            if direct and np.any(trial < 0.0):
                trial = np.maximum(trial, 0.0)
                clamped = True
            r_trial = float(np.max(np.abs(prob.residual(trial))))
            if r_trial < res or secant:
                u = trial
                accepted = True
                break
            lam /= 2.0
        if not accepted:
            u = u - lam * delta
            if direct and np.any(u < 0.0):
                u = np.maximum(u, 0.0)
                clamped = True
    R = prob.residual(u)
    res = float(np.max(np.abs(R)))
    hist.append(res)
    if res <= config.newton_tol:
        return (ScalarField(grid, u, t_next),
                StepReport(iterations=config.newton_max, residual=res,
                           fallback=secant, clamped=clamped,
                           residual_history=hist))
    raise StepFailure(-1, hist)


def solve_problem(spec: ProblemSpec, grid: Grid,
                  config: SolverConfig) -> tuple[TimeSeries, SolveReport]:
    """March the implicit scheme from 0 to T.

    In k-mode the initial field is u0 + 1/k and boundary data g + 1/k; in
    direct mode the data are used as given.
    """
    t0 = time.perf_counter()
    shift = 0.0 if config.k == "direct" else 1.0 / int(config.k)
    x = grid.meshgrid()
    u0 = np.broadcast_to(np.asarray(spec.u0(x), dtype=float),
                         grid.counts).copy() + shift
    bc0 = _boundary_values(spec, grid, 0.0, shift)
    u0[grid.boundary_mask()] = bc0[grid.boundary_mask()]
    fields = [ScalarField(grid, u0, 0.0)]
    report = SolveReport()
    n_steps = int(round(spec.T / config.dt))
    if abs(n_steps * config.dt - spec.T) > 1e-9 * spec.T:
        n_steps = int(np.ceil(spec.T / config.dt))
    for n in range(n_steps):
        t_next = min((n + 1) * config.dt, spec.T)
        try:
            f_next, step = implicit_step(fields[-1], t_next, spec, config)
        except StepFailure as exc:
            exc.step_index = n
            report.wall_time = time.perf_counter() - t0
            raise
        fields.append(f_next)
        report.steps.append(step)
    report.wall_time = time.perf_counter() - t0
    return TimeSeries(fields), report


def manufactured_rhs(u_exact: Callable, spec: ProblemSpec,
                     mode: int | str = "direct",
                     fd_step: float = 1e-3) -> Callable:
    """Source evaluator that makes u_exact solve the equation.

    f(x, t) = dt u - sum_j d_j(a_j |d_j w_j|^{p_j - 2} d_j w_j) with
    w_j = u^{m_j} in direct mode, or w_j = u with the truncated coefficient
    for integer mode k.  Derivatives are fourth-order central differences
    with step fd_step, so u_exact must be smooth and evaluable slightly
    outside the box and horizon.  Raises if u_exact is not strictly
    positive at any probed point.
    """
    if mode != "direct" and (not isinstance(mode, int) or mode < 1):
        raise ValueError("mode must be 'direct' or a positive integer k")

    def ue(x, t):
        v = np.asarray(u_exact(x, t), dtype=float)
        if np.any(v <= 0.0):
            raise ValueError("manufactured solution must be positive")
        return v

    def d4(fun, s):
        """Fourth-order central derivative of fun at offset 0, step s."""
        return (-fun(2 * s) + 8 * fun(s) - 8 * fun(-s) + fun(-2 * s)) / (12 * s)

    def shift_x(x, j, ds):
        return tuple(c + ds if i == j else c for i, c in enumerate(x))

    def flux_j(x, t, j):
        pj = spec.exponents.p[j]
        mj = spec.exponents.m[j]
        u = ue(x, t)

        def w_at(ds):
            uu = ue(shift_x(x, j, ds), t)
            return uu if (mode != "direct" or mj == 1.0) else uu ** mj

        D = d4(w_at, fd_step)
        a = spec.coeffs.funcs[j](x, t, u)
        if mode == "direct":
            c = a
        else:
            c = (a * mj ** (pj - 1.0)
                 * truncate(int(mode), u) ** ((mj - 1.0) * (pj - 1.0)))
        with np.errstate(divide="ignore", invalid="ignore"):
            Dsafe = np.where(D == 0.0, 0.0, np.abs(D) ** (pj - 2.0) * D)
        return c * Dsafe

    def f(x, t):
        x = tuple(np.asarray(c, dtype=float) for c in x)
        dt_u = d4(lambda ds: ue(x, t + ds), fd_step)
        out = dt_u
        for j in range(spec.dim):
            div_j = d4(lambda ds: flux_j(shift_x(x, j, ds), t, j), fd_step)
            out = out - div_j
        return out

    return f


@dataclass
class CascadeResult:
    ks: list[int]
    series: list[TimeSeries]
    reports: list[SolveReport]
    ordering_excess: dict[tuple[int, int], float]
    distances: list[float]
    limit: TimeSeries

    def as_dict(self) -> dict:
        return {
            "ks": list(self.ks),
            "ordering_excess": {f"{a}->{b}": v for (a, b), v
                                in self.ordering_excess.items()},
            "distances": list(self.distances),
            "reports": [r.as_dict() for r in self.reports],
        }


def regularization_cascade(spec: ProblemSpec, grid: Grid,
                           config: SolverConfig,
                           ks: Sequence[int]) -> CascadeResult:
    """Solve the truncated problems for an increasing list of k.

    Returns every trajectory, the worst positive part of u_l - u_k over
    space-time for each consecutive pair k < l (expected below the
    ordering tolerance since the family decreases in k), the successive
    trajectory distances in the solution-space metric, and the final
    trajectory as the limit proxy.
    """
    ks = [int(k) for k in ks]
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("ks must be strictly increasing")
    if not spec.exponents.closeness_ok:
        raise ValueError("cascade requires the exponent closeness condition")
    series, reports = [], []
    for k in ks:
        ts, rep = solve_problem(spec, grid, replace(config, k=k))
        series.append(ts)
        reports.append(rep)
    excess = {}
    for (ka, sa), (kb, sb) in zip(zip(ks, series), zip(ks[1:], series[1:])):
        worst = 0.0
        for fa, fb in zip(sa.fields, sb.fields):
            worst = max(worst, float(np.max(fb.values - fa.values)))
        excess[(ka, kb)] = max(worst, 0.0)
    m = spec.exponents.m
    p = spec.exponents.p
    distances = [vpm_distance(sa, sb, m, p)
                 for sa, sb in zip(series, series[1:])]
    return CascadeResult(ks=ks, series=series, reports=reports,
                         ordering_excess=excess, distances=distances,
                         limit=series[-1])
