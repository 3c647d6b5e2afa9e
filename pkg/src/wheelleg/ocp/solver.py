"""Regularized DDP (iLQR form) with a backtracking line search."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import DimensionError, SolverError
from .costs import CostTerm, stage_cost, total_cost


@dataclass
class OcpProblem:
    dynamics: object
    N: int
    stage_costs: Sequence[CostTerm]
    terminal_costs: Sequence[CostTerm]
    x0: np.ndarray
    dt: float | None = None

    def __post_init__(self):
        if int(self.N) < 1:
            raise ValueError(f"horizon must have at least one node, got N={self.N}")
        self.N = int(self.N)
        if self.dt is None:
            self.dt = float(getattr(self.dynamics, "dt", 1.0))
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.dynamics.nx,):
            raise DimensionError(f"x0 has shape {self.x0.shape}, dynamics expects ({self.dynamics.nx},)")

    @property
    def nx(self) -> int:
        return self.dynamics.nx

    @property
    def nu(self) -> int:
        return self.dynamics.nu


@dataclass
class Trajectory:
    xs: np.ndarray  # (N+1, nx)
    us: np.ndarray  # (N, nu)
    ws: np.ndarray | None = None  # (N, nw) contact wrenches
    cost: float = np.nan


@dataclass
class Gains:
    k: np.ndarray  # (N, nu)
    K: np.ndarray  # (N, nu, nx)
    Qu: np.ndarray  # (N, nu)
    dV: tuple[float, float]  # expected improvement coefficients (linear, quadratic)

    def expected_improvement(self, alpha: float) -> float:
        return -(alpha * self.dV[0] + alpha * alpha * self.dV[1])


@dataclass
class SolverOptions:
    max_iter: int = 100
    tol_grad: float = 1e-6
    tol_cost: float = 1e-6
    mu_min: float = 1e-9
    mu_max: float = 1e6
    mu_up: float = 10.0
    mu_down: float = 2.0
    alphas: tuple = tuple(0.5**i for i in range(7))
    accept_ratio: float = 0.1


@dataclass
class SolverLog:
    rows: list = field(default_factory=list)

    COLUMNS = ("iteration", "cost", "grad_norm", "mu", "alpha", "accepted", "wall_time")

    def append(self, **row):
        self.rows.append({c: row.get(c) for c in self.COLUMNS})

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            w.writeheader()
            w.writerows(self.rows)


@dataclass
class OcpSolution:
    xs: np.ndarray
    us: np.ndarray
    k: np.ndarray
    K: np.ndarray
    cost: float
    iterations: int
    converged: bool
    ws: np.ndarray | None = None
    log: SolverLog = field(default_factory=SolverLog)
    message: str = ""

    @property
    def N(self) -> int:
        return len(self.us)


def rollout(problem: OcpProblem, us, x0=None, policy=None) -> Trajectory:
    """Simulate the dynamics hook; with ``policy=(xs_ref, us_ref, k, K, α)``
    the controls follow ``u = u_ref + α k + K (x - x_ref)``."""
    dyn = problem.dynamics
    N = problem.N
    xs = np.zeros((N + 1, dyn.nx))
    xs[0] = problem.x0 if x0 is None else x0
    us = np.array(us, dtype=float, copy=True)
    ws = np.zeros((N, dyn.nw))
    for i in range(N):
        if policy is not None:
            xr, ur, k, K, a = policy
            us[i] = ur[i] + a * k[i] + K[i] @ (xs[i] - xr[i])
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                xn, w = dyn.step(xs[i], us[i])
        except np.linalg.LinAlgError as exc:
            raise FloatingPointError(f"rollout hit a singular system at node {i + 1}: {exc}") from exc
        if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(w))):
            raise FloatingPointError(f"rollout diverged at node {i + 1}")
        xs[i + 1] = xn
        ws[i] = w
    traj = Trajectory(xs, us, ws)
    traj.cost = total_cost(problem.stage_costs, problem.terminal_costs, xs, us, ws)
    return traj


def _derivatives(problem: OcpProblem, traj: Trajectory):
    N = problem.N
    fx, fu, wx, wu = problem.dynamics.linearize(traj.xs[:-1], traj.us)
    ws = traj.ws if traj.ws is not None and traj.ws.shape[-1] else None
    st = stage_cost(problem.stage_costs, traj.xs[:-1], traj.us, np.arange(N), ws,
                    wx if ws is not None else None, wu if ws is not None else None)
    term = stage_cost(problem.terminal_costs, traj.xs[-1:], np.zeros((1, problem.nu)), np.array([N]))
    return fx, fu, st, term


def backward_pass(problem: OcpProblem, traj: Trajectory, mu: float = 0.0, derivs=None) -> Gains:
    """Riccati-like sweep of the local quadratic model.

    Raises :class:`SolverError` if the regularized ``Q_uu`` is not positive
    definite at some node.
    """
    if traj.xs.shape != (problem.N + 1, problem.nx) or traj.us.shape != (problem.N, problem.nu):
        raise DimensionError("trajectory does not match the problem dimensions")
    fx, fu, st, term = derivs if derivs is not None else _derivatives(problem, traj)
    N, nu, nx = problem.N, problem.nu, problem.nx
    Vx = term.lx[0].copy()
    Vxx = term.lxx[0].copy()
    k = np.zeros((N, nu))
    K = np.zeros((N, nu, nx))
    Qu_all = np.zeros((N, nu))
    dV1 = dV2 = 0.0
    I = np.eye(nu)
    for i in range(N - 1, -1, -1):
        A, B = fx[i], fu[i]
        Qx = st.lx[i] + A.T @ Vx
        Qu = st.lu[i] + B.T @ Vx
        VB = Vxx @ B
        Qxx = st.lxx[i] + A.T @ Vxx @ A
        Quu = st.luu[i] + B.T @ VB
        Qux = st.lux[i] + VB.T @ A
        Quu_reg = 0.5 * (Quu + Quu.T) + mu * I
        try:
            L = np.linalg.cholesky(Quu_reg)
        except np.linalg.LinAlgError:
            eig = np.linalg.eigvalsh(Quu_reg)
            raise SolverError(f"Q_uu not positive definite at node {i} (μ={mu:.3g}, min eigenvalue {eig[0]:.3g})")
        rhs = np.concatenate([Qu[:, None], Qux], 1)
        sol = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
        k[i] = -sol[:, 0]
        K[i] = -sol[:, 1:]
        Qu_all[i] = Qu
        dV1 += k[i] @ Qu
        dV2 += 0.5 * k[i] @ Quu @ k[i]
        Vx = Qx + K[i].T @ Quu @ k[i] + K[i].T @ Qu + Qux.T @ k[i]
        Vxx = Qxx + K[i].T @ Quu @ K[i] + K[i].T @ Qux + Qux.T @ K[i]
        Vxx = 0.5 * (Vxx + Vxx.T)
    return Gains(k, K, Qu_all, (float(dV1), float(dV2)))


def forward_pass(problem: OcpProblem, traj: Trajectory, gains: Gains, alpha: float) -> Trajectory:
    """Roll out ``u = u + α k + K (x_new - x)``; raises FloatingPointError on divergence."""
    if not 0 < alpha <= 1:
        raise ValueError(f"step size must be in (0, 1], got {alpha}")
    return rollout(problem, traj.us, policy=(traj.xs, traj.us, gains.k, gains.K, alpha))


def _forward_batch(problem: OcpProblem, traj: Trajectory, gains: Gains, alphas) -> list:
    """Forward passes for several step sizes in one batched rollout; entries
    are ``None`` where that rollout diverged."""
    dyn = problem.dynamics
    a = np.asarray(alphas, dtype=float)[:, None]
    n = len(a)
    xs = np.zeros((n, problem.N + 1, dyn.nx))
    us = np.zeros((n, problem.N, dyn.nu))
    ws = np.zeros((n, problem.N, dyn.nw))
    xs[:, 0] = traj.xs[0]
    ok = np.ones(n, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(problem.N):
            us[:, i] = traj.us[i] + a * gains.k[i] + (xs[:, i] - traj.xs[i]) @ gains.K[i].T
            us[~ok, i] = traj.us[i]
            xs[~ok, i] = traj.xs[i]
            xn, w = dyn.step(xs[:, i], us[:, i])
            ok &= np.all(np.isfinite(xn), -1) & np.all(np.isfinite(w), -1)
            xs[:, i + 1] = xn
            ws[:, i] = w
    out = []
    for j in range(n):
        if not ok[j]:
            out.append(None)
            continue
        t = Trajectory(xs[j], us[j], ws[j])
        t.cost = total_cost(problem.stage_costs, problem.terminal_costs, xs[j], us[j], ws[j])
        out.append(t)
    return out


def _line_search_candidates(problem, traj, gains, alphas):
    """Yield ``(alpha, trajectory or None)``: the full step alone, the
    shorter steps batched once the full step has been rejected."""
    try:
        yield alphas[0], forward_pass(problem, traj, gains, alphas[0])
    except FloatingPointError:
        yield alphas[0], None
    rest = list(alphas[1:])
    if not rest:
        return
    try:
        cands = _forward_batch(problem, traj, gains, rest)
    except np.linalg.LinAlgError:
        cands = []
        for a in rest:
            try:
                cands.append(forward_pass(problem, traj, gains, a))
            except FloatingPointError:
                cands.append(None)
    yield from zip(rest, cands)


def initial_trajectory(problem: OcpProblem, init=None) -> Trajectory:
    """Cold start: zero controls rolled out from ``x0``.

    A warm start supplies controls (a :class:`Trajectory`, :class:`OcpSolution`
    or array). They are re-rolled from the problem's ``x0``; when the guess
    also carries states, a second rollout tracks them with gains computed
    afresh around the guess, and the cheaper of the two rollouts is kept.
    """
    if init is None:
        return rollout(problem, np.zeros((problem.N, problem.nu)))
    us = np.asarray(getattr(init, "us", init), dtype=float)
    if us.shape != (problem.N, problem.nu):
        raise DimensionError(f"initial controls have shape {us.shape}, expected {(problem.N, problem.nu)}")
    try:
        best = rollout(problem, us)
    except FloatingPointError:
        best = None
    xs = getattr(init, "xs", None)
    if xs is not None and np.shape(xs) == (problem.N + 1, problem.nx):
        guess = Trajectory(np.asarray(xs, dtype=float), us)
        try:
            if problem.dynamics.nw:
                _, guess.ws = problem.dynamics.step(guess.xs[:-1], us)
            gains = _stabilizing_gains(problem, guess)
            tracked = rollout(problem, us, policy=(guess.xs, us, np.zeros_like(us), gains.K, 1.0))
        except (SolverError, FloatingPointError, np.linalg.LinAlgError):
            tracked = None
        if tracked is not None and (best is None or tracked.cost < best.cost):
            best = tracked
    if best is None:
        raise FloatingPointError("warm-start rollout diverged")
    return best


def _stabilizing_gains(problem: OcpProblem, traj: Trajectory, mu: float = 0.0, mu_max: float = 1e6) -> Gains:
    while True:
        try:
            return backward_pass(problem, traj, mu)
        except SolverError:
            mu = max(1e-9, 10.0 * mu)
            if mu > mu_max:
                raise


def solve(problem: OcpProblem, init=None, options: SolverOptions | None = None) -> OcpSolution:
    opt = options or SolverOptions()
    log = SolverLog()
    t0 = time.perf_counter()
    traj = initial_trajectory(problem, init)
    mu = 0.0
    iterations = 0
    converged = False
    message = "iteration cap reached"
    gains = None
    log.append(iteration=0, cost=traj.cost, grad_norm=np.nan, mu=mu, alpha=np.nan, accepted=True,
               wall_time=time.perf_counter() - t0)
    derivs = None
    while True:
        if derivs is None:
            derivs = _derivatives(problem, traj)
        try:
            gains = backward_pass(problem, traj, mu, derivs)
        except SolverError as exc:
            mu = max(opt.mu_min, mu * opt.mu_up)
            if mu > opt.mu_max:
                message = f"regularization exhausted: {exc}"
                break
            continue
        grad = float(np.max(np.abs(gains.Qu))) if gains.Qu.size else 0.0
        if grad < opt.tol_grad:
            converged, message = True, "gradient tolerance"
            break
        if iterations >= opt.max_iter:
            break
        accepted = None
        for alpha, cand in _line_search_candidates(problem, traj, gains, opt.alphas):
            expected = gains.expected_improvement(alpha)
            if cand is None:
                log.append(iteration=iterations, cost=np.nan, grad_norm=grad, mu=mu, alpha=alpha,
                           accepted=False, wall_time=time.perf_counter() - t0)
                continue
            actual = traj.cost - cand.cost
            ok = actual >= 0 and (expected <= 0 or actual / expected >= opt.accept_ratio)
            log.append(iteration=iterations + ok, cost=cand.cost, grad_norm=grad, mu=mu, alpha=alpha,
                       accepted=bool(ok), wall_time=time.perf_counter() - t0)
            if ok:
                accepted = cand
                break
        if accepted is None:
            mu = max(opt.mu_min, mu * opt.mu_up)
            if mu > opt.mu_max:
                message = "line search failed at maximum regularization"
                break
            continue
        iterations += 1
        prev = traj.cost
        traj = accepted
        derivs = None
        mu = mu / opt.mu_down if mu / opt.mu_down >= opt.mu_min else 0.0
        if abs(prev - traj.cost) < opt.tol_cost * max(abs(prev), 1e-12):
            converged, message = True, "cost tolerance"
            # gains for the final trajectory
            try:
                gains = backward_pass(problem, traj, mu)
            except SolverError:
                pass
            break
    k = gains.k if gains is not None else np.zeros((problem.N, problem.nu))
    K = gains.K if gains is not None else np.zeros((problem.N, problem.nu, problem.nx))
    return OcpSolution(traj.xs, traj.us, k, K, traj.cost, iterations, converged, traj.ws, log, message)


def shift_warm_start(prev: OcpSolution) -> Trajectory:
    """Drop node 0 and repeat the last node; gains are discarded."""
    if prev.N < 2:
        raise ValueError("warm start shift needs a horizon of at least two nodes")
    xs = np.concatenate([prev.xs[1:], prev.xs[-1:]], 0)
    us = np.concatenate([prev.us[1:], prev.us[-1:]], 0)
    return Trajectory(xs, us)
