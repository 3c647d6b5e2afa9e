"""Discrete-time dynamics hooks used by the trajectory optimizer.

A hook exposes ``nx``, ``nu``, ``nw`` (stacked contact wrench size), ``dt``,
``step(x, u) -> (x_next, w)`` and ``linearize(xs, us) -> (fx, fu, wx, wu)``.
Both methods accept arbitrary leading batch dimensions, so one call
linearizes the whole horizon.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import contact as ct
from ..errors import DimensionError
from ..rbd import RobotModel


def central_difference(fun, x, eps: float = 1e-6):
    """Jacobian of a batched ``fun`` w.r.t. the last axis of ``x`` by
    central differences, evaluated in a single batched call.

    ``fun`` maps (..., n) to a tuple of arrays (..., m_i); returns a tuple
    of (..., m_i, n) Jacobians.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    E = eps * np.eye(n)
    pts = np.concatenate([x[..., None, :] + E, x[..., None, :] - E], -2)  # (..., 2n, n)
    outs = fun(pts)
    jacs = []
    for o in outs:
        d = (o[..., :n, :] - o[..., n:, :]) / (2.0 * eps)  # (..., n, m)
        jacs.append(np.swapaxes(d, -1, -2))
    return tuple(jacs)


class LinearDynamics:
    """``x' = A x + B u``; no contacts."""

    nw = 0

    def __init__(self, A, B, dt: float = 1.0):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.nx, self.nu = self.B.shape
        if self.A.shape != (self.nx, self.nx):
            raise DimensionError(f"A is {self.A.shape}, B is {self.B.shape}")
        self.dt = dt

    def step(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        xn = x @ self.A.T + u @ self.B.T
        return xn, np.zeros(xn.shape[:-1] + (0,))

    def linearize(self, xs, us):
        lead = np.shape(xs)[:-1]
        fx = np.broadcast_to(self.A, lead + self.A.shape).copy()
        fu = np.broadcast_to(self.B, lead + self.B.shape).copy()
        return fx, fu, np.zeros(lead + (0, self.nx)), np.zeros(lead + (0, self.nu))


class ContactDynamics:
    """Semi-implicit Euler step of the contact-constrained rigid-body model.

    The state is ``x = [q; v]``. Contacts in ``contacts`` are held active for
    the whole horizon; ``locked`` coordinates are frozen by extra constraint
    rows. The control derivative comes from the same KKT factorization as
    the step; state derivatives use batched central differences.
    """

    def __init__(
        self,
        model: RobotModel,
        contacts: Sequence[ct.ContactSpec],
        dt: float,
        ground=None,
        baumgarte: tuple[float, float] | None = (100.0, 20.0),
        locked: Sequence[int] = (),
        gravity=None,
        fd_eps: float = 1e-6,
    ):
        self.model = model
        self.contacts = [c for c in contacts if c.active]
        self.dt = float(dt)
        self.ground = ground
        self.baumgarte = baumgarte
        self.locked = tuple(locked)
        self.gravity = gravity
        self.fd_eps = fd_eps
        self.nx = 2 * model.nv
        self.nu = model.nu
        self.nw = 6 * len(self.contacts)
        # planar contact forces -> stacked 6D wrenches is linear
        n_planar = sum(c.n_rows for c in self.contacts)
        self._W = np.zeros((self.nw, n_planar))
        i = 0
        for j, c in enumerate(self.contacts):
            block = ct.planar_to_wrench(c, np.eye(c.n_rows))  # (rows, 6)
            self._W[6 * j:6 * j + 6, i:i + c.n_rows] = block.T
            i += c.n_rows
        self._n_planar = n_planar

    def _solve(self, x, u, control_jacobian=False):
        nv = self.model.nv
        return ct.constrained_dynamics(
            self.model, x[..., :nv], x[..., nv:], u, self.contacts, self.ground,
            self.baumgarte, self.locked, self.gravity,
            control_jacobian=control_jacobian, check_rank=False,
        )

    def _integrate(self, x, qdd):
        nv = self.model.nv
        v_next = x[..., nv:] + self.dt * qdd
        q_next = x[..., :nv] + self.dt * v_next
        return np.concatenate([q_next, v_next], -1)

    def step(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        sol = self._solve(x, u)
        w = sol.forces[..., :self._n_planar] @ self._W.T
        return self._integrate(x, sol.qdd), w

    def linearize(self, xs, us):
        xs = np.asarray(xs, dtype=float)
        us = np.asarray(us, dtype=float)
        dt = self.dt
        sol = self._solve(xs, us, control_jacobian=True)
        dqdd_du = sol.dqdd_du
        fu = np.concatenate([dt * dt * dqdd_du, dt * dqdd_du], -2)
        wu = self._W @ sol.dforces_du[..., :self._n_planar, :]

        u_rep = np.broadcast_to(us[..., None, :], us.shape[:-1] + (2 * self.nx, self.nu))
        fx, wx = central_difference(lambda X: self.step(X, u_rep), xs, self.fd_eps)
        return fx, fu, wx, wu


class SwerveDynamics:
    """Planar rigid base driven by body-frame accelerations.

    State ``(x, y, θ, v_x, v_y, ω)`` with a body-frame twist; control is the
    body-frame acceleration ``(a_x, a_y, α)``. The twist is updated first and
    the pose then follows the exact SE(2) exponential of the new twist.
    """

    nx, nu, nw = 6, 3, 0

    def __init__(self, dt: float, fd_eps: float = 1e-6):
        self.dt = float(dt)
        self.fd_eps = fd_eps

    def step(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        dt = self.dt
        tw = x[..., 3:] + dt * u
        vx, vy, w = tw[..., 0], tw[..., 1], tw[..., 2]
        a = w * dt
        small = np.abs(a) < 1e-6
        a_safe = np.where(small, 1.0, a)
        s = np.where(small, 1.0 - a * a / 6.0, np.sin(a_safe) / a_safe)
        c = np.where(small, a / 2.0 - a**3 / 24.0, (1.0 - np.cos(a_safe)) / a_safe)
        dx = dt * (s * vx - c * vy)
        dy = dt * (c * vx + s * vy)
        th = x[..., 2]
        ct_, st_ = np.cos(th), np.sin(th)
        pose = np.stack([x[..., 0] + ct_ * dx - st_ * dy, x[..., 1] + st_ * dx + ct_ * dy, th + a], -1)
        xn = np.concatenate([pose, tw], -1)
        return xn, np.zeros(xn.shape[:-1] + (0,))

    def linearize(self, xs, us):
        xs = np.asarray(xs, dtype=float)
        us = np.asarray(us, dtype=float)
        xu = np.concatenate([xs, us], -1)

        def f(z):
            return (self.step(z[..., :6], z[..., 6:])[0],)

        (J,) = central_difference(f, xu, self.fd_eps)
        lead = xs.shape[:-1]
        return J[..., :6], J[..., 6:], np.zeros(lead + (0, 6)), np.zeros(lead + (0, 3))
