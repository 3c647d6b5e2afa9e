"""Stage and terminal cost terms.

Every term is a weighted least-squares residual ``½ w ‖r(x, u, w_c)‖²``
where ``w_c`` are the contact wrenches reported by the dynamics hook. The
contact-force term uses a hinge residual, so its value is exactly the
squared-hinge cone penalty. Hessians are Gauss-Newton (``Jᵀ J``) and hence
positive semidefinite.

All evaluations are batched over nodes: ``x`` is (B, nx), ``u`` (B, nu),
``k`` (B,) node indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .. import contact as ct
from .. import rbd
from ..errors import DimensionError
from ..rbd import RobotModel

COST_KINDS = (
    "leg_tracking",
    "com_tracking",
    "contact_force",
    "regularization",
    "base_pose",
    "steering_posture",
    "arm_pose",
)


class Reference:
    """Setpoint, callable ``k -> value`` or per-node array of shape (N+1, dim)."""

    def __init__(self, value, dim: int):
        self.dim = dim
        if callable(value):
            self._fn, self._table = value, None
            return
        a = np.asarray(value, dtype=float)
        if a.ndim == 1:
            if a.shape != (dim,):
                raise DimensionError(f"reference has {a.shape[0]} entries, expected {dim}")
        elif a.ndim != 2 or a.shape[1] != dim:
            raise DimensionError(f"reference table must be (nodes, {dim}), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("reference contains non-finite values")
        self._fn, self._table = None, a

    def __call__(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=int)
        if self._fn is not None:
            return np.array([np.asarray(self._fn(int(i)), dtype=float) for i in k.ravel()]).reshape(k.shape + (self.dim,))
        if self._table.ndim == 1:
            return np.broadcast_to(self._table, k.shape + (self.dim,))
        return self._table[np.minimum(k, len(self._table) - 1)]


@dataclass
class Residual:
    r: np.ndarray   # (B, d)
    rx: np.ndarray  # (B, d, nx)
    ru: np.ndarray  # (B, d, nu)
    rw: np.ndarray | None = None  # (B, d, nw)


class CostTerm:
    """Base class; subclasses implement :meth:`residual`."""

    kind: str = ""

    def __init__(self, weight: float, nx: int, nu: int, scale=None):
        weight = float(weight)
        if not np.isfinite(weight) or weight < 0:
            raise ValueError(f"{self.kind} weight must be finite and non-negative, got {weight}")
        self.weight = weight
        self.nx, self.nu = nx, nu
        self.scale = None if scale is None else np.asarray(scale, dtype=float)

    def residual(self, x, u, k, w=None) -> Residual:
        raise NotImplementedError

    def _scaled(self, res: Residual) -> Residual:
        if self.scale is None:
            return res
        s = self.scale
        return Residual(res.r * s, res.rx * s[:, None], res.ru * s[:, None],
                        None if res.rw is None else res.rw * s[:, None])

    def evaluate(self, x, u, k, w=None) -> Residual:
        return self._scaled(self.residual(x, u, k, w))

    def value(self, x, u, k, w=None) -> np.ndarray:
        r = self.evaluate(x, u, k, w).r
        return 0.5 * self.weight * np.sum(r * r, -1)

    def __repr__(self):
        return f"{type(self).__name__}(kind={self.kind!r}, weight={self.weight})"


def _zeros(B, d, n):
    return np.zeros((B, d, n))


class StateTracking(CostTerm):
    """Selected state entries against a reference."""

    def __init__(self, kind: str, indices: Sequence[int], reference, weight: float, nx: int, nu: int, scale=None):
        if kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {kind!r}")
        self.kind = kind
        super().__init__(weight, nx, nu, scale)
        self.indices = np.asarray(indices, dtype=int)
        if np.any(self.indices < 0) or np.any(self.indices >= nx):
            raise DimensionError(f"state indices {self.indices.tolist()} outside 0..{nx - 1}")
        self.ref = Reference(reference, len(self.indices))
        self._sel = np.zeros((len(self.indices), nx))
        self._sel[np.arange(len(self.indices)), self.indices] = 1.0

    def residual(self, x, u, k, w=None):
        B = x.shape[0]
        r = x[:, self.indices] - self.ref(k)
        return Residual(r, np.broadcast_to(self._sel, (B,) + self._sel.shape), _zeros(B, len(self.indices), self.nu))


def _coords(model: RobotModel, names, velocity=False):
    off = model.nv if velocity else 0
    return [off + model.coord_index(n) for n in names]


def leg_tracking(model, joints, reference, weight, nu=None, velocity=False, scale=None):
    """Leg joint coordinates (or velocities) against a swing reference."""
    return StateTracking("leg_tracking", _coords(model, joints, velocity), reference, weight,
                         2 * model.nv, model.nu if nu is None else nu, scale)


def base_pose(model, reference, weight, coords=("base.x", "base.z", "base.pitch"), velocity=False, scale=None):
    return StateTracking("base_pose", _coords(model, coords, velocity), reference, weight,
                         2 * model.nv, model.nu, scale)


def steering_posture(model, coords, reference, weight, velocity=False, scale=None):
    return StateTracking("steering_posture", _coords(model, coords, velocity), reference, weight,
                         2 * model.nv, model.nu, scale)


class ComTracking(CostTerm):
    kind = "com_tracking"

    def __init__(self, model: RobotModel, reference, weight: float, dims: Sequence[int] = (0, 1), scale=None):
        super().__init__(weight, 2 * model.nv, model.nu, scale)
        self.model = model
        self.dims = list(dims)
        self.ref = Reference(reference, len(self.dims))

    def residual(self, x, u, k, w=None):
        B = x.shape[0]
        nv = self.model.nv
        c, Jc = rbd.center_of_mass(self.model, x[:, :nv])
        rx = np.zeros((B, len(self.dims), self.nx))
        rx[:, :, :nv] = Jc[:, self.dims]
        return Residual(c[:, self.dims] - self.ref(k), rx, _zeros(B, len(self.dims), self.nu))


class ArmPose(CostTerm):
    """End-effector position (x, z) and pitch against a target."""

    kind = "arm_pose"

    def __init__(self, model: RobotModel, reference, weight: float, frame: str = "ee", dims: Sequence[int] = (0, 1, 2), scale=None):
        super().__init__(weight, 2 * model.nv, model.nu, scale)
        model.frame(frame)
        self.model = model
        self.frame = frame
        self.dims = list(dims)
        self.ref = Reference(reference, len(self.dims))

    def residual(self, x, u, k, w=None):
        B = x.shape[0]
        nv = self.model.nv
        q = x[:, :nv]
        p, angle = rbd.forward_kinematics(self.model, q, self.frame)
        J = rbd.frame_jacobian(self.model, q, self.frame)  # rows vx, vz, ω
        pose = np.concatenate([p, np.asarray(angle)[:, None]], -1)
        rx = np.zeros((B, len(self.dims), self.nx))
        rx[:, :, :nv] = J[:, self.dims]
        return Residual(pose[:, self.dims] - self.ref(k), rx, _zeros(B, len(self.dims), self.nu))


class Regularization(CostTerm):
    """Control effort about ``u_ref``, optionally plus generalized velocities."""

    kind = "regularization"

    def __init__(self, nx: int, nu: int, weight: float, u_ref=None, velocity_indices: Sequence[int] = (), velocity_scale: float = 1.0, scale=None):
        super().__init__(weight, nx, nu, scale)
        self.u_ref = Reference(np.zeros(nu) if u_ref is None else u_ref, nu)
        self.vidx = np.asarray(velocity_indices, dtype=int)
        self.vscale = float(velocity_scale)

    def residual(self, x, u, k, w=None):
        B = x.shape[0]
        nv_ = len(self.vidx)
        d = self.nu + nv_
        r = np.concatenate([u - self.u_ref(k), self.vscale * x[:, self.vidx]], -1)
        rx = np.zeros((B, d, self.nx))
        rx[:, self.nu + np.arange(nv_), self.vidx] = self.vscale
        ru = np.zeros((B, d, self.nu))
        ru[:, np.arange(self.nu), np.arange(self.nu)] = 1.0
        return Residual(r, rx, ru)


class ContactForce(CostTerm):
    """Cone violation ``max(0, A w - b)`` of every contact wrench."""

    kind = "contact_force"

    def __init__(self, contacts: Sequence[ct.ContactSpec], weight: float, nx: int, nu: int):
        super().__init__(weight, nx, nu)
        self.contacts = [c for c in contacts if c.active]
        cones = [ct.build_cone(c) for c in self.contacts]
        rows = sum(len(c.b) for c in cones)
        self.A = np.zeros((rows, 6 * len(cones)))
        self.b = np.zeros(rows)
        i = 0
        for j, cone in enumerate(cones):
            m = len(cone.b)
            self.A[i:i + m, 6 * j:6 * j + 6] = cone.A
            self.b[i:i + m] = cone.b
            i += m

    def residual(self, x, u, k, w=None):
        B = x.shape[0]
        if w is None:
            return Residual(np.zeros((B, 0)), _zeros(B, 0, self.nx), _zeros(B, 0, self.nu), np.zeros((B, 0, 0)))
        raw = w @ self.A.T - self.b
        active = raw > 0
        r = np.where(active, raw, 0.0)
        rw = self.A[None] * active[..., None]
        return Residual(r, _zeros(B, len(self.b), self.nx), _zeros(B, len(self.b), self.nu), rw)


@dataclass
class CostDerivatives:
    l: np.ndarray    # (B,)
    lx: np.ndarray   # (B, nx)
    lu: np.ndarray   # (B, nu)
    lxx: np.ndarray  # (B, nx, nx)
    luu: np.ndarray  # (B, nu, nu)
    lux: np.ndarray  # (B, nu, nx)


def stage_cost(terms: Sequence[CostTerm], x, u, k, w=None, wx=None, wu=None) -> CostDerivatives:
    """Summed cost, gradients and Gauss-Newton Hessians of ``terms``.

    Accepts a single node (1-D ``x``) or a batch. Wrench Jacobians ``wx``,
    ``wu`` (from the dynamics hook) chain the contact-force term back to
    the state and control.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    u = np.atleast_2d(np.asarray(u, dtype=float))
    B, nx = x.shape
    nu = u.shape[1]
    k = np.broadcast_to(np.asarray(k, dtype=int), (B,))
    if w is not None:
        w = np.atleast_2d(w)
        if wx is not None:
            wx, wu = np.asarray(wx).reshape(B, -1, nx), np.asarray(wu).reshape(B, -1, nu)
    out = CostDerivatives(np.zeros(B), np.zeros((B, nx)), np.zeros((B, nu)),
                          np.zeros((B, nx, nx)), np.zeros((B, nu, nu)), np.zeros((B, nu, nx)))
    for t in terms:
        res = t.evaluate(x, u, k, w)
        if res.r.shape[-1] == 0:
            continue
        Jx, Ju = res.rx, res.ru
        if res.rw is not None:
            if wx is None:
                Jx = Ju = None
            else:
                Jx = Jx + res.rw @ wx
                Ju = Ju + res.rw @ wu
        c = t.weight
        out.l += 0.5 * c * np.sum(res.r**2, -1)
        if Jx is None:
            continue
        JxT = np.swapaxes(Jx, -1, -2)
        JuT = np.swapaxes(Ju, -1, -2)
        out.lx += c * np.einsum("bdn,bd->bn", Jx, res.r)
        out.lu += c * np.einsum("bdn,bd->bn", Ju, res.r)
        out.lxx += c * JxT @ Jx
        out.luu += c * JuT @ Ju
        out.lux += c * JuT @ Jx
    if single:
        return CostDerivatives(out.l[0], out.lx[0], out.lu[0], out.lxx[0], out.luu[0], out.lux[0])
    return out


def total_cost(stage_terms, terminal_terms, xs, us, ws=None) -> float:
    N = len(us)
    ks = np.arange(N)
    stage = 0.0
    for t in stage_terms:
        stage += float(np.sum(t.value(xs[:-1], us, ks, ws)))
    xN = xs[-1:]
    uN = np.zeros((1, us.shape[1]))
    term = 0.0
    for t in terminal_terms:
        term += float(np.sum(t.value(xN, uN, np.array([N]))))
    return stage + term
