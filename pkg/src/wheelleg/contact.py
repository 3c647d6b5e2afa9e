"""Contact wrench cones, contact-constrained forward dynamics, ZMP.

Contact wrenches are 6-vectors ``[f_x, f_y, f_z, τ_x, τ_y, τ_z]`` in the local
contact frame: x along the terrain tangent, z along the terrain normal and y
out of the sagittal plane (into the page). In the planar model only
``f_x``, ``f_z`` and ``τ_y`` can be nonzero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rbd
from .errors import DegenerateWrenchError, DimensionError, SingularSystemError
from .rbd import G, GeneralizedState, RobotModel

CONTACT_KINDS = ("point", "wheel_line", "full")
_AXES = ("x", "y", "z")


@dataclass(frozen=True)
class ContactSpec:
    """One contact.

    ``torque_bounds`` holds ``(τ_min, τ_max)`` for the x, y and z moment
    axes; entries for axes the kind leaves free are ignored. A positive
    ``wheel_radius`` turns the frame into the centre of a wheel that rolls
    without slipping on the ground.
    """

    frame: str
    kind: str = "point"
    mu: float = 0.7
    torque_bounds: tuple = ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0))
    wheel_radius: float = 0.0
    active: bool = True

    def __post_init__(self):
        if self.kind not in CONTACT_KINDS:
            raise ValueError(f"contact {self.frame!r}: kind must be one of {CONTACT_KINDS}, got {self.kind!r}")
        if not self.mu > 0:
            raise ValueError(f"contact {self.frame!r}: friction coefficient must be positive, got {self.mu}")
        bounds = tuple(tuple(float(x) for x in b) for b in self.torque_bounds)
        if len(bounds) != 3 or any(len(b) != 2 for b in bounds):
            raise ValueError(f"contact {self.frame!r}: torque_bounds needs three (min, max) pairs")
        for axis, (lo, hi) in zip(_AXES, bounds):
            if lo > hi:
                raise ValueError(f"contact {self.frame!r}: τ_{axis} bounds inverted ({lo} > {hi})")
        object.__setattr__(self, "torque_bounds", bounds)
        if self.wheel_radius < 0:
            raise ValueError(f"contact {self.frame!r}: negative wheel radius")

    @property
    def n_rows(self) -> int:
        """Number of planar constraint rows (tangent, normal[, rotation])."""
        return 3 if self.kind == "full" else 2


@dataclass(frozen=True)
class WrenchCone:
    A: np.ndarray
    b: np.ndarray


def build_cone(spec: ContactSpec) -> WrenchCone:
    """Half-space form ``A w <= b`` of the linearized contact-wrench cone."""
    mu = spec.mu
    friction = np.array([
        [1.0, 0.0, -mu, 0, 0, 0],
        [-1.0, 0.0, -mu, 0, 0, 0],
        [0.0, 1.0, -mu, 0, 0, 0],
        [0.0, -1.0, -mu, 0, 0, 0],
    ])
    unilateral = np.array([[0.0, 0.0, -1.0, 0, 0, 0]])
    if spec.kind == "point":
        return WrenchCone(np.vstack([friction, unilateral]), np.zeros(5))
    rows, b = [friction], [np.zeros(4)]
    for axis, (lo, hi) in enumerate(spec.torque_bounds):
        block = np.zeros((2, 6))
        bb = np.zeros(2)
        if not (spec.kind == "wheel_line" and axis == 1):
            block[0, 3 + axis], block[1, 3 + axis] = 1.0, -1.0
            bb[:] = hi, -lo
        rows.append(block)
        b.append(bb)
    rows.append(unilateral)
    b.append(np.zeros(1))
    return WrenchCone(np.vstack(rows), np.concatenate(b))


def cone_residual(cone: WrenchCone, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape[-1:] != (6,):
        raise DimensionError(f"wrench must have 6 components, got {w.shape}")
    return w @ cone.A.T - cone.b


def cone_penalty(r):
    """Squared hinge penalty ``½ Σ max(0, r_i)²`` and its gradient."""
    r = np.asarray(r, dtype=float)
    viol = np.maximum(r, 0.0)
    return 0.5 * float(np.sum(viol**2)), viol


def planar_to_wrench(spec: ContactSpec, lam) -> np.ndarray:
    """Planar contact force (tangent, normal[, ccw moment]) as a local 6D wrench."""
    lam = np.asarray(lam, dtype=float)
    w = np.zeros(lam.shape[:-1] + (6,))
    w[..., 0] = lam[..., 0]
    w[..., 2] = lam[..., 1]
    if spec.kind == "full":
        # ccw in the (x, z) view is a rotation about -y
        w[..., 4] = -lam[..., 2]
    return w


def wrench_to_planar(spec: ContactSpec, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    lam = [w[..., 0], w[..., 2]]
    if spec.kind == "full":
        lam.append(-w[..., 4])
    return np.stack(lam, -1)


# -- ground --------------------------------------------------------------------

class FlatGround:
    """Horizontal ground plane at height ``z0``."""

    def __init__(self, z0: float = 0.0):
        self.z0 = z0

    def height(self, x):
        return np.full(np.shape(x), self.z0, dtype=float)

    def normal(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.zeros_like(x), np.ones_like(x)], -1)


FLAT = FlatGround()


def tangent_of(normal):
    # t = -G n, so (t, y, n) is right-handed
    return np.stack([normal[..., 1], -normal[..., 0]], -1)


@dataclass
class ContactKinematics:
    point: np.ndarray  # (..., 2) world contact point
    tangent: np.ndarray  # (..., 2)
    normal: np.ndarray  # (..., 2)
    jacobian: np.ndarray  # (..., rows, nv) local rows
    drift: np.ndarray  # (..., rows)
    gap: np.ndarray  # (...,) signed normal distance, negative = penetration


def contact_kinematics(model: RobotModel, q, v, spec: ContactSpec, ground=None, kin=None) -> ContactKinematics:
    """Local-frame Jacobian and drift of one contact.

    The terrain is treated as locally flat at the contact: the normal is
    evaluated at the current contact abscissa and its rate of change is
    neglected in the drift term.
    """
    ground = FLAT if ground is None else ground
    c, _, Jv, jw, a = rbd.frame_terms(model, q, v, spec.frame, kin)
    n = ground.normal(c[..., 0])
    t = tangent_of(n)
    if spec.wheel_radius > 0:
        rho = spec.wheel_radius
        p = c - rho * n
        # material point of the wheel at the contact: v_c + ω G (p - c)
        Jv = Jv - rho * (n @ G.T)[..., :, None] * jw
    else:
        p = c
    rows = [np.einsum("...i,...in->...n", t, Jv), np.einsum("...i,...in->...n", n, Jv)]
    drift = [np.einsum("...i,...i->...", t, a), np.einsum("...i,...i->...", n, a)]
    if spec.kind == "full":
        rows.append(np.broadcast_to(jw, Jv.shape[:-2] + (model.nv,)))
        drift.append(np.zeros(a.shape[:-1]))
    surf = np.stack([p[..., 0], ground.height(p[..., 0])], -1)
    gap = np.einsum("...i,...i->...", n, p - surf)
    return ContactKinematics(p, t, n, np.stack(rows, -2), np.stack(drift, -1), gap)


# -- constrained dynamics -----------------------------------------------------------

@dataclass
class ConstrainedSolution:
    qdd: np.ndarray  # (..., nv)
    forces: np.ndarray  # (..., m) stacked planar contact forces then lock forces
    dqdd_du: np.ndarray | None = None  # (..., nv, nu)
    dforces_du: np.ndarray | None = None  # (..., m, nu)


def constrained_dynamics(
    model: RobotModel,
    q,
    v,
    u,
    contacts: Sequence[ContactSpec] = (),
    ground=None,
    baumgarte: tuple[float, float] | None = None,
    locked: Sequence[int] = (),
    gravity=None,
    control_jacobian: bool = False,
    check_rank: bool = True,
) -> ConstrainedSolution:
    """Batched KKT forward dynamics.

    Solves ``[[M, -Jᵀ], [J, 0]] [q̈; λ] = [Sᵀu - h; -J̇v + stab]`` where
    ``J`` stacks the active contact rows and one row per locked coordinate.
    ``baumgarte=(kp, kd)`` adds ``-kd J v`` to every row and ``-kp·gap`` to
    the normal rows; without it the contact accelerations vanish exactly.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape[-1:] != (model.nu,):
        raise DimensionError(f"u has trailing dimension {u.shape[-1:]}, model expects {model.nu}")
    q, v = np.broadcast_arrays(q, v)
    M, h, kin = rbd.dynamics_terms(model, GeneralizedState(q, v), gravity, return_kinematics=True)
    tau = u @ model.S - h
    active = [c for c in contacts if c.active]
    J_rows, rhs_rows = [], []
    for c in active:
        ck = contact_kinematics(model, q, v, c, ground, kin)
        rhs = -ck.drift
        if baumgarte is not None:
            kp, kd = baumgarte
            rhs = rhs - kd * np.einsum("...rn,...n->...r", ck.jacobian, v)
            rhs[..., 1] -= kp * ck.gap
        J_rows.append(ck.jacobian)
        rhs_rows.append(rhs)
    if len(locked):
        E = np.zeros((len(locked), model.nv))
        E[np.arange(len(locked)), list(locked)] = 1.0
        J_rows.append(np.broadcast_to(E, q.shape[:-1] + E.shape))
        rhs = -np.zeros(q.shape[:-1] + (len(locked),))
        if baumgarte is not None:
            rhs = rhs - baumgarte[1] * v[..., list(locked)]
        rhs_rows.append(rhs)
    nv = model.nv
    if not J_rows:
        rbd._check_mass_matrix(M)
        if control_jacobian:
            X = np.linalg.solve(M, np.broadcast_to(model.S.T, M.shape[:-1] + (model.nu,)))
            qdd = np.einsum("...nk,...k->...n", X, u) - np.linalg.solve(M, h[..., None])[..., 0]
            return ConstrainedSolution(qdd, np.zeros(q.shape[:-1] + (0,)), X, np.zeros(q.shape[:-1] + (0, model.nu)))
        return ConstrainedSolution(np.linalg.solve(M, tau[..., None])[..., 0], np.zeros(q.shape[:-1] + (0,)))
    J = np.concatenate(J_rows, -2)
    gamma = np.concatenate(rhs_rows, -1)
    m = J.shape[-2]
    if check_rank:
        sv = np.linalg.svd(J, compute_uv=False)
        if np.any(sv[..., -1] <= 1e-9 * np.maximum(sv[..., 0], 1.0)) or m > nv:
            names = [c.frame for c in active] + [model.coord_names[i] for i in locked]
            raise SingularSystemError(f"contact Jacobian is rank deficient for contact set {names}")
    K = np.zeros(q.shape[:-1] + (nv + m, nv + m))
    K[..., :nv, :nv] = M
    K[..., :nv, nv:] = -np.swapaxes(J, -1, -2)
    K[..., nv:, :nv] = J
    rhs = np.concatenate([tau, gamma], -1)
    if control_jacobian:
        B = np.zeros(q.shape[:-1] + (nv + m, model.nu + 1))
        B[..., :nv, :model.nu] = model.S.T
        B[..., :, -1] = rhs
        sol = np.linalg.solve(K, B)
        x = sol[..., -1]
        return ConstrainedSolution(x[..., :nv], x[..., nv:], sol[..., :nv, :-1], sol[..., nv:, :-1])
    try:
        x = np.linalg.solve(K, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        names = [c.frame for c in active]
        raise SingularSystemError(f"KKT matrix is singular for contact set {names}") from exc
    return ConstrainedSolution(x[..., :nv], x[..., nv:])


def split_forces(contacts: Sequence[ContactSpec], forces) -> list[np.ndarray]:
    """Split stacked planar forces into one local 6D wrench per contact
    (zeros for inactive contacts). Lock forces at the tail are dropped."""
    out, i = [], 0
    forces = np.asarray(forces)
    for c in contacts:
        if c.active:
            out.append(planar_to_wrench(c, forces[..., i:i + c.n_rows]))
            i += c.n_rows
        else:
            out.append(np.zeros(forces.shape[:-1] + (6,)))
    return out


def fd_constrained(
    model: RobotModel,
    s: GeneralizedState,
    u,
    contacts: Sequence[ContactSpec] = (),
    ground=None,
    baumgarte=None,
    locked: Sequence[int] = (),
    gravity=None,
):
    """Contact-constrained forward dynamics for one state.

    Returns ``(q̈, wrenches)`` with one local contact wrench per entry of
    ``contacts`` (zero for inactive ones). With no active contacts and no
    locks this is the unconstrained dynamics.
    """
    q = np.asarray(s.q, dtype=float)
    if q.shape != (model.nq,) or np.shape(s.v) != (model.nv,):
        raise DimensionError(f"state must have {model.nq} positions and {model.nv} velocities")
    for c in contacts:
        model.frame(c.frame)
    sol = constrained_dynamics(model, s.q, s.v, u, contacts, ground, baumgarte, locked, gravity)
    if not any(c.active for c in contacts) and not len(locked):
        return rbd.fd_unconstrained(model, s, u, gravity), [np.zeros(6) for _ in contacts]
    return sol.qdd, split_forces(contacts, sol.forces)


def contact_acceleration_residual(model, s: GeneralizedState, qdd, contacts, ground=None) -> float:
    """``‖J q̈ + J̇ v‖∞`` over the active contacts."""
    worst = 0.0
    for c in contacts:
        if c.active:
            ck = contact_kinematics(model, s.q, s.v, c, ground)
            worst = max(worst, float(np.max(np.abs(ck.jacobian @ qdd + ck.drift))))
    return worst


def newton_euler_residual(model: RobotModel, q, wrenches, f_ext, ground=None) -> np.ndarray:
    """``Σ J_iᵀ f_i + f_ext`` for ``wrenches = [(ContactSpec, local wrench), ...]``."""
    q = np.asarray(q, dtype=float)
    out = np.array(f_ext, dtype=float, copy=True)
    if out.shape != (model.nv,):
        raise DimensionError(f"f_ext must have {model.nv} entries")
    zero_v = np.zeros(model.nv)
    for spec, w in wrenches:
        ck = contact_kinematics(model, q, zero_v, spec, ground)
        out += ck.jacobian.T @ wrench_to_planar(spec, w)
    return out


# -- ZMP -------------------------------------------------------------------------------

def _plane_basis(n):
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = ref - n * (n @ ref)
    e1 /= np.linalg.norm(e1)
    return n, e1, np.cross(n, e1)


def zmp(wrenches, n=(0.0, 0.0, 1.0), tol: float = 1e-9) -> np.ndarray:
    """Zero-moment point of a set of world-frame wrenches.

    ``wrenches`` is a sequence of ``(position, wrench)`` with 3D positions and
    6D wrenches ``[f, τ]`` expressed in world axes at those positions. Returns
    the in-plane coordinates of ``(n × τ_O) / (n · f)`` on the plane through
    the origin with normal ``n``; for ``n = z`` these are world (x, y).
    """
    n, e1, e2 = _plane_basis(n)
    f = np.zeros(3)
    tau = np.zeros(3)
    for p, w in wrenches:
        p = np.asarray(p, dtype=float)
        w = np.asarray(w, dtype=float)
        f += w[:3]
        tau += np.cross(p, w[:3]) + w[3:]
    fn = float(n @ f)
    if fn <= tol:
        raise DegenerateWrenchError(f"resultant normal force {fn:.3g} N is not positive (flight phase)")
    p = np.cross(n, tau) / fn
    return np.array([p @ e1, p @ e2])


def project_to_plane(points, n=(0.0, 0.0, 1.0)) -> np.ndarray:
    n, e1, e2 = _plane_basis(n)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.stack([pts @ e1, pts @ e2], -1)


def in_support(point, contact_points, n=(0.0, 0.0, 1.0), tol: float = 1e-9) -> bool:
    """Whether a plane point lies in the convex hull of the projected contacts."""
    from scipy.spatial import ConvexHull, QhullError

    pts = project_to_plane(contact_points, n)
    x = np.asarray(point, dtype=float)
    if len(pts) >= 3:
        try:
            hull = ConvexHull(pts)
        except QhullError:
            pass
        else:
            return bool(np.all(hull.equations[:, :2] @ x + hull.equations[:, 2] <= tol))
    # Degenerate hull: a point or a segment.
    centre = pts.mean(0)
    d = pts - centre
    u, s, vt = np.linalg.svd(d, full_matrices=False)
    if s.size == 0 or s[0] <= tol:
        return bool(np.linalg.norm(x - centre) <= tol)
    axis = vt[0]
    along = d @ axis
    rel = x - centre
    if abs(rel @ np.array([-axis[1], axis[0]])) > tol:
        return False
    return bool(along.min() - tol <= rel @ axis <= along.max() + tol)


def planar_wrench_to_world(spec: ContactSpec, ck: ContactKinematics, w):
    """Map a local contact wrench of the planar model to a world 3D position and
    world-axis wrench, for :func:`zmp`."""
    f2 = ck.tangent * w[0] + ck.normal * w[2]
    pos = np.array([ck.point[0], 0.0, ck.point[1]])
    world = np.array([f2[0], 0.0, f2[1], 0.0, w[4], 0.0])
    return pos, world
