"""Planar rigid-body trees: kinematics, mass matrix, bias forces, forward dynamics.

Everything lives in the sagittal (x, z) plane. Angles are counterclockwise
when viewed with x to the right and z up. All kernels broadcast over leading
batch dimensions of ``q`` and ``v`` so a full finite-difference stencil can be
evaluated in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, ModelError, SingularSystemError, UnknownFrameError

# d/dθ R(θ) = G R(θ); also the 2D cross-product operator ω × r = ω G r.
G = np.array([[0.0, -1.0], [1.0, 0.0]])

JOINT_KINDS = ("floating_planar", "revolute", "prismatic", "fixed")
_NDOF = {"floating_planar": 3, "revolute": 1, "prismatic": 1, "fixed": 0}


def rot(theta):
    """Batched planar rotation matrices, shape ``theta.shape + (2, 2)``."""
    c, s = np.cos(theta), np.sin(theta)
    R = np.empty(np.shape(theta) + (2, 2))
    R[..., 0, 0] = c
    R[..., 0, 1] = -s
    R[..., 1, 0] = s
    R[..., 1, 1] = c
    return R


@dataclass(frozen=True)
class Body:
    name: str
    mass: float
    com: tuple[float, float] = (0.0, 0.0)
    inertia: float = 0.0


@dataclass(frozen=True)
class Joint:
    """Joint connecting ``child`` to ``parent`` (``None`` means the world).

    ``origin`` is the joint placement in the parent frame; ``axis`` is the
    sliding direction (parent frame) of a prismatic joint.
    """

    name: str
    kind: str
    parent: str | None
    child: str
    origin: tuple[float, float] = (0.0, 0.0)
    axis: tuple[float, float] = (1.0, 0.0)
    limits: tuple[float, float] | None = None


@dataclass(frozen=True)
class Frame:
    name: str
    body: str
    offset: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class GeneralizedState:
    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.q.shape[-1:] != self.v.shape[-1:]:
            raise DimensionError(f"len(q)={self.q.shape[-1]} != len(v)={self.v.shape[-1]}")


class RobotModel:
    """Immutable planar kinematic tree.

    Parameters
    ----------
    bodies, joints, frames:
        Tree description. Every body is the child of exactly one joint and the
        root joint has ``parent=None``.
    actuated:
        Names of the joints driven by the control vector, in control order.
    gravity:
        Default gravity vector in world (x, z).
    """

    def __init__(
        self,
        bodies: Sequence[Body],
        joints: Sequence[Joint],
        frames: Sequence[Frame] = (),
        actuated: Sequence[str] = (),
        gravity: Sequence[float] = (0.0, -9.81),
        name: str = "robot",
    ):
        self.name = name
        self.gravity = np.asarray(gravity, dtype=float)
        body_by_name = {b.name: b for b in bodies}
        if len(body_by_name) != len(bodies):
            raise ModelError("duplicate body names")
        joint_of = {}
        for j in joints:
            if j.kind not in JOINT_KINDS:
                raise ModelError(f"joint {j.name!r}: unknown kind {j.kind!r}")
            if j.child not in body_by_name:
                raise ModelError(f"joint {j.name!r}: unknown child body {j.child!r}")
            if j.parent is not None and j.parent not in body_by_name:
                raise ModelError(f"joint {j.name!r}: unknown parent body {j.parent!r}")
            if j.child in joint_of:
                raise ModelError(f"body {j.child!r} has two parent joints")
            if j.kind == "floating_planar" and j.parent is not None:
                raise ModelError(f"joint {j.name!r}: floating base must attach to the world")
            joint_of[j.child] = j
        missing = set(body_by_name) - set(joint_of)
        if missing:
            raise ModelError(f"bodies without a joint: {sorted(missing)}")
        roots = [j for j in joints if j.parent is None]
        if len(roots) != 1:
            raise ModelError(f"expected exactly one root joint, found {len(roots)}")

        # Topological order; a cycle leaves bodies unvisited.
        order: list[Joint] = []
        placed: set[str] = set()
        frontier = [roots[0]]
        children: dict[str | None, list[Joint]] = {}
        for j in joints:
            children.setdefault(j.parent, []).append(j)
        while frontier:
            j = frontier.pop(0)
            order.append(j)
            placed.add(j.child)
            frontier.extend(children.get(j.child, []))
        if len(order) != len(joints):
            raise ModelError("joint graph is not a tree rooted at the world")

        self.bodies = tuple(body_by_name[j.child] for j in order)
        self.joints = tuple(order)
        self.frames = tuple(frames)
        self._body_index = {b.name: i for i, b in enumerate(self.bodies)}
        self._frame_by_name = {f.name: f for f in self.frames}
        for f in self.frames:
            if f.body not in self._body_index:
                raise ModelError(f"frame {f.name!r}: unknown body {f.body!r}")
        self._joint_by_name = {j.name: j for j in self.joints}

        # Coordinate bookkeeping.
        coord_names, dof_body, dof_code, idx_q = [], [], [], {}
        for bi, j in enumerate(self.joints):
            start = len(coord_names)
            if j.kind == "floating_planar":
                coord_names += [f"{j.name}.x", f"{j.name}.z", f"{j.name}.pitch"]
                dof_code += ["tx", "tz", "rot"]
            elif j.kind == "revolute":
                coord_names.append(j.name)
                dof_code.append("rot")
            elif j.kind == "prismatic":
                coord_names.append(j.name)
                dof_code.append("slide")
            dof_body += [bi] * _NDOF[j.kind]
            idx_q[j.name] = slice(start, len(coord_names))
        self.coord_names = tuple(coord_names)
        self.nv = self.nq = len(coord_names)
        self._dof_body = np.array(dof_body, dtype=int)
        self._dof_code = tuple(dof_code)
        self._joint_slice = idx_q
        self.parent_index = np.array(
            [-1 if j.parent is None else self._body_index[j.parent] for j in self.joints]
        )

        # ancestor[b, d]: dof d moves body b.
        anc = np.zeros((len(self.bodies), self.nv), dtype=bool)
        for bi in range(len(self.bodies)):
            k = bi
            while k >= 0:
                anc[bi, self._dof_body == k] = True
                k = self.parent_index[k]
        self._ancestor = anc
        self._rot_dof = np.array([c == "rot" for c in dof_code], dtype=float)
        self._masses = np.array([b.mass for b in self.bodies], dtype=float)
        self._inertias = np.array([b.inertia for b in self.bodies], dtype=float)
        self._coms = np.array([b.com for b in self.bodies], dtype=float).reshape(-1, 2)
        # Angular Jacobians are constant in the plane.
        self._ang_jac = anc * self._rot_dof[None, :]
        self._m_rot = np.einsum("b,bn,bm->nm", self._inertias, self._ang_jac, self._ang_jac)

        # Actuation selection.
        self.actuated = tuple(actuated)
        rows = []
        for name in self.actuated:
            j = self._joint_by_name.get(name)
            if j is None:
                raise ModelError(f"actuated joint {name!r} does not exist")
            if j.kind not in ("revolute", "prismatic"):
                raise ModelError(f"actuated joint {name!r} must be revolute or prismatic")
            rows.append(self._joint_slice[name].start)
        self.nu = len(rows)
        self.S = np.zeros((self.nu, self.nv))
        self.S[np.arange(self.nu), rows] = 1.0
        if self.nu and np.linalg.matrix_rank(self.S) != self.nu:
            raise ModelError("selection matrix is rank deficient")

        lo = np.full(self.nq, -np.inf)
        hi = np.full(self.nq, np.inf)
        for j in self.joints:
            if j.limits is not None and _NDOF[j.kind] == 1:
                lo[self._joint_slice[j.name]] = j.limits[0]
                hi[self._joint_slice[j.name]] = j.limits[1]
        self.lower, self.upper = lo, hi

    # -- lookups ---------------------------------------------------------
    @property
    def total_mass(self) -> float:
        return float(self._masses.sum())

    def frame(self, name: str) -> Frame:
        try:
            return self._frame_by_name[name]
        except KeyError:
            raise UnknownFrameError(name) from None

    def body_index(self, name: str) -> int:
        return self._body_index[name]

    def joint(self, name: str) -> Joint:
        return self._joint_by_name[name]

    def coord_index(self, name: str) -> int:
        """Index of a coordinate, by coordinate name or single-dof joint name."""
        try:
            return self.coord_names.index(name)
        except ValueError:
            raise KeyError(f"unknown coordinate {name!r}") from None

    def joint_slice(self, name: str) -> slice:
        return self._joint_slice[name]

    def actuator_index(self, joint_name: str) -> int:
        return self.actuated.index(joint_name)

    def neutral(self) -> np.ndarray:
        q = np.zeros(self.nq)
        return np.clip(q, self.lower, self.upper)

    def __repr__(self):
        return f"RobotModel({self.name!r}, nv={self.nv}, nu={self.nu}, bodies={len(self.bodies)})"


def check_limits(model: RobotModel, q) -> list[tuple[str, float, float, float]]:
    """Return ``(coordinate, value, lower, upper)`` for every limit violation."""
    q = _check_dim(model, q, "q")
    out = []
    for i in np.flatnonzero((q < model.lower) | (q > model.upper)):
        out.append((model.coord_names[i], float(q[i]), float(model.lower[i]), float(model.upper[i])))
    return out


def clamp_to_limits(model: RobotModel, q):
    """Clamp ``q`` into the joint limits; returns ``(q_clamped, violations)``."""
    violations = check_limits(model, q)
    return np.clip(np.asarray(q, dtype=float), model.lower, model.upper), violations


def _check_dim(model, x, what):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != model.nv:
        raise DimensionError(f"{what} has trailing dimension {x.shape[-1:] or ()}, model expects {model.nv}")
    return x


# -- kinematics ---------------------------------------------------------------

@dataclass
class Kinematics:
    """Per-body placement, batched. Velocity-dependent fields are ``None``
    when no velocity was supplied."""

    origin: np.ndarray  # (..., nb, 2)
    angle: np.ndarray  # (..., nb)
    joint_point: np.ndarray  # (..., nv, 2) rotation centre of each dof
    translation: np.ndarray  # (..., nv, 2) translational column part of each dof
    omega: np.ndarray | None = None  # (..., nb)
    drift: np.ndarray | None = None  # (..., nb, 2) origin acceleration at zero q̈
    extras: dict = field(default_factory=dict)


def kinematics(model: RobotModel, q, v=None) -> Kinematics:
    q = _check_dim(model, q, "q")
    if v is not None:
        v = _check_dim(model, v, "v")
        q, v = np.broadcast_arrays(q, v)
    batch = q.shape[:-1]
    nb = len(model.bodies)
    origin = [None] * nb
    angle = [None] * nb
    omega = [None] * nb
    drift = [None] * nb
    jpoint = [None] * model.nv
    trans = [None] * model.nv
    zero2 = np.zeros(batch + (2,))
    zero = np.zeros(batch)
    for bi, j in enumerate(model.joints):
        p = model.parent_index[bi]
        if p < 0:
            o_p, th_p, w_p, a_p = zero2, zero, zero, zero2
        else:
            o_p, th_p, w_p, a_p = origin[p], angle[p], omega[p], drift[p]
        sl = model.joint_slice(j.name)
        off = np.asarray(j.origin, dtype=float)
        if j.kind == "floating_planar":
            i = sl.start
            o = np.stack([q[..., i], q[..., i + 1]], -1)
            th = q[..., i + 2]
            jpoint[i] = jpoint[i + 1] = jpoint[i + 2] = o
            trans[i] = np.broadcast_to([1.0, 0.0], batch + (2,))
            trans[i + 1] = np.broadcast_to([0.0, 1.0], batch + (2,))
            trans[i + 2] = zero2
            if v is not None:
                w, a = v[..., i + 2], zero2
        else:
            R_p = rot(th_p)
            if j.kind == "prismatic":
                i = sl.start
                ax = R_p @ np.asarray(j.axis, dtype=float)
                r = R_p @ off + ax * q[..., i, None]
                jpoint[i], trans[i] = o_p, ax
            else:
                r = R_p @ off
            o = o_p + r
            th = th_p + q[..., sl.start] if j.kind == "revolute" else th_p
            if j.kind == "revolute":
                jpoint[sl.start], trans[sl.start] = o, zero2
            if v is not None:
                a = a_p - (w_p**2)[..., None] * r
                if j.kind == "revolute":
                    w = w_p + v[..., sl.start]
                else:
                    w = w_p
                if j.kind == "prismatic":
                    a = a + 2.0 * (w_p * v[..., sl.start])[..., None] * (ax @ G.T)
        origin[bi], angle[bi] = o, th
        if v is not None:
            omega[bi], drift[bi] = w, a
    kin = Kinematics(
        origin=np.stack(origin, -2),
        angle=np.stack(angle, -1),
        joint_point=np.stack(jpoint, -2) if model.nv else np.zeros(batch + (0, 2)),
        translation=np.stack(trans, -2) if model.nv else np.zeros(batch + (0, 2)),
    )
    if v is not None:
        kin.omega = np.stack(omega, -1)
        kin.drift = np.stack(drift, -2)
    return kin


def _world_points(kin: Kinematics, body_idx, offsets):
    """World position of body-fixed points. ``body_idx`` (k,), ``offsets`` (k, 2)."""
    R = rot(kin.angle[..., body_idx])  # (..., k, 2, 2)
    return kin.origin[..., body_idx, :] + np.einsum("...kij,kj->...ki", R, offsets)


def _point_jacobians(model, kin, body_idx, points):
    """Translational Jacobians of world points ``points`` (..., k, 2) rigidly
    attached to bodies ``body_idx``. Returns (..., k, 2, nv)."""
    rel = points[..., :, None, :] - kin.joint_point[..., None, :, :]  # (..., k, nv, 2)
    mask = model._ancestor[body_idx]  # (k, nv)
    rd = model._rot_dof * mask
    J = np.empty(rel.shape[:-2] + (2, model.nv))
    # G r = (-r_z, r_x)
    J[..., 0, :] = kin.translation[..., None, :, 0] * mask - rd * rel[..., 1]
    J[..., 1, :] = kin.translation[..., None, :, 1] * mask + rd * rel[..., 0]
    return J


def _point_drift(kin, body_idx, points):
    rel = points - kin.origin[..., body_idx, :]
    return kin.drift[..., body_idx, :] - (kin.omega[..., body_idx] ** 2)[..., None] * rel


def forward_kinematics(model: RobotModel, q, frame: str):
    """World position (..., 2) and angle (...) of a frame."""
    f = model.frame(frame)
    kin = kinematics(model, q)
    bi = model.body_index(f.body)
    p = _world_points(kin, np.array([bi]), np.asarray([f.offset], dtype=float))[..., 0, :]
    return p, kin.angle[..., bi]


def frame_jacobian(model: RobotModel, q, frame: str) -> np.ndarray:
    """Frame Jacobian with rows ``[v_x, v_z, ω]``, shape (..., 3, nv)."""
    f = model.frame(frame)
    kin = kinematics(model, q)
    bi = np.array([model.body_index(f.body)])
    p = _world_points(kin, bi, np.asarray([f.offset], dtype=float))
    Jv = _point_jacobians(model, kin, bi, p)[..., 0, :, :]
    Jw = np.broadcast_to(model._ang_jac[bi[0]], Jv.shape[:-2] + (1, model.nv))
    return np.concatenate([Jv, Jw], -2)


def jdot_v(model: RobotModel, s: GeneralizedState, frame: str) -> np.ndarray:
    """Drift acceleration ``J̇(q, v) v`` of a frame, rows ``[a_x, a_z, α]``."""
    f = model.frame(frame)
    kin = kinematics(model, s.q, s.v)
    bi = np.array([model.body_index(f.body)])
    p = _world_points(kin, bi, np.asarray([f.offset], dtype=float))
    a = _point_drift(kin, bi, p)[..., 0, :]
    return np.concatenate([a, np.zeros(a.shape[:-1] + (1,))], -1)


def frame_terms(model: RobotModel, q, v, frame: str, kin: Kinematics | None = None):
    """Position, angle, Jacobian and drift of a frame from one kinematic pass
    (``kin`` may supply that pass)."""
    f = model.frame(frame)
    if kin is None:
        kin = kinematics(model, q, v)
    bi = np.array([model.body_index(f.body)])
    p = _world_points(kin, bi, np.asarray([f.offset], dtype=float))
    Jv = _point_jacobians(model, kin, bi, p)[..., 0, :, :]
    drift = _point_drift(kin, bi, p)[..., 0, :]
    return p[..., 0, :], kin.angle[..., bi[0]], Jv, model._ang_jac[bi[0]], drift


def center_of_mass(model: RobotModel, q):
    """Whole-body CoM position (..., 2) and its Jacobian (..., 2, nv)."""
    kin = kinematics(model, q)
    idx = np.arange(len(model.bodies))
    c = _world_points(kin, idx, model._coms)
    Jc = _point_jacobians(model, kin, idx, c)
    m = model._masses
    M = m.sum()
    return np.einsum("b,...bi->...i", m, c) / M, np.einsum("b,...bin->...in", m, Jc) / M


# -- dynamics -------------------------------------------------------------------

def _dynamics_terms(model, q, v, gravity):
    kin = kinematics(model, q, v)
    idx = np.arange(len(model.bodies))
    c = _world_points(kin, idx, model._coms)
    Jc = _point_jacobians(model, kin, idx, c)
    m = model._masses
    nb = len(m)
    # stack the 2 rows of every body: Σ m Jᵀ J as one matrix product
    Jw = (Jc * np.sqrt(m)[:, None, None]).reshape(Jc.shape[:-3] + (2 * nb, model.nv))
    JwT = np.swapaxes(Jw, -1, -2)
    M = JwT @ Jw + model._m_rot
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    acc = (_point_drift(kin, idx, c) - gravity) * np.sqrt(m)[:, None]
    h = (JwT @ acc.reshape(acc.shape[:-2] + (2 * nb, 1)))[..., 0]
    return M, h, kin


def mass_matrix(model: RobotModel, q) -> np.ndarray:
    """Generalized inertia matrix ``M(q)``, shape (..., nv, nv)."""
    q = _check_dim(model, q, "q")
    M, _, _ = _dynamics_terms(model, q, np.zeros_like(q), model.gravity)
    return M


def bias_forces(model: RobotModel, s: GeneralizedState, gravity=None) -> np.ndarray:
    """Coriolis, centrifugal and gravity forces ``h(q, v)``."""
    g = model.gravity if gravity is None else np.asarray(gravity, dtype=float)
    _, h, _ = _dynamics_terms(model, _check_dim(model, s.q, "q"), _check_dim(model, s.v, "v"), g)
    return h


def dynamics_terms(model: RobotModel, s: GeneralizedState, gravity=None, return_kinematics: bool = False):
    """``(M, h)`` from a single kinematic pass (plus that pass on request)."""
    g = model.gravity if gravity is None else np.asarray(gravity, dtype=float)
    M, h, kin = _dynamics_terms(model, _check_dim(model, s.q, "q"), _check_dim(model, s.v, "v"), g)
    return (M, h, kin) if return_kinematics else (M, h)


def kinetic_energy(model: RobotModel, s: GeneralizedState) -> np.ndarray:
    M = mass_matrix(model, s.q)
    return 0.5 * np.einsum("...i,...ij,...j->...", s.v, M, s.v)


def fd_unconstrained(model: RobotModel, s: GeneralizedState, u, gravity=None) -> np.ndarray:
    """Free-motion forward dynamics ``q̈ = M⁻¹(Sᵀu − h)``."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1:] != (model.nu,):
        raise DimensionError(f"u has trailing dimension {u.shape[-1:]}, model expects {model.nu}")
    M, h = dynamics_terms(model, s, gravity)
    _check_mass_matrix(M)
    rhs = u @ model.S - h
    return np.linalg.solve(M, rhs[..., None])[..., 0]


def _check_mass_matrix(M):
    d = np.diagonal(M, axis1=-2, axis2=-1)
    if np.any(d <= 0.0):
        raise SingularSystemError("mass matrix has a non-positive diagonal entry (degenerate inertia)")
    # Scale-free conditioning test on the Jacobi-scaled matrix.
    scale = 1.0 / np.sqrt(d)
    Ms = M * scale[..., :, None] * scale[..., None, :]
    if np.min(np.linalg.eigvalsh(Ms)) < 1e-12:
        raise SingularSystemError("mass matrix is singular (degenerate inertia)")
