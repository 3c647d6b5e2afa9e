"""Time stepping of the contact-constrained rigid-body model."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .. import contact as ct
from ..contact import ContactSpec
from ..errors import SimulationError
from ..rbd import RobotModel

MAX_DT = 5e-3


@dataclass
class World:
    model: RobotModel
    q: np.ndarray
    v: np.ndarray
    contacts: list[ContactSpec]
    terrain: object = ct.FLAT
    t: float = 0.0
    baumgarte: tuple[float, float] = (400.0, 40.0)
    release_force: float = 0.5
    locked: tuple = ()
    gravity: object = None
    wrenches: list = field(default_factory=list)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if not self.wrenches:
            self.wrenches = [np.zeros(6) for _ in self.contacts]

    @property
    def state(self) -> np.ndarray:
        return np.concatenate([self.q, self.v])

    def kinematics(self, spec: ContactSpec) -> ct.ContactKinematics:
        return ct.contact_kinematics(self.model, self.q, self.v, spec, self.terrain)


def pd_torque(model: RobotModel, q, v, q_des, v_des, kp, kd):
    """Joint-level PD on the actuated coordinates, in actuator order."""
    idx = [model.coord_index(j) for j in model.actuated]
    q, v = np.asarray(q), np.asarray(v)
    return np.asarray(kp) * (np.asarray(q_des) - q[idx]) + np.asarray(kd) * (np.asarray(v_des) - v[idx])


def _impact(model, q, v, rows, terrain):
    """Plastic impact: remove the contact-point velocity of newly engaged contacts."""
    from .. import rbd
    from ..rbd import GeneralizedState

    J = np.vstack([ct.contact_kinematics(model, q, v, c, terrain).jacobian for c in rows])
    M = rbd.mass_matrix(model, q)
    MiJt = np.linalg.solve(M, J.T)
    impulse = np.linalg.lstsq(J @ MiJt, J @ v, rcond=None)[0]
    return v - MiJt @ impulse


def _project_gaps(model, q, v, rows, terrain, iterations=3, tol=1e-10):
    """Smallest mass-weighted position change closing the gaps of ``rows``."""
    from .. import rbd

    for _ in range(iterations):
        ks = [ct.contact_kinematics(model, q, v, c, terrain) for c in rows]
        gaps = np.array([k.gap for k in ks])
        if np.all(np.abs(gaps) <= tol):
            break
        Jn = np.vstack([k.jacobian[1] for k in ks])
        MiJt = np.linalg.solve(rbd.mass_matrix(model, q), Jn.T)
        q = q - MiJt @ np.linalg.lstsq(Jn @ MiJt, gaps, rcond=None)[0]
    return q


def step(world: World, torques, dt: float) -> World:
    """Advance by ``dt`` with semi-implicit Euler.

    Contacts engage when the contact point penetrates the terrain while
    approaching it, and release when their normal force drops below
    ``release_force``.
    """
    if not 0 < dt <= MAX_DT:
        raise ValueError(f"time step must be in (0, {MAX_DT}] s, got {dt}")
    model = world.model
    q, v = world.q, world.v
    contacts = list(world.contacts)
    engaged = []
    for i, c in enumerate(contacts):
        if not c.active:
            ck = ct.contact_kinematics(model, q, v, c, world.terrain)
            if ck.gap < 0 and ck.jacobian[1] @ v < 0:
                contacts[i] = replace(c, active=True)
                engaged.append(contacts[i])
    if engaged:
        v = _impact(model, q, v, engaged, world.terrain)
    u = np.asarray(torques, dtype=float)
    for _ in range(len(contacts) + 1):
        sol = ct.constrained_dynamics(model, q, v, u, contacts, world.terrain, world.baumgarte,
                                      world.locked, world.gravity, check_rank=False)
        wrenches = ct.split_forces(contacts, sol.forces)
        weak = [i for i, (c, w) in enumerate(zip(contacts, wrenches)) if c.active and w[2] < world.release_force]
        if not weak:
            break
        # release the contact pulling hardest on the ground, then re-solve
        i = min(weak, key=lambda j: wrenches[j][2])
        contacts[i] = replace(contacts[i], active=False)
    v_next = v + dt * sol.qdd
    q_next = q + dt * v_next
    if np.all(np.isfinite(q_next)) and np.all(np.isfinite(v_next)):
        # contacts landing during the step engage at its end
        landed = []
        for i, c in enumerate(contacts):
            if not c.active:
                ck = ct.contact_kinematics(model, q_next, v_next, c, world.terrain)
                if ck.gap < 0 and ck.jacobian[1] @ v_next < 0:
                    contacts[i] = replace(c, active=True)
                    landed.append(contacts[i])
        if landed:
            v_next = _impact(model, q_next, v_next, landed, world.terrain)
        active = [c for c in contacts if c.active]
        if active:
            q_next = _project_gaps(model, q_next, v_next, active, world.terrain)
    if not (np.all(np.isfinite(q_next)) and np.all(np.isfinite(v_next))):
        raise SimulationError(f"non-finite state at t={world.t + dt:.4f} s (active contacts "
                              f"{[c.frame for c in contacts if c.active]})")
    return replace(world, q=q_next, v=v_next, contacts=contacts, t=world.t + dt, wrenches=wrenches)
