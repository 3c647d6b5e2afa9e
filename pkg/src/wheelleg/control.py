"""Receding-horizon whole-body control: mode machine, feedback policy and
the high-rate linear feedback controller (LFC)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import contact as ct
from . import ocp, swerve
from .errors import DimensionError, SolverError
from .rbd import GeneralizedState, RobotModel

log = logging.getLogger(__name__)


class LocomotionMode(Enum):
    WHEELED = "wheeled"
    LEGGED = "legged"


# Joints frozen by constraint rows in each mode. In wheeled mode nothing is
# frozen; the legs keep a constant posture reference instead (no lifting).
LOCKED_JOINTS = {
    LocomotionMode.WHEELED: (),
    LocomotionMode.LEGGED: ("front_wheel", "rear_wheel"),
}
HELD_REFERENCE_JOINTS = {
    LocomotionMode.WHEELED: ("front_hip", "front_knee", "rear_hip", "rear_knee"),
    LocomotionMode.LEGGED: (),
}


def locked_coordinates(model: RobotModel, mode: LocomotionMode) -> list[int]:
    return [model.coord_index(j) for j in LOCKED_JOINTS[mode] if any(j == jt.name for jt in model.joints)]


@dataclass
class ModeMachine:
    mode: LocomotionMode = LocomotionMode.WHEELED
    pending: LocomotionMode | None = None
    events: list = field(default_factory=list)


def mode_step(machine: ModeMachine, command: LocomotionMode | str | None, contacts_active: Sequence[bool], t: float = 0.0) -> LocomotionMode:
    """Advance the mode machine.

    A change of mode only happens while every contact is active; otherwise
    the request is kept pending and recorded as deferred. A ``None``
    command retries a pending request.
    """
    if command is not None:
        command = LocomotionMode(command)
        if command == machine.mode:
            if machine.pending is not None:
                machine.events.append((t, "cancelled", machine.pending.value))
            machine.pending = None
            return machine.mode
        machine.pending = command
    if machine.pending is None:
        return machine.mode
    if all(contacts_active):
        machine.events.append((t, "switched", f"{machine.mode.value}->{machine.pending.value}"))
        machine.mode, machine.pending = machine.pending, None
    elif command is not None:
        machine.events.append((t, "deferred", machine.pending.value))
    return machine.mode


@dataclass(frozen=True)
class FeedbackPolicy:
    """Per-node ``τ_ff``, gain ``K`` and desired state, sampled every ``dt``
    seconds from ``t0``."""

    tau_ff: np.ndarray  # (N, nu)
    K: np.ndarray       # (N, nu, nx)
    x_des: np.ndarray   # (N, nx)
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        tau = np.atleast_2d(np.asarray(self.tau_ff, dtype=float))
        N, nu = tau.shape
        K = np.asarray(self.K, dtype=float).reshape(N, nu, -1)
        x = np.asarray(self.x_des, dtype=float).reshape(N, K.shape[-1])
        if not self.dt > 0:
            raise ValueError(f"policy node period must be positive, got {self.dt}")
        for name, a in (("tau_ff", tau), ("K", K), ("x_des", x)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def N(self) -> int:
        return len(self.tau_ff)

    @classmethod
    def from_solution(cls, sol: ocp.OcpSolution, dt: float, t0: float = 0.0) -> "FeedbackPolicy":
        return cls(sol.us, sol.K, sol.xs[:-1], dt, t0)


def lfc_torque(policy: FeedbackPolicy, s, t: float):
    """``τ = τ_ff,k + K_k (s - s_des,k)`` with ``k = floor((t - t0)/dt)``.

    Returns ``(τ, held)``; ``held`` is True when ``t`` lies past the horizon
    and the last node was used.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != policy.x_des.shape[1:]:
        raise DimensionError(f"state has shape {s.shape}, policy expects {policy.x_des.shape[1:]}")
    k = int(np.floor((t - policy.t0) / policy.dt + 1e-9))
    held = k >= policy.N
    k = min(max(k, 0), policy.N - 1)
    return policy.tau_ff[k] + policy.K[k] @ (s - policy.x_des[k]), held


def static_torques(model: RobotModel, q, contacts: Sequence[ct.ContactSpec], ground=None, locked: Sequence[int] = (), gravity=None):
    """Minimum-norm actuator torques holding ``q`` at rest with the given
    contacts (and locks) carrying the rest of the gravity load."""
    from . import rbd

    q = np.asarray(q, dtype=float)
    v = np.zeros(model.nv)
    h = rbd.bias_forces(model, GeneralizedState(q, v), gravity)
    cols = [model.S.T]
    for c in contacts:
        if c.active:
            cols.append(ct.contact_kinematics(model, q, v, c, ground).jacobian.T)
    for i in locked:
        e = np.zeros((model.nv, 1))
        e[i] = 1.0
        cols.append(e)
    A = np.hstack(cols)
    # weight torques over forces so the load goes to the contacts
    scale = np.ones(A.shape[1])
    scale[model.nu:] = 1e3
    z = np.linalg.lstsq(A * scale, h, rcond=None)[0] * scale
    return z[:model.nu]


@dataclass
class StepReport:
    t: float
    iterations: int
    converged: bool
    warm: bool
    degraded: bool
    cost: float
    wall_time: float


class RecedingHorizonController:
    """Re-solves a horizon-``N`` problem from the measured state and emits a
    feedback policy for the LFC.

    ``problem_factory(x0, t, mode)`` builds the :class:`ocp.OcpProblem`
    (references anchored at time ``t``). With a ``wheel_layout`` the
    controller also turns the planned body twist into swerve wheel commands
    in wheeled mode.
    """

    def __init__(
        self,
        problem_factory: Callable,
        dt: float,
        options: ocp.SolverOptions | None = None,
        mode: LocomotionMode = LocomotionMode.WHEELED,
        warm_start: bool = True,
        wheel_layout: swerve.WheelLayout | None = None,
    ):
        self.factory = problem_factory
        self.dt = float(dt)
        self.options = options or ocp.SolverOptions(max_iter=10)
        self.machine = ModeMachine(mode)
        self.warm_start = warm_start
        self.layout = wheel_layout
        self.steering = swerve.SteeringMemory(len(wheel_layout.positions)) if wheel_layout is not None else None
        self.solution: ocp.OcpSolution | None = None
        self.policy: FeedbackPolicy | None = None
        self.reports: list[StepReport] = []
        self.degraded_steps = 0

    @property
    def mode(self) -> LocomotionMode:
        return self.machine.mode


def rh_step(controller: RecedingHorizonController, x, t: float = 0.0):
    """One receding-horizon update. Returns ``(policy, wheel_commands)``."""
    import time

    c = controller
    x = np.asarray(x, dtype=float)
    problem = c.factory(x, t, c.mode)
    init = None
    warm = c.warm_start and c.solution is not None and problem.N >= 2 and c.solution.N == problem.N
    if warm:
        init = ocp.shift_warm_start(c.solution)
    t0 = time.perf_counter()
    try:
        sol = ocp.solve(problem, init, c.options)
        ok = sol.converged and np.all(np.isfinite(sol.us)) and np.all(np.isfinite(sol.K))
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("solve failed at t=%.3f: %s", t, exc)
        sol, ok = None, False
    wall = time.perf_counter() - t0
    degraded = not ok and c.policy is not None
    if ok or c.policy is None:
        if sol is None:
            raise SolverError(f"initial solve failed at t={t:.3f}")
        c.solution = sol
        c.policy = FeedbackPolicy.from_solution(sol, problem.dt, t)
    else:
        c.degraded_steps += 1
        log.info("solver did not converge at t=%.3f; keeping previous policy", t)
    c.reports.append(StepReport(t, sol.iterations if sol else -1, bool(ok), warm, degraded,
                                sol.cost if sol else np.nan, wall))
    commands = None
    if c.layout is not None and c.mode == LocomotionMode.WHEELED:
        twist = c.solution.xs[min(1, c.solution.N)][3:6]
        commands = c.steering.command(swerve.SwerveState(vx=twist[0], vy=twist[1], omega=twist[2]), c.layout)
    return c.policy, commands
