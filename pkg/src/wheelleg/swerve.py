"""Four-wheel independent steering/drive kinematics.

Body twists are ordered ``(v_x, v_y, ω)`` in the body frame. Wheel modules sit
at fixed body-frame positions; each has a steering angle ``δ`` and a spin rate
``φ̇`` (positive spin drives the module along ``(cos δ, sin δ)``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SingularSystemError

J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


def wrap_angle(a):
    """Wrap to (-π, π]."""
    a = np.asarray(a, dtype=float)
    out = a - 2.0 * np.pi * np.ceil((a - np.pi) / (2.0 * np.pi))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SwerveState:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.theta, self.vx, self.vy, self.omega)
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite swerve state {vals}")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @classmethod
    def from_array(cls, a) -> "SwerveState":
        return cls(*(float(v) for v in a))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.vx, self.vy, self.omega])

    @property
    def twist(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.omega])


@dataclass(frozen=True)
class WheelLayout:
    positions: np.ndarray  # (4, 2) body frame
    rho: float
    allow_degenerate: bool = False

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if self.rho <= 0:
            raise ValueError(f"wheel radius must be positive, got {self.rho}")
        if not self.allow_degenerate:
            for i in range(len(p)):
                for j in range(i + 1, len(p)):
                    if np.allclose(p[i], p[j]):
                        raise ValueError(f"wheels {i} and {j} share a position")
        object.__setattr__(self, "positions", p)

    @classmethod
    def rectangle(cls, half_length: float, half_width: float, rho: float) -> "WheelLayout":
        a, b = half_length, half_width
        return cls(np.array([[a, b], [a, -b], [-a, b], [-a, -b]]), rho)

    def centered(self) -> "WheelLayout":
        """Same layout with the body origin moved to the wheel centroid."""
        return WheelLayout(self.positions - self.positions.mean(0), self.rho, self.allow_degenerate)

    @property
    def radius_sq(self) -> float:
        return float(np.sum(self.positions**2))


@dataclass(frozen=True)
class WheelCommand:
    delta: float
    phidot: float
    flipped: bool = False


def wheel_velocity(state: SwerveState, r) -> np.ndarray:
    """Contact-point velocity of a wheel at body position ``r``."""
    return np.array([state.vx, state.vy]) + state.omega * (J2 @ np.asarray(r, dtype=float))


def desired_steering(state: SwerveState, r, hold: float | None = None, tol: float = 1e-9):
    """Steering angle aligned with the wheel velocity.

    When the wheel speed is below ``tol`` the direction is undefined and
    ``hold`` (the last commanded angle) is returned instead.
    """
    x, y = np.asarray(r, dtype=float)
    vy = state.vy + state.omega * x
    vx = state.vx - state.omega * y
    if np.hypot(vx, vy) <= tol:
        return hold
    return float(np.arctan2(vy, vx))


def wheel_spin(v_i, rho: float) -> float:
    if rho <= 0:
        raise ValueError(f"wheel radius must be positive, got {rho}")
    return float(np.linalg.norm(v_i) / rho)


def flip_optimize(delta_des: float, delta_cur: float, v: float):
    """Reverse the module when that needs a smaller steering change.

    Returns ``(delta_opt, v_signed)``; the wrapped steering change is at most π/2.
    """
    if abs(wrap_angle(delta_des - delta_cur)) <= np.pi / 2:
        return wrap_angle(delta_des), v
    return wrap_angle(delta_des + np.pi), -v


def map_body_to_wheels(state: SwerveState, layout: WheelLayout, current: Sequence[float], tol: float = 1e-9) -> list[WheelCommand]:
    """Steering angles and signed spin rates realizing the body twist."""
    out = []
    for r, cur in zip(layout.positions, current):
        v_i = wheel_velocity(state, r)
        delta = desired_steering(state, r, hold=None, tol=tol)
        if delta is None:
            out.append(WheelCommand(wrap_angle(cur), 0.0, False))
            continue
        speed = wheel_spin(v_i, layout.rho)
        delta_opt, spin = flip_optimize(delta, cur, speed)
        flipped = abs(wrap_angle(delta - cur)) > np.pi / 2
        out.append(WheelCommand(delta_opt, spin, flipped))
    return out


def build_constraint_stack(delta, layout: WheelLayout) -> np.ndarray:
    """Stacked no-skid / rolling rows ``S(δ, p)`` acting on ``(v_x, v_y, ω)``.

    The first four rows are the lateral (no-skid) constraints, the last four
    the rolling constraints, so that ``S ξ = [0; ρ φ̇]``.
    """
    d = np.asarray(delta, dtype=float)
    e_par = np.stack([np.cos(d), np.sin(d)], -1)
    e_perp = np.stack([-np.sin(d), np.cos(d)], -1)
    jp = layout.positions @ J2.T
    top = np.hstack([e_perp, np.sum(e_perp * jp, -1, keepdims=True)])
    bottom = np.hstack([e_par, np.sum(e_par * jp, -1, keepdims=True)])
    return np.vstack([top, bottom])


def gram(S: np.ndarray) -> np.ndarray:
    return S.T @ S


def input_matrix(layout: WheelLayout) -> np.ndarray:
    """``B = diag(0₄, ρ I₄)`` mapping ``u = [δ̇; φ̇]`` to the constraint right-hand side."""
    n = len(layout.positions)
    B = np.zeros((2 * n, 2 * n))
    B[n:, n:] = layout.rho * np.eye(n)
    return B


def connection(delta, layout: WheelLayout) -> np.ndarray:
    """Local connection ``A(r)`` with ``ξ = -A(r) u``, shape (3, 8)."""
    S = build_constraint_stack(delta, layout)
    return -np.linalg.pinv(S) @ input_matrix(layout)


def singular_values(M) -> np.ndarray:
    return np.linalg.svd(np.asarray(M), compute_uv=False)


def numerical_rank(M, tol: float = 1e-9) -> int:
    return int(np.sum(singular_values(M) > tol))


def reconstruct_twist(delta, phidot, layout: WheelLayout, tol: float = 1e-9):
    """Least-squares body twist from steering angles and spin rates.

    Returns ``(ξ, residual)`` where the residual ``‖S ξ - B u‖`` measures how
    far the wheel commands are from a slip-free motion.
    """
    S = build_constraint_stack(delta, layout)
    if singular_values(S)[-1] <= tol:
        raise SingularSystemError("constraint stack is rank deficient; twist is not recoverable")
    n = len(layout.positions)
    rhs = np.concatenate([np.zeros(n), layout.rho * np.asarray(phidot, dtype=float)])
    xi, *_ = np.linalg.lstsq(S, rhs, rcond=None)
    return xi, float(np.linalg.norm(S @ xi - rhs))


def se2_step(pose, twist, dt: float) -> np.ndarray:
    """Pose after moving with a constant body twist for ``dt`` (exact exponential)."""
    x, y, th = pose
    vx, vy, w = twist
    a = w * dt
    if abs(a) < 1e-9:
        s, c = 1.0 - a * a / 6.0, a / 2.0
    else:
        s, c = np.sin(a) / a, (1.0 - np.cos(a)) / a
    dx = dt * (s * vx - c * vy)
    dy = dt * (c * vx + s * vy)
    ct, st = np.cos(th), np.sin(th)
    return np.array([x + ct * dx - st * dy, y + st * dx + ct * dy, wrap_angle(th + a)])


class SteeringMemory:
    """Last commanded angle per wheel, owned by one controller."""

    def __init__(self, n: int = 4, initial: Sequence[float] | None = None):
        self.angles = np.zeros(n) if initial is None else np.array(initial, dtype=float)

    def command(self, state: SwerveState, layout: WheelLayout) -> list[WheelCommand]:
        cmds = map_body_to_wheels(state, layout, self.angles)
        self.angles = np.array([c.delta for c in cmds])
        return cmds
