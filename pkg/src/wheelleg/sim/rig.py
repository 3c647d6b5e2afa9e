"""Geometry helpers for the sagittal wheel-legged rig."""

from __future__ import annotations

import numpy as np

from .. import rbd
from ..contact import ContactSpec
from ..rbd import RobotModel

WHEEL_FRAMES = ("front_wheel", "rear_wheel")
LEG_JOINTS = ("front_hip", "front_knee", "rear_hip", "rear_knee")
WHEEL_JOINTS = ("front_wheel", "rear_wheel")
ARM_JOINTS = ("arm_shoulder", "arm_elbow")


def wheel_radius(model: RobotModel) -> float:
    w = model.bodies[model.body_index("front_wheel")]
    # wheel inertia is ½ m ρ²
    return float(np.sqrt(2.0 * w.inertia / w.mass))


def wheel_contacts(model: RobotModel, mu: float = 0.8, torque_limit: float = 5.0) -> list[ContactSpec]:
    bounds = ((-torque_limit, torque_limit),) * 3
    rho = wheel_radius(model)
    return [ContactSpec(f, "wheel_line", mu, bounds, wheel_radius=rho) for f in WHEEL_FRAMES]


def link_lengths(model: RobotModel):
    thigh = -model.joint("front_knee").origin[1]
    shank = -model.joint("front_wheel").origin[1]
    a1 = model.joint("arm_elbow").origin[1]
    a2 = model.frame("ee").offset[1]
    return thigh, shank, a1, a2


def two_link_ik(dx: float, dz: float, l1: float, l2: float, elbow_sign: float = 1.0):
    """Angles of a two-link chain (zero = link along +z, ccw positive) whose
    tip reaches ``(dx, dz)`` relative to its root. Returns ``None`` when the
    target is out of reach."""
    r2 = dx * dx + dz * dz
    c2 = (r2 - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    if abs(c2) > 1.0:
        return None
    t2 = elbow_sign * np.arccos(c2)
    # tip = l1 (-sin t1, cos t1) + l2 (-sin(t1+t2), cos(t1+t2))
    phi = np.arctan2(-dx, dz)
    t1 = phi - np.arctan2(l2 * np.sin(t2), l1 + l2 * np.cos(t2))
    return float(t1), float(t2)


def leg_angles_for_depth(depth: float, thigh: float, shank: float, knee_forward: bool = True):
    """Hip and knee angles putting the wheel centre ``depth`` straight below
    the hip (links hang along -z at zero angle)."""
    # A chain hanging along -z reaches -p exactly when the upright chain reaches p.
    sol = two_link_ik(0.0, depth, thigh, shank, elbow_sign=1.0)
    if sol is None:
        raise ValueError(f"leg cannot reach depth {depth}")
    hip, knee = sol  # knee behind the hip
    if knee_forward:
        hip, knee = -hip, -knee
    return hip, knee


def standing_configuration(
    model: RobotModel,
    base_height: float = 0.56,
    base_x: float = 0.0,
    ground_height: float = 0.0,
    ee_offset_x: float = 0.22,
    ee_height: float = 0.92,
    terrain=None,
):
    """Rig configuration with both wheels touching the ground and the
    end-effector at ``(base_x + ee_offset_x, ee_height)``; base pitch zero."""
    thigh, shank, a1, a2 = link_lengths(model)
    rho = wheel_radius(model)
    q = np.zeros(model.nq)
    q[model.coord_index("base.x")] = base_x
    q[model.coord_index("base.z")] = base_height
    for side in ("front", "rear"):
        hx = base_x + model.joint(f"{side}_hip").origin[0]
        gz = ground_height if terrain is None else float(terrain.height(hx))
        depth = base_height - gz - rho
        hip, knee = leg_angles_for_depth(depth, thigh, shank, knee_forward=(side == "front"))
        q[model.coord_index(f"{side}_hip")] = hip
        q[model.coord_index(f"{side}_knee")] = knee
    mount = np.asarray(model.joint("arm_shoulder").origin)
    sol = two_link_ik(ee_offset_x - mount[0], ee_height - base_height - mount[1], a1, a2, elbow_sign=-1.0)
    if sol is None:
        raise ValueError("end-effector target out of reach")
    q[model.coord_index("arm_shoulder")], q[model.coord_index("arm_elbow")] = sol
    return q


def end_effector_pose(model: RobotModel, q):
    p, a = rbd.forward_kinematics(model, q, "ee")
    return p, a
