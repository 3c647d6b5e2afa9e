"""Model builders: small test mechanisms, the sagittal wheel-legged rig, and
construction of a :class:`RobotModel` from a plain config mapping."""

from __future__ import annotations

from typing import Any, Mapping

from .errors import ModelError
from .rbd import Body, Frame, Joint, RobotModel


def slider(mass: float = 2.0) -> RobotModel:
    return RobotModel(
        [Body("cart", mass)],
        [Joint("slide", "prismatic", None, "cart", axis=(1.0, 0.0))],
        [Frame("cart", "cart")],
        actuated=["slide"],
        name="slider",
    )


def pendulum(mass: float = 1.0, length: float = 1.0, inertia: float = 0.0) -> RobotModel:
    """Pendulum hanging along -z at q = 0."""
    return RobotModel(
        [Body("link", mass, (0.0, -length), inertia)],
        [Joint("hinge", "revolute", None, "link")],
        [Frame("tip", "link", (0.0, -length))],
        actuated=["hinge"],
        name="pendulum",
    )


def double_pendulum(m1=1.0, m2=1.0, l1=1.0, l2=1.0, c1=0.5, c2=0.5, i1=0.1, i2=0.1) -> RobotModel:
    """Two links hanging along -z; CoMs at ``c1``, ``c2`` along each link."""
    return RobotModel(
        [Body("upper", m1, (0.0, -c1), i1), Body("lower", m2, (0.0, -c2), i2)],
        [
            Joint("shoulder", "revolute", None, "upper"),
            Joint("elbow", "revolute", "upper", "lower", origin=(0.0, -l1)),
        ],
        [Frame("tip", "lower", (0.0, -l2))],
        actuated=["shoulder", "elbow"],
        name="double_pendulum",
    )


def point_mass(mass: float = 10.0, inertia: float = 0.1) -> RobotModel:
    """Free planar body; the ``contact`` frame sits at its origin."""
    return RobotModel(
        [Body("body", mass, (0.0, 0.0), inertia)],
        [Joint("base", "floating_planar", None, "body")],
        [Frame("body", "body"), Frame("contact", "body")],
        name="point_mass",
    )


RIG_DEFAULTS = {
    "base_mass": 12.0,
    "base_inertia": 0.35,
    "base_length": 0.6,
    "hip_offset": 0.25,
    "thigh_length": 0.28,
    "thigh_mass": 1.2,
    "shank_length": 0.28,
    "shank_mass": 0.9,
    "wheel_radius": 0.08,
    "wheel_mass": 0.6,
    "arm_mount": [0.0, 0.06],
    "arm_link1": 0.34,
    "arm_link1_mass": 1.0,
    "arm_link2": 0.30,
    "arm_link2_mass": 0.5,
}


def sagittal_rig(params: Mapping[str, Any] | None = None) -> RobotModel:
    """Planar wheel-legged mobile manipulator.

    Floating base (x, z, pitch); front and rear legs each with hip, knee and a
    wheel at the shank tip; a two-link arm on top of the base. Eleven
    coordinates, eight actuators. Hips and knees have zero angle with the links
    hanging straight down; the arm has zero angle pointing straight up.
    """
    p = dict(RIG_DEFAULTS)
    if params:
        unknown = set(params) - set(p)
        if unknown:
            raise ModelError(f"unknown rig parameters: {sorted(unknown)}")
        p.update(params)
    lt, ls, rho = p["thigh_length"], p["shank_length"], p["wheel_radius"]

    def rod_inertia(m, length):
        return m * length**2 / 12.0

    bodies = [
        Body("base", p["base_mass"], (0.0, 0.0), p["base_inertia"]),
        Body("arm1", p["arm_link1_mass"], (0.0, p["arm_link1"] / 2), rod_inertia(p["arm_link1_mass"], p["arm_link1"])),
        Body("arm2", p["arm_link2_mass"], (0.0, p["arm_link2"] / 2), rod_inertia(p["arm_link2_mass"], p["arm_link2"])),
    ]
    joints = [
        Joint("base", "floating_planar", None, "base"),
        Joint("arm_shoulder", "revolute", "base", "arm1", origin=tuple(p["arm_mount"]), limits=(-2.8, 2.8)),
        Joint("arm_elbow", "revolute", "arm1", "arm2", origin=(0.0, p["arm_link1"]), limits=(-2.8, 2.8)),
    ]
    frames = [Frame("base", "base"), Frame("ee", "arm2", (0.0, p["arm_link2"]))]
    actuated = []
    for side, sx in (("front", 1.0), ("rear", -1.0)):
        bodies += [
            Body(f"{side}_thigh", p["thigh_mass"], (0.0, -lt / 2), rod_inertia(p["thigh_mass"], lt)),
            Body(f"{side}_shank", p["shank_mass"], (0.0, -ls / 2), rod_inertia(p["shank_mass"], ls)),
            Body(f"{side}_wheel", p["wheel_mass"], (0.0, 0.0), 0.5 * p["wheel_mass"] * rho**2),
        ]
        joints += [
            Joint(f"{side}_hip", "revolute", "base", f"{side}_thigh", origin=(sx * p["hip_offset"], 0.0), limits=(-2.0, 2.0)),
            Joint(f"{side}_knee", "revolute", f"{side}_thigh", f"{side}_shank", origin=(0.0, -lt), limits=(-2.6, 2.6)),
            Joint(f"{side}_wheel", "revolute", f"{side}_shank", f"{side}_wheel", origin=(0.0, -ls)),
        ]
        frames.append(Frame(f"{side}_wheel", f"{side}_wheel"))
        actuated += [f"{side}_hip", f"{side}_knee", f"{side}_wheel"]
    actuated += ["arm_shoulder", "arm_elbow"]
    return RobotModel(bodies, joints, frames, actuated, name="sagittal_rig")


PRESETS = {
    "sagittal_rig": sagittal_rig,
    "pendulum": pendulum,
    "double_pendulum": double_pendulum,
    "point_mass": point_mass,
    "slider": slider,
}


def model_from_dict(doc: Mapping[str, Any]) -> RobotModel:
    """Build a model from a config mapping.

    Either ``{"preset": name, "params": {...}}`` or an explicit tree with
    ``bodies``, ``joints``, ``frames`` and ``actuated`` lists whose entries
    mirror the :class:`Body`, :class:`Joint` and :class:`Frame` fields.
    """
    if "preset" in doc:
        name = doc["preset"]
        if name not in PRESETS:
            raise ModelError(f"unknown model preset {name!r}; known: {sorted(PRESETS)}")
        params = dict(doc.get("params") or {})
        if name == "sagittal_rig":
            return sagittal_rig(params)
        return PRESETS[name](**params)
    try:
        bodies = [Body(b["name"], float(b["mass"]), tuple(b.get("com", (0.0, 0.0))), float(b.get("inertia", 0.0))) for b in doc["bodies"]]
        joints = [
            Joint(
                j["name"], j["kind"], j.get("parent"), j["child"],
                tuple(j.get("origin", (0.0, 0.0))), tuple(j.get("axis", (1.0, 0.0))),
                tuple(j["limits"]) if j.get("limits") is not None else None,
            )
            for j in doc["joints"]
        ]
        frames = [Frame(f["name"], f["body"], tuple(f.get("offset", (0.0, 0.0)))) for f in doc.get("frames", [])]
    except KeyError as exc:
        raise ModelError(f"model description is missing field {exc.args[0]!r}") from None
    return RobotModel(bodies, joints, frames, doc.get("actuated", []), tuple(doc.get("gravity", (0.0, -9.81))), doc.get("name", "robot"))
