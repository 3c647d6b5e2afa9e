"""Closed-loop scenarios: wave terrain, base perturbation and swerve gait
sequencing, plus the joint-space IK arm baseline."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .. import contact as ct
from .. import control, models, ocp, rbd, swerve
from ..config import ScenarioConfig, dump_config
from ..control import LocomotionMode
from ..errors import SimulationError
from . import rig as rigmod
from .log import MetricsReport, TrajectoryLog, trajectory_columns
from .terrain import make_terrain
from .world import World, step


class ScenarioFailed(SimulationError):
    """Raised when a run breaks its budget; ``log`` holds the partial trajectory."""

    def __init__(self, message, log=None, metrics=None):
        super().__init__(message)
        self.log = log
        self.metrics = metrics


def _terrain(cfg: ScenarioConfig):
    t = cfg.terrain
    if t.kind == "flat":
        return make_terrain("flat")
    return make_terrain("sine", peak=t.peak, length=t.length, waves=t.waves, start=t.start)


def _schedule(cfg: ScenarioConfig):
    return [(e.t, LocomotionMode(e.mode)) for e in cfg.mode_schedule]


# -- sagittal rig --------------------------------------------------------------

@dataclass
class RigSetup:
    cfg: ScenarioConfig
    model: rbd.RobotModel
    contacts: list
    terrain: object
    q0: np.ndarray
    v0: np.ndarray
    q_nominal: np.ndarray
    pitch_target: float
    u_static: np.ndarray

    def base_x(self, t):
        b = self.cfg.base
        return self.q0[0] + b.speed * max(0.0, t - b.start_time)

    def base_speed(self, t):
        return self.cfg.base.speed if t >= self.cfg.base.start_time else 0.0

    def ee_target(self, t):
        e = self.cfg.ee_target
        return np.array([self.base_x(t) + e.offset_x, e.height, self.pitch_target])


def rig_setup(cfg: ScenarioConfig) -> RigSetup:
    model = models.sagittal_rig(cfg.model.params)
    terrain = _terrain(cfg)
    contacts = rigmod.wheel_contacts(model, cfg.contacts.mu, cfg.contacts.torque_limit)
    e = cfg.ee_target
    q0 = rigmod.standing_configuration(model, base_height=cfg.base.height, ee_offset_x=e.offset_x,
                                       ee_height=e.height, terrain=terrain)
    q_nom = q0.copy()  # leg posture the OCP relaxes toward
    _, pitch0 = rbd.forward_kinematics(model, q0, "ee")
    pitch = float(pitch0) if e.pitch is None else float(e.pitch)
    v0 = np.zeros(model.nv)
    rng = np.random.default_rng(cfg.seed)
    if cfg.initial_noise > 0:
        v0 = v0 + cfg.initial_noise * rng.normal(size=model.nv)
    if cfg.perturbation.wheel_velocity:
        v0 = v0 + rolling_kick(model, q0, contacts, terrain, cfg.perturbation.wheel_velocity)
    if np.any(v0):
        v0 = project_velocity(model, q0, v0, contacts, terrain)
    u_static = control.static_torques(model, q_nom, contacts)
    return RigSetup(cfg, model, contacts, terrain, q0, v0, q_nom, pitch, u_static)


def rolling_kick(model, q, contacts, terrain, wheel_rate):
    """Velocity of the rig rolling forward at ``ρ·wheel_rate`` with every
    joint but the wheels still: the state right after the wheels were kicked."""
    v = np.zeros(model.nv)
    v[model.coord_index("base.x")] = rigmod.wheel_radius(model) * wheel_rate
    for c, j in zip(contacts, rigmod.WHEEL_JOINTS):
        J = ct.contact_kinematics(model, q, np.zeros(model.nv), c, terrain).jacobian[0]
        w = model.coord_index(j)
        v[w] = -J @ v / J[w]
    return v


def project_velocity(model, q, v, contacts, terrain):
    """Closest velocity (in the kinetic-energy metric) satisfying the contacts."""
    J = np.vstack([ct.contact_kinematics(model, q, v, c, terrain).jacobian for c in contacts if c.active])
    M = rbd.mass_matrix(model, q)
    MiJt = np.linalg.solve(M, J.T)
    return v - MiJt @ np.linalg.solve(J @ MiJt, J @ v)


def rig_problem_factory(setup: RigSetup):
    cfg, model = setup.cfg, setup.model
    w = cfg.weights
    hz = cfg.horizon
    nv = model.nv
    nx, nu = 2 * nv, model.nu
    legs = [model.coord_index(j) for j in rigmod.LEG_JOINTS]
    free_vel = [nv + model.coord_index(n) for n in model.coord_names
                if not n.startswith("base.") and n not in rigmod.WHEEL_JOINTS]
    base_vel = [nv + model.coord_index(n) for n in ("base.x", "base.z", "base.pitch")]
    wheel_coords = list(rigmod.WHEEL_JOINTS)
    planner_cones = [replace(c, mu=c.mu * cfg.contacts.ocp_friction_scale) for c in setup.contacts]

    def factory(x0, t, mode):
        locked = control.locked_coordinates(model, mode)
        dyn = ocp.ContactDynamics(model, setup.contacts, hz.dt, setup.terrain, cfg.contacts.ocp_baumgarte, locked)

        def base_ref(k):
            return [setup.base_x(t + k * hz.dt), cfg.base.height, 0.0]

        def base_vel_ref(k):
            return [setup.base_speed(t + k * hz.dt), 0.0, 0.0]

        def ee_ref(k):
            return setup.ee_target(t + k * hz.dt)

        def terms(scale):
            out = [
                ocp.ArmPose(model, ee_ref, scale * w.arm_pose),
                ocp.base_pose(model, base_ref, scale * w.base_pose),
                ocp.StateTracking("base_pose", base_vel, base_vel_ref, 0.1 * scale * w.base_pose, nx, nu),
                ocp.leg_tracking(model, rigmod.LEG_JOINTS, setup.q_nominal[legs], scale * w.leg_tracking),
            ]
            if w.com_tracking:
                out.append(ocp.ComTracking(model, lambda k: [base_ref(k)[0], 0.0], scale * w.com_tracking, dims=(0,)))
            if w.steering_posture:
                out.append(ocp.steering_posture(model, wheel_coords, np.zeros(2), scale * w.steering_posture, velocity=True))
            return out

        stage = terms(1.0) + [
            ocp.Regularization(nx, nu, w.regularization, u_ref=setup.u_static,
                               velocity_indices=free_vel, velocity_scale=w.velocity),
            ocp.ContactForce(planner_cones, w.contact_force, nx, nu),
        ]
        return ocp.OcpProblem(dyn, hz.N, stage, terms(w.terminal_scale), x0)

    return factory


def _zmp_x(world: World):
    items = []
    for c, wr in zip(world.contacts, world.wrenches):
        if c.active:
            items.append(ct.planar_wrench_to_world(c, world.kinematics(c), wr))
    if not items:
        return np.nan, False
    try:
        p = ct.zmp(items)
    except ct.DegenerateWrenchError:
        return np.nan, False
    pts = [pos for pos, _ in items]
    return float(p[0]), ct.in_support(p, pts, tol=1e-6)


def _rig_row(setup, world_before, world_after, u, t):
    m = setup.model
    q, v = world_before.q, world_before.v
    p, a = rbd.forward_kinematics(m, q, "ee")
    probe = World(m, q, v, world_after.contacts, setup.terrain, wrenches=world_after.wrenches)
    zx, inside = _zmp_x(probe)
    wr = np.concatenate(world_after.wrenches) if world_after.wrenches else np.zeros(0)
    row = np.concatenate([[t], q, v, u, wr, [p[0], p[1], float(a), zx]])
    gaps = [float(world_before.kinematics(c).gap) for c in world_before.contacts]
    cone = sum(ct.cone_penalty(ct.cone_residual(ct.build_cone(c), w_))[0]
               for c, w_ in zip(world_after.contacts, world_after.wrenches) if c.active)
    return row, inside, min(gaps) if gaps else np.inf, cone


def _rig_log(setup):
    m = setup.model
    cols = trajectory_columns(m.coord_names, m.actuated, [c.frame for c in setup.contacts])
    return TrajectoryLog(cols, dump_config(setup.cfg))


def run_rig(cfg: ScenarioConfig, on_controller=None):
    """Whole-body receding-horizon control of the sagittal rig.

    ``on_controller`` is called with the controller once it is built."""
    wall0 = time.perf_counter()
    setup = rig_setup(cfg)
    m = setup.model
    hz, tm = cfg.horizon, cfg.timing
    schedule = _schedule(cfg)
    first_mode = schedule[0][1] if schedule and schedule[0][0] <= 0 else LocomotionMode.WHEELED
    opts = ocp.SolverOptions(max_iter=hz.max_iter, tol_cost=hz.tol_cost, tol_grad=hz.tol_grad)
    ctl = control.RecedingHorizonController(rig_problem_factory(setup), hz.dt, opts, first_mode, hz.warm_start)
    if on_controller is not None:
        on_controller(ctl)
    world = World(m, setup.q0, setup.v0, list(setup.contacts), setup.terrain,
                  baumgarte=tuple(cfg.contacts.sim_baumgarte),
                  locked=tuple(control.locked_coordinates(m, first_mode)))
    log = _rig_log(setup)
    n_steps = int(round(cfg.duration / tm.sim_dt))
    inside_all, min_gap, max_cone, cone_ok = [], np.inf, 0.0, []
    events = [e for e in schedule if e[0] > 0 or e[1] != first_mode]
    policy = None
    for i in range(n_steps):
        t = i * tm.sim_dt
        if i % tm.lfc_ticks_per_solve == 0:
            active = [c.active for c in world.contacts]
            cmd = None
            while events and events[0][0] <= t + 1e-12:
                cmd = events.pop(0)[1]
            control.mode_step(ctl.machine, cmd, active, t)
            world.locked = tuple(control.locked_coordinates(m, ctl.mode))
            if i == 0:
                ctl.options = ocp.SolverOptions(max_iter=hz.first_max_iter, tol_cost=hz.tol_cost, tol_grad=hz.tol_grad)
            policy, _ = control.rh_step(ctl, world.state, t)
            ctl.options = opts
            if ctl.degraded_steps > cfg.max_degraded_steps:
                raise ScenarioFailed(f"controller degraded on {ctl.degraded_steps} solves by t={t:.3f}s", log)
        u, _ = control.lfc_torque(policy, world.state, t)
        new = step(world, u, tm.sim_dt)
        row, inside, gap, cone = _rig_row(setup, world, new, u, t)
        log.append(row, ctl.mode.value)
        inside_all.append(inside)
        min_gap = min(min_gap, gap)
        max_cone = max(max_cone, cone)
        cone_ok.append(cone <= 1e-6)
        world = new
    metrics = rig_metrics(setup, log)
    reps = ctl.reports
    metrics.values.update({
        "solves": len(reps),
        "mean_iterations": float(np.mean([r.iterations for r in reps])),
        "degraded_steps": ctl.degraded_steps,
        "max_penetration": float(max(0.0, -min_gap)),
        "max_cone_penalty": float(max_cone),
        "cone_satisfied_fraction": float(np.mean(cone_ok)),
        "zmp_inside_fraction": float(np.mean(inside_all)),
        "mode_events": len(ctl.machine.events),
        "runtime_s": time.perf_counter() - wall0,
    })
    if cfg.scenario == "perturbation":
        _perturbation_metrics(setup, log, metrics)
    return log, metrics


def rig_metrics(setup: RigSetup, log: TrajectoryLog) -> MetricsReport:
    cfg = setup.cfg
    z = log.column("ee_z")
    pitch = log.column("ee_pitch")
    t = log.column("t")
    ex = log.column("ee_x") - np.array([setup.ee_target(ti)[0] for ti in t])
    err = z - cfg.ee_target.height
    return MetricsReport({
        "ee_height_target": cfg.ee_target.height,
        "ee_height_mean": float(np.mean(z)),
        "ee_height_std": float(np.std(z)),
        "ee_height_max_error": float(np.max(np.abs(err))),
        "ee_height_rms_error": float(np.sqrt(np.mean(err**2))),
        "ee_pitch_mean": float(np.mean(pitch)),
        "ee_pitch_std": float(np.std(pitch)),
        "ee_x_max_error": float(np.max(np.abs(ex))),
        "base_pitch_std": float(np.std(log.column("q.base.pitch"))),
        "base_z_std": float(np.std(log.column("q.base.z"))),
    })


def _perturbation_metrics(setup, log, metrics):
    cfg = setup.cfg
    x = log.column("q.base.x")
    ref = np.array([setup.base_x(ti) for ti in log.column("t")])
    tail = max(1, len(x) // 10)
    z = log.column("ee_z")
    ex = log.column("ee_x") - np.array([setup.ee_target(ti)[0] for ti in log.column("t")])
    dev = np.hypot(ex, z - cfg.ee_target.height)
    metrics.values.update({
        "base_max_excursion": float(np.max(np.abs(x - ref))),
        "base_return_error": float(np.max(np.abs(x[-tail:] - ref[-tail:]))),
        "base_final_speed": float(abs(log.column("v.base.x")[-1])),
        "ee_max_deviation": float(np.max(dev)),
        "returned": bool(np.max(np.abs(x[-tail:] - ref[-tail:])) <= cfg.perturbation.return_tolerance),
        "ee_deviation_bounded": bool(np.max(dev) <= cfg.perturbation.ee_deviation_bound),
    })


# -- IK baseline -----------------------------------------------------------------

def arm_ik(model, q, target, damping=1e-2, iterations=10):
    """Damped least-squares arm angles placing the end-effector at
    ``target = (x, z)`` with the rest of ``q`` held. Returns
    ``(q_arm, reachable, singular)``."""
    arm = [model.coord_index(j) for j in rigmod.ARM_JOINTS]
    _, _, l1, l2 = rigmod.link_lengths(model)
    q = np.array(q, dtype=float)
    shoulder = rbd.kinematics(model, q).joint_point[arm[0]]
    d = float(np.linalg.norm(np.asarray(target) - shoulder))
    reachable = abs(l1 - l2) <= d <= l1 + l2
    singular = False
    for _ in range(iterations):
        p, _ = rbd.forward_kinematics(model, q, "ee")
        e = np.asarray(target) - p
        J = rbd.frame_jacobian(model, q, "ee")[:2][:, arm]
        if np.linalg.svd(J, compute_uv=False)[-1] < damping:
            singular = True
        q[arm] += J.T @ np.linalg.solve(J @ J.T + damping**2 * np.eye(2), e)
    return q[arm], reachable, singular


def ik_baseline(cfg: ScenarioConfig) -> TrajectoryLog:
    """Arm joints track the end-effector target by damped least-squares IK
    off the measured base pose; legs are held at their nominal angles by
    joint PD and the wheels track the base speed.

    IK targets are refreshed at the planner rate (every
    ``timing.lfc_ticks_per_solve`` ticks) and held in between, so the
    baseline sees the same information rate as the whole-body controller.
    """
    setup = rig_setup(cfg)
    m = setup.model
    g = cfg.ik
    tm = cfg.timing
    world = World(m, setup.q0, setup.v0, list(setup.contacts), setup.terrain,
                  baumgarte=tuple(cfg.contacts.sim_baumgarte))
    log = _rig_log(setup)
    log.columns = log.columns + ["ik_unreachable", "ik_singular"]
    act = {j: m.actuator_index(j) for j in m.actuated}
    leg_q = {j: setup.q0[m.coord_index(j)] for j in rigmod.LEG_JOINTS}
    q_arm, flags = None, np.zeros(2)
    for i in range(int(round(cfg.duration / tm.sim_dt))):
        t = i * tm.sim_dt
        q, v = world.q, world.v
        if i % tm.lfc_ticks_per_solve == 0:
            q_arm, reachable, singular = arm_ik(m, q, setup.ee_target(t)[:2], g.damping)
            flags = np.array([not reachable, singular], dtype=float)
        u = control.static_torques(m, q, [c for c in world.contacts if c.active], setup.terrain)
        for j, qd in zip(rigmod.ARM_JOINTS, q_arm):
            c = m.coord_index(j)
            u[act[j]] += g.arm_kp * (qd - q[c]) - g.arm_kd * v[c]
        for j, qd in leg_q.items():
            c = m.coord_index(j)
            u[act[j]] += g.leg_kp * (qd - q[c]) - g.leg_kd * v[c]
        speed = setup.base_speed(t) + g.wheel_kp * (setup.base_x(t) - q[0])
        for c_spec, j in zip(world.contacts, rigmod.WHEEL_JOINTS):
            J = world.kinematics(c_spec).jacobian[0]
            c = m.coord_index(j)
            # wheel rate that rolls the contact without slip at the desired speed
            rate = -J[0] * speed / J[c]
            u[act[j]] += g.wheel_kd * (rate - v[c])
        new = step(world, u, tm.sim_dt)
        row, _, _, _ = _rig_row(setup, world, new, u, t)
        log.append(np.concatenate([row, flags]), "ik")
        world = new
    return log


# -- swerve gait -----------------------------------------------------------------

SWERVE_COORDS = ("x", "y", "theta")


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s), 6.0 * s * (1.0 - s)


class GaitReference:
    """World pose reference stitched from straight / rotate / crab / hold
    segments, each eased with a smoothstep profile."""

    def __init__(self, segments, pose0=(0.0, 0.0, 0.0)):
        self.segments = []
        pose = np.array(pose0, dtype=float)
        t = 0.0
        for seg in segments:
            delta = np.zeros(3)
            c, s = np.cos(pose[2]), np.sin(pose[2])
            if seg.kind == "straight":
                delta[:2] = seg.amount * np.array([c, s])
            elif seg.kind == "crab":
                delta[:2] = seg.amount * np.array([-s, c])
            elif seg.kind == "rotate":
                delta[2] = seg.amount
            self.segments.append((t, seg.duration, pose.copy(), delta, seg.kind))
            pose = pose + delta
            t += seg.duration
        self.end_time = t
        self.final_pose = pose

    def __call__(self, t):
        """Pose (x, y, θ) and body-frame twist at time ``t``."""
        for t0, T, p0, d, _ in self.segments:
            if t < t0 + T:
                s, ds = _smoothstep((t - t0) / T)
                pose = p0 + s * d
                rate = ds / T * d
                break
        else:
            pose, rate = self.final_pose.copy(), np.zeros(3)
        c, sn = np.cos(pose[2]), np.sin(pose[2])
        twist = np.array([c * rate[0] + sn * rate[1], -sn * rate[0] + c * rate[1], rate[2]])
        return pose, twist


def gait_problem_factory(cfg: ScenarioConfig, ref: GaitReference):
    w, hz = cfg.weights, cfg.horizon
    dyn = ocp.SwerveDynamics(hz.dt)

    def factory(x0, t, mode):
        def pose_ref(k):
            return ref(t + k * hz.dt)[0]

        def twist_ref(k):
            return ref(t + k * hz.dt)[1]

        def terms(scale):
            return [ocp.StateTracking("base_pose", [0, 1, 2], pose_ref, scale * w.base_pose, 6, 3),
                    ocp.StateTracking("base_pose", [3, 4, 5], twist_ref, 0.1 * scale * w.base_pose, 6, 3)]

        stage = terms(1.0) + [ocp.Regularization(6, 3, w.regularization)]
        return ocp.OcpProblem(dyn, hz.N, stage, terms(w.terminal_scale), x0)

    return factory


def _gait_columns(n_wheels):
    cols = trajectory_columns(SWERVE_COORDS, ("ax", "ay", "alpha"), [])
    cols += ["zmp_y", "zmp_inside", "slip_residual"]
    for i in range(n_wheels):
        cols += [f"wheel{i}.delta", f"wheel{i}.phidot", f"wheel{i}.flipped"]
    return cols


def run_gait(cfg: ScenarioConfig, on_controller=None):
    wall0 = time.perf_counter()
    sw, hz, tm = cfg.swerve, cfg.horizon, cfg.timing
    layout = swerve.WheelLayout.rectangle(sw.half_length, sw.half_width, sw.wheel_radius)
    ref = GaitReference(cfg.gait)
    rng = np.random.default_rng(cfg.seed)
    x = np.zeros(6)
    if cfg.initial_noise > 0:
        x[:3] += cfg.initial_noise * rng.normal(size=3)
    opts = ocp.SolverOptions(max_iter=hz.max_iter, tol_cost=hz.tol_cost, tol_grad=hz.tol_grad)
    ctl = control.RecedingHorizonController(gait_problem_factory(cfg, ref), hz.dt, opts,
                                            LocomotionMode.WHEELED, hz.warm_start, wheel_layout=layout)
    if on_controller is not None:
        on_controller(ctl)
    drive = swerve.SteeringMemory(len(layout.positions))
    log = TrajectoryLog(_gait_columns(len(layout.positions)), dump_config(cfg))
    g = 9.81
    inside_all, max_slip, flips = [], 0.0, 0
    reversed_prev = np.zeros(len(layout.positions), dtype=bool)
    policy = None
    prev_twist = x[3:].copy()
    for i in range(int(round(cfg.duration / tm.sim_dt))):
        t = i * tm.sim_dt
        if i % tm.lfc_ticks_per_solve == 0:
            policy, _ = control.rh_step(ctl, x, t)
            if ctl.degraded_steps > cfg.max_degraded_steps:
                raise ScenarioFailed(f"controller degraded on {ctl.degraded_steps} solves by t={t:.3f}s", log)
        u, _ = control.lfc_torque(policy, x, t)
        cmd_twist = x[3:] + tm.sim_dt * u
        cmds = drive.command(swerve.SwerveState(vx=cmd_twist[0], vy=cmd_twist[1], omega=cmd_twist[2]), layout)
        delta = [c.delta for c in cmds]
        spin = [c.phidot for c in cmds]
        twist, slip = swerve.reconstruct_twist(delta, spin, layout)
        reversed_now = np.array([c.flipped for c in cmds])
        flips += int(np.sum(reversed_now & ~reversed_prev))
        reversed_prev = reversed_now
        max_slip = max(max_slip, slip)
        pose = swerve.se2_step(x[:3], twist, tm.sim_dt)
        pose[2] = x[2] + swerve.wrap_angle(pose[2] - x[2])
        # gravito-inertial ZMP of a CoM above the body origin
        acc_body = (twist - prev_twist) / tm.sim_dt
        th = x[2]
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        a_world = R @ (acc_body[:2] + twist[2] * (swerve.J2 @ twist[:2]))
        z = x[:2] - sw.com_height / g * a_world
        wheels = x[:2] + layout.positions @ R.T
        inside = ct.in_support(z, np.column_stack([wheels, np.zeros(len(wheels))]), tol=1e-9)
        inside_all.append(inside)
        row = np.concatenate([[t], x, u, [np.nan, np.nan, np.nan, z[0], z[1], float(inside), slip]])
        wheel_cols = np.ravel([[c.delta, c.phidot, float(c.flipped)] for c in cmds])
        log.append(np.concatenate([row, wheel_cols]), ctl.mode.value)
        prev_twist = twist
        x = np.concatenate([pose, twist])
    final_pose, _ = ref(cfg.duration)
    theta = log.column("q.theta")
    metrics = MetricsReport({
        "zmp_inside_all": bool(np.all(inside_all)),
        "zmp_inside_fraction": float(np.mean(inside_all)),
        "final_position_error": float(np.linalg.norm(x[:2] - final_pose[:2])),
        "final_heading_error": float(abs(x[2] - final_pose[2])),
        "max_heading": float(np.max(theta)),
        "max_slip_residual": float(max_slip),
        "wheel_flip_events": int(flips),
        "segments_completed": _segments_completed(ref, log, x, cfg.duration),
        "segments_total": len(ref.segments),
        "solves": len(ctl.reports),
        "mean_iterations": float(np.mean([r.iterations for r in ctl.reports])),
        "degraded_steps": ctl.degraded_steps,
        "runtime_s": time.perf_counter() - wall0,
    })
    return log, metrics


def _segments_completed(ref: GaitReference, log: TrajectoryLog, x_final, t_final, pos_tol=0.05, ang_tol=0.05) -> int:
    t = np.append(log.column("t"), t_final)
    q = np.vstack([np.column_stack([log.column(f"q.{c}") for c in SWERVE_COORDS]), x_final[:3]])
    done = 0
    for t0, T, p0, d, _ in ref.segments:
        end = t0 + T
        if end > t[-1] + 1e-9:
            break
        i = int(np.argmin(np.abs(t - end)))
        target = p0 + d
        if np.linalg.norm(q[i, :2] - target[:2]) <= pos_tol and abs(q[i, 2] - target[2]) <= ang_tol:
            done += 1
    return done


def run_scenario(cfg: ScenarioConfig, on_controller=None):
    """Run the configured scenario; returns ``(TrajectoryLog, MetricsReport)``.

    With ``compare_ik`` set, a rig scenario is repeated under the IK arm
    baseline and its end-effector metrics are added with an ``ik_`` prefix.
    """
    if cfg.scenario == "gait":
        return run_gait(cfg, on_controller)
    log, metrics = run_rig(cfg, on_controller)
    if cfg.compare_ik:
        setup = rig_setup(cfg)
        base = rig_metrics(setup, ik_baseline(cfg))
        for k in ("ee_height_mean", "ee_height_std", "ee_height_max_error", "ee_height_rms_error", "ee_pitch_std"):
            metrics.values[f"ik_{k}"] = base.values[k]
        metrics.values["wb_std_below_ik"] = bool(metrics.values["ee_height_std"] < base.values["ee_height_std"])
    return log, metrics
