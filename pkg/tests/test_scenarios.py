import numpy as np
import pytest

from wheelleg import contact as ct
from wheelleg import models, rbd
from wheelleg.config import parse_config_text
from wheelleg.config import GaitSegment
from wheelleg.sim import rig
from wheelleg.sim import scenarios as S

RIG = """\
name: short
scenario: perturbation
duration: 0.3
seed: 3
initial_noise: 0.01
perturbation:
  wheel_velocity: 3.0
"""

GAIT = """\
name: gait
scenario: gait
duration: 2.0
model: {kind: swerve}
horizon: {N: 20, dt: 0.05}
timing: {sim_dt: 0.005, lfc_ticks_per_solve: 10}
gait:
  - {kind: straight, amount: 0.5, duration: 1.0}
  - {kind: rotate, amount: 1.0, duration: 1.0}
"""


def test_gait_reference_segments():
    segs = [GaitSegment(kind="straight", amount=1.0, duration=1.0),
            GaitSegment(kind="rotate", amount=np.pi / 2, duration=1.0),
            GaitSegment(kind="crab", amount=0.5, duration=1.0),
            GaitSegment(kind="hold", duration=0.5)]
    ref = S.GaitReference(segs)
    np.testing.assert_allclose(ref(1.0)[0], [1.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(ref(2.0)[0], [1.0, 0.0, np.pi / 2], atol=1e-12)
    # crab is along the body y axis, which now points along -x
    np.testing.assert_allclose(ref(3.0)[0], [0.5, 0.0, np.pi / 2], atol=1e-12)
    np.testing.assert_allclose(ref(10.0)[0], ref.final_pose)
    for t in (0.0, 1.0, 2.0, 3.0):
        np.testing.assert_allclose(ref(t)[1], 0.0, atol=1e-12)
    _, twist = ref(2.5)
    assert twist[0] == pytest.approx(0.0, abs=1e-12) and twist[1] > 0


def test_gait_reference_twist_is_pose_rate():
    ref = S.GaitReference([GaitSegment(kind="rotate", amount=1.0, duration=1.0),
                           GaitSegment(kind="straight", amount=1.0, duration=1.0)])
    t, h = 1.4, 1e-6
    p1, p0 = ref(t + h)[0], ref(t - h)[0]
    th = ref(t)[0][2]
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    body = R.T @ ((p1[:2] - p0[:2]) / (2 * h))
    np.testing.assert_allclose(ref(t)[1][:2], body, atol=1e-6)


def test_arm_ik_reaches_target():
    m = models.sagittal_rig()
    q = rig.standing_configuration(m, base_height=0.62)
    target = np.array([0.25, 0.95])
    q_arm, reachable, singular = S.arm_ik(m, q, target, iterations=30)
    q2 = q.copy()
    q2[[m.coord_index(j) for j in rig.ARM_JOINTS]] = q_arm
    p, _ = rbd.forward_kinematics(m, q2, "ee")
    assert reachable and not singular
    np.testing.assert_allclose(p, target, atol=1e-6)


def test_arm_ik_unreachable_is_flagged():
    m = models.sagittal_rig()
    q = rig.standing_configuration(m, base_height=0.62)
    q_arm, reachable, singular = S.arm_ik(m, q, np.array([3.0, 3.0]))
    assert not reachable and singular
    assert np.all(np.isfinite(q_arm))


def test_rolling_kick_respects_contacts():
    m = models.sagittal_rig()
    q = rig.standing_configuration(m, base_height=0.62)
    contacts = rig.wheel_contacts(m)
    v = S.rolling_kick(m, q, contacts, ct.FLAT, 4.0)
    assert v[m.coord_index("base.x")] == pytest.approx(4.0 * rig.wheel_radius(m))
    for c in contacts:
        J = ct.contact_kinematics(m, q, v, c).jacobian
        np.testing.assert_allclose(J @ v, 0.0, atol=1e-12)
    noisy = v + 0.1
    proj = S.project_velocity(m, q, noisy, contacts, ct.FLAT)
    for c in contacts:
        np.testing.assert_allclose(ct.contact_kinematics(m, q, proj, c).jacobian @ proj, 0.0, atol=1e-10)


def test_rig_run_is_deterministic_and_physical():
    cfg = parse_config_text(RIG)
    log1, met1 = S.run_scenario(cfg)
    log2, _ = S.run_scenario(cfg)
    assert log1.to_csv() == log2.to_csv()
    assert met1["max_penetration"] <= 1e-4
    assert met1["degraded_steps"] == 0
    assert np.all(np.isfinite(log1.data))
    other, _ = S.run_scenario(parse_config_text(RIG, overrides=["seed=4"]))
    assert other.to_csv() != log1.to_csv()


def test_mode_switch_locks_wheels():
    cfg = parse_config_text(RIG, overrides=["perturbation.wheel_velocity=0", "initial_noise=0",
                                            "mode_schedule=[{t: 0, mode: wheeled}, {t: 0.1, mode: legged}]"])
    log, met = S.run_scenario(cfg)
    modes = log.column("mode")
    t = log.column("t")
    assert set(modes[t < 0.1]) == {"wheeled"} and set(modes[t >= 0.1]) == {"legged"}
    assert met["mode_events"] == 1
    for j in rig.WHEEL_JOINTS:
        assert np.max(np.abs(log.column(f"v.{j}")[t > 0.12])) < 1e-6


def test_gait_run_zmp_and_slip():
    log, met = S.run_scenario(parse_config_text(GAIT))
    assert met["zmp_inside_all"] and met["segments_completed"] == 2
    assert met["max_slip_residual"] <= 1e-9
    assert met["final_heading_error"] < 0.05


def test_degradation_budget_fails_with_log():
    cfg = parse_config_text(GAIT, overrides=["horizon.max_iter=1", "horizon.tol_cost=1e-15",
                                             "horizon.tol_grad=1e-15", "max_degraded_steps=0"])
    with pytest.raises(S.ScenarioFailed) as exc:
        S.run_scenario(cfg)
    assert exc.value.log is not None and len(exc.value.log.rows) > 0


def test_flat_ground_ik_and_whole_body_comparable():
    cfg = parse_config_text("""\
name: flat
scenario: terrain
duration: 1.0
terrain: {kind: flat}
base: {speed: 0.5, start_time: 0.3}
compare_ik: true
""")
    _, met = S.run_scenario(cfg)
    ratio = met["ik_ee_height_rms_error"] / met["ee_height_rms_error"]
    assert 0.5 <= ratio <= 2.0
