import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wheelleg import contact, models, rbd
from wheelleg.contact import ContactSpec, build_cone, cone_penalty, cone_residual
from wheelleg.errors import DegenerateWrenchError, SingularSystemError
from wheelleg.rbd import GeneralizedState
from wheelleg.sim import rig as rigmod

BOUNDS = ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0))


def test_point_cone_rows():
    cone = build_cone(ContactSpec("c", "point", 0.7))
    expected = np.array([
        [1, 0, -0.7, 0, 0, 0],
        [-1, 0, -0.7, 0, 0, 0],
        [0, 1, -0.7, 0, 0, 0],
        [0, -1, -0.7, 0, 0, 0],
        [0, 0, -1, 0, 0, 0],
    ])
    np.testing.assert_array_equal(cone.A, expected)
    np.testing.assert_array_equal(cone.b, np.zeros(5))


def test_full_and_wheel_line_cone_shapes():
    full = build_cone(ContactSpec("c", "full", 0.7, ((-1, 2), (-3, 4), (-5, 6))))
    assert full.A.shape == (11, 6)
    np.testing.assert_array_equal(full.b[4:10], [2, 1, 4, 3, 6, 5])
    assert np.all(np.abs(full.A).sum(1) > 0)
    wl = build_cone(ContactSpec("c", "wheel_line", 0.7, BOUNDS))
    assert wl.A.shape == (11, 6)
    np.testing.assert_array_equal(wl.A[6:8], np.zeros((2, 6)))
    assert np.all(wl.A[:, 4] == 0)


def test_wheel_line_ignores_rolling_moment():
    wl = build_cone(ContactSpec("c", "wheel_line", 0.7, BOUNDS))
    for tau_y in (-1e6, -3.0, 0.0, 2.5, 1e6):
        w = np.array([0.1, 0.0, 1.0, 0.2, tau_y, -0.3])
        assert cone_penalty(cone_residual(wl, w))[0] == 0.0


def test_vanishing_friction_cone():
    cone = build_cone(ContactSpec("c", "point", 1e-300))
    assert np.all(cone_residual(cone, [0, 0, 3.0, 0, 0, 0]) <= 0)
    assert np.any(cone_residual(cone, [1e-6, 0, 3.0, 0, 0, 0]) > 0)
    assert np.any(cone_residual(cone, [0, 0, -1e-6, 0, 0, 0]) > 0)


@pytest.mark.parametrize("bad", [
    dict(kind="plane"), dict(mu=0.0), dict(mu=-1.0), dict(torque_bounds=((1, -1), (0, 0), (0, 0))),
])
def test_invalid_spec(bad):
    with pytest.raises(ValueError):
        ContactSpec("c", **{"kind": "point", **bad})


def test_residual_examples():
    cone = build_cone(ContactSpec("c", "point", 0.7))
    np.testing.assert_allclose(cone_residual(cone, [0, 0, 1, 0, 0, 0]), [-0.7, -0.7, -0.7, -0.7, -1.0])
    r = cone_residual(cone, [1, 0, 1, 0, 0, 0])
    # direct evaluation of A w - b: 1 - 0.7, -1 - 0.7, -0.7, -0.7, -1
    np.testing.assert_allclose(r, [0.3, -1.7, -0.7, -0.7, -1.0])
    full = build_cone(ContactSpec("c", "full", 0.7, BOUNDS))
    np.testing.assert_array_equal(cone_residual(full, np.zeros(6))[4:10], -np.ones(6))


def test_penalty_examples():
    assert cone_penalty([-1.0, -0.2, 0.0]) == (0.0, pytest.approx(np.zeros(3)))
    cost, grad = cone_penalty([0.3, -1.0])
    assert cost == pytest.approx(0.045, abs=1e-15)
    np.testing.assert_allclose(grad, [0.3, 0.0])


def test_penalty_gradient_fd(rng):
    for _ in range(100):
        r = rng.normal(size=11)
        r[np.abs(r) < 1e-3] = 0.5
        _, g = cone_penalty(r)
        eps = 1e-6
        fd = np.array([(cone_penalty(r + eps * e)[0] - cone_penalty(r - eps * e)[0]) / (2 * eps) for e in np.eye(11)])
        np.testing.assert_allclose(g, fd, atol=1e-6)


@pytest.mark.parametrize("kind", ["point", "wheel_line", "full"])
def test_interior_zero_and_outward_monotone(kind, rng):
    cone = build_cone(ContactSpec("c", kind, 0.7, BOUNDS))
    accepted = 0
    while accepted < 1000:
        w = rng.uniform(-2, 2, 6)
        w[2] = rng.uniform(0, 3)
        r = cone_residual(cone, w)
        if np.any(r > 0):
            continue
        accepted += 1
        assert cone_penalty(r)[0] == 0.0
        # outward normal of a random nonzero face, plus noise
        faces = np.flatnonzero(np.abs(cone.A).sum(1) > 0)
        d = cone.A[rng.choice(faces)] + 0.1 * rng.normal(size=6)
        costs = [cone_penalty(cone_residual(cone, w + s * d))[0] for s in np.linspace(0, 50, 26)]
        assert np.all(np.diff(costs) >= -1e-12)
        assert costs[-1] > 0


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e4, 1e4), st.floats(0.0, 1.0), st.floats(-0.69, 0.69), st.floats(-0.9, 0.9))
def test_wheel_line_rolling_moment_property(tau_y, fz, ratio, tx):
    cone = build_cone(ContactSpec("c", "wheel_line", 0.7, BOUNDS))
    w = np.array([ratio * fz, 0.0, fz, tx, 0.0, 0.0])
    assert cone_penalty(cone_residual(cone, w))[0] == 0.0
    w[4] = tau_y
    assert cone_penalty(cone_residual(cone, w))[0] == 0.0


# -- constrained dynamics ---------------------------------------------------------------

def test_no_contacts_matches_unconstrained(rig, rng):
    s = GeneralizedState(rng.uniform(-1, 1, rig.nq), rng.normal(size=rig.nv))
    u = rng.normal(size=rig.nu)
    qdd, wrenches = contact.fd_constrained(rig, s, u, [])
    np.testing.assert_array_equal(qdd, rbd.fd_unconstrained(rig, s, u))
    assert wrenches == []
    inactive = ContactSpec("front_wheel", "point", active=False)
    qdd2, w2 = contact.fd_constrained(rig, s, u, [inactive])
    np.testing.assert_array_equal(qdd2, qdd)
    np.testing.assert_array_equal(w2[0], np.zeros(6))


def test_resting_point_mass():
    pm = models.point_mass(10.0)
    s = GeneralizedState([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    qdd, (w,) = contact.fd_constrained(pm, s, np.zeros(0), [ContactSpec("contact", "point", 0.7)], gravity=[0, -9.81])
    assert abs(qdd[1]) <= 1e-12
    assert w[2] == pytest.approx(98.1, rel=1e-9)


def _stance_states(rig, rng, n):
    q0 = rigmod.standing_configuration(rig)
    for _ in range(n):
        q = q0 + rng.normal(scale=0.15, size=rig.nq)
        yield GeneralizedState(q, rng.normal(size=rig.nv))


def test_double_stance_kkt_against_dense_oracle(rig, rng):
    contacts = rigmod.wheel_contacts(rig)
    for s in _stance_states(rig, rng, 50):
        u = rng.normal(scale=10, size=rig.nu)
        qdd, wrenches = contact.fd_constrained(rig, s, u, contacts)
        # oracle: assemble the saddle system independently and solve with lstsq
        M = rbd.mass_matrix(rig, s.q)
        h = rbd.bias_forces(rig, s)
        rows, drift = [], []
        for c in contacts:
            Jf = rbd.frame_jacobian(rig, s.q, c.frame)
            rho = c.wheel_radius
            # rolling point: v_centre + ω G (-ρ ẑ) = v_centre + ρ ω x̂
            Jc = Jf[:2] + np.outer([rho, 0.0], Jf[2])
            rows.append(Jc)
            drift.append(rbd.jdot_v(rig, s, c.frame)[:2])
        J = np.vstack(rows)
        K = np.block([[M, -J.T], [J, np.zeros((4, 4))]])
        rhs = np.concatenate([rig.S.T @ u - h, -np.concatenate(drift)])
        x = np.linalg.lstsq(K, rhs, rcond=None)[0]
        np.testing.assert_allclose(qdd, x[:11], atol=1e-9 * max(1, np.abs(x).max()))
        lam = np.concatenate([[w[0], w[2]] for w in wrenches])
        np.testing.assert_allclose(lam, x[11:], atol=1e-9 * max(1, np.abs(x).max()))
        sol = np.concatenate([qdd, lam])
        assert np.abs(K @ sol - rhs).max() <= 1e-9 * max(1, np.abs(rhs).max())


def test_contact_acceleration_residual(rig, rng):
    contacts = rigmod.wheel_contacts(rig)
    for s in _stance_states(rig, rng, 200):
        u = rng.normal(scale=10, size=rig.nu)
        qdd, _ = contact.fd_constrained(rig, s, u, contacts)
        assert contact.contact_acceleration_residual(rig, s, qdd, contacts) <= 1e-8


def test_rank_deficient_contacts_fail(rig):
    s = GeneralizedState(rigmod.standing_configuration(rig), np.zeros(rig.nv))
    c = ContactSpec("front_wheel", "point")
    with pytest.raises(SingularSystemError, match="front_wheel"):
        contact.fd_constrained(rig, s, np.zeros(rig.nu), [c, c])


def test_newton_euler_static_consistency(rig):
    contacts = rigmod.wheel_contacts(rig)
    q = rigmod.standing_configuration(rig)
    s = GeneralizedState(q, np.zeros(rig.nv))
    h = rbd.bias_forces(rig, s)
    J = np.vstack([contact.contact_kinematics(rig, q, s.v, c).jacobian for c in contacts])
    # actuation and contact forces that hold the robot still: Sᵀu + Jᵀλ = h
    x = np.linalg.lstsq(np.hstack([rig.S.T, J.T]), h, rcond=None)[0]
    u = x[: rig.nu]
    qdd, wrenches = contact.fd_constrained(rig, s, u, contacts)
    assert np.abs(qdd).max() <= 1e-9
    f_ext = rig.S.T @ u - h  # gravity plus actuation
    res = contact.newton_euler_residual(rig, q, list(zip(contacts, wrenches)), f_ext)
    assert np.abs(res).max() <= 1e-8


def test_newton_euler_trivial_and_linear(rig):
    q = rigmod.standing_configuration(rig)
    np.testing.assert_array_equal(contact.newton_euler_residual(rig, q, [], np.zeros(rig.nv)), np.zeros(rig.nv))
    c = rigmod.wheel_contacts(rig)[0]
    w = np.array([3.0, 0, 50.0, 0, 0, 0])
    r1 = contact.newton_euler_residual(rig, q, [(c, w)], np.zeros(rig.nv))
    r2 = contact.newton_euler_residual(rig, q, [(c, 2 * w)], np.zeros(rig.nv))
    np.testing.assert_allclose(r2, 2 * r1, rtol=1e-14)


# -- ZMP ---------------------------------------------------------------------------------

def test_zmp_single_support():
    p = np.array([0.3, -0.2, 0.0])
    np.testing.assert_allclose(contact.zmp([(p, [0, 0, 50, 0, 0, 0])]), p[:2], atol=1e-15)


def test_zmp_moment_balance():
    ws = [([0.0, 0.0, 0.0], [0, 0, 60, 0, 0, 0]), ([1.0, 0.0, 0.0], [0, 0, 40, 0, 0, 0])]
    # 60·0 + 40·1 = 100·x
    np.testing.assert_allclose(contact.zmp(ws), [0.4, 0.0], atol=1e-15)


def test_zmp_elevated_contact_with_tangential_force():
    # force applied at height: the ZMP shifts by -f_x z / f_z
    ws = [([0.0, 0.0, 0.5], [10.0, 0, 100, 0, 0, 0])]
    np.testing.assert_allclose(contact.zmp(ws), [-0.05, 0.0], atol=1e-15)


def test_zmp_degenerate():
    with pytest.raises(DegenerateWrenchError):
        contact.zmp([([0, 0, 0], [1, 0, 0, 0, 0, 0])])


def test_in_support():
    square = [[0.3, 0.2, 0], [0.3, -0.2, 0], [-0.3, 0.2, 0], [-0.3, -0.2, 0]]
    assert contact.in_support([0.0, 0.0], square)
    assert contact.in_support([0.3, 0.2], square)
    assert not contact.in_support([0.31, 0.0], square)
    seg = [[-0.25, 0, 0.0], [0.25, 0, 0.1]]
    assert contact.in_support([0.1, 0.0], seg)
    assert not contact.in_support([0.3, 0.0], seg)
    assert not contact.in_support([0.0, 0.01], seg)
