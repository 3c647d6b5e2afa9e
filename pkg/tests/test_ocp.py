import numpy as np
import pytest

from wheelleg import models, ocp
from wheelleg.contact import FlatGround
from wheelleg.errors import DimensionError, SolverError
from wheelleg.ocp import costs
from wheelleg.sim import rig as rigmod

from .conftest import random_state


def rel_err(a, b, floor=1e-8):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), floor)


# -- independent LQ oracles --------------------------------------------------

def random_lq(rng, nx=6, nu=3, N=50):
    A = np.eye(nx) + 0.1 * rng.normal(size=(nx, nx))
    B = rng.normal(size=(nx, nu))
    q = rng.uniform(0.5, 2.0, nx)
    r = rng.uniform(0.1, 1.0, nu)
    qf = rng.uniform(1.0, 3.0, nx)
    ref = rng.normal(size=nx)
    x0 = rng.normal(size=nx)
    return A, B, q, r, qf, ref, x0


def lq_problem(A, B, q, r, qf, ref, x0, N):
    dyn = ocp.LinearDynamics(A, B)
    nx, nu = B.shape
    idx = np.arange(nx)
    stage = [ocp.StateTracking("base_pose", idx, ref, 1.0, nx, nu, scale=np.sqrt(q)),
             ocp.Regularization(nx, nu, 1.0, scale=np.sqrt(r))]
    term = [ocp.StateTracking("base_pose", idx, ref, 1.0, nx, nu, scale=np.sqrt(qf))]
    return ocp.OcpProblem(dyn, N, stage, term, x0)


def riccati(A, B, q, r, qf, ref, N):
    """Textbook affine Riccati recursion for ½(x-ref)ᵀQ(x-ref) + ½uᵀRu."""
    Q, R, Qf = np.diag(q), np.diag(r), np.diag(qf)
    P = Qf
    p = -Qf @ ref
    Ks, ks = [None] * N, [None] * N
    for i in range(N - 1, -1, -1):
        H = R + B.T @ P @ B
        K = -np.linalg.solve(H, B.T @ P @ A)
        kff = -np.linalg.solve(H, B.T @ p)
        Ks[i], ks[i] = K, kff
        P_new = Q + A.T @ P @ A + A.T @ P @ B @ K
        p = -Q @ ref + (A + B @ K).T @ p
        P = 0.5 * (P_new + P_new.T)
    return np.array(Ks), np.array(ks)


def batch_qp(A, B, q, r, qf, ref, x0, N):
    """Condensed least-squares solve over all controls."""
    nx, nu = B.shape
    Phi = np.zeros(((N + 1) * nx, nx))
    Gam = np.zeros(((N + 1) * nx, N * nu))
    Ak = np.eye(nx)
    for i in range(N + 1):
        Phi[i * nx:(i + 1) * nx] = Ak
        Ak = A @ Ak
    for i in range(1, N + 1):
        for j in range(i):
            Gam[i * nx:(i + 1) * nx, j * nu:(j + 1) * nu] = np.linalg.matrix_power(A, i - 1 - j) @ B
    w = np.concatenate([np.tile(np.sqrt(q), N), np.sqrt(qf)])
    rows = np.vstack([w[:, None] * Gam, np.kron(np.eye(N), np.diag(np.sqrt(r)))])
    rhs = np.concatenate([w * (np.tile(ref, N + 1) - Phi @ x0), np.zeros(N * nu)])
    U = np.linalg.lstsq(rows, rhs, rcond=None)[0]
    X = Phi @ x0 + Gam @ U
    return X.reshape(N + 1, nx), U.reshape(N, nu)


def test_backward_pass_matches_riccati(rng):
    for _ in range(5):
        A, B, q, r, qf, ref, x0 = random_lq(rng, N=30)
        prob = lq_problem(A, B, q, r, qf, ref, x0, 30)
        traj = ocp.initial_trajectory(prob)
        gains = ocp.backward_pass(prob, traj, 0.0)
        K_ref, k_ref = riccati(A, B, q, r, qf, ref, 30)
        np.testing.assert_allclose(gains.K, K_ref, atol=1e-10, rtol=0)
        # affine gains about the zero-control trajectory
        u_opt = np.array([k_ref[i] + K_ref[i] @ traj.xs[i] for i in range(30)])
        np.testing.assert_allclose(gains.k, u_opt, atol=1e-10, rtol=0)


def test_solve_lq_one_iteration(rng):
    A, B, q, r, qf, ref, x0 = random_lq(rng, nx=4, nu=2, N=40)
    prob = lq_problem(A, B, q, r, qf, ref, x0, 40)
    sol = ocp.solve(prob)
    X, U = batch_qp(A, B, q, r, qf, ref, x0, 40)
    assert sol.converged and sol.iterations == 1
    np.testing.assert_allclose(sol.xs, X, atol=1e-6)
    np.testing.assert_allclose(sol.us, U, atol=1e-6)
    K_ref, _ = riccati(A, B, q, r, qf, ref, 40)
    np.testing.assert_allclose(sol.K, K_ref, atol=1e-10)


def test_double_integrator_to_origin():
    dt = 0.1
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[0.5 * dt * dt], [dt]])
    q, r, qf = np.array([1.0, 0.1]), np.array([0.01]), np.array([100.0, 100.0])
    prob = lq_problem(A, B, q, r, qf, np.zeros(2), np.array([1.0, 0.0]), 30)
    sol = ocp.solve(prob)
    X, U = batch_qp(A, B, q, r, qf, np.zeros(2), np.array([1.0, 0.0]), 30)
    np.testing.assert_allclose(sol.xs, X, atol=1e-6)
    np.testing.assert_allclose(sol.us, U, atol=1e-6)
    assert abs(sol.xs[-1, 0]) < 0.05


def test_init_at_optimum_zero_iterations(rng):
    A, B, q, r, qf, ref, x0 = random_lq(rng, nx=3, nu=1, N=10)
    prob = lq_problem(A, B, q, r, qf, ref, x0, 10)
    sol = ocp.solve(prob)
    again = ocp.solve(prob, init=sol)
    assert again.converged and again.iterations <= 1


def test_stationary_gains_zero(rng):
    A, B, q, r, qf, ref, x0 = random_lq(rng, nx=3, nu=2, N=10)
    prob = lq_problem(A, B, q, r, qf, ref, x0, 10)
    sol = ocp.solve(prob)
    gains = ocp.backward_pass(prob, ocp.Trajectory(sol.xs, sol.us), 0.0)
    np.testing.assert_allclose(gains.k, 0.0, atol=1e-9)


def test_large_regularization_kills_gains(rng):
    A, B, q, r, qf, ref, x0 = random_lq(rng, nx=3, nu=2, N=10)
    prob = lq_problem(A, B, q, r, qf, ref, x0, 10)
    traj = ocp.initial_trajectory(prob)
    g = ocp.backward_pass(prob, traj, 1e12)
    assert np.max(np.abs(g.K)) < 1e-8 and np.max(np.abs(g.k)) < 1e-8


def test_backward_pass_rejects_indefinite():
    prob = lq_problem(np.eye(2), np.eye(2), np.ones(2), np.zeros(2), np.ones(2), np.zeros(2), np.ones(2), 3)
    prob.stage_costs[1].weight = 0.0
    # Q_uu = Bᵀ V B stays PD here; make it singular by dropping the state costs
    prob.stage_costs[0].weight = 0.0
    prob.terminal_costs[0].weight = 0.0
    with pytest.raises(SolverError, match="node"):
        ocp.backward_pass(prob, ocp.initial_trajectory(prob), 0.0)


def test_null_forward_step(rng):
    A, B, q, r, qf, ref, x0 = random_lq(rng, nx=3, nu=2, N=8)
    prob = lq_problem(A, B, q, r, qf, ref, x0, 8)
    traj = ocp.rollout(prob, rng.normal(size=(8, 2)))
    zero = ocp.Gains(np.zeros((8, 2)), np.zeros((8, 2, 3)), np.zeros((8, 2)), (0.0, 0.0))
    new = ocp.forward_pass(prob, traj, zero, 1.0)
    np.testing.assert_array_equal(new.xs, traj.xs)
    assert new.cost == traj.cost


def test_problem_validation():
    dyn = ocp.LinearDynamics(np.eye(2), np.ones((2, 1)))
    with pytest.raises(ValueError):
        ocp.OcpProblem(dyn, 0, [], [], np.zeros(2))
    with pytest.raises(DimensionError):
        ocp.OcpProblem(dyn, 5, [], [], np.zeros(3))
    with pytest.raises(ValueError):
        ocp.Regularization(2, 1, -1.0)


# -- warm start ----------------------------------------------------------------

def test_shift_warm_start():
    xs = np.array([[0.0], [1.0], [2.0]])
    us = np.array([[10.0], [20.0]])
    sol = ocp.OcpSolution(xs, us, np.zeros((2, 1)), np.zeros((2, 1, 1)), 0.0, 1, True)
    init = ocp.shift_warm_start(sol)
    np.testing.assert_array_equal(init.xs, [[1.0], [2.0], [2.0]])
    np.testing.assert_array_equal(init.us, [[20.0], [20.0]])
    const = ocp.OcpSolution(np.ones((4, 2)), np.ones((3, 1)), np.zeros((3, 1)), np.zeros((3, 1, 2)), 0.0, 1, True)
    init = ocp.shift_warm_start(const)
    np.testing.assert_array_equal(init.xs, const.xs)
    np.testing.assert_array_equal(init.us, const.us)
    with pytest.raises(ValueError):
        ocp.shift_warm_start(ocp.OcpSolution(xs[:2], us[:1], us[:1], np.zeros((1, 1, 1)), 0.0, 0, True))


# -- nonlinear problems --------------------------------------------------------

def pendulum_problem(N=40, dt=0.05):
    model = models.pendulum(mass=1.0, length=1.0, inertia=0.0)
    dyn = ocp.ContactDynamics(model, [], dt, baumgarte=None)
    x0 = np.array([0.0, 0.0])
    stage = [ocp.Regularization(2, 1, 1e-2),
             ocp.StateTracking("base_pose", [0, 1], [np.pi, 0.0], 0.1, 2, 1)]
    term = [ocp.StateTracking("base_pose", [0, 1], [np.pi, 0.0], 100.0, 2, 1)]
    return ocp.OcpProblem(dyn, N, stage, term, x0)


def test_pendulum_swing_up_monotone(tmp_path):
    prob = pendulum_problem()
    sol = ocp.solve(prob, options=ocp.SolverOptions(max_iter=200))
    assert sol.converged
    assert abs(sol.xs[-1, 0] - np.pi) < 0.05
    acc = [r for r in sol.log.rows if r["accepted"]]
    costs_ = [r["cost"] for r in acc]
    assert all(b <= a for a, b in zip(costs_, costs_[1:]))
    path = tmp_path / "log.csv"
    sol.log.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "iteration,cost,grad_norm,mu,alpha,accepted,wall_time"


def test_rollout_divergence_rejected():
    dyn = ocp.LinearDynamics(np.array([[1e200]]), np.array([[1.0]]))
    prob = ocp.OcpProblem(dyn, 5, [ocp.Regularization(1, 1, 1.0)], [], np.array([1.0]))
    with pytest.raises(FloatingPointError):
        ocp.rollout(prob, np.zeros((5, 1)))


# -- derivative checks ---------------------------------------------------------

def fd_jac(f, x, eps=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = eps
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * eps))
    return np.stack(cols, -1)


@pytest.fixture(scope="module")
def rig_dyn():
    model = models.sagittal_rig()
    return model, ocp.ContactDynamics(model, rigmod.wheel_contacts(model), 0.02, FlatGround())


def stance_state(model, rng):
    q = rigmod.standing_configuration(model)
    q = q + 0.02 * rng.normal(size=model.nq)
    return np.concatenate([q, 0.3 * rng.normal(size=model.nv)])


def test_contact_dynamics_derivatives(rig_dyn, rng):
    model, dyn = rig_dyn
    xs = np.array([stance_state(model, rng) for _ in range(10)])
    us = rng.normal(size=(10, model.nu))
    fx, fu, wx, wu = dyn.linearize(xs, us)
    for i in range(10):
        fx_fd = fd_jac(lambda x: dyn.step(x, us[i])[0], xs[i], 1e-5)
        fu_fd = fd_jac(lambda u: dyn.step(xs[i], u)[0], us[i], 1e-5)
        wx_fd = fd_jac(lambda x: dyn.step(x, us[i])[1], xs[i], 1e-5)
        wu_fd = fd_jac(lambda u: dyn.step(xs[i], u)[1], us[i], 1e-5)
        assert rel_err(fx[i], fx_fd) < 1e-4
        assert rel_err(fu[i], fu_fd) < 1e-4
        assert rel_err(wx[i], wx_fd) < 1e-4
        assert rel_err(wu[i], wu_fd) < 1e-4


def test_swerve_dynamics_derivatives(rng):
    dyn = ocp.SwerveDynamics(0.05)
    xs = rng.normal(size=(20, 6))
    us = rng.normal(size=(20, 3))
    fx, fu, _, _ = dyn.linearize(xs, us)
    for i in range(20):
        assert rel_err(fx[i], fd_jac(lambda x: dyn.step(x, us[i])[0], xs[i], 1e-5)) < 1e-4
        assert rel_err(fu[i], fd_jac(lambda u: dyn.step(xs[i], u)[0], us[i], 1e-5)) < 1e-4


def test_swerve_dynamics_matches_se2_step():
    from wheelleg import swerve

    dyn = ocp.SwerveDynamics(0.1)
    x = np.array([0.3, -0.2, 0.4, 0.5, 0.1, 0.7])
    u = np.array([0.2, -0.1, 0.3])
    xn, _ = dyn.step(x, u)
    tw = x[3:] + 0.1 * u
    np.testing.assert_allclose(xn[:3], swerve.se2_step(x[:3], tw, 0.1), atol=1e-14)
    np.testing.assert_allclose(xn[3:], tw)


def rig_terms(model, dyn):
    nx, nu = 2 * model.nv, model.nu
    q0 = rigmod.standing_configuration(model)
    legs = [model.coord_index(j) for j in rigmod.LEG_JOINTS]
    return [
        ocp.leg_tracking(model, rigmod.LEG_JOINTS, q0[legs], 2.0),
        ocp.ComTracking(model, [0.0, 0.5], 3.0),
        ocp.ContactForce(dyn.contacts, 1.5, nx, nu),
        ocp.Regularization(nx, nu, 0.5, u_ref=np.ones(nu), velocity_indices=range(model.nv, nx)),
        ocp.base_pose(model, [0.0, 0.56, 0.0], 4.0),
        ocp.steering_posture(model, rigmod.WHEEL_JOINTS, [0.0, 0.0], 0.7, velocity=True),
        ocp.ArmPose(model, [0.22, 0.92, -0.3], 5.0),
    ]


def test_cost_gradients_fd(rig_dyn, rng):
    model, dyn = rig_dyn
    terms = rig_terms(model, dyn)
    for term in terms:
        for _ in range(10):
            x = stance_state(model, rng)
            u = 20.0 * rng.normal(size=model.nu)
            _, w = dyn.step(x, u)
            fx, fu, wx, wu = dyn.linearize(x[None], u[None])

            def c_x(xx):
                return ocp.stage_cost([term], xx, u, 3, dyn.step(xx, u)[1]).l

            def c_u(uu):
                return ocp.stage_cost([term], x, uu, 3, dyn.step(x, uu)[1]).l

            d = ocp.stage_cost([term], x, u, 3, w, wx, wu)
            gx = fd_jac(lambda xx: np.atleast_1d(c_x(xx)), x, 1e-5)[0]
            gu = fd_jac(lambda uu: np.atleast_1d(c_u(uu)), u, 1e-5)[0]
            assert rel_err(d.lx, gx, 1e-6) < 1e-5, term
            assert rel_err(d.lu, gu, 1e-6) < 1e-5, term


def test_gauss_newton_hessians_psd(rig_dyn, rng):
    model, dyn = rig_dyn
    terms = rig_terms(model, dyn)
    xs = np.array([stance_state(model, rng) for _ in range(5)])
    us = 20.0 * rng.normal(size=(5, model.nu))
    _, ws = dyn.step(xs, us)
    _, _, wx, wu = dyn.linearize(xs, us)
    for term in terms:
        d = ocp.stage_cost([term], xs, us, np.arange(5), ws, wx, wu)
        for i in range(5):
            H = np.block([[d.lxx[i], d.lux[i].T], [d.lux[i], d.luu[i]]])
            assert np.linalg.eigvalsh(H)[0] >= -1e-9 * max(1.0, np.abs(H).max())


def test_zero_residual_zero_cost(rig_dyn):
    model, dyn = rig_dyn
    q0 = rigmod.standing_configuration(model)
    x = np.concatenate([q0, np.zeros(model.nv)])
    legs = [model.coord_index(j) for j in rigmod.LEG_JOINTS]
    terms = [ocp.leg_tracking(model, rigmod.LEG_JOINTS, q0[legs], 2.0),
             ocp.base_pose(model, q0[:3], 1.0),
             ocp.Regularization(2 * model.nv, model.nu, 1.0)]
    assert ocp.stage_cost(terms, x, np.zeros(model.nu), 0).l == 0.0


def test_com_tracking_value():
    model = models.point_mass()
    q = np.array([0.3, 1.0, 0.0])
    x = np.concatenate([q, np.zeros(3)])
    c, _ = __import__("wheelleg").rbd.center_of_mass(model, q)
    term = ocp.ComTracking(model, c - np.array([0.1, 0.0]), 2.0)
    assert ocp.stage_cost([term], x, np.zeros(model.nu), 0).l == pytest.approx(0.01, abs=1e-15)


def test_contact_force_term_equals_cone_penalty(rig_dyn, rng):
    from wheelleg import contact as ct

    model, dyn = rig_dyn
    term = ocp.ContactForce(dyn.contacts, 1.0, dyn.nx, dyn.nu)
    w = rng.normal(scale=30.0, size=dyn.nw)
    expected = sum(ct.cone_penalty(ct.cone_residual(ct.build_cone(c), w[6 * i:6 * i + 6]))[0]
                   for i, c in enumerate(dyn.contacts))
    got = ocp.stage_cost([term], np.zeros(dyn.nx), np.zeros(dyn.nu), 0, w).l
    assert got == pytest.approx(expected, rel=1e-14)


def test_reference_forms():
    r = ocp.Reference([1.0, 2.0], 2)
    np.testing.assert_array_equal(r(np.array([0, 5])), [[1, 2], [1, 2]])
    t = ocp.Reference(np.arange(6.0).reshape(3, 2), 2)
    np.testing.assert_array_equal(t(np.array([0, 2, 7])), [[0, 1], [4, 5], [4, 5]])
    f = ocp.Reference(lambda k: [k, -k], 2)
    np.testing.assert_array_equal(f(np.array([3])), [[3, -3]])
    with pytest.raises(DimensionError):
        ocp.Reference([1.0], 2)
