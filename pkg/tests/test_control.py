import numpy as np
import pytest

from tiltlink.allocation import allocate
from tiltlink.control import (
    AREFailed,
    CascadeController,
    LQIWeights,
    PositionGains,
    RankDeficientQr,
    SingularInertia,
    ZeroThrustDemand,
    attitude_control,
    build_state_matrices,
    collective_thrust,
    desired_attitude,
    position_control,
    solve_lqi_gain,
)
from tiltlink.geometry import rot_x, rot_y, rot_z
from tiltlink.model import Configuration, aggregate_inertia, forward_kinematics


def _form(model, q, psi):
    config = Configuration(q, psi)
    frames = forward_kinematics(model, config)
    inertia = aggregate_inertia(model, frames)
    bundle = allocate(model, config, frames, inertia)
    i_cog = bundle.r_cog_c @ inertia.inertia @ bundle.r_cog_c.T
    return bundle, i_cog


def _random_controllable(rng, n, m):
    while True:
        a = rng.normal(0.0, 1.0, (n, n))
        b = rng.normal(0.0, 1.0, (n, m))
        ctrb = np.hstack([np.linalg.matrix_power(a, k) @ b for k in range(n)])
        if np.linalg.matrix_rank(ctrb) == n:
            return a, b


def test_state_matrix_sparsity_pattern():
    i_sigma = np.eye(3)
    qr = np.vstack([np.eye(3).T, np.zeros(3)]).T  # 3x4 with identity block
    a, b, d = build_state_matrices(i_sigma, qr)
    assert np.count_nonzero(a) == 6
    assert a[0, 1] == a[2, 3] == a[4, 5] == 1.0
    assert a[6, 0] == a[7, 2] == a[8, 4] == 1.0
    np.testing.assert_allclose(b[1], -qr[0], atol=1e-15)
    np.testing.assert_allclose(b[3], -qr[1], atol=1e-15)
    np.testing.assert_allclose(b[5], -qr[2], atol=1e-15)
    assert np.count_nonzero(b[[0, 2, 4, 6, 7, 8]]) == 0
    assert d[1, 0] == d[3, 1] == d[5, 2] == 1.0
    assert np.count_nonzero(d) == 3


def test_state_matrices_roundtrip_inertia():
    rng = np.random.default_rng(71)
    for _ in range(10):
        m = rng.normal(0.0, 1.0, (3, 3))
        i_sigma = m @ m.T + 3.0 * np.eye(3)
        qr = rng.normal(0.0, 1.0, (3, 4))
        _, b, _ = build_state_matrices(i_sigma, qr)
        rebuilt = i_sigma @ (-b[[1, 3, 5]])
        np.testing.assert_allclose(rebuilt, qr, atol=1e-12)


def test_singular_inertia_rejected():
    with pytest.raises(SingularInertia):
        build_state_matrices(np.zeros((3, 3)), np.zeros((3, 4)))


def test_double_integrator_matches_closed_form():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    b = np.array([[0.0], [1.0]])
    gains = solve_lqi_gain(a, b, np.eye(2), np.eye(1))
    np.testing.assert_allclose(gains.k_x, [[1.0, np.sqrt(3.0)]], atol=1e-8)
    assert gains.residual < 1e-8


def test_riccati_residual_on_random_systems():
    rng = np.random.default_rng(73)
    for _ in range(25):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, 4))
        a, b = _random_controllable(rng, n, m)
        gains = solve_lqi_gain(a, b, np.eye(n), np.eye(m))
        assert gains.residual < 1e-8
        assert np.all(np.linalg.eigvals(a - b @ gains.k_x).real < 0.0)


def test_unstabilizable_pair_raises():
    a = np.array([[1.0, 0.0], [0.0, 1.0]])
    b = np.zeros((2, 1))
    with pytest.raises(AREFailed):
        solve_lqi_gain(a, b, np.eye(2), np.eye(1))


def test_attitude_loop_hurwitz_with_flight_weights(model, canonical_plans):
    weights = LQIWeights()
    for name, q in (
        ("normal", [np.pi / 2] * 3),
        ("s1", [-np.pi / 2, 0.0, np.pi / 2]),
        ("s2", [0.0] * 3),
    ):
        bundle, i_cog = _form(model, q, canonical_plans[name].psi_bar)
        a, b, _ = build_state_matrices(i_cog, bundle.Qr)
        gains = solve_lqi_gain(
            a, b, weights.state_weight(), weights.input_weight(bundle.Qt)
        )
        eigs = np.linalg.eigvals(a - b @ gains.k_x)
        assert np.all(eigs.real < 0.0)


def test_force_cost_shrinks_with_heavier_suppression(model, canonical_plans):
    """A larger force-suppression weight must not increase the closed-loop
    translational-force energy from any fixed initial state (the quantity
    the extra input-cost term actually penalizes)."""
    import scipy.linalg

    bundle, i_cog = _form(model, [0.0] * 3, canonical_plans["s2"].psi_bar)
    a, b, _ = build_state_matrices(i_cog, bundle.Qr)
    rng = np.random.default_rng(79)
    states = rng.normal(0.0, 0.1, (20, 9))
    previous = None
    previous_norm = None
    for w2 in (0.0, 20.0, 200.0):
        weights = LQIWeights(w2_diag=(w2, w2, w2))
        gains = solve_lqi_gain(
            a, b, weights.state_weight(), weights.input_weight(bundle.Qt)
        )
        a_cl = a - b @ gains.k_x
        force_quad = gains.k_x.T @ bundle.Qt.T @ bundle.Qt @ gains.k_x
        lyap = scipy.linalg.solve_continuous_lyapunov(a_cl.T, -force_quad)
        energies = np.array([x @ lyap @ x for x in states])
        gain_norm = np.linalg.norm(bundle.Qt @ gains.k_x, ord=2)
        if previous is not None:
            assert np.all(energies <= previous + 1e-12)
            assert gain_norm < previous_norm
        previous = energies
        previous_norm = gain_norm


def test_attitude_control_equilibrium_and_feedforward(model, canonical_plans):
    bundle, i_cog = _form(model, [np.pi / 2] * 3, canonical_plans["normal"].psi_bar)
    a, b, _ = build_state_matrices(i_cog, bundle.Qr)
    weights = LQIWeights()
    gains = solve_lqi_gain(
        a, b, weights.state_weight(), weights.input_weight(bundle.Qt)
    )
    np.testing.assert_allclose(
        attitude_control(np.zeros(9), np.zeros(3), i_cog, bundle.Qr, gains),
        np.zeros(4),
        atol=1e-12,
    )
    # Spin about a principal axis has no gyroscopic residue.
    eigval, eigvec = np.linalg.eigh(i_cog)
    omega = 0.7 * eigvec[:, 1]
    lam = attitude_control(np.zeros(9), omega, i_cog, bundle.Qr, gains)
    np.testing.assert_allclose(lam, np.zeros(4), atol=1e-10)


def test_gyroscopic_feedforward_reproduces_torque(model, canonical_plans):
    bundle, i_cog = _form(model, [np.pi / 2] * 3, canonical_plans["normal"].psi_bar)
    rng = np.random.default_rng(83)
    qr = bundle.Qr
    for _ in range(20):
        omega = rng.normal(0.0, 1.0, 3)
        gyro = np.cross(omega, i_cog @ omega)
        np.testing.assert_allclose(qr @ np.linalg.pinv(qr) @ gyro, gyro, atol=1e-10)


def test_attitude_control_linear_in_state(model, canonical_plans):
    bundle, i_cog = _form(model, [np.pi / 2] * 3, canonical_plans["normal"].psi_bar)
    a, b, _ = build_state_matrices(i_cog, bundle.Qr)
    weights = LQIWeights()
    gains = solve_lqi_gain(
        a, b, weights.state_weight(), weights.input_weight(bundle.Qt)
    )
    rng = np.random.default_rng(89)
    x1, x2 = rng.normal(0.0, 1.0, (2, 9))
    lhs = attitude_control(x1 + 2.0 * x2, np.zeros(3), i_cog, bundle.Qr, gains)
    rhs = attitude_control(x1, np.zeros(3), i_cog, bundle.Qr, gains) + 2.0 * (
        attitude_control(x2, np.zeros(3), i_cog, bundle.Qr, gains)
    )
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_rank_deficient_allocation_rejected(model):
    gains_dummy = None
    flat = model.with_overrides(tilt_beta=0.0)
    config = Configuration([0.0] * 3, [0.0] * 4)
    frames = forward_kinematics(flat, config)
    inertia = aggregate_inertia(flat, frames)
    from tiltlink.feasibility import torque_basis

    qr = torque_basis(flat, config, frames, inertia).vectors.T
    with pytest.raises(RankDeficientQr):
        attitude_control(np.zeros(9), np.zeros(3), inertia.inertia, qr, gains_dummy)


def test_position_control_formula():
    gains = PositionGains()
    mass = 4.7
    assert np.allclose(
        position_control(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), gains, mass),
        np.zeros(3),
    )
    f = position_control(
        np.array([1.0, 0.0, 0.0]),
        np.array([-0.1, 0.0, 0.0]),
        np.zeros(3),
        np.zeros(3),
        gains,
        mass,
    )
    assert f[0] == pytest.approx(mass * (2.3 * 1.0 + 4.0 * -0.1))
    rng = np.random.default_rng(97)
    for _ in range(20):
        e, de, ei, ff = rng.normal(0.0, 1.0, (4, 3))
        expected = mass * (
            np.array(gains.kp) * e
            + np.array(gains.ki) * ei
            + np.array(gains.kd) * de
            + ff
        )
        np.testing.assert_allclose(
            position_control(e, de, ei, ff, gains, mass), expected, atol=1e-12
        )


def test_desired_attitude_cases():
    assert desired_attitude([0.0, 0.0, 46.1], 0.0) == (0.0, 0.0)
    theta = 0.2
    fz = 50.0
    alpha_x, alpha_y = desired_attitude([0.0, -fz * np.tan(theta), fz], 0.0)
    assert alpha_x == pytest.approx(theta, abs=1e-12)
    assert alpha_y == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ZeroThrustDemand):
        desired_attitude([0.0, 0.0, 0.0], 0.3)


def test_desired_attitude_roundtrip_alignment():
    rng = np.random.default_rng(101)
    for _ in range(50):
        f = rng.normal(0.0, 10.0, 3)
        f[2] = abs(f[2]) + 5.0
        yaw = rng.uniform(-np.pi, np.pi)
        alpha_x, alpha_y = desired_attitude(f, yaw)
        thrust_axis = rot_z(yaw) @ rot_y(alpha_y) @ rot_x(alpha_x) @ [0.0, 0.0, 1.0]
        np.testing.assert_allclose(
            thrust_axis, f / np.linalg.norm(f), atol=1e-9
        )


def test_collective_thrust_cases(model, canonical_plans):
    bundle, _ = _form(model, [np.pi / 2] * 3, canonical_plans["normal"].psi_bar)
    weight = model.total_mass * model.gravity
    hover = collective_thrust(
        np.array([0.0, 0.0, weight]), np.eye(3), bundle.lambda_s, model.total_mass
    )
    np.testing.assert_allclose(hover, bundle.lambda_s, atol=1e-12)
    sideways = collective_thrust(
        np.array([5.0, 0.0, 0.0]), np.eye(3), bundle.lambda_s, model.total_mass
    )
    np.testing.assert_allclose(sideways, np.zeros(4), atol=1e-12)
    # Any rescaling of the static thrust stays torque free.
    np.testing.assert_allclose(bundle.Qr @ hover, np.zeros(3), atol=1e-9)


def test_cascade_hover_equilibrium(model, canonical_plans):
    config = Configuration([np.pi / 2] * 3, canonical_plans["normal"].psi_bar)
    frames = forward_kinematics(model, config)
    inertia = aggregate_inertia(model, frames)
    bundle = allocate(model, config, frames, inertia)
    controller = CascadeController(model)
    controller.set_form(bundle, inertia)
    refs = {
        "r_des": np.zeros(3),
        "v_des": np.zeros(3),
        "a_des": np.zeros(3),
        "yaw_des": 0.0,
        "yaw_rate_des": 0.0,
    }
    lam, info = controller.step(
        np.zeros(3), np.zeros(3), np.eye(3), np.zeros(3), refs, 0.0
    )
    np.testing.assert_allclose(lam, bundle.lambda_s, atol=1e-9)
    assert not info["saturated"]


def test_cascade_yaw_error_maps_to_yaw_torque(model, canonical_plans):
    config = Configuration([np.pi / 2] * 3, canonical_plans["normal"].psi_bar)
    frames = forward_kinematics(model, config)
    inertia = aggregate_inertia(model, frames)
    bundle = allocate(model, config, frames, inertia)
    controller = CascadeController(model)
    controller.set_form(bundle, inertia)
    refs = {
        "r_des": np.zeros(3),
        "v_des": np.zeros(3),
        "a_des": np.zeros(3),
        "yaw_des": 0.3,
        "yaw_rate_des": 0.0,
    }
    lam, _ = controller.step(
        np.zeros(3), np.zeros(3), np.eye(3), np.zeros(3), refs, 0.0
    )
    torque = bundle.Qr @ (lam - bundle.lambda_s)
    assert abs(torque[2]) > 5.0 * max(abs(torque[0]), abs(torque[1]))
    force = bundle.Qt @ (lam - bundle.lambda_s)
    assert np.linalg.norm(force[:2]) < 0.5 * abs(torque[2]) / 0.3
