import numpy as np
import pytest

from ismlearn import ManipulatorModel, SettleParams, SettleStatus, load_robot

G_ACC = 9.81


def fd_gradient(model, q, h=1e-6):
    """Central finite difference of the potential energy."""
    g = np.empty(model.n)
    for j in range(model.n):
        d = np.zeros(model.n)
        d[j] = h
        g[j] = (model.potential_energy(q + d) - model.potential_energy(q - d)) / (2 * h)
    return g


def fd_gradient4(model, q, h=1e-3):
    """Fourth-order central difference (rounding-error floor ~1e-12)."""
    g = np.empty(model.n)
    for j in range(model.n):
        d = np.zeros(model.n)
        d[j] = h
        g[j] = (
            -model.potential_energy(q + 2 * d) + 8 * model.potential_energy(q + d)
            - 8 * model.potential_energy(q - d) + model.potential_energy(q - 2 * d)
        ) / (12 * h)
    return g


def test_gravity_straight_down_is_zero(arm2r):
    tau = arm2r.gravity_term(np.array([-np.pi / 2, 0.0]))
    assert np.allclose(tau, 0.0, atol=1e-12)


def test_gravity_stretched_horizontal(arm2r):
    # both links horizontal: torques from the analytic moment arms,
    # cross-checked by the finite-difference oracle
    q = np.zeros(2)
    tau = arm2r.gravity_term(q)
    expected = np.array([G_ACC * (1.0 * 0.15 + 1.0 * (0.3 + 0.15)), G_ACC * 1.0 * 0.15])
    assert np.allclose(tau, expected, rtol=1e-12)
    fd = fd_gradient(arm2r, q, h=1e-6)
    assert np.abs(fd - tau).max() / np.abs(tau).max() <= 1e-8


@pytest.mark.parametrize("robot", ["planar_2r", "human_arm_3r", "humanoid_arm_4r"])
def test_gravity_matches_potential_gradient(robot):
    model = load_robot(robot)
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(200):
        q = rng.uniform(model.q_min, model.q_max)
        g = model.gravity_term(q)
        fd = fd_gradient4(model, q)
        rel = np.abs(fd - g).max() / max(np.abs(g).max(), 1e-3)
        worst = max(worst, rel)
    assert worst <= 1e-8


def test_potential_grid_minimum(arm2r):
    # global minimum of the potential over a 1-degree grid sits at the
    # hanging configuration
    grid = np.deg2rad(np.arange(-180, 180))
    best = None
    for q1 in grid:
        # for fixed q1 the minimum over q2 has sin(q1+q2) = -1
        q2 = -np.pi / 2 - q1
        u = arm2r.potential_energy(np.array([q1, q2]))
        if best is None or u < best[0]:
            best = (u, q1)
    u_hang = arm2r.potential_energy(np.array([-np.pi / 2, 0.0]))
    assert u_hang <= best[0] + 1e-9


def test_potential_reference_is_home_free(arm2r):
    u = arm2r.potential_energy(arm2r.home_configuration)
    assert u - arm2r.potential_energy(arm2r.home_configuration) == 0.0


def test_settle_fixed_point(arm2r):
    q0 = np.array([-1.1, 0.7])
    out = arm2r.settle(q0, arm2r.gravity_term(q0))
    assert out.status is SettleStatus.SETTLED
    assert np.abs(out.q_final - q0).max() <= 1e-6


def test_settle_zero_torque_reaches_hanging_equilibrium(arm2r):
    out = arm2r.settle(np.array([-1.2, 0.4]), np.zeros(2))
    assert out.status is SettleStatus.SETTLED
    assert np.abs(arm2r.gravity_term(out.q_final)).max() <= 1e-6


def test_settle_excessive_torque_hits_limits(arm2r):
    # torque far beyond the static bound cannot be balanced anywhere
    tau = np.array([3.0 * arm2r.torque_scale, 0.0])
    out = arm2r.settle(arm2r.home_configuration, tau)
    assert out.status is SettleStatus.LIMIT_VIOLATION


def test_settled_outcomes_satisfy_equilibrium_tolerance(arm2r):
    rng = np.random.default_rng(5)
    params = SettleParams()
    for _ in range(10):
        q0 = rng.uniform(-1.5, -0.5, 2)
        tau = arm2r.gravity_term(q0 + rng.normal(0, 0.1, 2))
        out = arm2r.settle(q0, tau, params)
        if out.status is SettleStatus.SETTLED:
            assert np.abs(arm2r.gravity_term(out.q_final) - tau).max() <= params.eq_tol


def test_settle_dissipates_energy(arm2r):
    # Lyapunov candidate: kinetic + potential - tau . q is non-increasing
    tau = arm2r.gravity_term(np.array([-1.3, 0.5]))
    qs, qds = arm2r.simulate(arm2r.home_configuration, np.zeros(2), tau,
                             dt=1e-3, n_steps=4000, stride=20)
    v = []
    for q, qd in zip(qs, qds):
        kinetic = 0.5 * qd @ arm2r.mass_matrix(q) @ qd
        v.append(kinetic + arm2r.potential_energy(q) - tau @ q)
    v = np.array(v)
    assert np.all(np.diff(v) <= 1e-8)


def test_gravity_bound_2r(arm2r):
    rng = np.random.default_rng(2)
    Q = rng.uniform(-np.pi, np.pi, (500, 2))
    taus = arm2r.gravity_batch(Q)
    assert np.all(np.abs(taus[:, 0]) <= G_ACC * (0.15 + 0.45) + 1e-9)
    assert np.all(np.abs(taus[:, 1]) <= G_ACC * 0.15 + 1e-9)


def test_forward_kinematics_examples(arm2r):
    assert np.allclose(arm2r.forward_kinematics(np.zeros(2)), [0.6, 0.0], atol=1e-12)
    assert np.allclose(
        arm2r.forward_kinematics(np.array([np.pi / 2, 0.0])), [0.0, 0.6], atol=1e-12
    )
    rng = np.random.default_rng(3)
    for _ in range(100):
        q = rng.uniform(-np.pi, np.pi, 2)
        assert np.linalg.norm(arm2r.forward_kinematics(q)) <= 0.6 + 1e-12


def test_within_limits_boundary_conventions(arm2r):
    assert arm2r.within_limits(arm2r.home_configuration)
    assert not arm2r.within_limits(arm2r.q_max + 1e-6)
    assert arm2r.within_limits(arm2r.q_min)  # closed bound


def test_mass_matrix_positive_definite(arm3r):
    rng = np.random.default_rng(4)
    for _ in range(20):
        q = rng.uniform(arm3r.q_min, arm3r.q_max)
        eig = np.linalg.eigvalsh(arm3r.mass_matrix(q))
        assert np.all(eig > 0)


def test_batch_gravity_matches_scalar(arm4r):
    rng = np.random.default_rng(6)
    Q = rng.uniform(arm4r.q_min, arm4r.q_max, (50, 4))
    batch = arm4r.gravity_batch(Q)
    single = np.array([arm4r.gravity_term(q) for q in Q])
    assert np.array_equal(batch, single)


def test_model_validation_errors():
    with pytest.raises(ValueError):
        ManipulatorModel(
            link_lengths=[0.3], link_masses=[-1.0], link_coms=[0.1],
            joint_axes=[[0, 0, 1]], joint_limits=[[-1, 1]], home_configuration=[0.0],
        )
    with pytest.raises(ValueError):
        ManipulatorModel(
            link_lengths=[0.3], link_masses=[1.0], link_coms=[0.5],
            joint_axes=[[0, 0, 1]], joint_limits=[[-1, 1]], home_configuration=[0.0],
        )
    with pytest.raises(ValueError):
        ManipulatorModel(
            link_lengths=[0.3], link_masses=[1.0], link_coms=[0.1],
            joint_axes=[[0, 0, 1]], joint_limits=[[1, -1]], home_configuration=[0.0],
        )


def test_config_roundtrip(arm2r, tmp_path):
    import yaml

    path = tmp_path / "robot.yaml"
    path.write_text(yaml.safe_dump(arm2r.to_dict()))
    again = load_robot(path)
    assert again.n == arm2r.n
    assert np.array_equal(again.link_lengths, arm2r.link_lengths)
    q = np.array([0.3, -0.7])
    assert np.array_equal(again.gravity_term(q), arm2r.gravity_term(q))


def test_planar_flags(arm2r, arm3r):
    assert arm2r.planar and arm2r.workspace_dim == 2
    assert not arm3r.planar and arm3r.workspace_dim == 3


def test_settle_deterministic(arm2r):
    q0 = np.array([-1.0, 0.3])
    tau = arm2r.gravity_term(np.array([-1.2, 0.5]))
    a = arm2r.settle(q0, tau)
    b = arm2r.settle(q0, tau)
    assert a.steps == b.steps
    assert np.array_equal(a.q_final, b.q_final)
