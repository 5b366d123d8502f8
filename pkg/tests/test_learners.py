import numpy as np
import pytest

from ismlearn.learners import (
    BatchTrainConfig, LocalLinearMap, TrainingSample, batch_train, lattice_points,
    lattice_sample, net_rmse, _net_loss_grad,
)

G_ACC = 9.81


# -- local linear map ---------------------------------------------------------


def make_llm(**kw):
    return LocalLinearMap(np.array([-np.pi / 2]), np.array([0.0]), **kw)


def test_init_predicts_home_torque_everywhere():
    llm = LocalLinearMap(np.array([0.1, 0.2]), np.array([1.0, -2.0]))
    assert llm.prototype_count == 1
    assert np.allclose(llm.predict(np.array([0.1, 0.2])), [1.0, -2.0])
    assert np.allclose(llm.predict(np.array([2.0, -1.0])), [1.0, -2.0])


def test_predict_single_prototype_at_center():
    llm = LocalLinearMap(np.zeros(2), np.array([0.5, 0.5]))
    assert np.allclose(llm.predict(np.zeros(2)), [0.5, 0.5])


def test_predict_midpoint_blends_equally():
    llm = LocalLinearMap(np.zeros(1), np.array([1.0]), insertion_radius=0.5)
    llm.centers = np.array([[-0.3], [0.3]])
    llm.offsets = np.array([[1.0], [3.0]])
    llm.gains = np.zeros((2, 1, 1))
    assert np.allclose(llm.predict(np.zeros(1)), [2.0])


def test_zero_weight_update_is_noop():
    llm = make_llm()
    before = (llm.centers.copy(), llm.offsets.copy(), llm.gains.copy())
    llm.update(TrainingSample(np.array([1.0]), np.array([0.3]), weight=0.0))
    assert llm.prototype_count == 1
    assert np.array_equal(llm.offsets, before[1])
    assert np.array_equal(llm.gains, before[2])


def test_repeated_update_converges_geometrically():
    llm = make_llm(learning_rate=0.2, lr_decay=False)
    target = TrainingSample(np.array([0.7]), np.array([-np.pi / 2]), weight=1.0)
    errors = []
    for _ in range(30):
        errors.append(abs(llm.predict(target.configuration)[0] - 0.7))
        llm.update(target)
    errors = np.array(errors)
    # delta rule at the prototype center: residual scales by (1 - lr)
    ratios = errors[1:] / errors[:-1]
    assert np.allclose(ratios, 0.8, atol=1e-8)
    assert errors[-1] < 0.5 * errors[0]


def test_insertion_on_distant_sample():
    llm = make_llm(insertion_radius=0.3)
    llm.update(TrainingSample(np.array([0.4]), np.array([0.5]), weight=1.0))
    assert llm.prototype_count == 2


def test_update_moves_prediction_toward_sample():
    llm = make_llm(learning_rate=0.05, lr_decay=False)
    q = np.array([-1.5])
    tau = np.array([0.9])
    before = abs(llm.predict(q)[0] - tau[0])
    llm.update(TrainingSample(tau, q, weight=1.0))
    after = abs(llm.predict(q)[0] - tau[0])
    assert after <= before


def test_llm_learns_pendulum_statics(pendulum):
    bound = G_ACC * 1.0 * 0.2
    llm = LocalLinearMap(
        pendulum.home_configuration, np.zeros(1),
        insertion_radius=0.1, learning_rate=0.3, lr_decay=False, kernel_width=0.05,
    )
    rng = np.random.default_rng(1)
    for _ in range(500):
        q = rng.uniform(-np.pi, np.pi, 1)
        llm.update(TrainingSample(pendulum.gravity_term(q), q, weight=1.0))
    grid = np.deg2rad(np.arange(-180, 180))[:, None]
    errs = [abs(llm.predict(q)[0] - pendulum.gravity_term(q)[0]) for q in grid]
    assert max(errs) <= 0.05 * bound


def test_soft_blend_is_continuous():
    llm = LocalLinearMap(np.zeros(2), np.zeros(2), blend="soft", insertion_radius=0.3,
                         learning_rate=0.5, lr_decay=False)
    rng = np.random.default_rng(2)
    for _ in range(60):
        q = rng.uniform(-1, 1, 2)
        llm.update(TrainingSample(np.array([np.sin(q[0]), q[1]]), q, weight=1.0))
    # small input perturbations produce small output changes
    for _ in range(50):
        q = rng.uniform(-1, 1, 2)
        d = llm.predict(q + 1e-6) - llm.predict(q)
        assert np.abs(d).max() < 1e-4


def test_llm_checkpoint_roundtrip(tmp_path):
    llm = make_llm(insertion_radius=0.2)
    rng = np.random.default_rng(3)
    for _ in range(40):
        q = rng.uniform(-2, 2, 1)
        llm.update(TrainingSample(np.array([np.cos(q[0])]), q, weight=0.8))
    path = tmp_path / "llm.json"
    llm.save(path)
    again = LocalLinearMap.load(path)
    probe = np.array([0.123])
    assert np.array_equal(again.predict(probe), llm.predict(probe))
    assert again.prototype_count == llm.prototype_count


# -- batch network ------------------------------------------------------------


def test_batch_constant_function():
    rng = np.random.default_rng(4)
    Q = rng.uniform(-1, 1, (50, 2))
    T = np.full((50, 2), 1.5)
    net = batch_train(list(zip(Q, T)), BatchTrainConfig(epochs=200, seed=0))
    assert net_rmse(net, Q, T) <= 1e-3


def test_batch_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    Xn = rng.normal(size=(5, 2))
    Yn = rng.normal(size=(5, 2))
    params = [rng.normal(size=(2, 4)), rng.normal(size=4),
              rng.normal(size=(4, 2)), rng.normal(size=2)]
    loss0, grads = _net_loss_grad(params, Xn, Yn, 0.0)
    h = 1e-6
    for p, g in zip(params, grads):
        flat = p.ravel()
        gflat = np.asarray(g).ravel()
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            lp, _ = _net_loss_grad(params, Xn, Yn, 0.0)
            flat[k] = old - h
            lm, _ = _net_loss_grad(params, Xn, Yn, 0.0)
            flat[k] = old
            fd = (lp - lm) / (2 * h)
            assert abs(fd - gflat[k]) <= 1e-5 * max(1.0, abs(fd))


def test_batch_training_reproducible():
    rng = np.random.default_rng(6)
    Q = rng.uniform(-1, 1, (30, 2))
    T = np.sin(Q)
    cfg = BatchTrainConfig(epochs=50, seed=9)
    a = batch_train(list(zip(Q, T)), cfg)
    b = batch_train(list(zip(Q, T)), cfg)
    assert np.array_equal(a.w1, b.w1) and np.array_equal(a.w2, b.w2)


def test_batch_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    Q = rng.uniform(-1, 1, (30, 2))
    T = np.sin(Q)
    net = batch_train(list(zip(Q, T)), BatchTrainConfig(epochs=30, seed=1))
    net.save(tmp_path / "net.npy", extra={"config_hash": "beef"})
    from ismlearn.learners import BatchNet

    again = BatchNet.load(tmp_path / "net.npy")
    probe = rng.uniform(-1, 1, (5, 2))
    assert np.array_equal(again.predict(probe), net.predict(probe))


# -- rank-1 lattices ----------------------------------------------------------


def test_lattice_single_point():
    pts = lattice_sample([0.0, 0.0], [1.0, 1.0], 1, seed=5)
    assert pts.shape == (1, 2)
    shift = np.random.default_rng(5).uniform(0, 1, 2)
    assert np.allclose(pts[0], shift)


def test_lattice_points_inside_region():
    lo = np.array([-2.0, 0.5, 1.0])
    hi = np.array([-1.0, 2.5, 4.0])
    pts = lattice_sample(lo, hi, 128, seed=0)
    assert np.all(pts >= lo) and np.all(pts <= hi)


def star_discrepancy_estimate(pts):
    """Max deviation between empirical and uniform box measure over test
    boxes anchored at the origin with corners on the sample coordinates."""
    n, d = pts.shape
    assert d == 2
    xs = np.sort(np.unique(pts[:, 0]))
    ys = np.sort(np.unique(pts[:, 1]))
    worst = 0.0
    for x in xs:
        inside_x = pts[:, 0] <= x
        for y in ys:
            frac = np.mean(inside_x & (pts[:, 1] <= y))
            worst = max(worst, abs(frac - x * y))
    return worst


def test_lattice_beats_iid_discrepancy():
    lat, iid = [], []
    for seed in range(20):
        lat.append(star_discrepancy_estimate(lattice_points(100, 2, seed=seed)))
        iid.append(star_discrepancy_estimate(np.random.default_rng(seed).uniform(0, 1, (100, 2))))
    assert np.median(lat) < np.median(iid)
