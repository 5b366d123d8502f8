import json

import networkx as nx
import numpy as np
import pytest
from scipy.spatial import ConvexHull

from ismlearn import ManipulatorModel
from ismlearn.sst import (
    DegenerateInput, SSTEstimate, dedupe_points, estimate_boundary, explore_sst,
)

G_ACC = 9.81


def test_explore_respects_static_bound(arm2r):
    est = explore_sst(arm2r, 10000, rng_seed=1)
    assert np.all(np.abs(est.torque_samples[:, 1]) <= G_ACC * 0.15 + 1e-9)


def test_explore_pendulum_interval(pendulum):
    est = explore_sst(pendulum, 500, rng_seed=2)
    bound = G_ACC * 1.0 * 0.2
    assert np.all(np.abs(est.torque_samples[:, 0]) <= bound + 1e-9)
    # 1-D boundary is the pair of extreme samples
    assert len(est.boundary_vertices) == 2
    assert est.contains(np.array([0.0]))
    assert not est.contains(np.array([bound * 1.5]))


def test_estimated_area_matches_monte_carlo_reference(arm2r):
    est = explore_sst(arm2r, 10000, rng_seed=3)
    # dense Monte-Carlo reference: hull of the true torque image (the 2R
    # static set is convex, a parallelogram)
    rng = np.random.default_rng(4)
    dense = arm2r.gravity_batch(rng.uniform(arm2r.q_min, arm2r.q_max, (200000, 2)))
    ref = ConvexHull(dense).volume
    assert abs(est.area() - ref) / ref <= 0.05


def test_square_convex_hull():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]])
    verts, facets, _, _ = estimate_boundary(square, np.inf)
    assert sorted(verts) == [0, 1, 2, 3]
    assert len(facets) == 4


def test_annulus_boundary_has_two_loops():
    rng = np.random.default_rng(5)
    theta = rng.uniform(0, 2 * np.pi, 3000)
    radius = rng.uniform(1.0, 2.0, 3000)
    pts = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    verts, facets, _, _ = estimate_boundary(pts, 0.35)
    graph = nx.Graph()
    graph.add_edges_from(tuple(f) for f in facets)
    assert nx.number_connected_components(graph) == 2


def test_collinear_points_degenerate():
    pts = np.stack([np.linspace(0, 1, 10), np.linspace(0, 2, 10)], axis=1)
    with pytest.raises(DegenerateInput):
        estimate_boundary(pts, np.inf)


def test_contains_witnessed_and_far(arm2r, sst2r):
    tau_home = arm2r.gravity_term(arm2r.home_configuration)
    assert sst2r.contains(tau_home)
    scale = np.abs(sst2r.torque_samples).max()
    assert not sst2r.contains(np.array([10 * scale, 10 * scale]))
    for tau in sst2r.torque_samples[::500]:
        assert sst2r.contains(tau)


def test_contains_rate_after_exploration(arm2r, sst2r):
    rng = np.random.default_rng(7)
    taus = arm2r.gravity_batch(rng.uniform(arm2r.q_min, arm2r.q_max, (1000, 2)))
    rate = np.mean([sst2r.contains(t) for t in taus])
    assert rate >= 0.99


def test_projection_far_corner():
    pts = np.array([[x, y] for x in np.linspace(0, 1, 12) for y in np.linspace(0, 1, 12)])
    est = SSTEstimate.build(pts, alpha=np.inf)
    proj = est.project_to_boundary(np.array([10.0, 10.0]))
    assert np.allclose(proj, [1.0, 1.0])


def test_projection_matches_bruteforce(arm2r, sst2r):
    rng = np.random.default_rng(8)
    scale = np.abs(sst2r.torque_samples).max(axis=0)
    boundary = sst2r.boundary_points
    for _ in range(100):
        tau = rng.uniform(1.2, 3.0, 2) * scale * rng.choice([-1, 1], 2)
        if sst2r.contains(tau):
            continue
        got = sst2r.project_to_boundary(tau)
        # independent exhaustive scan
        best, best_d = None, np.inf
        for vertex in boundary:
            d = float(np.hypot(*(vertex - tau)))
            if d < best_d:
                best, best_d = vertex, d
        assert np.array_equal(got, best)
        assert sst2r.contains(got)


def test_monotone_under_sample_addition(arm2r):
    rng = np.random.default_rng(9)
    Q = rng.uniform(arm2r.q_min, arm2r.q_max, (3000, 2))
    taus = arm2r.gravity_batch(Q)
    est = explore_sst(arm2r, 4000, rng_seed=10)
    alpha = est.alpha
    probes = arm2r.gravity_batch(rng.uniform(arm2r.q_min, arm2r.q_max, (200, 2)))
    inside_before = [t for t in probes if est.contains(t)]
    est.add_samples(taus[:1500])
    est.alpha = alpha
    est._rebuild()
    still = np.mean([est.contains(t) for t in inside_before])
    assert still >= 0.995


def test_area_converges(arm2r):
    a1 = explore_sst(arm2r, 10000, rng_seed=11).area()
    a2 = explore_sst(arm2r, 40000, rng_seed=12).area()
    assert abs(a1 - a2) / a2 <= 0.02


def test_serialization_roundtrip(tmp_path, sst2r):
    path = tmp_path / "sst.json"
    sst2r.save(path, extra={"config_hash": "cafe"})
    again = SSTEstimate.load(path)
    assert np.array_equal(again.torque_samples, sst2r.torque_samples)
    assert again.alpha == sst2r.alpha
    assert json.loads(path.read_text())["config_hash"] == "cafe"
    probe = np.array([0.5, 0.2])
    assert again.contains(probe) == sst2r.contains(probe)
    # byte-identical resave
    path2 = tmp_path / "sst2.json"
    again.save(path2, extra={"config_hash": "cafe"})
    assert path.read_bytes() == path2.read_bytes()


def test_dedupe_points():
    pts = np.array([[1.0, 2.0], [1.0, 2.0], [1.0 + 1e-12, 2.0], [3.0, 4.0]])
    out = dedupe_points(pts)
    assert len(out) == 2
