import logging

import numpy as np
import pytest

from ismlearn import ManipulatorModel, load_robot
from ismlearn.sst import explore_sst
from ismlearn.symmetry import (
    construct_bcts, filter_sound_relations, fit_relations, match_correspondences,
    oracle_level_set_record, pick_torque_targets, sps_closure,
)

logging.getLogger("ismlearn").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def arm2r():
    return load_robot("planar_2r")


@pytest.fixture(scope="session")
def arm3r():
    return load_robot("human_arm_3r")


@pytest.fixture(scope="session")
def arm4r():
    return load_robot("humanoid_arm_4r")


@pytest.fixture(scope="session")
def pendulum():
    # 1R pendulum: tau = g*m*c * cos(q)
    return ManipulatorModel(
        link_lengths=[0.4], link_masses=[1.0], link_coms=[0.2],
        joint_axes=[[0.0, 0.0, 1.0]], joint_limits=[[-np.pi, np.pi]],
        home_configuration=[-np.pi / 2], viscous_damping=[0.6],
        name="pendulum",
    )


@pytest.fixture(scope="session")
def sst2r(arm2r):
    return explore_sst(arm2r, 10000, rng_seed=42)


@pytest.fixture(scope="session")
def relations2r(arm2r):
    """Sound relations fitted from ground-truth level-set scans."""
    taus = pick_torque_targets(arm2r, 6, seed=3)
    records = [oracle_level_set_record(arm2r, t) for t in taus]
    classes = match_correspondences(records, seed=3)
    relations = filter_sound_relations(arm2r, fit_relations(classes), tol=1e-3)
    return records, relations


@pytest.fixture(scope="session")
def sps2r(relations2r):
    _, relations = relations2r
    return sps_closure(relations)


@pytest.fixture(scope="session")
def bcts2r(arm2r, sps2r):
    return construct_bcts(sps2r, arm2r.q_min, arm2r.q_max, arm2r.home_configuration)
