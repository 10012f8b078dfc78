import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hydrarm.model import (DHRow, JointState, LinkInertialSet, ModelConfigError, RobotModel,
                           forward_kinematics, link_transform, load_model, model_to_dict,
                           param_labels, validate_state)

finite = st.floats(-3.0, 3.0, allow_nan=False)


def test_default_joint2_row(model):
    row = model.dh_rows[2]
    assert row.a == pytest.approx(0.84246, abs=1e-12)
    assert row.theta_offset == pytest.approx(math.radians(130), abs=1e-12)


def test_default_joint1_limits(model):
    lim = model.limits[0]
    assert (lim.q_min, lim.q_max, lim.dq_max, lim.ddq_max) == (-0.0523, 1.0472, 0.2, 0.1)


def test_degenerate_bound_rejected(model):
    doc = model_to_dict(model)
    doc["limits"][0]["q_min"] = doc["limits"][0]["q_max"]
    with pytest.raises(ModelConfigError):
        load_model(doc)


def test_bad_json_rejected():
    with pytest.raises(ModelConfigError):
        load_model("{not json")


def test_round_trip_preserves_values(model):
    again = load_model(json.dumps(model_to_dict(model)))
    for a, b in zip(model.dh_rows, again.dh_rows):
        assert (a.d, a.a, a.alpha, a.theta_offset) == pytest.approx(
            (b.d, b.a, b.alpha, b.theta_offset), rel=1e-15, abs=1e-15)
    assert again.limits == model.limits
    assert again.gravity == model.gravity


def test_identity_row():
    assert np.array_equal(link_transform(DHRow(0, 0, 0, 0), 0.0), np.eye(4))


def test_unit_link_quarter_turn():
    T = link_transform(DHRow(d=0, alpha=0, a=1, theta_offset=0), math.pi / 2)
    assert np.allclose(T[:3, 3], [0, 1, 0], atol=1e-15)
    assert np.allclose(T[:3, :3], [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(d=finite, alpha=finite, a=st.floats(0.0, 3.0), th=finite, q=finite)
def test_rotation_block_orthonormal(d, alpha, a, th, q):
    R = link_transform(DHRow(d, alpha, a, th), q)[:3, :3]
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-12
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


def test_fk_zero_pose_matches_direct_product(model):
    frames = forward_kinematics(model, np.zeros(6))
    T = np.eye(4)
    for row in model.dh_rows:
        T = T @ link_transform(row, 0.0)
    assert np.allclose(frames[-1], T, atol=1e-12)


def test_fk_position_is_planar_sum(model):
    # actuated joints are parallel, so the tip sits at the sum of a_i along
    # accumulated angles inside the plane fixed by the base row
    q = np.array([0.3, -0.2, 0.1, 0.4, -0.5, 0.2])
    frames = forward_kinematics(model, q)
    base = frames[0]
    ang, x, y = 0.0, 0.0, 0.0
    z = 0.0
    for row, qi in zip(model.dh_rows[1:], q):
        ang += qi + row.theta_offset
        x += row.a * math.cos(ang)
        y += row.a * math.sin(ang)
        z += row.d
    local = np.linalg.solve(base, frames[-1][:, 3])
    assert np.allclose(local[:3], [x, y, z], atol=1e-12)


def test_fk_all_zero_lengths_share_origin():
    rows = tuple(DHRow(0, 0, 0, 0) for _ in range(7))
    m = RobotModel(rows, load_model().limits)
    frames = forward_kinematics(m, np.array([0.1, 0.5, -0.3, 0.2, 0.7, -1.0]))
    for F in frames:
        assert np.allclose(F[:3, 3], 0.0)


def test_fk_incremental_equals_direct(model, rng):
    q = rng.uniform(-1, 1, 6)
    frames = forward_kinematics(model, q)
    for k in range(1, 7):
        T = link_transform(model.dh_rows[0], 0.0)
        for row, qi in zip(model.dh_rows[1:k + 1], q[:k]):
            T = T @ link_transform(row, qi)
        assert np.abs(frames[k] - T).max() < 1e-12
        R = frames[k][:3, :3]
        assert np.abs(R.T @ R - np.eye(3)).max() < 1e-12


def test_zero_state_is_valid(model):
    z = np.zeros(6)
    assert validate_state(model, JointState(z, z, z)) == []


def test_velocity_violation(model):
    dq = np.zeros(6)
    dq[0] = 0.3
    v = validate_state(model, JointState(np.zeros(6), dq, np.zeros(6)))
    assert len(v) == 1
    assert (v[0].joint, v[0].quantity, v[0].value, v[0].bound) == (1, "dq", 0.3, 0.2)


def test_bounds_are_closed(model):
    q_min, q_max, dq_max, ddq_max = model.limit_arrays()
    assert validate_state(model, JointState(q_max, dq_max, -ddq_max)) == []
    assert validate_state(model, JointState(q_min, -dq_max, ddq_max)) == []


def test_nonfinite_state_rejected():
    with pytest.raises(ValueError):
        JointState(np.array([np.nan] * 6), np.zeros(6), np.zeros(6))


def test_param_labels_layout():
    labels = param_labels()
    assert len(labels) == 78
    assert labels[:3] == ["m_1", "mrx_1", "mry_1"]
    assert labels[-1] == "fs_6"


def test_from_com_roundtrip_inertia():
    I = np.diag([0.1, 0.2, 0.3])
    X = LinkInertialSet.from_com([2.0], [[1.0, 0.0, 0.0]], [I])
    assert np.allclose(X.inertia_tensor(0), I + np.diag([0, 2, 2]))
    assert X.is_physical()
