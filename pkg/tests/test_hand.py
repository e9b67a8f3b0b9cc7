import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_pose, random_scene
from gears.hand import (
    ARTICULATED,
    N_BETA,
    DegenerateBone,
    HandPose,
    HandShape,
    VertexCountMismatch,
    bone_scales,
    chain_from_relative,
    forward_kinematics,
    forward_kinematics_batch,
    hand_surface_faces,
    hand_surface_mesh,
    hand_surface_vertices,
    inverse_kinematics,
    joint_regressor,
    load_skeleton,
)
from gears.mesh import TriMesh
from gears.rotations import axis_angle_to_matrix, random_rotation, rot_z


def test_skeleton_topology():
    skel = load_skeleton()
    assert np.sum(skel.parent < 0) == 1 and skel.parent[0] == -1
    assert np.all(skel.parent[1:] < np.arange(1, 21))
    assert np.all(np.linalg.norm(skel.rest_offsets, axis=1) > 1e-3)


def test_rest_pose_identity():
    skel = load_skeleton()
    joints = forward_kinematics(HandShape(), HandPose())
    np.testing.assert_array_equal(joints, skel.rest_joints)


def test_rest_pose_rotated_about_z():
    skel = load_skeleton()
    R = rot_z(np.pi / 2)
    joints = forward_kinematics(HandShape(), HandPose(global_rot=R))
    np.testing.assert_allclose(joints, skel.rest_joints @ R.T, atol=1e-15)


def test_index_group_scale():
    skel = load_skeleton()
    i = skel.group_names.index("index")
    beta = np.zeros(N_BETA)
    beta[i] = 2.0  # factor 1.2
    joints = forward_kinematics(HandShape(beta), HandPose())
    kids = np.arange(1, 21)
    ratio = np.linalg.norm(joints[kids] - joints[skel.parent[kids]], axis=1) / np.linalg.norm(skel.rest_offsets, axis=1)
    members = skel.group_matrix[i] > 0
    assert members.sum() > 0
    np.testing.assert_allclose(ratio[members], 1.2, atol=1e-12)
    np.testing.assert_allclose(ratio[~members], 1.0, atol=1e-12)


def test_shape_monotonic_per_group():
    skel = load_skeleton()
    base = bone_scales(np.zeros(N_BETA))
    for i in range(N_BETA):
        beta = np.zeros(N_BETA)
        beta[i] = 0.5
        grown = bone_scales(beta)
        members = skel.group_matrix[i] > 0
        assert np.all(grown[members] > base[members])
        np.testing.assert_array_equal(grown[~members], base[~members])


def test_scale_clamped():
    scales = bone_scales(np.full(N_BETA, 9.0))
    assert scales.max() <= 1.5 and scales.min() >= 0.5


def test_root_equals_wrist_exactly(rng):
    beta, theta, R, w = random_scene(rng)
    joints = forward_kinematics(HandShape(beta), HandPose(theta, R, w))
    np.testing.assert_array_equal(joints[0], w)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rigid_equivariance(seed):
    rng = np.random.default_rng(seed)
    beta, theta, R0, w = random_scene(rng)
    R, t = random_rotation(rng), rng.normal(size=3)
    a = forward_kinematics(HandShape(beta), HandPose(theta, R @ R0, R @ w + t))
    b = forward_kinematics(HandShape(beta), HandPose(theta, R0, w)) @ R.T + t
    assert np.max(np.abs(a - b)) < 1e-9


def test_ik_rest_pose_gives_identity(rng):
    R, w = random_rotation(rng), rng.normal(size=3)
    joints = forward_kinematics(HandShape(), HandPose(global_rot=R, wrist_pos=w))
    frames = inverse_kinematics(joints, R)
    np.testing.assert_allclose(frames.relative, np.broadcast_to(np.eye(3), (21, 3, 3)), atol=1e-12)
    np.testing.assert_array_equal(frames.rotations[0], R)
    np.testing.assert_array_equal(frames.origins[0], w)


def test_ik_single_bone_rotation():
    skel = load_skeleton()
    j = 6  # index middle joint
    bone = skel.rest_joints[j + 1] - skel.rest_joints[j]
    axis = np.cross(bone, [0.0, 0.0, 1.0])
    axis /= np.linalg.norm(axis)
    theta = np.zeros((15, 3))
    theta[ARTICULATED.index(j)] = axis * np.deg2rad(30)
    joints = forward_kinematics(HandShape(), HandPose(theta))
    frames = inverse_kinematics(joints, np.eye(3))
    np.testing.assert_allclose(frames.relative[j], axis_angle_to_matrix(axis * np.deg2rad(30)), atol=1e-12)


def test_ik_round_trip_batch(rng):
    for _ in range(20):
        beta, theta, R, w = random_scene(rng)
        joints, _ = forward_kinematics_batch(beta, theta, R, w)
        frames = inverse_kinematics(joints, R)
        again, rots = chain_from_relative(frames.relative, beta, R, w)
        assert np.max(np.abs(again - joints)) < 1e-6
        np.testing.assert_allclose(rots, frames.rotations, atol=1e-12)


def test_template_frames_reproduce_children(rng):
    skel = load_skeleton()
    beta, theta, R, w = random_scene(rng)
    joints, _ = forward_kinematics_batch(beta, theta, R, w)
    frames = inverse_kinematics(joints, R)
    scales = bone_scales(beta)
    for k in range(1, 21):
        p = skel.parent[k]
        predicted = frames.origins[p] + frames.rotations[p] @ (skel.rest_offsets[k - 1] * scales[k - 1])
        assert np.linalg.norm(predicted - joints[k]) < 1e-6
    err = np.einsum("kji,kjl->kil", frames.rotations, frames.rotations) - np.eye(3)
    assert np.abs(err).max() < 1e-12


def test_ik_degenerate_bone():
    joints = load_skeleton().rest_joints.copy()
    joints[7] = joints[6] + 1e-4
    with pytest.raises(DegenerateBone):
        inverse_kinematics(joints, np.eye(3))
    frames = inverse_kinematics(joints, np.eye(3), on_degenerate="parent")
    np.testing.assert_allclose(frames.rotations[6], frames.rotations[5])


def test_surface_mesh_watertight_and_sized():
    mesh = hand_surface_mesh(HandShape(), HandPose())
    assert mesh.is_watertight()
    assert 600 <= mesh.n_vertices <= 1000
    lo, hi = mesh.bounds()
    assert 0.18 <= hi[0] - lo[0] <= 0.22


def test_surface_equivariance(rng):
    beta, theta, R0, w = random_scene(rng)
    R, t = random_rotation(rng), rng.normal(size=3)
    a = hand_surface_vertices(beta, theta, R @ R0, R @ w + t)
    b = hand_surface_vertices(beta, theta, R0, w) @ R.T + t
    assert np.abs(a - b).max() < 1e-9


def test_regressor_matches_fk(rng):
    skel = load_skeleton()
    assert np.abs(joint_regressor(hand_surface_vertices(np.zeros(10), np.zeros((15, 3)), np.eye(3), np.zeros(3)))
                  - skel.rest_joints).max() < 1e-12
    for _ in range(10):
        beta, theta, R, w = random_scene(rng)
        v = hand_surface_vertices(beta, theta, R, w)
        joints, _ = forward_kinematics_batch(beta, theta, R, w)
        assert np.abs(joint_regressor(v) - joints).max() < 1e-6


def test_regressor_linear(rng):
    n = len(hand_surface_vertices(np.zeros(10), np.zeros((15, 3)), np.eye(3), np.zeros(3)))
    V1, V2 = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
    a, b = 0.7, -1.9
    np.testing.assert_allclose(joint_regressor(a * V1 + b * V2), a * joint_regressor(V1) + b * joint_regressor(V2),
                               atol=1e-12)


def test_regressor_vertex_count():
    with pytest.raises(VertexCountMismatch):
        joint_regressor(np.zeros((10, 3)))


def test_surface_faces_in_range():
    faces = hand_surface_faces()
    mesh = TriMesh(hand_surface_vertices(np.zeros(10), random_pose(np.random.default_rng(0)), np.eye(3), np.zeros(3)),
                   faces)
    assert faces.max() < mesh.n_vertices
