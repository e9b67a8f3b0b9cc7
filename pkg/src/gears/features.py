"""Network inputs assembled from a sequence record.

Everything a network sees is expressed in a local frame (object template
frame for sampling, wrist frame or joint template frames for features), so the
predictions move rigidly with the scene.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .hand import N_JOINTS, TemplateFrames, inverse_kinematics
from .mesh import TriMesh
from .records import SequenceRecord
from .sensors import (
    CubeSensor,
    EmptyMesh,
    HashGrid,
    PointCloud,
    crop_with_cube,
    joint_radius_query,
    sample_surface,
    sample_trajectory_window,
    window_features,
)


def _stream(*keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def surface_sample_count(mesh: TriMesh, config: PipelineConfig) -> int:
    s = config.sensor
    area_cm2 = float(mesh.face_areas().sum()) * 1e4
    return int(np.clip(round(area_cm2 * s.surface_density), s.surface_min, s.surface_max))


def object_surface(mesh: TriMesh, config: PipelineConfig, seed: int) -> PointCloud:
    """Surface samples of the object template, reused by every frame's joint sensors."""
    return sample_surface(mesh, surface_sample_count(mesh, config), _stream(seed, 7))


def crop_cloud(record: SequenceRecord, t: int, config: PipelineConfig, seed: int) -> np.ndarray:
    """Wrist-canonical points (N, 3) sampled on the cube-cropped object at frame t.

    The crop is evaluated on the template mesh moved straight into the wrist
    frame; an empty crop yields an all-zero cloud.
    """
    s = config.sensor
    ht, ot = record.hand_trajectory, record.object_trajectory
    ht.check_frame(t)
    R_h, w = ht.rotation[t], ht.translation[t]
    M = R_h.T @ ot.rotation[t]
    c = R_h.T @ (ot.translation[t] - w)
    local = record.object_mesh.transformed(M, c)
    crop = crop_with_cube(local, CubeSensor(s.cube_side), np.zeros(3), np.eye(3))
    try:
        cloud = sample_surface(crop, s.crop_points, _stream(seed, 11, t))
    except EmptyMesh:
        return np.zeros((s.crop_points, 3))
    return cloud.points


def trajectory_window(record: SequenceRecord, t: int, config: PipelineConfig) -> np.ndarray:
    w_rel, R_rel = sample_trajectory_window(record.hand_trajectory, t, config.sensor.window_k,
                                            config.sensor.window_seconds)
    return window_features(w_rel, R_rel)


@dataclass
class InitInputs:
    clouds: np.ndarray  # (T, N, 3) wrist frame
    windows: np.ndarray  # (T, 2k+1, 12)
    targets: np.ndarray | None  # (T, 21, 3) ground truth in the wrist frame


def init_inputs(record: SequenceRecord, config: PipelineConfig, seed: int) -> InitInputs:
    T = record.n_frames
    clouds = np.stack([crop_cloud(record, t, config, seed) for t in range(T)])
    windows = np.stack([trajectory_window(record, t, config) for t in range(T)])
    targets = None
    if record.gt_joints is not None:
        targets = to_wrist_frame(record.gt_joints, record)
    return InitInputs(clouds, windows, targets)


def to_wrist_frame(joints: np.ndarray, record: SequenceRecord) -> np.ndarray:
    ht = record.hand_trajectory
    return np.einsum("tkj,tji->tki", joints - ht.translation[:, None, :], ht.rotation)


def from_wrist_frame(joints_rel: np.ndarray, record: SequenceRecord) -> np.ndarray:
    ht = record.hand_trajectory
    return np.einsum("tij,tkj->tki", ht.rotation, joints_rel) + ht.translation[:, None, :]


@dataclass
class DispInputs:
    feats: np.ndarray  # (T, 21, M, 6) joint-frame points and normals
    mask: np.ndarray  # (T, 21, M)
    embed: np.ndarray  # (T, 21, 3) joints in the wrist frame
    rotations: np.ndarray  # (T, 21, 3, 3) template-frame rotations for the back-transform
    init_joints: np.ndarray  # (T, 21, 3) global


def joint_frames(init_joints: np.ndarray, record: SequenceRecord) -> TemplateFrames:
    return inverse_kinematics(init_joints, record.hand_trajectory.rotation, on_degenerate="parent")


def disp_inputs(record: SequenceRecord, init_joints: np.ndarray, config: PipelineConfig, seed: int,
                surface: PointCloud | None = None, grid: HashGrid | None = None) -> DispInputs:
    """Joint sensor features around ``init_joints`` for every frame.

    Queries run in the object template frame: joints are moved into it and the
    template-frame rotations are composed with the object rotation, which gives
    the same local points as querying the posed object.
    """
    s = config.sensor
    T = record.n_frames
    init_joints = np.asarray(init_joints, dtype=np.float64)
    frames = joint_frames(init_joints, record)
    M = max(int(s.max_points), 1)
    feats = np.zeros((T, N_JOINTS, M, 6))
    mask = np.zeros((T, N_JOINTS, M), dtype=bool)
    if s.radius > 0:
        if surface is None:
            surface = object_surface(record.object_mesh, config, seed)
        if grid is None:
            grid = HashGrid(surface.points, s.radius)
        ot = record.object_trajectory
        for t in range(T):
            R_o, o = ot.rotation[t], ot.translation[t]
            local_joints = (init_joints[t] - o) @ R_o
            local_frames = TemplateFrames(R_o.T @ frames.rotations[t], local_joints, frames.relative[t])
            sample = joint_radius_query(surface, local_joints, local_frames, s.radius, M, seed * 1_000_003 + t,
                                        index=grid)
            feats[t], mask[t] = sample.padded(M)
    embed = to_wrist_frame(init_joints, record)
    return DispInputs(feats, mask, embed, frames.rotations, init_joints)
