"""Virtual sensors: wrist cube crop, canonicalization and joint-local sphere queries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hand import N_JOINTS, TemplateFrames
from .mesh import TriMesh
from .rotations import is_rotation


class FrameOutOfRange(IndexError):
    pass


class EmptyMesh(ValueError):
    pass


@dataclass
class PointCloud:
    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)

    def __len__(self):
        return len(self.points)

    @classmethod
    def zeros(cls, n: int) -> "PointCloud":
        return cls(np.zeros((n, 3)), np.zeros((n, 3)))


@dataclass
class RigidTrajectory:
    """Per-frame translation (T, 3) and rotation (T, 3, 3)."""

    translation: np.ndarray
    rotation: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(-1, 3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(-1, 3, 3)
        if len(self.translation) < 1 or len(self.translation) != len(self.rotation):
            raise ValueError("trajectory needs >= 1 frame and matching array lengths")
        if not is_rotation(self.rotation, 1e-6):
            raise ValueError("trajectory rotations must be orthonormal")

    def __len__(self):
        return len(self.translation)

    def check_frame(self, t: int) -> None:
        if not 0 <= t < len(self):
            raise FrameOutOfRange(f"frame {t} outside [0, {len(self)})")

    def transformed(self, R: np.ndarray, t: np.ndarray) -> "RigidTrajectory":
        """Left-compose a rigid transform: (R o^t + t, R R^t)."""
        return type(self)(self.translation @ np.asarray(R).T + t, np.asarray(R) @ self.rotation, self.fps)


class ObjectTrajectory(RigidTrajectory):
    pass


class HandTrajectory(RigidTrajectory):
    """Wrist position w^t and hand orientation R_H^t."""


@dataclass(frozen=True)
class CubeSensor:
    side: float = 0.18

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError("cube side must be positive")


@dataclass
class JointSensorSample:
    """Per-joint point sets in joint template frames, as lists of (n_k, 3) arrays."""

    points: list
    normals: list

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(p) for p in self.points])

    def padded(self, max_points: int) -> tuple[np.ndarray, np.ndarray]:
        """(21, M, 6) features [point, normal] and a (21, M) validity mask."""
        m = max(int(max_points), 1)
        feats = np.zeros((len(self.points), m, 6))
        mask = np.zeros((len(self.points), m), dtype=bool)
        for k, (p, n) in enumerate(zip(self.points, self.normals)):
            c = min(len(p), m)
            feats[k, :c, :3] = p[:c]
            feats[k, :c, 3:] = n[:c]
            mask[k, :c] = True
        return feats, mask


def posed_mesh(template: TriMesh, traj: ObjectTrajectory, t: int) -> TriMesh:
    """V^t = R^t V + o^t; faces unchanged, normals rotated."""
    traj.check_frame(t)
    return template.transformed(traj.rotation[t], traj.translation[t])


def crop_with_cube(mesh: TriMesh, sensor: CubeSensor, wrist: np.ndarray, rot: np.ndarray) -> TriMesh:
    """Keep vertices inside the wrist-centred, wrist-aligned cube and faces made only of them.

    Face order and vertex order of the survivors are preserved.
    """
    if mesh.n_vertices == 0:
        return TriMesh.empty()
    local = (mesh.vertices - np.asarray(wrist)) @ np.asarray(rot)
    inside = np.all(np.abs(local) <= 0.5 * sensor.side, axis=1)
    face_ok = np.all(inside[mesh.faces], axis=1)
    keep_v = np.flatnonzero(inside)
    remap = -np.ones(mesh.n_vertices, dtype=np.int64)
    remap[keep_v] = np.arange(len(keep_v))
    normals = None if mesh.normals is None else mesh.normals[keep_v]
    return TriMesh(mesh.vertices[keep_v], remap[mesh.faces[face_ok]], normals)


def sample_surface(mesh: TriMesh, n: int, seed) -> PointCloud:
    """Area-weighted uniform samples with flat (face) normals."""
    if mesh.n_faces == 0:
        raise EmptyMesh("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    total = areas.sum()
    if not total > 0:
        raise EmptyMesh("mesh has zero area")
    cdf = np.cumsum(areas) / total
    face = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), mesh.n_faces - 1)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tri = mesh.vertices[mesh.faces[face]]
    pts = (1.0 - r1)[:, None] * tri[:, 0] + (r1 * (1.0 - r2))[:, None] * tri[:, 1] + (r1 * r2)[:, None] * tri[:, 2]
    return PointCloud(pts, mesh.face_normals()[face])


def canonicalize_to_wrist(cloud: PointCloud, wrist: np.ndarray, rot: np.ndarray) -> PointCloud:
    """P~ = R^T (P - w), normals rotated by R^T."""
    R = np.asarray(rot, dtype=np.float64)
    return PointCloud((cloud.points - np.asarray(wrist)) @ R, cloud.normals @ R)


def window_frames(n_frames: int, t: int, k: int, window_s: float, fps: float) -> np.ndarray:
    """2k+1 frame indices spread uniformly over [t - window, t + window], clamped."""
    if k < 1:
        raise ValueError("k must be >= 1")
    offsets = np.rint(np.arange(-k, k + 1) * (window_s * fps / k)).astype(np.int64)
    return np.clip(t + offsets, 0, n_frames - 1)


def sample_trajectory_window(traj: HandTrajectory, t: int, k: int, window_s: float):
    """Wrist positions (2k+1, 3) and orientations (2k+1, 3, 3) relative to frame t."""
    traj.check_frame(t)
    idx = window_frames(len(traj), t, k, window_s, traj.fps)
    R_t = traj.rotation[t]
    w_rel = (traj.translation[idx] - traj.translation[t]) @ R_t
    R_rel = np.einsum("ji,njk->nik", R_t, traj.rotation[idx])
    return w_rel, R_rel


def window_features(w_rel: np.ndarray, R_rel: np.ndarray) -> np.ndarray:
    """Flatten a window to (2k+1, 12): position then row-major rotation."""
    return np.concatenate([w_rel, R_rel.reshape(len(R_rel), 9)], axis=1)


class HashGrid:
    """Uniform spatial hash for fixed-radius queries; cell size = query radius."""

    def __init__(self, points: np.ndarray, cell: float):
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.cell = float(cell)
        self.cells: dict[tuple, np.ndarray] = {}
        if self.cell <= 0 or len(self.points) == 0:
            return
        keys = np.floor(self.points / self.cell).astype(np.int64)
        order = np.lexsort(keys.T[::-1])
        sorted_keys = keys[order]
        change = np.flatnonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1)) + 1
        starts = np.concatenate([[0], change])
        ends = np.concatenate([change, [len(order)]])
        for s, e in zip(starts, ends):
            self.cells[tuple(sorted_keys[s])] = order[s:e]

    def query(self, center: np.ndarray, radius: float) -> np.ndarray:
        """Sorted indices of points strictly closer than ``radius`` to ``center``."""
        if radius <= 0 or not self.cells:
            return np.zeros(0, dtype=np.int64)
        center = np.asarray(center, dtype=np.float64)
        lo = np.floor((center - radius) / self.cell).astype(np.int64)
        hi = np.floor((center + radius) / self.cell).astype(np.int64)
        found = []
        for x in range(lo[0], hi[0] + 1):
            for y in range(lo[1], hi[1] + 1):
                for z in range(lo[2], hi[2] + 1):
                    bucket = self.cells.get((x, y, z))
                    if bucket is not None:
                        found.append(bucket)
        if not found:
            return np.zeros(0, dtype=np.int64)
        cand = np.concatenate(found)
        d = np.linalg.norm(self.points[cand] - center, axis=1)
        return np.sort(cand[d < radius])


def joint_radius_query(surface: PointCloud, joints: np.ndarray, frames: TemplateFrames, r: float,
                       max_points: int, seed, index: HashGrid | None = None) -> JointSensorSample:
    """Surface points within ``r`` of each joint, expressed in that joint's template frame.

    Sets larger than ``max_points`` are subsampled without replacement using a
    per-joint stream derived from ``seed``.
    """
    if index is None:
        index = HashGrid(surface.points, r)
    pts_out, nrm_out = [], []
    for k in range(N_JOINTS):
        idx = index.query(joints[k], r)
        if len(idx) > max_points:
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), k]))
            idx = np.sort(rng.choice(idx, size=max_points, replace=False))
        R = frames.rotations[k]
        pts_out.append((surface.points[idx] - joints[k]) @ R)
        nrm_out.append(surface.normals[idx] @ R)
    return JointSensorSample(pts_out, nrm_out)
