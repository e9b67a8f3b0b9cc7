"""Simplified parametric hand: skeleton, shape, pose, FK/IK and a capsule surface.

The hand is a 21-joint right hand (wrist, then thumb, index, middle, ring and
pinky chains root-to-tip).  Bone ``b`` connects joint ``b + 1`` to its parent.
Fifteen non-tip, non-root joints carry an axis-angle rotation; the wrist
orientation is the global rotation and tips carry none.

Shape coefficients scale bone-length groups multiplicatively by
``1 + 0.1 * beta_i`` with the total per-bone scale clamped to [0.5, 1.5].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .mesh import TriMesh
from .rotations import axis_angle_to_matrix, minimal_rotation

N_JOINTS = 21
N_BONES = 20
N_BETA = 10
ARTICULATED = (1, 2, 3, 5, 6, 7, 9, 10, 11, 13, 14, 15, 17, 18, 19)
TIPS = (4, 8, 12, 16, 20)
FINGER_CHAINS = ((1, 2, 3, 4), (5, 6, 7, 8), (9, 10, 11, 12), (13, 14, 15, 16), (17, 18, 19, 20))
LEVELS = ((1, 5, 9, 13, 17), (2, 6, 10, 14, 18), (3, 7, 11, 15, 19), (4, 8, 12, 16, 20))
MIN_BONE = 1e-3
SCALE_RANGE = (0.5, 1.5)


class DegenerateBone(ValueError):
    """A bone that drives a joint rotation is shorter than 1 mm."""

    def __init__(self, joints):
        super().__init__(f"degenerate bone(s) at joint(s) {list(joints)}")
        self.joints = list(joints)


class VertexCountMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Skeleton:
    rest_joints: np.ndarray
    parent: np.ndarray
    capsule_radius: np.ndarray
    group_matrix: np.ndarray  # (N_BETA, N_BONES) 0/1 membership
    group_names: tuple
    palm_center: np.ndarray
    palm_semi_axes: np.ndarray
    palm_normal: np.ndarray
    capsule_segments: int = 8
    palm_rings: int = 7
    palm_segments: int = 12

    @property
    def rest_offsets(self) -> np.ndarray:
        """Rest bone vectors, one per non-root joint (bone b ends at joint b+1)."""
        kids = np.arange(1, N_JOINTS)
        return self.rest_joints[kids] - self.rest_joints[self.parent[kids]]

    def validate(self) -> None:
        roots = np.flatnonzero(self.parent < 0)
        if len(roots) != 1 or roots[0] != 0:
            raise ValueError("skeleton must have exactly one root at index 0")
        if np.any(self.parent[1:] >= np.arange(1, N_JOINTS)):
            raise ValueError("parents must precede children")
        if np.any(np.linalg.norm(self.rest_offsets, axis=1) <= MIN_BONE):
            raise ValueError("rest bones must be longer than 1 mm")


@lru_cache(maxsize=1)
def load_skeleton() -> Skeleton:
    raw = json.loads(resources.files("gears.data").joinpath("hand_template.json").read_text())
    groups = np.zeros((N_BETA, N_BONES))
    for i, g in enumerate(raw["shape_groups"]):
        groups[i, g["bones"]] = 1.0
    skel = Skeleton(
        rest_joints=np.array(raw["rest_joints"], dtype=np.float64),
        parent=np.array(raw["parent"], dtype=np.int64),
        capsule_radius=np.array(raw["capsule_radius"], dtype=np.float64),
        group_matrix=groups,
        group_names=tuple(g["name"] for g in raw["shape_groups"]),
        palm_center=np.array(raw["palm"]["center"], dtype=np.float64),
        palm_semi_axes=np.array(raw["palm"]["semi_axes"], dtype=np.float64),
        palm_normal=np.array(raw["palm_normal"], dtype=np.float64),
        capsule_segments=int(raw["capsule_segments"]),
        palm_rings=int(raw["palm_rings"]),
        palm_segments=int(raw["palm_segments"]),
    )
    skel.validate()
    return skel


@dataclass
class HandShape:
    beta: np.ndarray = field(default_factory=lambda: np.zeros(N_BETA))

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64).reshape(N_BETA)


@dataclass
class HandPose:
    theta: np.ndarray = field(default_factory=lambda: np.zeros((15, 3)))
    global_rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    wrist_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(15, 3)
        self.global_rot = np.asarray(self.global_rot, dtype=np.float64).reshape(3, 3)
        self.wrist_pos = np.asarray(self.wrist_pos, dtype=np.float64).reshape(3)


@dataclass
class TemplateFrames:
    """Per-joint rigid frames carrying the template (rest) hand into the global frame.

    ``rotations[k]`` is the accumulated rotation of joint k (wrist orientation
    times the relative rotations along the chain), ``origins[k]`` the joint
    position and ``relative[k]`` the rotation of joint k relative to its parent.
    """

    rotations: np.ndarray
    origins: np.ndarray
    relative: np.ndarray

    def to_local(self, k: int, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.origins[k]) @ self.rotations[k]

    def to_global(self, k: int, local: np.ndarray) -> np.ndarray:
        return np.asarray(local) @ self.rotations[k].T + self.origins[k]


def bone_scales(beta: np.ndarray, skeleton: Skeleton | None = None) -> np.ndarray:
    skel = skeleton or load_skeleton()
    beta = np.asarray(beta, dtype=np.float64)
    factors = 1.0 + 0.1 * beta  # (..., 10)
    # product over the groups each bone belongs to
    total = np.ones(beta.shape[:-1] + (N_BONES,))
    for i in range(N_BETA):
        members = skel.group_matrix[i] > 0
        total = np.where(members, total * factors[..., i : i + 1], total)
    return np.clip(total, *SCALE_RANGE)


def chain_from_relative(relative: np.ndarray, beta: np.ndarray, global_rot: np.ndarray,
                        wrist_pos: np.ndarray, skeleton: Skeleton | None = None):
    """Pose the shape-scaled rest bones with per-joint relative rotations.

    Returns ``(joints, rotations)`` with shapes (..., 21, 3) and (..., 21, 3, 3).
    """
    skel = skeleton or load_skeleton()
    relative = np.asarray(relative, dtype=np.float64)
    global_rot = np.asarray(global_rot, dtype=np.float64)
    wrist_pos = np.asarray(wrist_pos, dtype=np.float64)
    batch = np.broadcast_shapes(relative.shape[:-3], global_rot.shape[:-2], wrist_pos.shape[:-1],
                                np.shape(beta)[:-1])
    offsets = skel.rest_offsets * bone_scales(beta, skel)[..., None]  # (..., 20, 3)
    offsets = np.broadcast_to(offsets, batch + (N_BONES, 3))
    relative = np.broadcast_to(relative, batch + (N_JOINTS, 3, 3))
    rots = np.empty(batch + (N_JOINTS, 3, 3))
    joints = np.empty(batch + (N_JOINTS, 3))
    rots[..., 0, :, :] = np.broadcast_to(global_rot, batch + (3, 3))
    joints[..., 0, :] = np.broadcast_to(wrist_pos, batch + (3,))
    for level in LEVELS:
        kids = np.array(level)
        pa = skel.parent[kids]
        parent_rot = rots[..., pa, :, :]
        joints[..., kids, :] = joints[..., pa, :] + np.einsum("...ij,...j->...i", parent_rot, offsets[..., kids - 1, :])
        rots[..., kids, :, :] = parent_rot @ relative[..., kids, :, :]
    return joints, rots


def relative_from_theta(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    rel = np.broadcast_to(np.eye(3), theta.shape[:-2] + (N_JOINTS, 3, 3)).copy()
    rel[..., list(ARTICULATED), :, :] = axis_angle_to_matrix(theta)
    return rel


def forward_kinematics_batch(beta, theta, global_rot, wrist_pos, skeleton: Skeleton | None = None):
    """Vectorised FK. Returns ``(joints, rotations)``."""
    return chain_from_relative(relative_from_theta(theta), beta, global_rot, wrist_pos, skeleton)


def forward_kinematics(shape: HandShape, pose: HandPose) -> np.ndarray:
    """Joint positions (21, 3) in the global frame; the root equals ``pose.wrist_pos``."""
    joints, _ = forward_kinematics_batch(shape.beta, pose.theta, pose.global_rot, pose.wrist_pos)
    return joints


def inverse_kinematics(joints: np.ndarray, global_rot: np.ndarray, on_degenerate: str = "raise",
                       skeleton: Skeleton | None = None) -> TemplateFrames:
    """Analytic IK: the smallest rotation aligning each rest bone with the observed bone.

    Twist about the bone axis is taken as zero.  With ``on_degenerate="parent"``,
    joints whose child bone is shorter than 1 mm keep their parent's rotation
    instead of raising :class:`DegenerateBone`.  Works on (..., 21, 3) input.
    """
    skel = skeleton or load_skeleton()
    joints = np.asarray(joints, dtype=np.float64)
    global_rot = np.asarray(global_rot, dtype=np.float64)
    batch = joints.shape[:-2]
    rots = np.empty(batch + (N_JOINTS, 3, 3))
    rel = np.broadcast_to(np.eye(3), batch + (N_JOINTS, 3, 3)).copy()
    rots[..., 0, :, :] = np.broadcast_to(global_rot, batch + (3, 3))
    rest = skel.rest_joints
    bad = []
    for level in LEVELS:
        kids = np.array(level)
        pa = skel.parent[kids]
        parent_rot = rots[..., pa, :, :]
        if level is LEVELS[-1]:
            rots[..., kids, :, :] = parent_rot
            continue
        child = kids + 1  # each articulated joint has exactly one child, the next index
        observed = joints[..., child, :] - joints[..., kids, :]
        length = np.linalg.norm(observed, axis=-1)
        degenerate = length < MIN_BONE
        if np.any(degenerate):
            if on_degenerate == "raise":
                raise DegenerateBone(sorted(set(kids[np.nonzero(degenerate)[-1]].tolist())))
            observed = np.where(degenerate[..., None], np.einsum("...ij,...j->...i", parent_rot, rest[child] - rest[kids]), observed)
            bad.extend(kids[np.nonzero(degenerate)[-1]].tolist())
        local_obs = np.einsum("...ji,...j->...i", parent_rot, observed)
        r = minimal_rotation(np.broadcast_to(rest[child] - rest[kids], local_obs.shape), local_obs)
        r = np.where(degenerate[..., None, None], np.eye(3), r)
        rel[..., kids, :, :] = r
        rots[..., kids, :, :] = parent_rot @ r
    return TemplateFrames(rotations=rots, origins=joints.copy(), relative=rel)


# ---------------------------------------------------------------------------
# surface


def _closed_tube_faces(n_rings: int, n_seg: int, offset: int = 0) -> np.ndarray:
    """Faces for [pole0, ring_0 .. ring_{n-1}, pole1], rings CCW about the pole0->pole1 axis."""
    faces = []
    p0, p1 = 0, 1 + n_rings * n_seg

    def ring(i, j):
        return 1 + i * n_seg + (j % n_seg)

    for j in range(n_seg):
        faces.append((p0, ring(0, j + 1), ring(0, j)))
    for i in range(n_rings - 1):
        for j in range(n_seg):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j + 1), ring(i + 1, j)
            faces.append((a, b, c))
            faces.append((a, c, d))
    for j in range(n_seg):
        faces.append((p1, ring(n_rings - 1, j), ring(n_rings - 1, j + 1)))
    return np.array(faces, dtype=np.int64) + offset


@lru_cache(maxsize=1)
def _surface_layout():
    """Static parts of the hand surface: faces, per-bone frames, regressor weights."""
    skel = load_skeleton()
    n = skel.capsule_segments
    phi = 2.0 * np.pi * np.arange(n) / n
    ref = np.array([0.0, 1.0, 0.0])
    bone_dirs, bone_u, bone_v = [], [], []
    for off in skel.rest_offsets:
        e = off / np.linalg.norm(off)
        u = np.cross(e, ref)
        u /= np.linalg.norm(u)
        bone_dirs.append(e)
        bone_u.append(u)
        bone_v.append(np.cross(e, u))
    per_capsule = 2 + 4 * n
    faces = [_closed_tube_faces(4, n, b * per_capsule) for b in range(N_BONES)]
    palm_offset = N_BONES * per_capsule
    faces.append(_closed_tube_faces(skel.palm_rings, skel.palm_segments, palm_offset))
    n_vertices = palm_offset + 2 + skel.palm_rings * skel.palm_segments

    # each joint = mean of one capsule end ring
    regressor = np.zeros((N_JOINTS, n_vertices))
    start_ring = lambda b: b * per_capsule + 1 + n + np.arange(n)  # noqa: E731
    end_ring = lambda b: b * per_capsule + 1 + 2 * n + np.arange(n)  # noqa: E731
    regressor[0, start_ring(8)] = 1.0 / n
    for k in range(1, N_JOINTS):
        regressor[k, end_ring(k - 1)] = 1.0 / n
    return {
        "phi": phi,
        "dirs": np.array(bone_dirs),
        "u": np.array(bone_u),
        "v": np.array(bone_v),
        "faces": np.concatenate(faces),
        "per_capsule": per_capsule,
        "n_vertices": n_vertices,
        "regressor": regressor,
    }


def _unit_ellipsoid_dirs(n_rings: int, n_seg: int) -> np.ndarray:
    """Unit-sphere points ordered as a closed tube with poles on the x axis."""
    lat = np.pi * np.arange(1, n_rings + 1) / (n_rings + 1)
    lon = 2.0 * np.pi * np.arange(n_seg) / n_seg
    pts = [np.array([-1.0, 0.0, 0.0])]
    for a in lat:
        x = -np.cos(a)
        r = np.sin(a)
        # (y, z) CCW about +x
        pts.extend(np.stack([np.full(n_seg, x), r * np.cos(lon), r * np.sin(lon)], axis=1))
    pts.append(np.array([1.0, 0.0, 0.0]))
    return np.array(pts)


def hand_surface_vertices(beta, theta, global_rot, wrist_pos) -> np.ndarray:
    """Vertices of the capsule hand surface, shape (..., V, 3)."""
    skel = load_skeleton()
    lay = _surface_layout()
    joints, rots = forward_kinematics_batch(beta, theta, global_rot, wrist_pos)
    scales = bone_scales(beta)
    batch = joints.shape[:-2]
    n = skel.capsule_segments
    c45 = np.sqrt(0.5)
    cos_p, sin_p = np.cos(lay["phi"]), np.sin(lay["phi"])
    local = []
    for b in range(N_BONES):
        e, u, v = lay["dirs"][b], lay["u"][b], lay["v"][b]
        rho = skel.capsule_radius[b]
        length = np.linalg.norm(skel.rest_offsets[b]) * scales[..., b]
        length = np.asarray(length)[..., None, None]
        radial = cos_p[:, None] * u + sin_p[:, None] * v  # (n, 3)
        rings = [
            np.broadcast_to(-rho * e, batch + (1, 3)),
            np.broadcast_to(-rho * c45 * e + rho * c45 * radial, batch + (n, 3)),
            np.broadcast_to(rho * radial, batch + (n, 3)),
            length * e + rho * radial,
            length * e + rho * c45 * e + rho * c45 * radial,
            length * e + rho * e,
        ]
        rings = [np.broadcast_to(r, batch + r.shape[-2:]) for r in rings]
        local.append(np.concatenate(rings, axis=-2))
    local = np.stack(local, axis=-3)  # (..., 20, per_capsule, 3)
    parents = skel.parent[1:]
    R = rots[..., parents, :, :]
    origin = joints[..., parents, :]
    capsules = np.einsum("...bij,...bnj->...bni", R, local) + origin[..., None, :]
    capsules = capsules.reshape(batch + (-1, 3))

    palm_scale = np.mean(scales[..., [4, 8, 12, 16]], axis=-1)
    dirs = _unit_ellipsoid_dirs(skel.palm_rings, skel.palm_segments)
    center = skel.palm_center * np.stack([palm_scale, np.ones_like(palm_scale), np.ones_like(palm_scale)], axis=-1)
    semi = skel.palm_semi_axes * np.stack([palm_scale, np.ones_like(palm_scale), np.ones_like(palm_scale)], axis=-1)
    palm_local = dirs * semi[..., None, :] + center[..., None, :]
    palm = np.einsum("...ij,...nj->...ni", rots[..., 0, :, :], palm_local) + joints[..., 0:1, :]
    return np.concatenate([capsules, palm], axis=-2)


def hand_surface_faces() -> np.ndarray:
    return _surface_layout()["faces"].copy()


def hand_surface_mesh(shape: HandShape, pose: HandPose) -> TriMesh:
    """Closed union-of-capsules surface (one capsule per bone plus a palm ellipsoid)."""
    verts = hand_surface_vertices(shape.beta, pose.theta, pose.global_rot, pose.wrist_pos)
    return TriMesh(verts, hand_surface_faces())


def regressor_matrix() -> np.ndarray:
    return _surface_layout()["regressor"].copy()


def joint_regressor(mesh_vertices: np.ndarray) -> np.ndarray:
    """Linear map from hand surface vertices to the 21 joints."""
    W = _surface_layout()["regressor"]
    mesh_vertices = np.asarray(mesh_vertices, dtype=np.float64)
    if mesh_vertices.shape[-2] != W.shape[1]:
        raise VertexCountMismatch(f"expected {W.shape[1]} vertices, got {mesh_vertices.shape[-2]}")
    return W @ mesh_vertices
