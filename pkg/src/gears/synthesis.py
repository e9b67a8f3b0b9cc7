"""Synthetic corpora: procedural objects, heuristic static grasps and approach sequences.

A static grasp is turned into a sequence by starting from a perturbed mean
pose backed away from the object along the palm normal, then interpolating
translation linearly and every rotation by SLERP.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .hand import (
    ARTICULATED,
    FINGER_CHAINS,
    HandPose,
    HandShape,
    forward_kinematics_batch,
    hand_surface_faces,
    hand_surface_vertices,
    load_skeleton,
)
from .mesh import TriMesh, weld_vertices
from .metrics import intersection_volume
from .records import SequenceRecord
from .rotations import (
    axis_angle_to_matrix,
    axis_angle_to_quat,
    matrix_to_quat,
    minimal_rotation,
    quat_to_axis_angle,
    quat_to_matrix,
    random_rotation,
    slerp,
)
from .sensors import HandTrajectory, ObjectTrajectory, sample_surface

KINDS = ("box", "sphere", "cylinder", "capsule")
MAX_EXTENT = (0.03, 0.40)
FINGERTIP_REACH = 0.005
# per-joint share of a finger's curl (proximal, middle, distal)
CURL_WEIGHTS = np.array([0.8, 1.0, 0.7])
# second pass when a proximal segment touched first: bend the two outer joints only
DISTAL_WEIGHTS = np.array([0.0, 1.0, 0.7])
# fingers close until their capsules touch the surface; the 2 mm tolerance only judges the result
CLOSE_GAP = 0.0
CURL_LIMIT = 1.6
THUMB_CURL_LIMIT = 1.0


class GraspNotFound(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# objects


@dataclass(frozen=True)
class ProceduralObject:
    """A primitive centred at the origin; cylinders and capsules run along z.

    ``size``: box (a, b, c) side lengths; sphere (r,); cylinder (r, h);
    capsule (r, h) with h the length of the straight part.
    """

    kind: str
    size: tuple
    level: int = 4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown primitive {self.kind!r}")
        ext = self.extents()
        if not (MAX_EXTENT[0] <= max(ext) <= MAX_EXTENT[1]):
            raise ValueError(f"max extent {max(ext):.3f} m outside {MAX_EXTENT}")

    def extents(self) -> np.ndarray:
        s = self.size
        if self.kind == "box":
            return np.array(s, dtype=np.float64)
        if self.kind == "sphere":
            return np.full(3, 2.0 * s[0])
        if self.kind == "cylinder":
            return np.array([2 * s[0], 2 * s[0], s[1]])
        return np.array([2 * s[0], 2 * s[0], s[1] + 2 * s[0]])

    def sdf(self, p: np.ndarray) -> np.ndarray:
        """Exact signed distance to the ideal primitive (negative inside)."""
        p = np.asarray(p, dtype=np.float64)
        s = self.size
        if self.kind == "sphere":
            return np.linalg.norm(p, axis=-1) - s[0]
        if self.kind == "box":
            q = np.abs(p) - 0.5 * np.asarray(s)
            return np.linalg.norm(np.maximum(q, 0.0), axis=-1) + np.minimum(q.max(axis=-1), 0.0)
        if self.kind == "cylinder":
            d = np.stack([np.linalg.norm(p[..., :2], axis=-1) - s[0], np.abs(p[..., 2]) - 0.5 * s[1]], axis=-1)
            return np.minimum(d.max(axis=-1), 0.0) + np.linalg.norm(np.maximum(d, 0.0), axis=-1)
        z = np.clip(p[..., 2], -0.5 * s[1], 0.5 * s[1])
        axis_pt = np.stack([np.zeros_like(z), np.zeros_like(z), z], axis=-1)
        return np.linalg.norm(p - axis_pt, axis=-1) - s[0]

    def edge(self) -> float:
        return 0.04 / 2**self.level

    def mesh(self) -> TriMesh:
        if self.kind == "sphere":
            return icosphere(self.level, self.size[0])
        if self.kind == "box":
            return box_mesh(self.size, self.edge())
        if self.kind == "cylinder":
            return cylinder_mesh(self.size[0], self.size[1], self.edge())
        return capsule_mesh(self.size[0], self.size[1], self.edge())


def icosphere(level: int, radius: float = 1.0) -> TriMesh:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4), (11, 10, 2),
             (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9), (4, 9, 5),
             (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(level):
        cache: dict = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriMesh(np.array(verts) * radius, np.array(faces, dtype=np.int64))


def _grid_face(origin, du, dv, nu, nv):
    u = np.linspace(0.0, 1.0, nu + 1)
    v = np.linspace(0.0, 1.0, nv + 1)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = origin + uu[..., None] * du + vv[..., None] * dv
    idx = np.arange((nu + 1) * (nv + 1)).reshape(nu + 1, nv + 1)
    a, b, c, d = idx[:-1, :-1], idx[1:, :-1], idx[1:, 1:], idx[:-1, 1:]
    faces = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
    return pts.reshape(-1, 3), faces


def box_mesh(size, edge: float) -> TriMesh:
    """Axis-aligned box with the given side lengths, split into a grid of about ``edge``."""
    h = 0.5 * np.asarray(size, dtype=np.float64)
    n = np.maximum(np.ceil(2 * h / edge).astype(int), 1)
    verts, faces, off = [], [], 0
    for axis in range(3):
        u_ax, v_ax = (axis + 1) % 3, (axis + 2) % 3
        for sign in (-1.0, 1.0):
            origin = np.zeros(3)
            origin[axis] = sign * h[axis]
            origin[u_ax] = -h[u_ax]
            origin[v_ax] = -h[v_ax]
            du = np.zeros(3)
            dv = np.zeros(3)
            du[u_ax] = 2 * h[u_ax]
            dv[v_ax] = 2 * h[v_ax]
            p, f = _grid_face(origin, du, dv, n[u_ax], n[v_ax])
            if sign < 0:
                f = f[:, ::-1]
            verts.append(p)
            faces.append(f + off)
            off += len(p)
    return _oriented(weld_vertices(np.concatenate(verts), np.concatenate(faces)))


def _revolve(profile: np.ndarray, n_seg: int) -> TriMesh:
    """Closed surface of revolution about z from a (z, r) profile that starts and ends on the axis."""
    inner = profile[1:-1]
    phi = 2.0 * np.pi * np.arange(n_seg) / n_seg
    rings = np.stack([inner[:, 1:2] * np.cos(phi), inner[:, 1:2] * np.sin(phi),
                      np.repeat(inner[:, 0:1], n_seg, axis=1)], axis=-1).reshape(-1, 3)
    verts = np.concatenate([[[0.0, 0.0, profile[0, 0]]], rings, [[0.0, 0.0, profile[-1, 0]]]])
    n_rings = len(inner)

    def ring(i, j):
        return 1 + i * n_seg + (j % n_seg)

    faces = [(0, ring(0, j + 1), ring(0, j)) for j in range(n_seg)]
    for i in range(n_rings - 1):
        for j in range(n_seg):
            faces.append((ring(i, j), ring(i, j + 1), ring(i + 1, j + 1)))
            faces.append((ring(i, j), ring(i + 1, j + 1), ring(i + 1, j)))
    last = 1 + n_rings * n_seg
    faces += [(last, ring(n_rings - 1, j), ring(n_rings - 1, j + 1)) for j in range(n_seg)]
    return _oriented(TriMesh(verts, np.array(faces, dtype=np.int64)))


def _oriented(mesh: TriMesh) -> TriMesh:
    if mesh.signed_volume() < 0:
        return TriMesh(mesh.vertices, mesh.faces[:, ::-1])
    return mesh


def cylinder_mesh(radius: float, height: float, edge: float) -> TriMesh:
    n_seg = max(int(np.ceil(2 * np.pi * radius / edge)), 8)
    n_cap = max(int(np.ceil(radius / edge)), 1)
    n_side = max(int(np.ceil(height / edge)), 1)
    z0, z1 = -0.5 * height, 0.5 * height
    prof = [(z0, 0.0)]
    prof += [(z0, radius * i / n_cap) for i in range(1, n_cap + 1)]
    prof += [(z0 + height * i / n_side, radius) for i in range(1, n_side)]
    prof += [(z1, radius * i / n_cap) for i in range(n_cap, 0, -1)]
    prof += [(z1, 0.0)]
    return _revolve(np.array(prof), n_seg)


def capsule_mesh(radius: float, length: float, edge: float) -> TriMesh:
    n_seg = max(int(np.ceil(2 * np.pi * radius / edge)), 8)
    n_lat = max(int(np.ceil(0.5 * np.pi * radius / edge)), 2)
    n_side = max(int(np.ceil(length / edge)), 1)
    z0, z1 = -0.5 * length, 0.5 * length
    prof = [(z0 - radius, 0.0)]
    for i in range(1, n_lat + 1):
        a = 0.5 * np.pi * i / n_lat
        prof.append((z0 - radius * np.cos(a), radius * np.sin(a)))
    prof += [(z0 + length * i / n_side, radius) for i in range(1, n_side)]
    for i in range(n_lat, 0, -1):
        a = 0.5 * np.pi * i / n_lat
        prof.append((z1 + radius * np.cos(a), radius * np.sin(a)))
    prof.append((z1 + radius, 0.0))
    return _revolve(np.array(prof), n_seg)


def random_object(config: PipelineConfig, rng: np.random.Generator) -> ProceduralObject:
    sc = config.synth
    kind = sc.object_kinds[int(rng.integers(len(sc.object_kinds)))]
    lo, hi = sc.object_size
    if kind == "box":
        size = tuple(float(x) for x in rng.uniform(lo, hi, size=3))
    elif kind == "sphere":
        size = (float(rng.uniform(lo, hi)) / 2,)
    elif kind == "cylinder":
        size = (float(rng.uniform(lo, hi)) / 2 * 0.7, float(rng.uniform(lo, hi)))
    else:
        size = (float(rng.uniform(lo, hi)) / 2 * 0.6, float(rng.uniform(lo, hi)) * 0.6)
    return ProceduralObject(kind, size)


def generate_object(spec: ProceduralObject, seed: int = 0) -> TriMesh:
    """Watertight, outward-oriented mesh of a primitive (deterministic; ``seed`` is unused)."""
    return spec.mesh()


# ---------------------------------------------------------------------------
# grasps


@dataclass
class StaticGrasp:
    """Target hand state in the object frame: P^T (theta), R^T, d^T and the shape."""

    obj: ProceduralObject
    shape: HandShape
    pose: HandPose
    seed: int = 0
    fingertip_gaps: np.ndarray = field(default_factory=lambda: np.zeros(5))

    @property
    def palm_normal(self) -> np.ndarray:
        return self.pose.global_rot @ load_skeleton().palm_normal


def _finger_axes() -> np.ndarray:
    """Flexion axis for each finger: bends its first articulated bone toward the palm."""
    skel = load_skeleton()
    axes = []
    for chain in FINGER_CHAINS:
        d = skel.rest_joints[chain[1]] - skel.rest_joints[chain[0]]
        a = np.cross(d, skel.palm_normal)
        axes.append(a / np.linalg.norm(a))
    return np.array(axes)


def _theta_index(joint: int) -> int:
    return ARTICULATED.index(joint)


def _finger_probe(beta, theta, R, w, finger: int, n_per_bone: int = 6, first: int = 0):
    """Capsule-axis sample points and radii along the moving bones of a finger, from bone ``first``."""
    skel = load_skeleton()
    joints, _ = forward_kinematics_batch(beta, theta, R, w)
    chain = FINGER_CHAINS[finger]
    s = np.linspace(0.0, 1.0, n_per_bone)
    pts, rad = [], []
    for a, b in zip(chain[first:-1], chain[first + 1:]):
        pts.append(joints[..., a, None, :] * (1 - s[:, None]) + joints[..., b, None, :] * s[:, None])
        rad.append(np.full(n_per_bone, skel.capsule_radius[b - 1]))
    return np.concatenate(pts, axis=-2), np.concatenate(rad), joints


def _finger_gap(obj: ProceduralObject, beta, theta, R, w, finger: int, first: int = 0) -> float:
    pts, rad, _ = _finger_probe(beta, theta, R, w, finger, first=first)
    return float(np.min(obj.sdf(pts) - rad))


def _tip_gap(obj: ProceduralObject, joints: np.ndarray) -> np.ndarray:
    skel = load_skeleton()
    tips = [c[-1] for c in FINGER_CHAINS]
    return obj.sdf(joints[tips]) - skel.capsule_radius[np.array(tips) - 1]


def _set_curl(theta: np.ndarray, finger: int, curl: float, axes: np.ndarray, weights=CURL_WEIGHTS) -> np.ndarray:
    out = theta.copy()
    for j, joint in enumerate(FINGER_CHAINS[finger][:3]):
        out[_theta_index(joint)] += curl * weights[j] * axes[finger]
    return out


def _close_finger(obj, beta, theta, R, w, finger, axes, tol, steps: int = 24, iters: int = 30,
                  weights=CURL_WEIGHTS, first: int = 0):
    """Smallest curl bringing the finger within ``tol`` of the surface (scan, then bisection)."""
    limit = THUMB_CURL_LIMIT if finger == 0 else CURL_LIMIT

    def gap(c):
        return _finger_gap(obj, beta, _set_curl(theta, finger, c, axes, weights), R, w, finger, first)

    if gap(0.0) <= tol:
        return 0.0
    prev = 0.0
    for c in np.linspace(0.0, limit, steps + 1)[1:]:
        if gap(c) <= tol:
            lo, hi = prev, c
            for _ in range(iters):
                m = 0.5 * (lo + hi)
                if gap(m) <= tol:
                    hi = m
                else:
                    lo = m
            return hi
        prev = c
    return limit


def hand_mesh(beta, theta, R, w) -> TriMesh:
    return TriMesh(hand_surface_vertices(beta, theta, R, w), hand_surface_faces())


def _grasp_attempt(obj: ProceduralObject, mesh: TriMesh, config: PipelineConfig, rng: np.random.Generator):
    sc = config.synth
    skel = load_skeleton()
    beta = rng.normal(0.0, sc.beta_sigma, size=10)
    surf = sample_surface(mesh, 1, rng)
    p, n = surf.points[0], surf.normals[0]
    # palm normal (-y in the hand frame) faces the object: R (-y) = -n
    R = minimal_rotation(skel.palm_normal, -n)
    spin = axis_angle_to_matrix(n * rng.uniform(-np.pi, np.pi))
    R = spin @ R
    palm_low = skel.palm_center + skel.palm_semi_axes[1] * skel.palm_normal
    offset = sc.object_spacing + rng.uniform(0.0, 0.004)
    w = p + offset * n - R @ palm_low
    # back off until the palm clears the object
    for _ in range(20):
        palm_pts = w + (skel.palm_center + skel.palm_semi_axes * _PALM_PROBE) @ R.T
        depth = -np.min(obj.sdf(palm_pts))
        if depth <= -0.5 * sc.object_spacing:
            break
        w = w + n * (depth + 0.5 * sc.object_spacing)
    theta = rng.normal(0.0, 0.05, size=(15, 3))
    axes = _finger_axes()
    for f in range(5):
        curl = _close_finger(obj, beta, theta, R, w, f, axes, CLOSE_GAP)
        theta = _set_curl(theta, f, curl, axes)
        joints, _ = forward_kinematics_batch(beta, theta, R, w)
        tip = _tip_gap(obj, joints)[f]
        if tip > sc.contact_tol + 1e-9:
            curl = _close_finger(obj, beta, theta, R, w, f, axes, CLOSE_GAP, weights=DISTAL_WEIGHTS, first=1)
            bent = _set_curl(theta, f, curl, axes, DISTAL_WEIGHTS)
            if _tip_gap(obj, forward_kinematics_batch(beta, bent, R, w)[0])[f] < tip:
                theta = bent
    joints, _ = forward_kinematics_batch(beta, theta, R, w)
    gaps = _tip_gap(obj, joints)
    return beta, theta, R, w, gaps


_PALM_PROBE = np.array([[sx * a, -np.sqrt(max(0.0, 1 - a * a - b * b)), sz * b]
                        for a in (0.0, 0.5, 0.9) for b in (0.0, 0.4) for sx in (-1, 1) for sz in (-1, 1)])


def generate_static_grasp(obj: ProceduralObject, seed: int, config: PipelineConfig | None = None,
                          mesh: TriMesh | None = None) -> StaticGrasp:
    """Heuristic grasp in the object frame; raises :class:`GraspNotFound` after the retry budget."""
    config = config or PipelineConfig()
    sc = config.synth
    if max(obj.extents()) > MAX_EXTENT[1]:
        raise ValueError("object too large to grasp")
    mesh = mesh if mesh is not None else obj.mesh()
    for attempt in range(sc.grasp_retries):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 17, attempt]))
        beta, theta, R, w, gaps = _grasp_attempt(obj, mesh, config, rng)
        if np.count_nonzero(gaps <= FINGERTIP_REACH) < 2:
            continue
        iv = intersection_volume(hand_mesh(beta, theta, R, w), mesh, sc.iv_voxel_mm)
        if iv > sc.iv_threshold_cm3:
            continue
        return StaticGrasp(obj, HandShape(beta), HandPose(theta, R, w), int(seed), gaps)
    raise GraspNotFound(f"no grasp for {obj.kind} {obj.size} after {sc.grasp_retries} tries")


# ---------------------------------------------------------------------------
# sequences


def perturb_source(target: StaticGrasp, seed: int, sigma_pose: float = 0.1, sigma_rot: float = 0.15,
                   speed: float = 0.004, n_frames: int = 60) -> HandPose:
    """Frame-0 pose: noisy mean pose, noisy target orientation, backed off along the palm normal."""
    if sigma_pose < 0 or sigma_rot < 0:
        raise ValueError("sigmas must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 23]))
    theta = rng.normal(0.0, 1.0, size=(15, 3)) * sigma_pose
    noise = rng.normal(0.0, 1.0, size=3) * sigma_rot
    R0 = target.pose.global_rot @ axis_angle_to_matrix(noise) if sigma_rot > 0 else target.pose.global_rot.copy()
    d0 = target.pose.wrist_pos - speed * n_frames * target.palm_normal
    return HandPose(theta, R0, d0)


@dataclass
class SyntheticSequence:
    obj: ProceduralObject
    object_mesh: TriMesh
    shape: HandShape
    theta: np.ndarray  # (T, 15, 3)
    global_rot: np.ndarray  # (T, 3, 3)
    wrist: np.ndarray  # (T, 3)
    joints: np.ndarray  # (T, 21, 3)
    object_rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    object_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    fps: float = 30.0
    source: HandPose | None = None  # frame-0 pose
    target: StaticGrasp | None = None  # final grasp

    @property
    def n_frames(self) -> int:
        return len(self.theta)

    def hand_mesh(self, t: int) -> TriMesh:
        return hand_mesh(self.shape.beta, self.theta[t], self.global_rot[t], self.wrist[t])

    def posed_object(self) -> TriMesh:
        return self.object_mesh.transformed(self.object_rot, self.object_pos)

    def to_record(self, provenance: dict | None = None, mesh_path: str = "object.obj") -> SequenceRecord:
        T = self.n_frames
        return SequenceRecord(
            fps=self.fps,
            object_mesh=self.object_mesh,
            object_trajectory=ObjectTrajectory(np.tile(self.object_pos, (T, 1)), np.tile(self.object_rot, (T, 1, 1)),
                                               self.fps),
            hand_trajectory=HandTrajectory(self.wrist, self.global_rot, self.fps),
            object_mesh_path=mesh_path,
            gt_joints=self.joints,
            gt_beta=self.shape.beta,
            gt_theta=self.theta,
            provenance=dict(provenance or {}),
        )


def interpolate_sequence(source: HandPose, target: StaticGrasp, n_frames: int, fps: float = 30.0,
                         object_rot=None, object_pos=None) -> SyntheticSequence:
    """Linear wrist translation and per-joint / global SLERP from source to target.

    Endpoints are copied exactly; intermediate frames use tau = t / (T - 1).
    """
    if n_frames < 2:
        raise ValueError("need at least 2 frames")
    tau = np.arange(n_frames) / (n_frames - 1)
    d = (1.0 - tau)[:, None] * source.wrist_pos + tau[:, None] * target.pose.wrist_pos
    qj = slerp(axis_angle_to_quat(source.theta), axis_angle_to_quat(target.pose.theta), tau)
    theta = quat_to_axis_angle(qj)
    R = quat_to_matrix(slerp(matrix_to_quat(source.global_rot), matrix_to_quat(target.pose.global_rot), tau))
    theta[0], theta[-1] = source.theta, target.pose.theta
    R[0], R[-1] = source.global_rot, target.pose.global_rot
    d[0], d[-1] = source.wrist_pos, target.pose.wrist_pos
    joints, _ = forward_kinematics_batch(target.shape.beta, theta, R, d)
    mesh = target.obj.mesh()
    return SyntheticSequence(
        obj=target.obj, object_mesh=mesh, shape=target.shape, theta=theta, global_rot=R, wrist=d, joints=joints,
        object_rot=np.eye(3) if object_rot is None else np.asarray(object_rot, dtype=np.float64),
        object_pos=np.zeros(3) if object_pos is None else np.asarray(object_pos, dtype=np.float64), fps=fps,
        source=source, target=target,
    )


def sequence_intersection(seq: SyntheticSequence, voxel_mm: float = 2.0) -> np.ndarray:
    obj = seq.posed_object()
    return np.array([intersection_volume(seq.hand_mesh(t), obj, voxel_mm) for t in range(seq.n_frames)])


def filter_by_intersection(seq: SyntheticSequence, threshold_cm3: float = 4.0, voxel_mm: float = 2.0) -> bool:
    """Keep the sequence iff its largest per-frame intersection volume is within the threshold."""
    if np.isinf(threshold_cm3):
        return True
    return bool(sequence_intersection(seq, voxel_mm).max() <= threshold_cm3)


def place_in_world(grasp: StaticGrasp, R_o: np.ndarray, o: np.ndarray) -> StaticGrasp:
    """Express a grasp given in the object frame in a world where the object sits at (R_o, o)."""
    pose = HandPose(grasp.pose.theta, R_o @ grasp.pose.global_rot, R_o @ grasp.pose.wrist_pos + o)
    return StaticGrasp(grasp.obj, grasp.shape, pose, grasp.seed, grasp.fingertip_gaps)


@dataclass
class CorpusStats:
    generated: int = 0
    grasp_failures: int = 0
    iv_rejections: int = 0

    def as_dict(self) -> dict:
        return {"generated": self.generated, "grasp_failures": self.grasp_failures,
                "iv_rejections": self.iv_rejections}


def synthesize_sequence(config: PipelineConfig, seed: int, stats: CorpusStats | None = None) -> SyntheticSequence:
    """One filtered sequence from an integer seed (new objects are drawn until one passes)."""
    sc = config.synth
    stats = stats if stats is not None else CorpusStats()
    for attempt in range(sc.max_attempts_per_sequence):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 31, attempt]))
        obj = random_object(config, rng)
        mesh = obj.mesh()
        sub = int(rng.integers(2**31))
        try:
            grasp = generate_static_grasp(obj, sub, config, mesh)
        except GraspNotFound:
            stats.grasp_failures += 1
            continue
        R_o = random_rotation(rng)
        o = rng.uniform(-0.2, 0.2, size=3)
        world = place_in_world(grasp, R_o, o)
        source = perturb_source(world, sub, sc.sigma_pose, sc.sigma_rot, sc.approach_speed, sc.frames)
        seq = interpolate_sequence(source, world, sc.frames, sc.fps, R_o, o)
        if not filter_by_intersection(seq, sc.iv_threshold_cm3, sc.iv_voxel_mm):
            stats.iv_rejections += 1
            continue
        stats.generated += 1
        return seq
    raise GraspNotFound(f"no valid sequence for seed {seed} after {sc.max_attempts_per_sequence} objects")


def sequence_seed(master_seed: int, split: str, index: int) -> int:
    split_id = {"train": 0, "test": 1}.get(split, 2)
    ss = np.random.SeedSequence([int(master_seed), split_id, int(index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])
