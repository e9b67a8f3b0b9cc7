"""SequenceRecord: trajectories, object mesh reference and optional joints/poses.

On disk a record is ``<name>.json`` (metadata and an array table) next to
``<name>.bin`` (little-endian float64 arrays, concatenated) and an OBJ object
mesh referenced by a path relative to the JSON file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import TriMesh, read_obj, write_obj
from .rotations import orthonormality_error, orthonormalize
from .sensors import HandTrajectory, ObjectTrajectory

SCHEMA_VERSION = 1
REORTHO_LIMIT = 1e-4
# below this the stored matrix is kept bit-for-bit
REORTHO_TOUCH = 1e-9

OPTIONAL_ARRAYS = ("gt_joints", "gt_beta", "gt_theta", "init_joints", "pred_joints", "fit_beta", "fit_theta", "fit_joints")


class RecordError(ValueError):
    pass


class LengthMismatch(RecordError):
    pass


@dataclass
class SequenceRecord:
    fps: float
    object_mesh: TriMesh
    object_trajectory: ObjectTrajectory
    hand_trajectory: HandTrajectory
    object_mesh_path: str = "object.obj"
    gt_joints: np.ndarray | None = None
    gt_beta: np.ndarray | None = None
    gt_theta: np.ndarray | None = None
    init_joints: np.ndarray | None = None
    pred_joints: np.ndarray | None = None
    fit_beta: np.ndarray | None = None
    fit_theta: np.ndarray | None = None
    fit_joints: np.ndarray | None = None
    hand_mesh_paths: list | None = None
    provenance: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    @property
    def n_frames(self) -> int:
        return len(self.hand_trajectory)

    def validate(self) -> None:
        T = self.n_frames
        if len(self.object_trajectory) != T:
            raise LengthMismatch("hand and object trajectories differ in length")
        shapes = {"gt_joints": (T, 21, 3), "init_joints": (T, 21, 3), "pred_joints": (T, 21, 3),
                  "fit_joints": (T, 21, 3), "gt_theta": (T, 15, 3), "fit_theta": (T, 15, 3),
                  "gt_beta": (10,), "fit_beta": (10,)}
        for name, shape in shapes.items():
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value, dtype=np.float64)
                if value.shape != shape:
                    raise LengthMismatch(f"{name} has shape {value.shape}, expected {shape}")
                setattr(self, name, value)

    def final_joints(self) -> np.ndarray | None:
        """Fitted joints when available, else refined network joints."""
        if self.fit_joints is not None:
            return self.fit_joints
        return self.pred_joints

    def transformed(self, R: np.ndarray, t: np.ndarray) -> "SequenceRecord":
        """The same scene under a global rigid transform x -> R x + t."""
        R = np.asarray(R, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)

        def move(j):
            return None if j is None else j @ R.T + t

        return SequenceRecord(
            fps=self.fps,
            object_mesh=self.object_mesh,
            object_trajectory=self.object_trajectory.transformed(R, t),
            hand_trajectory=self.hand_trajectory.transformed(R, t),
            object_mesh_path=self.object_mesh_path,
            gt_joints=move(self.gt_joints),
            gt_beta=self.gt_beta,
            gt_theta=self.gt_theta,
            init_joints=move(self.init_joints),
            pred_joints=move(self.pred_joints),
            fit_beta=self.fit_beta,
            fit_theta=self.fit_theta,
            fit_joints=move(self.fit_joints),
            provenance=dict(self.provenance),
        )

    def without_outputs(self) -> "SequenceRecord":
        return SequenceRecord(
            fps=self.fps,
            object_mesh=self.object_mesh,
            object_trajectory=self.object_trajectory,
            hand_trajectory=self.hand_trajectory,
            object_mesh_path=self.object_mesh_path,
            provenance=dict(self.provenance),
        )


def _pack_rigid(traj) -> np.ndarray:
    return np.concatenate([traj.translation, traj.rotation.reshape(len(traj), 9)], axis=1)


def _unpack_rigid(arr: np.ndarray, fps: float, cls):
    arr = np.asarray(arr, dtype=np.float64).reshape(-1, 12)
    rot = arr[:, 3:].reshape(-1, 3, 3)
    err = orthonormality_error(rot)
    if np.any(err >= REORTHO_LIMIT) or np.any(np.linalg.det(rot) <= 0):
        raise RecordError(f"trajectory rotation off SO(3) by {float(err.max()):.3g}")
    drift = err > REORTHO_TOUCH
    if np.any(drift):
        rot = np.where(drift[:, None, None], orthonormalize(rot), rot)
    return cls(arr[:, :3].copy(), rot, fps)


def write_record(path: str | Path, record: SequenceRecord, write_mesh: bool = True) -> Path:
    """Write ``path`` (.json) plus its .bin sidecar; the OBJ goes next to it."""
    path = Path(path).with_suffix(".json")
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {
        "object_trajectory": _pack_rigid(record.object_trajectory),
        "hand_trajectory": _pack_rigid(record.hand_trajectory),
    }
    for name in OPTIONAL_ARRAYS:
        value = getattr(record, name)
        if value is not None:
            arrays[name] = np.asarray(value, dtype=np.float64)
    table, chunks, offset = {}, [], 0
    for name, arr in arrays.items():
        blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        table[name] = {"offset": offset, "shape": list(arr.shape)}
        chunks.append(blob)
        offset += len(blob)
    meta = {
        "schema_version": record.schema_version,
        "fps": record.fps,
        "n_frames": record.n_frames,
        "object_mesh_path": record.object_mesh_path,
        "hand_mesh_paths": record.hand_mesh_paths,
        "provenance": record.provenance,
        "arrays": table,
        "blob": path.with_suffix(".bin").name,
    }
    path.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    path.with_suffix(".bin").write_bytes(b"".join(chunks))
    if write_mesh:
        mesh_path = path.parent / record.object_mesh_path
        mesh_path.parent.mkdir(parents=True, exist_ok=True)
        write_obj(mesh_path, record.object_mesh)
    return path


def read_record(path: str | Path, mesh: TriMesh | None = None) -> SequenceRecord:
    path = Path(path).with_suffix(".json")
    meta = json.loads(path.read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise RecordError(f"unsupported schema version {meta.get('schema_version')}")
    blob = (path.parent / meta["blob"]).read_bytes()
    arrays = {}
    for name, e in meta["arrays"].items():
        count = int(np.prod(e["shape"]))
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=e["offset"]).astype(np.float64).reshape(e["shape"])
    fps = float(meta["fps"])
    if mesh is None:
        mesh = read_obj(path.parent / meta["object_mesh_path"])
    return SequenceRecord(
        fps=fps,
        object_mesh=mesh,
        object_trajectory=_unpack_rigid(arrays["object_trajectory"], fps, ObjectTrajectory),
        hand_trajectory=_unpack_rigid(arrays["hand_trajectory"], fps, HandTrajectory),
        object_mesh_path=meta["object_mesh_path"],
        hand_mesh_paths=meta.get("hand_mesh_paths"),
        provenance=meta.get("provenance", {}),
        **{name: arrays.get(name) for name in OPTIONAL_ARRAYS},
    )
