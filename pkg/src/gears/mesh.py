"""Indexed triangle meshes and OBJ input/output."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("face index out of range")

    @classmethod
    def empty(cls) -> "TriMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def is_empty(self) -> bool:
        return self.n_faces == 0

    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def face_cross(self) -> np.ndarray:
        tri = self.triangles()
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_cross(), axis=1)

    def face_normals(self) -> np.ndarray:
        c = self.face_cross()
        n = np.linalg.norm(c, axis=1, keepdims=True)
        return c / np.where(n > 0, n, 1.0)

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted average of incident face normals."""
        acc = np.zeros_like(self.vertices)
        c = self.face_cross()
        for i in range(3):
            np.add.at(acc, self.faces[:, i], c)
        n = np.linalg.norm(acc, axis=1, keepdims=True)
        return acc / np.where(n > 0, n, 1.0)

    def with_normals(self) -> "TriMesh":
        return TriMesh(self.vertices, self.faces, self.vertex_normals())

    def signed_volume(self) -> float:
        tri = self.triangles()
        return float(np.sum(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))) / 6.0)

    def transformed(self, R: np.ndarray, t: np.ndarray) -> "TriMesh":
        """Apply x -> R x + t to vertices; normals are rotated."""
        R = np.asarray(R, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        normals = None if self.normals is None else self.normals @ R.T
        return TriMesh(self.vertices @ R.T + t, self.faces.copy(), normals)

    def cleaned(self, eps: float = 0.0) -> "TriMesh":
        """Drop zero-area faces (area <= eps) and unreferenced vertices."""
        keep = self.face_areas() > eps
        return self.submesh(keep)

    def submesh(self, face_mask: np.ndarray) -> "TriMesh":
        faces = self.faces[face_mask]
        used = np.unique(faces)
        remap = -np.ones(self.n_vertices, dtype=np.int64)
        remap[used] = np.arange(len(used))
        normals = None if self.normals is None else self.normals[used]
        return TriMesh(self.vertices[used], remap[faces], normals)

    def edges(self) -> np.ndarray:
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        return np.sort(e, axis=1)

    def is_watertight(self) -> bool:
        """Every undirected edge is shared by exactly two faces."""
        if self.n_faces == 0:
            return False
        _, counts = np.unique(self.edges(), axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def euler_characteristic(self) -> int:
        n_edges = len(np.unique(self.edges(), axis=0))
        n_verts = len(np.unique(self.faces))
        return n_verts - n_edges + self.n_faces

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def merge_meshes(meshes: list[TriMesh]) -> TriMesh:
    verts, faces, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += m.n_vertices
    return TriMesh(np.concatenate(verts), np.concatenate(faces))


def weld_vertices(vertices: np.ndarray, faces: np.ndarray, decimals: int = 9) -> TriMesh:
    """Merge vertices that coincide after rounding; keeps first-seen order."""
    key = np.round(vertices, decimals) + 0.0
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    new_vertices = vertices[first[order]]
    new_faces = rank[inverse][faces]
    good = (new_faces[:, 0] != new_faces[:, 1]) & (new_faces[:, 1] != new_faces[:, 2]) & (new_faces[:, 0] != new_faces[:, 2])
    return TriMesh(new_vertices, new_faces[good])


def read_obj(path: str | Path) -> TriMesh:
    """Read vertices and faces from an OBJ file; polygons are fan-triangulated."""
    verts, faces, normals = [], [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "vn":
            normals.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                i = int(tok.split("/")[0])
                idx.append(i - 1 if i > 0 else len(verts) + i)
            for j in range(1, len(idx) - 1):
                faces.append([idx[0], idx[j], idx[j + 1]])
    mesh = TriMesh(
        np.array(verts, dtype=np.float64).reshape(-1, 3),
        np.array(faces, dtype=np.int64).reshape(-1, 3),
        np.array(normals).reshape(-1, 3) if len(normals) == len(verts) and normals else None,
    )
    return mesh.cleaned()


def write_obj(path: str | Path, mesh: TriMesh) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    if mesh.normals is not None:
        lines += [f"vn {x!r} {y!r} {z!r}" for x, y, z in mesh.normals.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")
