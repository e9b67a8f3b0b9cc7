"""Independent brute-force reference implementations used by the tests."""

import numpy as np

from gears.mesh import TriMesh


def brute_radius_sets(points, joints, r):
    """Index set of points strictly within r of each joint, by a full distance scan."""
    out = []
    for j in joints:
        d = np.sqrt(((points - j) ** 2).sum(axis=1))
        out.append(np.flatnonzero(d < r))
    return out


def brute_crop(mesh: TriMesh, side, wrist, rot):
    """Loop-based cube crop: surviving vertex positions and face triples (as positions)."""
    keep = []
    for i, v in enumerate(mesh.vertices):
        local = rot.T @ (v - wrist)
        if all(abs(c) <= side / 2 for c in local):
            keep.append(i)
    kept = set(keep)
    faces = [tuple(f) for f in mesh.faces if all(int(i) in kept for i in f)]
    return mesh.vertices[keep], np.array([mesh.vertices[list(f)] for f in faces]).reshape(-1, 3, 3)


def ray_parity_inside(points, mesh: TriMesh, direction=(0.5773, 0.5774, 0.5775)):
    """Inside test by counting Moller-Trumbore hits along one skewed ray."""
    d = np.asarray(direction, dtype=np.float64)
    d /= np.linalg.norm(d)
    tri = mesh.triangles()
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    e1, e2 = b - a, c - a
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    inside = np.zeros(len(points), dtype=bool)
    for n, p in enumerate(points):
        tvec = p - a
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.einsum("ij,ij->i", tvec, pvec) / det
            q = np.cross(tvec, e1)
            v = (q @ d) / det
            t = np.einsum("ij,ij->i", e2, q) / det
        hit = (np.abs(det) > 1e-15) & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
        inside[n] = hit.sum() % 2 == 1
    return inside


def naive_mpjpe(pred, gt):
    total, count = 0.0, 0
    for f in range(len(pred)):
        for k in range(len(pred[f])):
            total += float(np.sqrt(sum((pred[f][k][i] - gt[f][k][i]) ** 2 for i in range(3))))
            count += 1
    return 1000.0 * total / count


def box_overlap_volume(c1, s1, c2, s2):
    """Closed-form overlap of two axis-aligned boxes given centres and side lengths."""
    lo = np.maximum(np.asarray(c1) - np.asarray(s1) / 2, np.asarray(c2) - np.asarray(s2) / 2)
    hi = np.minimum(np.asarray(c1) + np.asarray(s1) / 2, np.asarray(c2) + np.asarray(s2) / 2)
    return float(np.prod(np.maximum(hi - lo, 0.0)))


def closest_point_brute(p, tri, n=400):
    """Closest point on a triangle by dense barycentric sampling plus edge scans (approximate)."""
    a, b, c = tri
    u, v = np.meshgrid(np.linspace(0, 1, n), np.linspace(0, 1, n))
    m = u + v <= 1
    pts = a + u[m, None] * (b - a) + v[m, None] * (c - a)
    return pts[np.argmin(((pts - p) ** 2).sum(1))]
