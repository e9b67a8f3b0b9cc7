"""Interaction metrics: MPJPE, penetration depth, intersection volume and contact IoU.

Distances are meters internally; reported values use the units in the
function names (mm, cm^3, percent).
"""

from __future__ import annotations

import warnings

import numpy as np

from .mesh import TriMesh

_CHUNK = 32_768  # point-triangle pairs per vectorized block (small blocks stay in cache)
# irrational-ish sub-voxel shift of ray columns so rays never graze mesh edges
_COLUMN_JITTER = (1.2345678901e-7, 2.3456789012e-7)


class ShapeMismatch(ValueError):
    pass


class NonWatertight(UserWarning):
    pass


def mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean per-joint Euclidean distance in millimetres."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[-1] != 3:
        raise ShapeMismatch(f"mpjpe shapes {pred.shape} vs {gt.shape}")
    return float(np.mean(np.linalg.norm(pred - gt, axis=-1)) * 1000.0)


def per_frame_mpjpe(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"mpjpe shapes {pred.shape} vs {gt.shape}")
    return np.mean(np.linalg.norm(pred - gt, axis=-1), axis=-1) * 1000.0


# ---------------------------------------------------------------------------
# point / mesh queries


def _chunks(n_points: int, n_faces: int):
    step = max(1, _CHUNK // max(n_faces, 1))
    for s in range(0, n_points, step):
        yield slice(s, min(s + step, n_points))


def winding_numbers(points: np.ndarray, mesh: TriMesh) -> np.ndarray:
    """Generalized winding number of the mesh around each point (solid angles / 4 pi)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.triangles()
    # per-component arrays keep the (points, faces) blocks contiguous
    comp = [np.ascontiguousarray(tri[:, i, j]) for i in range(3) for j in range(3)]
    out = np.zeros(len(points))
    for sl in _chunks(len(points), len(tri)):
        px, py, pz = (points[sl, j, None] for j in range(3))
        ax, ay, az = comp[0] - px, comp[1] - py, comp[2] - pz
        bx, by, bz = comp[3] - px, comp[4] - py, comp[5] - pz
        cx, cy, cz = comp[6] - px, comp[7] - py, comp[8] - pz
        la = np.sqrt(ax * ax + ay * ay + az * az)
        lb = np.sqrt(bx * bx + by * by + bz * bz)
        lc = np.sqrt(cx * cx + cy * cy + cz * cz)
        num = ax * (by * cz - bz * cy) + ay * (bz * cx - bx * cz) + az * (bx * cy - by * cx)
        den = (la * lb * lc + (ax * bx + ay * by + az * bz) * lc
               + (bx * cx + by * cy + bz * cz) * la + (cx * ax + cy * ay + cz * az) * lb)
        out[sl] = np.sum(np.arctan2(num, den), axis=1) / (2.0 * np.pi)
    return out


def column_winding(points: np.ndarray, mesh: TriMesh, cell: float | None = None) -> np.ndarray:
    """Integer winding numbers from oriented crossings of a +z ray through each point.

    Agrees with :func:`winding_numbers` on closed oriented meshes except for
    rays that graze an edge exactly.  Points are binned in xy so each
    triangle is only tested against points under its bounding box.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    out = np.zeros(len(points), dtype=np.int64)
    if len(points) == 0 or mesh.n_faces == 0:
        return out
    tri = mesh.triangles()
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    keep = area != 0
    a, b, c, area = a[keep], b[keep], c[keep], area[keep]
    lo_xy = np.minimum(np.minimum(a, b), c)[:, :2]
    hi_xy = np.maximum(np.maximum(a, b), c)[:, :2]
    if cell is None:
        cell = max(float(np.median(hi_xy - lo_xy)), 1e-6)
    origin = points[:, :2].min(0)
    pk = np.floor((points[:, :2] - origin) / cell).astype(np.int64)
    n_cy = int(pk[:, 1].max()) + 1
    key = pk[:, 0] * n_cy + pk[:, 1]
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    n_cx = int(pk[:, 0].max()) + 1
    t_lo = np.clip(np.floor((lo_xy - origin) / cell).astype(np.int64), 0, None)
    t_hi = np.floor((hi_xy - origin) / cell).astype(np.int64)
    t_hi = np.minimum(t_hi, [n_cx - 1, n_cy - 1])
    span = np.maximum(t_hi - t_lo + 1, 0)
    counts = span[:, 0] * span[:, 1]
    tri_id = np.repeat(np.arange(len(a)), counts)
    local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    cx = t_lo[tri_id, 0] + local // np.maximum(span[tri_id, 1], 1)
    cy = t_lo[tri_id, 1] + local % np.maximum(span[tri_id, 1], 1)
    ckey = cx * n_cy + cy
    start = np.searchsorted(sorted_key, ckey, side="left")
    n_in = np.searchsorted(sorted_key, ckey, side="right") - start
    pair_tri = np.repeat(tri_id, n_in)
    offs = np.arange(n_in.sum()) - np.repeat(np.cumsum(n_in) - n_in, n_in)
    pair_pt = order[np.repeat(start, n_in) + offs]
    for s in range(0, len(pair_tri), 4 * _CHUNK):
        ti, pi = pair_tri[s : s + 4 * _CHUNK], pair_pt[s : s + 4 * _CHUNK]
        A, B, C, ar = a[ti], b[ti], c[ti], area[ti]
        px, py = points[pi, 0], points[pi, 1]
        w0 = ((B[:, 0] - px) * (C[:, 1] - py) - (B[:, 1] - py) * (C[:, 0] - px)) / ar
        w1 = ((C[:, 0] - px) * (A[:, 1] - py) - (C[:, 1] - py) * (A[:, 0] - px)) / ar
        w2 = 1.0 - w0 - w1
        z = w0 * A[:, 2] + w1 * B[:, 2] + w2 * C[:, 2]
        hit = (w0 >= 0) & (w1 >= 0) & (w2 >= 0) & (z < points[pi, 2])
        np.add.at(out, pi[hit], -np.sign(ar[hit]).astype(np.int64))
    return out


def inside_mesh(points: np.ndarray, mesh: TriMesh) -> np.ndarray:
    """Boolean per point: generalized winding number > 0.5."""
    if not mesh.is_watertight():
        warnings.warn("inside test on a mesh that is not watertight", NonWatertight, stacklevel=2)
    return winding_numbers(points, mesh) > 0.5


def closest_points(points: np.ndarray, mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """Distance to the mesh surface and the closest surface point for each query point."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.triangles()
    dist = np.full(len(points), np.inf)
    best = np.zeros_like(points)
    for sl in _chunks(len(points), len(tri)):
        q = _closest_on_triangles(points[sl, None, :], tri[None, :, 0], tri[None, :, 1], tri[None, :, 2])
        d2 = np.sum((q - points[sl, None, :]) ** 2, axis=-1)
        arg = np.argmin(d2, axis=1)
        rows = np.arange(len(arg))
        dist[sl] = np.sqrt(d2[rows, arg])
        best[sl] = q[rows, arg]
    return dist, best


def _closest_on_triangles(p, a, b, c):
    """Closest point on triangles (a, b, c) to p, region-by-region (Ericson)."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.sum(ab * ap, -1)
    d2 = np.sum(ac * ap, -1)
    bp = p - b
    d3 = np.sum(ab * bp, -1)
    d4 = np.sum(ac * bp, -1)
    cp = p - c
    d5 = np.sum(ab * cp, -1)
    d6 = np.sum(ac * cp, -1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
        out = a + ab * v[..., None] + ac * w[..., None]
        # edge BC
        t_bc = np.where((d4 - d3) + (d5 - d6) != 0, (d4 - d3) / ((d4 - d3) + (d5 - d6)), 0.0)
        m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        out = np.where(m[..., None], b + (c - b) * t_bc[..., None], out)
        # edge AC
        t_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(m[..., None], a + ac * t_ac[..., None], out)
        # vertex C
        m = (d6 >= 0) & (d5 <= d6)
        out = np.where(m[..., None], np.broadcast_to(c, out.shape), out)
        # edge AB
        t_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(m[..., None], a + ab * t_ab[..., None], out)
        # vertex B
        m = (d3 >= 0) & (d4 <= d3)
        out = np.where(m[..., None], np.broadcast_to(b, out.shape), out)
        # vertex A
        m = (d1 <= 0) & (d2 <= 0)
        out = np.where(m[..., None], np.broadcast_to(a, out.shape), out)
    return out


def signed_distance(points: np.ndarray, mesh: TriMesh) -> np.ndarray:
    """Distance to the surface, negative inside."""
    dist, _ = closest_points(points, mesh)
    return np.where(winding_numbers(points, mesh) > 0.5, -dist, dist)


# ---------------------------------------------------------------------------
# voxelization


def winding_grid(mesh: TriMesh, origin: np.ndarray, h: float, shape) -> np.ndarray:
    """Integer winding numbers at voxel centres of an axis-aligned grid.

    Each (x, y) column is a ray along +z; crossings of oriented triangles add
    -sign(n_z) to every voxel centre above them.  For a closed oriented mesh
    this equals the winding number used by :func:`inside_mesh`.
    """
    nx, ny, nz = (int(s) for s in shape)
    out = np.zeros((nx, ny, nz + 1), dtype=np.int64)
    if mesh.n_faces == 0 or min(nx, ny, nz) <= 0:
        return out[..., :nz]
    ox = origin[0] + _COLUMN_JITTER[0] * h
    oy = origin[1] + _COLUMN_JITTER[1] * h
    tri = mesh.triangles()
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    nzc = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    keep = nzc != 0
    a, b, c, nzc = a[keep], b[keep], c[keep], nzc[keep]
    lo_x = np.ceil((np.minimum(np.minimum(a[:, 0], b[:, 0]), c[:, 0]) - ox) / h - 0.5).astype(np.int64)
    hi_x = np.floor((np.maximum(np.maximum(a[:, 0], b[:, 0]), c[:, 0]) - ox) / h - 0.5).astype(np.int64)
    lo_y = np.ceil((np.minimum(np.minimum(a[:, 1], b[:, 1]), c[:, 1]) - oy) / h - 0.5).astype(np.int64)
    hi_y = np.floor((np.maximum(np.maximum(a[:, 1], b[:, 1]), c[:, 1]) - oy) / h - 0.5).astype(np.int64)
    lo_x, lo_y = np.maximum(lo_x, 0), np.maximum(lo_y, 0)
    hi_x, hi_y = np.minimum(hi_x, nx - 1), np.minimum(hi_y, ny - 1)
    cx = np.maximum(hi_x - lo_x + 1, 0)
    cy = np.maximum(hi_y - lo_y + 1, 0)
    counts = cx * cy
    if counts.sum() == 0:
        return out[..., :nz]
    tri_id = np.repeat(np.arange(len(a)), counts)
    local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    ix = lo_x[tri_id] + local // cy[tri_id]
    iy = lo_y[tri_id] + local % cy[tri_id]
    px = ox + (ix + 0.5) * h
    py = oy + (iy + 0.5) * h
    A, B, C = a[tri_id], b[tri_id], c[tri_id]
    area = nzc[tri_id]
    w0 = ((B[:, 0] - px) * (C[:, 1] - py) - (B[:, 1] - py) * (C[:, 0] - px)) / area
    w1 = ((C[:, 0] - px) * (A[:, 1] - py) - (C[:, 1] - py) * (A[:, 0] - px)) / area
    w2 = 1.0 - w0 - w1
    hit = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
    z = w0 * A[:, 2] + w1 * B[:, 2] + w2 * C[:, 2]
    sign = -np.sign(area).astype(np.int64)
    kz = np.ceil((z - origin[2]) / h - 0.5).astype(np.int64)
    kz = np.clip(kz, 0, nz)
    np.add.at(out, (ix[hit], iy[hit], kz[hit]), sign[hit])
    return np.cumsum(out, axis=2)[..., :nz]


def intersection_volume(hand: TriMesh, obj: TriMesh, voxel_mm: float = 2.0, frame=None) -> float:
    """Volume (cm^3) of voxels whose centres lie inside both meshes.

    ``frame = (R, t)`` expresses both meshes in that frame first (the object
    frame), so the grid axes follow the object.
    """
    if hand.n_faces == 0 or obj.n_faces == 0:
        return 0.0
    if frame is not None:
        R, t = (np.asarray(x, dtype=np.float64) for x in frame)
        hand = TriMesh((hand.vertices - t) @ R, hand.faces)
        obj = TriMesh((obj.vertices - t) @ R, obj.faces)
    h = voxel_mm / 1000.0
    lo = np.maximum(hand.vertices.min(0), obj.vertices.min(0))
    hi = np.minimum(hand.vertices.max(0), obj.vertices.max(0))
    if np.any(hi <= lo):
        return 0.0
    shape = np.maximum(np.ceil((hi - lo) / h).astype(np.int64), 1)
    inside = (winding_grid(hand, lo, h, shape) > 0) & (winding_grid(obj, lo, h, shape) > 0)
    return float(np.count_nonzero(inside)) * (voxel_mm / 10.0) ** 3


def penetration_depth(hand: TriMesh, obj: TriMesh) -> float:
    """Largest distance (mm) from a hand vertex inside the object to the object surface."""
    if hand.n_vertices == 0 or obj.n_faces == 0:
        return 0.0
    lo, hi = obj.bounds()
    cand = np.flatnonzero(np.all((hand.vertices >= lo) & (hand.vertices <= hi), axis=1))
    if len(cand) == 0:
        return 0.0
    inside = column_winding(hand.vertices[cand], obj) > 0
    if not np.any(inside):
        return 0.0
    dist, _ = closest_points(hand.vertices[cand[inside]], obj)
    return float(dist.max() * 1000.0)


# ---------------------------------------------------------------------------
# contact


def contact_map(hand_vertices: np.ndarray, object_vertices: np.ndarray, threshold: float = 0.002) -> np.ndarray:
    """True for object vertices with some hand vertex within ``threshold`` metres."""
    hv = np.asarray(hand_vertices, dtype=np.float64).reshape(-1, 3)
    ov = np.asarray(object_vertices, dtype=np.float64).reshape(-1, 3)
    flags = np.zeros(len(ov), dtype=bool)
    if threshold <= 0:
        raise ValueError("contact threshold must be positive")
    if len(hv) == 0 or len(ov) == 0:
        return flags
    # only object vertices in a cell next to an occupied hand cell can be within the threshold
    origin = hv.min(0) - 2.0 * threshold
    hk = np.floor((hv - origin) / threshold).astype(np.int64)
    ok = np.floor((ov - origin) / threshold).astype(np.int64)
    dims = hk.max(0) + 3
    near = np.all((ok >= -1) & (ok < dims - 1), axis=1)
    cand = np.flatnonzero(near)
    if len(cand) == 0:
        return flags
    offsets = np.stack(np.meshgrid(*([np.arange(-1, 2)] * 3), indexing="ij"), -1).reshape(-1, 3)
    occupied = np.unique(((hk[:, None, :] + offsets[None] + 1) @ np.array([dims[1] * dims[2], dims[2], 1])).ravel())
    okey = (ok[cand] + 1) @ np.array([dims[1] * dims[2], dims[2], 1])
    cand = cand[np.isin(okey, occupied)]
    t2 = threshold * threshold
    for sl in _chunks(len(cand), len(hv)):
        d2 = np.sum((ov[cand[sl], None, :] - hv[None, :, :]) ** 2, axis=-1)
        flags[cand[sl]] = np.any(d2 <= t2, axis=1)
    return flags


def contact_iou(pred_hands, gt_hands, objects, threshold: float = 0.002):
    """Mean contact IoU (percent) over frames whose contact union is non-empty.

    Inputs are per-frame vertex arrays (or meshes).  Returns ``(mean, per_frame)``
    where excluded frames are ``None`` and ``mean`` is ``None`` if every frame
    is excluded.
    """
    if not (len(pred_hands) == len(gt_hands) == len(objects)):
        raise ShapeMismatch("contact_iou needs aligned sequences")
    per_frame = []
    for ph, gh, ob in zip(pred_hands, gt_hands, objects):
        ph, gh, ob = (m.vertices if isinstance(m, TriMesh) else m for m in (ph, gh, ob))
        A = contact_map(gh, ob, threshold)
        B = contact_map(ph, ob, threshold)
        union = np.count_nonzero(A | B)
        per_frame.append(None if union == 0 else 100.0 * np.count_nonzero(A & B) / union)
    valid = [v for v in per_frame if v is not None]
    return (float(np.mean(valid)) if valid else None), per_frame
