"""Rotation helpers: axis-angle, quaternions (w, x, y, z), SLERP and friends.

All functions broadcast over leading dimensions.
"""

from __future__ import annotations

import numpy as np

_SMALL_ANGLE = 1e-8


def skew(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def axis_angle_to_matrix(aa: np.ndarray) -> np.ndarray:
    """Rodrigues' formula, R = I + A K + B K^2 with K = [aa]x."""
    aa = np.asarray(aa, dtype=np.float64)
    a2 = np.sum(aa * aa, axis=-1)
    a = np.sqrt(a2)
    small = a < 1e-4
    safe = np.where(small, 1.0, a)
    A = np.where(small, 1.0 - a2 / 6.0 + a2 * a2 / 120.0, np.sin(safe) / safe)
    B = np.where(small, 0.5 - a2 / 24.0 + a2 * a2 / 720.0, (1.0 - np.cos(safe)) / (safe * safe))
    K = skew(aa)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + A[..., None, None] * K + B[..., None, None] * (K @ K)


def rot_x(angle: float) -> np.ndarray:
    return axis_angle_to_matrix(np.array([angle, 0.0, 0.0]))


def rot_y(angle: float) -> np.ndarray:
    return axis_angle_to_matrix(np.array([0.0, angle, 0.0]))


def rot_z(angle: float) -> np.ndarray:
    return axis_angle_to_matrix(np.array([0.0, 0.0, angle]))


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z) with w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    m = R.reshape(-1, 3, 3)
    q = np.empty((m.shape[0], 4))
    tr = np.trace(m, axis1=1, axis2=2)
    for i in range(m.shape[0]):
        r = m[i]
        if tr[i] > 0:
            s = np.sqrt(tr[i] + 1.0) * 2.0
            q[i] = (0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s)
        elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
            s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
            q[i] = ((r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s)
        elif r[1, 1] > r[2, 2]:
            s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
            q[i] = ((r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s)
        else:
            s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
            q[i] = ((r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s)
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    q[q[:, 0] < 0] *= -1.0
    return q.reshape(R.shape[:-2] + (4,))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - z * w)
    out[..., 0, 2] = 2 * (x * z + y * w)
    out[..., 1, 0] = 2 * (x * y + z * w)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - x * w)
    out[..., 2, 0] = 2 * (x * z - y * w)
    out[..., 2, 1] = 2 * (y * z + x * w)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def axis_angle_to_quat(aa: np.ndarray) -> np.ndarray:
    aa = np.asarray(aa, dtype=np.float64)
    angle = np.linalg.norm(aa, axis=-1)
    half = 0.5 * angle
    # sin(a/2)/a, with its series near zero
    small = angle < 1e-4
    safe = np.where(small, 1.0, angle)
    k = np.where(small, 0.5 - angle * angle / 48.0, np.sin(half) / safe)
    return np.concatenate([np.cos(half)[..., None], aa * k[..., None]], axis=-1)


def quat_to_axis_angle(q: np.ndarray) -> np.ndarray:
    """Inverse of axis_angle_to_quat; the result has magnitude <= pi."""
    q = np.asarray(q, dtype=np.float64)
    q = np.where(q[..., :1] < 0, -q, q)
    v = q[..., 1:]
    s = np.linalg.norm(v, axis=-1)
    angle = 2.0 * np.arctan2(s, q[..., 0])
    small = s < _SMALL_ANGLE
    scale = np.where(small, 2.0, angle / np.where(small, 1.0, s))
    return v * scale[..., None]


def matrix_to_axis_angle(R: np.ndarray) -> np.ndarray:
    return quat_to_axis_angle(matrix_to_quat(R))


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=np.float64), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=np.float64), -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Geodesic rotation angle between two unit quaternions (sign-agnostic)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dot = np.sum(a * b, axis=-1, keepdims=True)
    b = np.where(dot < 0, -b, b)
    # half-angle via atan2 of chord lengths; accurate for tiny angles too
    return 4.0 * np.arctan2(np.linalg.norm(b - a, axis=-1), np.linalg.norm(b + a, axis=-1))


def slerp(q0: np.ndarray, q1: np.ndarray, t) -> np.ndarray:
    """Spherical linear interpolation with shortest-arc sign correction.

    ``t`` may be a scalar or an array; the result has shape
    ``t.shape + broadcast(q0, q1).shape``.
    """
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    q0 = q0 / np.linalg.norm(q0, axis=-1, keepdims=True)
    q1 = q1 / np.linalg.norm(q1, axis=-1, keepdims=True)
    dot = np.sum(q0 * q1, axis=-1, keepdims=True)
    q1 = np.where(dot < 0, -q1, q1)
    omega = 2.0 * np.arctan2(np.linalg.norm(q1 - q0, axis=-1), np.linalg.norm(q1 + q0, axis=-1))[..., None]
    t = np.asarray(t, dtype=np.float64)
    tt = t.reshape(t.shape + (1,) * q0.ndim)
    small = omega < _SMALL_ANGLE
    sin_omega = np.where(small, 1.0, np.sin(omega))
    w0 = np.where(small, 1.0 - tt, np.sin((1.0 - tt) * omega) / sin_omega)
    w1 = np.where(small, tt, np.sin(tt * omega) / sin_omega)
    out = w0 * q0 + w1 * q1
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def minimal_rotation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Smallest-angle rotation taking direction ``a`` onto direction ``b``.

    Antiparallel inputs rotate by pi about a deterministic perpendicular axis.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = a / np.linalg.norm(a, axis=-1, keepdims=True)
    b = b / np.linalg.norm(b, axis=-1, keepdims=True)
    axis = np.cross(a, b)
    s = np.linalg.norm(axis, axis=-1)
    c = np.sum(a * b, axis=-1)
    angle = np.arctan2(s, c)
    unit = axis / np.where(s > 1e-15, s, 1.0)[..., None]
    anti = (s <= 1e-12) & (c < 0)
    if np.any(anti):
        unit = np.where(anti[..., None], perpendicular(a), unit)
    return axis_angle_to_matrix(unit * angle[..., None])


def perpendicular(v: np.ndarray) -> np.ndarray:
    """Some unit vector orthogonal to ``v``, chosen deterministically."""
    v = np.asarray(v, dtype=np.float64)
    ref = np.where(
        (np.abs(v[..., 0]) < 0.9)[..., None],
        np.array([1.0, 0.0, 0.0]),
        np.array([0.0, 1.0, 0.0]),
    )
    p = np.cross(v, ref)
    return p / np.linalg.norm(p, axis=-1, keepdims=True)


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Project onto SO(3) via SVD."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=np.float64))
    d = np.sign(np.linalg.det(U @ Vt))
    U = U.copy()
    U[..., :, 2] *= d[..., None]
    return U @ Vt


def orthonormality_error(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    eye = np.eye(3)
    return np.linalg.norm(np.swapaxes(R, -1, -2) @ R - eye, axis=(-2, -1))


def is_rotation(R: np.ndarray, tol: float = 1e-6) -> bool:
    R = np.asarray(R, dtype=np.float64)
    return bool(np.all(orthonormality_error(R) < tol) and np.all(np.linalg.det(R) > 0))


def random_rotation(rng: np.random.Generator, size=None) -> np.ndarray:
    """Uniformly distributed rotations (normalized Gaussian quaternions)."""
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    q = rng.normal(size=shape + (4,))
    return quat_to_matrix(q)
