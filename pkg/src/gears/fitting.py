"""Fit hand shape and per-frame pose to a joint sequence through differentiable FK.

The objective, with joints in millimetres so the default weights balance:

    w_data * mean_t sum_k |J_k^t - j_k^t|^2
    + w_beta |beta|^2 + w_pose mean_t |theta^t|^2 + w_vel mean_t |theta^{t+1} - theta^t|^2
    + w_acc mean_t sum_k |J''_k^t|

with J'' the central second difference of model joints times fps^2.  Global
rotation and wrist position come from the hand trajectory and stay fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .config import FitConfig
from .hand import N_BETA, N_JOINTS, forward_kinematics_batch, load_skeleton
from .nn import ParamStore, Tensor

MM = 1000.0
THETA_MAX = np.pi - 1e-6
_SERIES = 1e-2


class NonFiniteLoss(FloatingPointError):
    pass


class TooShort(ValueError):
    pass


# ---------------------------------------------------------------------------
# differentiable forward kinematics


def _sinc_a(s):
    a = np.sqrt(np.maximum(s, _SERIES))
    exact = np.sin(a) / a
    series = 1 - s / 6 + s**2 / 120 - s**3 / 5040 + s**4 / 362880
    return np.where(s < _SERIES, series, exact)


def _sinc_a_ds(s):
    a = np.sqrt(np.maximum(s, _SERIES))
    exact = (a * np.cos(a) - np.sin(a)) / (2 * a**3)
    series = -1 / 6 + s / 60 - s**2 / 1680 + s**3 / 90720
    return np.where(s < _SERIES, series, exact)


def _cosc_b(s):
    ss = np.maximum(s, _SERIES)
    exact = (1 - np.cos(np.sqrt(ss))) / ss
    series = 0.5 - s / 24 + s**2 / 720 - s**3 / 40320 + s**4 / 3628800
    return np.where(s < _SERIES, series, exact)


def _cosc_b_ds(s):
    ss = np.maximum(s, _SERIES)
    a = np.sqrt(ss)
    exact = (a * np.sin(a) - 2 * (1 - np.cos(a))) / (2 * ss**2)
    series = -1 / 24 + s / 360 - s**2 / 13440 + s**3 / 907200
    return np.where(s < _SERIES, series, exact)


def rodrigues(theta: Tensor) -> Tensor:
    """Axis-angle (..., 3) to rotation matrices (..., 3, 3)."""
    s = nn.tsum(nn.mul(theta, theta), axis=-1)
    A = nn.unary(s, _sinc_a, _sinc_a_ds, "sinc")
    B = nn.unary(s, _cosc_b, _cosc_b_ds, "cosc")
    x, y, z = theta[..., 0], theta[..., 1], theta[..., 2]
    zero = Tensor(np.zeros(x.shape))
    K = nn.reshape(nn.stack([zero, -z, y, z, zero, -x, -y, x, zero], axis=-1), theta.shape[:-1] + (3, 3))
    K2 = nn.matmul(K, K)
    eye = np.eye(3)
    return nn.add(nn.add(eye, nn.mul(nn.reshape(A, A.shape + (1, 1)), K)), nn.mul(nn.reshape(B, B.shape + (1, 1)), K2))


def bone_scales_tensor(beta: Tensor) -> Tensor:
    skel = load_skeleton()
    factors = nn.clip(nn.add(1.0, nn.mul(beta, 0.1)), 1e-6, np.inf)
    logs = nn.matmul(nn.reshape(nn.log(factors), (1, N_BETA)), skel.group_matrix)
    return nn.clip(nn.exp(nn.reshape(logs, (-1,))), 0.5, 1.5)


def fk_tensor(beta: Tensor, theta: Tensor, global_rot: np.ndarray, wrist: np.ndarray) -> Tensor:
    """Joints (T, 21, 3) for shared ``beta`` (10,) and per-frame ``theta`` (T, 15, 3)."""
    skel = load_skeleton()
    T = theta.shape[0]
    rel = rodrigues(theta)  # (T, 15, 3, 3), articulated order: finger-major, 3 per finger
    offsets = nn.mul(skel.rest_offsets, nn.reshape(bone_scales_tensor(beta), (-1, 1)))  # (20, 3)
    R = Tensor(np.asarray(global_rot, dtype=np.float64)[:, None])  # (T, 1, 3, 3)
    w = np.asarray(wrist, dtype=np.float64)
    rot = R
    pos = Tensor(np.broadcast_to(w[:, None, :], (T, 5, 3)))
    levels = []
    for level in range(4):
        bones = np.array([4 * f + level for f in range(5)])  # bone index = joint index - 1
        off = nn.reshape(offsets[bones], (5, 3, 1))
        pos = nn.add(pos, nn.reshape(nn.matmul(rot, off), (T, 5, 3)))
        levels.append(pos)
        if level < 3:
            rot = nn.matmul(rot, rel[:, level::3])
    fingers = nn.reshape(nn.stack(levels, axis=2), (T, 20, 3))
    return nn.concat([Tensor(w[:, None, :]), fingers], axis=1)


# ---------------------------------------------------------------------------
# objective


@dataclass
class FitResult:
    beta: np.ndarray
    theta: np.ndarray
    joints: np.ndarray
    loss: float
    data_term: float  # mean squared joint error, m^2 per joint
    trace: list = field(default_factory=list)
    final_lr: float = 0.0


def fit_objective(beta: Tensor, theta: Tensor, targets: np.ndarray, R: np.ndarray, w: np.ndarray, fps: float,
                  cfg: FitConfig, w_data: float = 1.0):
    """Scalar loss tensor and the model joints (T, 21, 3) in metres."""
    T = theta.shape[0]
    J = fk_tensor(beta, theta, R, w)
    diff = nn.mul(nn.sub(J, targets), MM)
    loss = nn.mul(nn.tsum(nn.mul(diff, diff)), w_data / T)
    if cfg.w_beta:
        loss = nn.add(loss, nn.mul(nn.tsum(nn.mul(beta, beta)), cfg.w_beta))
    if cfg.w_pose:
        loss = nn.add(loss, nn.mul(nn.tsum(nn.mul(theta, theta)), cfg.w_pose / T))
    if cfg.w_vel and T >= 2:
        dv = nn.sub(theta[1:], theta[:-1])
        loss = nn.add(loss, nn.mul(nn.tsum(nn.mul(dv, dv)), cfg.w_vel / (T - 1)))
    if cfg.w_acc and T >= 3:
        acc = nn.mul(nn.add(nn.sub(J[2:], nn.mul(J[1:-1], 2.0)), J[:-2]), MM * fps * fps)
        loss = nn.add(loss, nn.mul(nn.tsum(nn.norm(acc, axis=-1)), cfg.w_acc / (T - 2)))
    return loss, J


def _clamp_theta(theta: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(theta, axis=-1, keepdims=True)
    return np.where(n > THETA_MAX, theta * (THETA_MAX / np.where(n > 0, n, 1.0)), theta)


def fit_sequence(joints: np.ndarray, global_rot: np.ndarray, wrist: np.ndarray, cfg: FitConfig | None = None,
                 fps: float = 30.0, iters: int | None = None, lr: float | None = None, w_data: float = 1.0,
                 init_beta: np.ndarray | None = None, init_theta: np.ndarray | None = None) -> FitResult:
    """Fit shared beta and per-frame theta to target joints (T, 21, 3).

    Adam steps; a step that raises the loss is undone and the step size halved,
    so the accepted loss never increases.  The problem is solved in the wrist
    frame of the first frame, which keeps the result rigidly equivariant.
    """
    cfg = cfg or FitConfig()
    targets = np.asarray(joints, dtype=np.float64)
    if targets.ndim != 3 or targets.shape[1:] != (N_JOINTS, 3) or len(targets) < 1:
        raise TooShort("fitting needs at least one frame of 21 joints")
    T = len(targets)
    R = np.asarray(global_rot, dtype=np.float64).reshape(T, 3, 3)
    w = np.asarray(wrist, dtype=np.float64).reshape(T, 3)
    iters = cfg.iters if iters is None else iters
    lr = cfg.lr if lr is None else lr

    R0, w0 = R[0], w[0]
    tgt_c = (targets - w0) @ R0
    R_c = np.einsum("ji,tjk->tik", R0, R)
    w_c = (w - w0) @ R0

    store = ParamStore()
    store.add("beta", np.zeros(N_BETA) if init_beta is None else init_beta)
    store.add("theta", np.zeros((T, 15, 3)) if init_theta is None else _clamp_theta(np.asarray(init_theta)))

    def evaluate():
        store.zero_grad()
        loss, _ = fit_objective(store["beta"], store["theta"], tgt_c, R_c, w_c, fps, cfg, w_data)
        return loss

    accepted = np.inf
    snapshot = None
    trace = []
    for _ in range(iters):
        loss = evaluate()
        value = loss.item()
        if not np.isfinite(value) and snapshot is None:
            raise NonFiniteLoss("fitting loss is not finite at the starting point")
        if not np.isfinite(value) or value > accepted:
            store = snapshot.copy()
            lr *= 0.5
            if lr < 1e-12:
                if not np.isfinite(value):
                    raise NonFiniteLoss("step size collapsed while backtracking from a non-finite loss")
                break  # no step improves the loss: converged
            trace.append(accepted)
            continue
        accepted = value
        snapshot = store.copy()
        trace.append(accepted)
        loss.backward()
        store.adam_step(lr)
        store["theta"].data = _clamp_theta(store["theta"].data)

    loss = evaluate()
    if snapshot is not None and not (loss.item() <= accepted):
        store = snapshot
        loss = evaluate()
    beta = store["beta"].data.copy()
    theta = store["theta"].data.copy()
    final, _ = forward_kinematics_batch(beta, theta, R, w)
    data_term = float(np.mean(np.sum((final - targets) ** 2, axis=-1)))
    return FitResult(beta, theta, final, loss.item(), data_term, trace, lr)
