import numpy as np
import pytest

from conftest import random_pose
from gears import nn
from gears.config import FitConfig
from gears.fitting import (
    NonFiniteLoss,
    THETA_MAX,
    TooShort,
    bone_scales_tensor,
    fit_objective,
    fit_sequence,
    fk_tensor,
    rodrigues,
)
from gears.hand import bone_scales, forward_kinematics_batch
from gears.nn import Tensor
from gears.rotations import axis_angle_to_matrix, random_rotation

ZERO = FitConfig(w_beta=0.0, w_pose=0.0, w_vel=0.0, w_acc=0.0)


def _targets(rng, T=8):
    beta = rng.normal(scale=0.6, size=10)
    theta = np.stack([random_pose(rng, 0.8) for _ in range(T)])
    R = random_rotation(rng, size=T)
    w = rng.normal(scale=0.2, size=(T, 3))
    joints, _ = forward_kinematics_batch(beta, theta, R, w)
    return beta, theta, R, w, joints


def test_rodrigues_matches_numpy(rng):
    aa = rng.normal(size=(20, 3))
    aa[0] = 0.0
    aa[1] = 1e-4 * rng.normal(size=3)  # series branch
    np.testing.assert_allclose(rodrigues(Tensor(aa)).data, axis_angle_to_matrix(aa), atol=1e-14)


def test_rodrigues_gradient(rng):
    for scale in (1e-3, 0.05, 1.5):
        aa = Tensor(rng.normal(size=(4, 3)) * scale, requires_grad=True)
        w = rng.normal(size=(4, 3, 3))
        assert nn.max_relative_error(lambda: nn.tsum(nn.mul(rodrigues(aa), w)), [aa]) < 1e-6


def test_fk_tensor_matches_fk(rng):
    beta, theta, R, w, joints = _targets(rng)
    np.testing.assert_allclose(fk_tensor(Tensor(beta), Tensor(theta), R, w).data, joints, atol=1e-14)
    np.testing.assert_allclose(bone_scales_tensor(Tensor(beta)).data, bone_scales(beta), atol=1e-14)


def test_objective_gradient(rng):
    beta, theta, R, w, joints = _targets(rng, T=4)
    b = Tensor(beta * 0.5, requires_grad=True)
    th = Tensor(theta * 0.7, requires_grad=True)
    cfg = FitConfig()

    def f():
        return fit_objective(b, th, joints, R, w, 30.0, cfg)[0]

    assert nn.max_relative_error(f, [b, th]) < 1e-5


def test_fit_recovers_realizable_targets(rng):
    beta, theta, R, w, joints = _targets(rng)
    res = fit_sequence(joints, R, w, ZERO, iters=400)
    err = np.linalg.norm(res.joints - joints, axis=-1).mean() * 1000
    assert err < 1.0
    assert res.data_term < 1e-6


def test_loss_trace_non_increasing(rng):
    _, _, R, w, joints = _targets(rng, T=5)
    res = fit_sequence(joints, R, w, FitConfig(), iters=120, lr=0.3)
    assert np.all(np.diff(res.trace) <= 0)
    assert np.all(np.linalg.norm(res.theta, axis=-1) < np.pi)


def test_pose_regularizer_drives_rest(rng):
    _, _, R, w, joints = _targets(rng, T=3)
    cfg = FitConfig(w_beta=0.0, w_pose=10.0, w_vel=0.0, w_acc=0.0)
    res = fit_sequence(joints, R, w, cfg, iters=300, w_data=0.0, init_theta=np.full((3, 15, 3), 0.3))
    assert np.abs(res.theta).max() < 1e-3


def test_constant_sequence_has_zero_acceleration(rng):
    beta, theta, R, w, joints = _targets(rng, T=1)
    T = 5
    J = np.repeat(joints, T, axis=0)
    Rs, ws = np.repeat(R, T, axis=0), np.repeat(w, T, axis=0)
    th = Tensor(np.repeat(theta, T, axis=0))
    only_acc = FitConfig(w_beta=0.0, w_pose=0.0, w_vel=0.0, w_acc=1.0)
    loss, _ = fit_objective(Tensor(beta), th, J, Rs, ws, 30.0, only_acc, w_data=0.0)
    assert loss.item() == 0.0


def test_rigid_equivariance_of_fit(rng):
    _, _, R, w, joints = _targets(rng, T=4)
    Rs, ts = random_rotation(rng), rng.normal(size=3)
    a = fit_sequence(joints, R, w, FitConfig(), iters=60)
    b = fit_sequence(joints @ Rs.T + ts, Rs @ R, w @ Rs.T + ts, FitConfig(), iters=60)
    assert np.abs(b.joints - (a.joints @ Rs.T + ts)).max() < 1e-9
    np.testing.assert_allclose(a.theta, b.theta, atol=1e-9)


def test_errors(rng):
    with pytest.raises(TooShort):
        fit_sequence(np.zeros((0, 21, 3)), np.zeros((0, 3, 3)), np.zeros((0, 3)))
    _, _, R, w, joints = _targets(rng, T=2)
    with pytest.raises(NonFiniteLoss):
        fit_sequence(joints + np.nan, R, w, iters=3)


def test_short_sequences_drop_terms(rng):
    _, _, R, w, joints = _targets(rng, T=1)
    res = fit_sequence(joints, R, w, FitConfig(), iters=30)
    assert np.isfinite(res.loss)
    assert np.linalg.norm(res.theta, axis=-1).max() <= THETA_MAX
