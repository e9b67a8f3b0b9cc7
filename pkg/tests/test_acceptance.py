"""Acceptance criteria 1-10, each at its stated tolerance and time limit.

Every test records a one-line PASS/FAIL verdict that is repeated in the
pytest terminal summary.  Run with ``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np
import pytest

from acceptance_log import record
from conftest import random_pose, random_scene
from gears import nn
from gears.config import FitConfig, desk_config
from gears.features import DispInputs, disp_inputs, init_inputs
from gears.fitting import fit_sequence
from gears.hand import chain_from_relative, forward_kinematics_batch, inverse_kinematics
from gears.metrics import inside_mesh, intersection_volume, mpjpe
from gears.networks import disp_forward, disp_net_params, init_forward, init_net_params, train
from gears.pipeline import Checkpoint, evaluate, infer_record, load_split, synth_corpus
from gears.rotations import axis_angle_to_quat, matrix_to_quat, quat_angle, random_rotation
from gears.sensors import CubeSensor, crop_with_cube, joint_radius_query, sample_surface
from gears.synthesis import (
    box_mesh,
    capsule_mesh,
    cylinder_mesh,
    icosphere,
    sequence_intersection,
    sequence_seed,
    synthesize_sequence,
)
from gradcases import disp_net_case, init_net_case, network_error, op_cases
from oracles import box_overlap_volume, brute_crop, brute_radius_sets, naive_mpjpe, ray_parity_inside

# training budgets for the overfit and ablation runs (epochs)
OVERFIT_STAGE1 = 300
OVERFIT_STAGE2 = 60
ABLATION_STAGE1 = 100
ABLATION_STAGE2 = 60


def _tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _train_mpjpe(init, disp, config, records, seed):
    errs = []
    for i, rec in enumerate(records):
        ck = Checkpoint(config, init, disp, seed=seed)
        pred = infer_record(rec, ck, seed + i, displacement=disp is not None, fit=False)
        errs.append(np.linalg.norm(pred.pred_joints - rec.gt_joints, axis=-1).ravel())
    return float(np.concatenate(errs).mean() * 1000.0)


@pytest.fixture(scope="module")
def small_config():
    """Desk preset with narrow networks and short sequences for the pipeline-level properties."""
    return desk_config(0).replace(
        sensor={"crop_points": 48, "max_points": 12},
        init_net={"point_widths": [16, 24], "mlp_widths": [32]},
        disp_net={"feat_widths": [8, 16], "embed_widths": [8]},
        synth={"frames": 16},
        train={"stage1_epochs": 3, "stage2_epochs": 3, "batch_frames": 16, "stage2_copies": 0},
        fit={"iters": 60},
    )


# ---------------------------------------------------------------------------


def test_criterion_1_kinematics_round_trip():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        beta, theta, R, w = random_scene(rng)
        joints, _ = forward_kinematics_batch(beta, theta, R, w)
        frames = inverse_kinematics(joints, R)
        again, _ = chain_from_relative(frames.relative, beta, R, w)
        worst = max(worst, float(np.abs(again - joints).max()))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and elapsed < 5.0
    assert record(1, ok, f"100 poses, max re-pose error {worst:.2e} m, {elapsed:.2f} s")


def test_criterion_2_gradient_oracle():
    start = time.perf_counter()
    errors = {name: nn.max_relative_error(f, tensors, eps=1e-5) for name, f, tensors in op_cases(7)}
    errors["init_net"] = network_error(*init_net_case(7))
    errors["disp_net"] = network_error(*disp_net_case(7, attention=True))
    errors["disp_net_no_attention"] = network_error(*disp_net_case(7, attention=False))
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    ok = errors[worst] < 1e-3 and elapsed < 60.0
    assert record(2, ok, f"{len(errors)} checks, worst {worst} {errors[worst]:.2e}, {elapsed:.1f} s")


def test_criterion_3_sensor_oracle():
    rng = np.random.default_rng(303)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(50):
        beta, theta, R, w = random_scene(rng)
        joints, _ = forward_kinematics_batch(beta, theta, R, w)
        frames = inverse_kinematics(joints, R)
        centre = joints[rng.integers(21)] + rng.normal(scale=0.02, size=3)
        mesh = icosphere(3, rng.uniform(0.02, 0.06)).transformed(random_rotation(rng), centre)
        surface = sample_surface(mesh, int(rng.integers(300, 3000)), int(rng.integers(1 << 30)))
        r = rng.uniform(0.005, 0.04)
        sample = joint_radius_query(surface, joints, frames, r, max_points=10**9, seed=0)
        for k, idx in enumerate(brute_radius_sets(surface.points, joints, r)):
            expected = (surface.points[idx] - joints[k]) @ frames.rotations[k]
            normals = surface.normals[idx] @ frames.rotations[k]
            mismatches += not (np.array_equal(sample.points[k], expected) and np.array_equal(sample.normals[k], normals))
        wrist, rot = w + rng.normal(scale=0.05, size=3), R
        kept = crop_with_cube(mesh, CubeSensor(0.18), wrist, rot)
        verts, tris = brute_crop(mesh, 0.18, wrist, rot)
        mismatches += not (np.array_equal(kept.vertices, verts)
                           and np.array_equal(kept.triangles().reshape(-1, 3, 3), tris))
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 30.0
    assert record(3, ok, f"50 scenes, {mismatches} mismatching queries, {elapsed:.1f} s")


def test_criterion_4_rigid_equivariance(small_config):
    cfg = small_config
    records = [synthesize_sequence(cfg, sequence_seed(44, "train", i)).to_record({}) for i in range(5)]
    result = train(records[:2], cfg, 4)
    ckpt = Checkpoint(cfg, result.init, result.disp, result.stage1_done, result.stage2_done, 4)
    rng = np.random.default_rng(404)
    worst = fit_dev = 0.0
    for i, rec in enumerate(records):
        R, t = random_rotation(rng), rng.uniform(-1.0, 1.0, size=3)
        a = infer_record(rec, ckpt, 40 + i)
        b = infer_record(rec.transformed(R, t), ckpt, 40 + i)
        for x, y in ((a.init_joints, b.init_joints), (a.pred_joints, b.pred_joints)):
            worst = max(worst, float(np.abs(x @ R.T + t - y).max()))
        # the fitted hand is reported but not held to 1e-6: Adam amplifies roundoff along flat directions
        fit_dev = max(fit_dev, float(np.abs(a.fit_joints @ R.T + t - b.fit_joints).max()))
    ok = worst < 1e-6
    assert record(4, ok, f"5 sequences, max deviation of output joints {worst:.2e} m "
                         f"(fitted hand joints {fit_dev:.1e} m)")


def test_criterion_5_permutation_invariance():
    cfg = desk_config(0)
    rec = synthesize_sequence(cfg, sequence_seed(55, "train", 0)).to_record({})
    rng = np.random.default_rng(505)
    data = init_inputs(rec, cfg, 5)
    init_store = init_net_params(cfg.init_net, cfg.sensor.window_k, 5)
    base = init_forward(init_store, cfg.init_net, data.windows, data.clouds).data
    same = []
    for _ in range(5):
        perm = rng.permutation(data.clouds.shape[1])
        same.append(np.array_equal(init_forward(init_store, cfg.init_net, data.windows, data.clouds[:, perm]).data,
                                   base))
    # sensor inputs around noisy ground truth, so every joint sees object points
    joints = rec.gt_joints + rng.normal(scale=0.003, size=rec.gt_joints.shape)
    inputs = disp_inputs(rec, joints, cfg, 5)
    disp_store = disp_net_params(cfg.disp_net, 5)
    d = disp_forward(disp_store, cfg.disp_net, inputs).data
    for _ in range(5):
        # an independent shuffle of every joint's point set
        order = np.argsort(rng.random(inputs.mask.shape), axis=-1)
        feats = np.take_along_axis(inputs.feats, order[..., None], axis=2)
        mask = np.take_along_axis(inputs.mask, order, axis=2)
        shuffled = DispInputs(feats, mask, inputs.embed, inputs.rotations, inputs.init_joints)
        same.append(np.array_equal(disp_forward(disp_store, cfg.disp_net, shuffled).data, d))
    ok = all(same) and inputs.mask.any()
    assert record(5, ok, f"{sum(same)}/{len(same)} shuffles bitwise-equal (init net 5, displacement net 5)")


@pytest.mark.slow
def test_criterion_6_overfit():
    cfg = desk_config(0)
    start = time.perf_counter()
    records = [synthesize_sequence(cfg, sequence_seed(66, "train", i)).to_record({}) for i in range(8)]
    result = train(records, cfg, 6, stage1_epochs=OVERFIT_STAGE1, stage2_epochs=OVERFIT_STAGE2)
    err_init = _train_mpjpe(result.init, None, cfg, records, 6)
    err = _train_mpjpe(result.init, result.disp, cfg, records, 6)
    elapsed = time.perf_counter() - start
    ok = err < 5.0 and elapsed < 600.0 and OVERFIT_STAGE1 <= 500 and OVERFIT_STAGE2 <= 500
    assert record(6, ok, f"8 sequences, {OVERFIT_STAGE1}+{OVERFIT_STAGE2} epochs, training MPJPE {err:.2f} mm "
                         f"(init net alone {err_init:.2f} mm), {elapsed:.0f} s")


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore::gears.pipeline.ConfigMismatch")  # the r=0 variant differs from the corpus config
def test_criterion_7_ablation_direction(tmp_path):
    cfg = desk_config(0)
    start = time.perf_counter()
    synth_corpus(cfg, 40, 10, tmp_path, 7)
    train_set, test_set = load_split(tmp_path, "train"), load_split(tmp_path, "test")
    # the init net does not depend on the variants, so it is trained once and shared
    stage1 = train(train_set, cfg, 7, stage1_epochs=ABLATION_STAGE1, displacement=False)
    variants = {"no-displacement": Checkpoint(cfg, stage1.init, None, ABLATION_STAGE1, 0, 7)}
    for name, c in (("full", cfg), ("r=0", cfg.replace(sensor={"radius": 0.0}))):
        res = train(train_set, c, 7, init_store=stage1.init, stage1_done=ABLATION_STAGE1,
                    stage1_epochs=ABLATION_STAGE1, stage2_epochs=ABLATION_STAGE2)
        variants[name] = Checkpoint(c, res.init, res.disp, ABLATION_STAGE1, ABLATION_STAGE2, 7)
    scores = {}
    for name, ck in variants.items():
        joints, contact = [], []
        for i, rec in enumerate(test_set):
            rep = evaluate(infer_record(rec, ck, 700 + i, displacement=ck.disp is not None), rec, ck.config)
            joints += rep["per_frame"]["mpjpe_mm"]
            contact += [v for v in rep["per_frame"].get("ciou_pct", []) if v is not None]
        scores[name] = (float(np.mean(joints)), float(np.mean(contact)) if contact else float("nan"))
    elapsed = time.perf_counter() - start
    full, nodisp, r0 = scores["full"], scores["no-displacement"], scores["r=0"]
    ok = full[0] < nodisp[0] and full[1] > nodisp[1] and r0[1] < full[1] and elapsed < 1800.0
    detail = ", ".join(f"{k} MPJPE {v[0]:.2f} mm C-IoU {v[1]:.2f}%" for k, v in scores.items())
    assert record(7, ok, f"{detail}; {elapsed:.0f} s")


def test_criterion_8_metrics_oracles():
    rng = np.random.default_rng(808)
    meshes = [icosphere(2, 0.05), box_mesh((0.06, 0.03, 0.04), 0.01), cylinder_mesh(0.02, 0.06, 0.01),
              capsule_mesh(0.015, 0.04, 0.01)]
    agree = total = 0
    for mesh in meshes:
        pts = rng.uniform(-0.05, 0.05, size=(250, 3))
        agree += int(np.sum(inside_mesh(pts, mesh) == ray_parity_inside(pts, mesh)))
        total += len(pts)
    worst_iv = 0.0
    for _ in range(5):
        s1, s2 = rng.uniform(0.02, 0.04, size=2)
        shift = rng.uniform(-0.5, 0.5, size=3) * min(s1, s2)
        a = box_mesh((s1,) * 3, 0.005)
        b = box_mesh((s2,) * 3, 0.005).transformed(np.eye(3), shift)
        exact = box_overlap_volume(np.zeros(3), s1, shift, s2) * 1e6
        worst_iv = max(worst_iv, abs(intersection_volume(a, b, voxel_mm=0.5) - exact) / exact)
    worst_mp = 0.0
    for _ in range(10):
        p, g = rng.normal(size=(6, 21, 3)), rng.normal(size=(6, 21, 3))
        worst_mp = max(worst_mp, abs(mpjpe(p, g) - naive_mpjpe(p, g)))
    ok = agree == total == 1000 and worst_iv < 0.05 and worst_mp < 1e-9
    assert record(8, ok, f"inside agreement {agree}/{total}, cube IV error {100 * worst_iv:.2f}%, "
                         f"MPJPE deviation {worst_mp:.1e} mm")


def test_criterion_9_synthesis_invariants(tmp_path):
    cfg = desk_config(0)
    n_train, n_test, master = 6, 2, 9
    failures = []
    for split, n in (("train", n_train), ("test", n_test)):
        for i in range(n):
            seq = synthesize_sequence(cfg, sequence_seed(master, split, i))
            src, tgt = seq.source, seq.target.pose
            ends = (np.array_equal(seq.theta[0], src.theta) and np.array_equal(seq.theta[-1], tgt.theta)
                    and np.array_equal(seq.global_rot[0], src.global_rot)
                    and np.array_equal(seq.global_rot[-1], tgt.global_rot)
                    and np.array_equal(seq.wrist[0], src.wrist_pos) and np.array_equal(seq.wrist[-1], tgt.wrist_pos))
            rot_steps = quat_angle(*(lambda q: (q[:-1], q[1:]))(matrix_to_quat(seq.global_rot)))
            joint_steps = quat_angle(*(lambda q: (q[:-1], q[1:]))(axis_angle_to_quat(seq.theta)))
            rate = max(np.ptp(rot_steps), np.ptp(joint_steps, axis=0).max())
            iv = sequence_intersection(seq, cfg.synth.iv_voxel_mm).max()
            if not (ends and rate < 1e-9 and iv <= cfg.synth.iv_threshold_cm3):
                failures.append((split, i, ends, rate, iv))
    synth_corpus(cfg, n_train, n_test, tmp_path / "a", master)
    synth_corpus(cfg, n_train, n_test, tmp_path / "b", master)
    a, b = _tree_bytes(tmp_path / "a"), _tree_bytes(tmp_path / "b")
    identical = a == b and len(a) > 0
    ok = not failures and identical
    assert record(9, ok, f"{n_train + n_test - len(failures)}/{n_train + n_test} sequences satisfy endpoint, "
                         f"SLERP-rate and IV invariants; regeneration byte-identical: {identical} ({len(a)} files)")


def test_criterion_10_fitting():
    rng = np.random.default_rng(1010)
    zero = FitConfig(w_beta=0.0, w_pose=0.0, w_vel=0.0, w_acc=0.0)
    start = time.perf_counter()
    errors = []
    for _ in range(10):
        T = 10
        beta = rng.normal(scale=0.6, size=10)
        theta = np.stack([random_pose(rng, 0.8) for _ in range(T)])
        R = random_rotation(rng, size=T)
        w = rng.normal(scale=0.2, size=(T, 3))
        joints, _ = forward_kinematics_batch(beta, theta, R, w)
        res = fit_sequence(joints, R, w, zero, iters=400)
        errors.append(mpjpe(res.joints, joints))
    elapsed = time.perf_counter() - start
    ok = max(errors) < 1.0 and elapsed < 120.0
    assert record(10, ok, f"10 sequences, worst fitted MPJPE {max(errors):.3f} mm, {elapsed:.1f} s")
