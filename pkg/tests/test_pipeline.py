import json
import warnings
from pathlib import Path

import numpy as np
import pytest

from gears.cli import main
from gears.pipeline import (
    REPORT_KEYS,
    Checkpoint,
    ConfigMismatch,
    aggregate_reports,
    evaluate,
    export_meshes,
    infer_record,
    load_split,
    synth_corpus,
    train_corpus,
    write_prediction,
)
from gears.records import LengthMismatch, read_record, write_record
from gears.rotations import random_rotation


def _tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def corpus(tiny_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    manifest = synth_corpus(tiny_config, 3, 1, out, 11)
    return out, manifest


@pytest.fixture(scope="module")
def ckpt(tiny_config, corpus):
    ck, _ = train_corpus(tiny_config, load_split(corpus[0], "train"), 2)
    return ck


def test_manifest_lists_every_record(corpus):
    out, manifest = corpus
    for split, files in manifest["splits"].items():
        assert sorted(files) == sorted(f"{split}/{p.name}" for p in (out / split).glob("*.json"))
    assert len(manifest["splits"]["train"]) == 3
    assert json.loads((out / "manifest.json").read_text()) == manifest


def test_corpus_regeneration_is_byte_identical(tiny_config, corpus, tmp_path):
    synth_corpus(tiny_config, 3, 1, tmp_path, 11)
    assert _tree_bytes(tmp_path) == _tree_bytes(corpus[0])


def test_checkpoint_round_trip(ckpt, tmp_path, tiny_config):
    ckpt.save(tmp_path)
    back = Checkpoint.load(tmp_path)
    assert back.config.config_hash() == tiny_config.config_hash()
    assert (back.stage1_done, back.stage2_done, back.seed) == (ckpt.stage1_done, ckpt.stage2_done, ckpt.seed)
    for name in ckpt.init:
        assert np.array_equal(back.init[name].data, ckpt.init[name].data)
    for name in ckpt.disp:
        assert np.array_equal(back.disp[name].data, ckpt.disp[name].data)


def test_infer_record_outputs(ckpt, corpus):
    rec = load_split(corpus[0], "test")[0]
    pred = infer_record(rec, ckpt, 0)
    T = rec.n_frames
    assert pred.pred_joints.shape == (T, 21, 3)
    assert pred.init_joints.shape == (T, 21, 3)
    assert pred.fit_theta.shape == (T, 15, 3) and pred.fit_beta.shape == (10,)
    assert pred.gt_joints is None and pred.gt_theta is None
    assert pred.provenance["displacement"] and pred.provenance["fitted"]


def test_infer_equivariant_with_fit(ckpt, corpus, rng):
    rec = load_split(corpus[0], "train")[1]
    R, t = random_rotation(rng), rng.normal(size=3)
    a = infer_record(rec, ckpt, 5)
    b = infer_record(rec.transformed(R, t), ckpt, 5)
    np.testing.assert_allclose(a.pred_joints @ R.T + t, b.pred_joints, atol=1e-6)
    np.testing.assert_allclose(a.fit_joints @ R.T + t, b.fit_joints, atol=1e-6)


def test_infer_warns_on_config_mismatch(ckpt, corpus, tiny_config):
    rec = load_split(corpus[0], "test")[0]
    other = tiny_config.replace(fit={"iters": 3})
    with pytest.warns(ConfigMismatch):
        infer_record(rec, ckpt, 0, fit=False, config=other)


def test_evaluate_perfect_prediction(corpus, tiny_config):
    gt = load_split(corpus[0], "train")[0]
    pred = gt.without_outputs()
    pred.pred_joints = gt.gt_joints.copy()
    pred.fit_beta, pred.fit_theta = gt.gt_beta.copy(), gt.gt_theta.copy()
    report = evaluate(pred, gt, tiny_config)
    assert tuple(report) == REPORT_KEYS
    assert report["mpjpe_mm"] == 0.0
    assert report["ciou_pct"] == pytest.approx(100.0)
    assert set(report["pd_mm"]) == {"mean", "max"} and set(report["iv_cm3"]) == {"mean", "max"}
    assert len(report["per_frame"]["mpjpe_mm"]) == gt.n_frames


def test_evaluate_rejects_length_mismatch(corpus):
    gt = load_split(corpus[0], "train")[0]
    with pytest.raises(LengthMismatch):
        evaluate(_truncate(gt), gt)


def _truncate(rec):
    from gears.sensors import HandTrajectory, ObjectTrajectory

    out = rec.without_outputs()
    T = rec.n_frames - 1
    h, o = rec.hand_trajectory, rec.object_trajectory
    out.hand_trajectory = HandTrajectory(h.translation[:T], h.rotation[:T], h.fps)
    out.object_trajectory = ObjectTrajectory(o.translation[:T], o.rotation[:T], o.fps)
    out.pred_joints = rec.gt_joints[:T]
    return out


def test_evaluate_warns_on_hash_mismatch(corpus):
    gt = load_split(corpus[0], "train")[0]
    pred = gt.without_outputs()
    pred.pred_joints = gt.gt_joints + 0.001
    pred.provenance = {"config_hash": "0" * 16}
    with pytest.warns(ConfigMismatch):
        report = evaluate(pred, gt)
    assert report["mpjpe_mm"] == pytest.approx(np.sqrt(3.0), rel=1e-9)


def test_aggregate_weights_by_frame():
    a = {"per_frame": {"mpjpe_mm": [1.0, 1.0, 1.0], "ciou_pct": [50.0, None, None]}}
    b = {"per_frame": {"mpjpe_mm": [5.0], "ciou_pct": [100.0]}}
    agg = aggregate_reports([a, b])
    assert agg["mpjpe_mm"] == 2.0
    assert agg["ciou_pct"] == 75.0


def test_write_prediction_and_export(ckpt, corpus, tmp_path):
    rec = load_split(corpus[0], "test")[0]
    pred = infer_record(rec, ckpt, 0)
    path = write_prediction(tmp_path / "p.json", pred)
    back = read_record(path)
    np.testing.assert_array_equal(back.pred_joints, pred.pred_joints)
    assert len(back.hand_mesh_paths) == rec.n_frames
    assert all((tmp_path / p).exists() for p in back.hand_mesh_paths)
    written = export_meshes(back, tmp_path / "meshes")
    assert len(written) == 2 * rec.n_frames


# ---------------------------------------------------------------------------
# command line


def test_cli_end_to_end(tiny_config, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    tiny_config.save(cfg)
    assert main(["synth", "--config", str(cfg), "--seed", "4", "--n-train", "2", "--n-test", "1",
                 "--out", str(tmp_path / "c")]) == 0
    assert main(["train", "--config", str(cfg), "--corpus", str(tmp_path / "c"), "--stage1-epochs", "1",
                 "--stage2-epochs", "1", "--out", str(tmp_path / "ck")]) == 0
    assert main(["train", "--resume", str(tmp_path / "ck"), "--corpus", str(tmp_path / "c"),
                 "--stage1-epochs", "2", "--stage2-epochs", "2", "--out", str(tmp_path / "ck")]) == 0
    lines = (tmp_path / "ck" / "train_log.jsonl").read_text().splitlines()
    assert [json.loads(x)["stage"] for x in lines] == ["init", "disp", "init", "disp"]
    assert Checkpoint.load(tmp_path / "ck").stage2_done == 2
    assert main(["infer", "--checkpoint", str(tmp_path / "ck"), "--record", str(tmp_path / "c" / "test"),
                 "--out", str(tmp_path / "pred")]) == 0
    capsys.readouterr()
    assert main(["eval", "--pred", str(tmp_path / "pred"), "--gt", str(tmp_path / "c" / "test"),
                 "--out", str(tmp_path / "report.json")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report == json.loads((tmp_path / "report.json").read_text())
    assert set(report) == set(REPORT_KEYS)
    assert main(["export", "--record", str(tmp_path / "pred"), "--out", str(tmp_path / "x")]) == 0
    assert any((tmp_path / "x").rglob("hand_0000.obj"))


def test_cli_invalid_input_exit_code(corpus, tmp_path, capsys):
    gt = load_split(corpus[0], "train")[0]
    write_record(tmp_path / "gt.json", gt)
    write_record(tmp_path / "pred.json", _truncate(gt))
    assert main(["eval", "--pred", str(tmp_path / "pred.json"), "--gt", str(tmp_path / "gt.json")]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["infer", "--checkpoint", str(tmp_path / "missing"), "--record", str(tmp_path / "gt.json"),
                 "--out", str(tmp_path / "o")]) == 2


def test_cli_eval_reports_hash_mismatch(corpus, tmp_path, capsys):
    gt = load_split(corpus[0], "train")[0]
    pred = gt.without_outputs()
    pred.pred_joints = gt.gt_joints.copy()
    pred.provenance = {"config_hash": "f" * 16}
    write_record(tmp_path / "gt.json", gt)
    write_record(tmp_path / "pred.json", pred)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert main(["eval", "--pred", str(tmp_path / "pred.json"), "--gt", str(tmp_path / "gt.json")]) == 0
    assert "config hash mismatch" in capsys.readouterr().err
