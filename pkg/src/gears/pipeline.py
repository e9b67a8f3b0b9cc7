"""End-to-end workflows: synthesize a corpus, train, infer, evaluate and export."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig
from .fitting import fit_sequence
from .hand import hand_surface_faces, hand_surface_vertices
from .mesh import TriMesh, write_obj
from .metrics import (
    contact_iou,
    intersection_volume,
    penetration_depth,
    per_frame_mpjpe,
)
from .networks import TrainResult, predict, train
from .nn import ParamStore
from .records import LengthMismatch, SequenceRecord, read_record, write_record
from .synthesis import CorpusStats, GraspNotFound, sequence_seed, synthesize_sequence


class ConfigMismatch(UserWarning):
    pass


REPORT_KEYS = ("mpjpe_mm", "pd_mm", "iv_cm3", "ciou_pct", "per_frame")


# ---------------------------------------------------------------------------
# corpus


def synth_corpus(config: PipelineConfig, n_train: int, n_test: int, out_dir: str | Path, seed: int) -> dict:
    """Write ``train/`` and ``test/`` records plus ``manifest.json``; returns the manifest."""
    out = Path(out_dir)
    stats = CorpusStats()
    manifest = {"seed": int(seed), "config_hash": config.config_hash(), "version": __version__, "splits": {}}
    for split, n in (("train", n_train), ("test", n_test)):
        files = []
        for i in range(n):
            s = sequence_seed(seed, split, i)
            try:
                seq = synthesize_sequence(config, s, stats)
            except GraspNotFound:
                continue
            name = f"seq_{i:04d}"
            rec = seq.to_record(
                {"seed": int(s), "master_seed": int(seed), "split": split, "index": i,
                 "config_hash": config.config_hash(), "object": {"kind": seq.obj.kind, "size": list(seq.obj.size)}},
                mesh_path=f"{name}.obj",
            )
            write_record(out / split / f"{name}.json", rec)
            files.append(f"{split}/{name}.json")
        manifest["splits"][split] = files
    manifest["stats"] = stats.as_dict()
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def load_split(corpus_dir: str | Path, split: str) -> list[SequenceRecord]:
    corpus = Path(corpus_dir)
    manifest = json.loads((corpus / "manifest.json").read_text())
    return [read_record(corpus / f) for f in manifest["splits"].get(split, [])]


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    config: PipelineConfig
    init: ParamStore
    disp: ParamStore | None
    stage1_done: int = 0
    stage2_done: int = 0
    seed: int = 0

    def save(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        meta = {"config_hash": self.config.config_hash(), "seed": int(self.seed),
                "stage1_done": self.stage1_done, "stage2_done": self.stage2_done}
        self.init.save(out / "init", meta)
        if self.disp is not None:
            self.disp.save(out / "disp", meta)
        self.config.save(out / "config.json")
        (out / "checkpoint.json").write_text(json.dumps({**meta, "has_disp": self.disp is not None},
                                                        indent=1, sort_keys=True) + "\n")
        return out

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        path = Path(path)
        meta = json.loads((path / "checkpoint.json").read_text())
        config = PipelineConfig.load(path / "config.json")
        init, _ = ParamStore.load(path / "init")
        disp = ParamStore.load(path / "disp")[0] if meta.get("has_disp") else None
        return cls(config, init, disp, int(meta["stage1_done"]), int(meta["stage2_done"]), int(meta["seed"]))


def train_corpus(config: PipelineConfig, records: list[SequenceRecord], seed: int,
                 resume: Checkpoint | None = None, displacement: bool = True,
                 stage1_epochs: int | None = None, stage2_epochs: int | None = None) -> tuple[Checkpoint, TrainResult]:
    kwargs = {}
    if resume is not None:
        if resume.config.config_hash() != config.config_hash():
            warnings.warn("resuming with a config that differs from the checkpoint", ConfigMismatch, stacklevel=2)
        kwargs = {"init_store": resume.init, "stage1_done": resume.stage1_done,
                  "disp_store": resume.disp, "stage2_done": resume.stage2_done}
    result = train(records, config, seed, displacement=displacement, stage1_epochs=stage1_epochs,
                   stage2_epochs=stage2_epochs, **kwargs)
    ckpt = Checkpoint(config, result.init, result.disp, result.stage1_done, result.stage2_done, seed)
    return ckpt, result


# ---------------------------------------------------------------------------
# inference


def hand_meshes(beta: np.ndarray, theta: np.ndarray, record: SequenceRecord) -> list[TriMesh]:
    ht = record.hand_trajectory
    verts = hand_surface_vertices(beta, theta, ht.rotation, ht.translation)
    faces = hand_surface_faces()
    return [TriMesh(v, faces) for v in verts]


def infer_record(record: SequenceRecord, ckpt: Checkpoint, seed: int, displacement: bool = True,
                 fit: bool = True, config: PipelineConfig | None = None) -> SequenceRecord:
    """Joints, refined joints and a fitted hand for one record (ground truth dropped)."""
    config = config or ckpt.config
    if config.config_hash() != ckpt.config.config_hash():
        warnings.warn(f"config hash {config.config_hash()} differs from checkpoint {ckpt.config.config_hash()}",
                      ConfigMismatch, stacklevel=2)
    disp = ckpt.disp if displacement else None
    j_init, j_pred = predict(ckpt.init, disp, config, record, seed)
    out = record.without_outputs()
    out.init_joints = j_init
    out.pred_joints = j_pred
    if fit:
        ht = record.hand_trajectory
        res = fit_sequence(j_pred, ht.rotation, ht.translation, config.fit, fps=record.fps)
        out.fit_beta, out.fit_theta, out.fit_joints = res.beta, res.theta, res.joints
    out.provenance = {
        "source": dict(record.provenance),
        "config_hash": config.config_hash(),
        "checkpoint_config_hash": ckpt.config.config_hash(),
        "seed": int(seed),
        "displacement": bool(disp is not None),
        "fitted": bool(fit),
    }
    out.validate()
    return out


def write_prediction(path: str | Path, record: SequenceRecord, write_hands: bool = True) -> Path:
    """Write a predicted record; per-frame hand OBJs go to ``<name>_hands/``."""
    path = Path(path).with_suffix(".json")
    if write_hands and record.fit_theta is not None:
        folder = path.parent / f"{path.stem}_hands"
        folder.mkdir(parents=True, exist_ok=True)
        names = []
        for t, mesh in enumerate(hand_meshes(record.fit_beta, record.fit_theta, record)):
            write_obj(folder / f"hand_{t:04d}.obj", mesh)
            names.append(f"{folder.name}/hand_{t:04d}.obj")
        record.hand_mesh_paths = names
    return write_record(path, record)


# ---------------------------------------------------------------------------
# evaluation


def _stat(values: list) -> dict:
    arr = np.array(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "max": float(arr.max())}


def evaluate(pred: SequenceRecord, gt: SequenceRecord, config: PipelineConfig | None = None) -> dict:
    """Metric report for a predicted record against its ground truth."""
    config = config or PipelineConfig()
    if pred.n_frames != gt.n_frames:
        raise LengthMismatch(f"prediction has {pred.n_frames} frames, ground truth {gt.n_frames}")
    if gt.gt_joints is None:
        raise LengthMismatch("ground-truth record has no joints")
    ph = pred.provenance.get("config_hash")
    gh = gt.provenance.get("config_hash")
    if ph and gh and ph != gh:
        warnings.warn(f"config hash mismatch: prediction {ph} vs ground truth {gh}", ConfigMismatch, stacklevel=2)
    joints = pred.final_joints() if pred.final_joints() is not None else pred.gt_joints
    if joints is None:
        raise LengthMismatch("prediction record has no joints")
    per_mpjpe = per_frame_mpjpe(joints, gt.gt_joints)
    report = {"mpjpe_mm": float(per_mpjpe.mean()), "pd_mm": None, "iv_cm3": None, "ciou_pct": None,
              "per_frame": {"mpjpe_mm": per_mpjpe.tolist()}}
    pred_beta, pred_theta = pred.fit_beta, pred.fit_theta
    if pred_theta is None and pred.gt_theta is not None:
        pred_beta, pred_theta = pred.gt_beta, pred.gt_theta
    if pred_theta is None:
        return report
    ot = pred.object_trajectory
    objects = [pred.object_mesh.transformed(ot.rotation[t], ot.translation[t]) for t in range(pred.n_frames)]
    p_hands = hand_meshes(pred_beta, pred_theta, pred)
    mc = config.metrics
    pd = [penetration_depth(h, o) for h, o in zip(p_hands, objects)]
    iv = [intersection_volume(h, o, mc.voxel_mm, frame=(ot.rotation[t], ot.translation[t]))
          for t, (h, o) in enumerate(zip(p_hands, objects))]
    report["pd_mm"] = _stat(pd)
    report["iv_cm3"] = _stat(iv)
    report["per_frame"]["pd_mm"] = pd
    report["per_frame"]["iv_cm3"] = iv
    if gt.gt_theta is not None and gt.gt_beta is not None:
        g_hands = hand_meshes(gt.gt_beta, gt.gt_theta, gt)
        mean, frames = contact_iou(p_hands, g_hands, objects, mc.contact_threshold)
        report["ciou_pct"] = mean
        report["per_frame"]["ciou_pct"] = frames
    return report


def aggregate_reports(reports: list[dict]) -> dict:
    """Frame-weighted means across sequences (C-IoU over frames with contact)."""
    def frames(key):
        out = []
        for r in reports:
            out.extend(v for v in r["per_frame"].get(key, []) if v is not None)
        return out

    mp = frames("mpjpe_mm")
    pd, iv, ci = frames("pd_mm"), frames("iv_cm3"), frames("ciou_pct")
    return {
        "mpjpe_mm": float(np.mean(mp)) if mp else None,
        "pd_mm": _stat(pd) if pd else None,
        "iv_cm3": _stat(iv) if iv else None,
        "ciou_pct": float(np.mean(ci)) if ci else None,
        "per_frame": {"sequences": len(reports)},
    }


# ---------------------------------------------------------------------------
# export


def export_meshes(record: SequenceRecord, out_dir: str | Path, source: str = "auto") -> list[Path]:
    """Per-frame posed object and hand OBJs for viewing in any mesh tool."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if source == "auto":
        source = "fit" if record.fit_theta is not None else "gt"
    beta, theta = (record.fit_beta, record.fit_theta) if source == "fit" else (record.gt_beta, record.gt_theta)
    written = []
    ot = record.object_trajectory
    hands = hand_meshes(beta, theta, record) if theta is not None else [None] * record.n_frames
    for t in range(record.n_frames):
        obj = record.object_mesh.transformed(ot.rotation[t], ot.translation[t])
        p = out / f"object_{t:04d}.obj"
        write_obj(p, obj)
        written.append(p)
        if hands[t] is not None:
            p = out / f"hand_{t:04d}.obj"
            write_obj(p, hands[t])
            written.append(p)
    return written
