"""Joint initialization and joint displacement networks and their training loop."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .config import DispNetConfig, InitNetConfig, PipelineConfig
from .features import DispInputs, InitInputs, disp_inputs, from_wrist_frame, init_inputs, object_surface
from .hand import N_JOINTS, forward_kinematics_batch, load_skeleton
from .nn import ParamStore, Tensor
from .records import SequenceRecord
from .sensors import HashGrid


class EmptyDataset(ValueError):
    pass


# ---------------------------------------------------------------------------
# parameters


def _mlp_params(store: ParamStore, prefix: str, widths, d_in: int, rng) -> None:
    for i, w in enumerate(widths):
        store.add_uniform(f"{prefix}.{i}.W", (d_in, w), d_in, rng)
        store.add_uniform(f"{prefix}.{i}.b", (w,), d_in, rng)
        d_in = w


def _mlp(store: ParamStore, prefix: str, n_layers: int, x, last_relu: bool = True):
    for i in range(n_layers):
        x = nn.linear(x, store[f"{prefix}.{i}.W"], store[f"{prefix}.{i}.b"])
        if last_relu or i < n_layers - 1:
            x = nn.relu(x)
    return x


def init_net_params(cfg: InitNetConfig, window_k: int, seed: int) -> ParamStore:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 101]))
    store = ParamStore()
    _mlp_params(store, "point", cfg.point_widths, 3, rng)
    d_in = cfg.point_widths[-1] + (2 * window_k + 1) * 12
    _mlp_params(store, "mlp", tuple(cfg.mlp_widths) + (N_JOINTS * 3,), d_in, rng)
    return store


def disp_net_params(cfg: DispNetConfig, seed: int) -> ParamStore:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 202]))
    store = ParamStore()
    _mlp_params(store, "feat", cfg.feat_widths, 6, rng)
    _mlp_params(store, "embed", cfg.embed_widths, 3, rng)
    d = cfg.feat_widths[-1] + cfg.embed_widths[-1]
    for i, kind in enumerate(cfg.blocks):
        if cfg.attention:
            for name in ("q", "k", "v"):
                store.add_uniform(f"block{i}.W{name}", (d, d), d, rng)
        if kind == "T":
            store.add(f"block{i}.pos", rng.normal(0.0, 0.02, size=(cfg.max_frames, d)))
        _mlp_params(store, f"block{i}.ffn", (2 * d, d), d, rng)
    store.add_uniform("head.W", (d, 3), d, rng)
    store.add_uniform("head.b", (3,), d, rng)
    return store


def d_model(cfg: DispNetConfig) -> int:
    return cfg.feat_widths[-1] + cfg.embed_widths[-1]


# ---------------------------------------------------------------------------
# forward passes


def init_forward(store: ParamStore, cfg: InitNetConfig, windows, clouds) -> Tensor:
    """Wrist-frame joints (..., 21, 3) from trajectory windows (..., 2k+1, 12) and clouds (..., N, 3)."""
    clouds = np.asarray(clouds, dtype=np.float64)
    windows = np.asarray(windows, dtype=np.float64)
    if clouds.shape[-1] != 3 or windows.shape[-1] != 12 or clouds.shape[:-2] != windows.shape[:-2]:
        raise nn.ShapeMismatch(f"init inputs {windows.shape} / {clouds.shape}")
    batch = clouds.shape[:-2]
    h = _mlp(store, "point", len(cfg.point_widths), clouds * cfg.input_scale)
    g = nn.maxpool_set(h)
    win = windows.copy()
    win[..., :3] *= cfg.input_scale
    x = nn.concat([g, win.reshape(batch + (-1,))], axis=-1)
    out = _mlp(store, "mlp", len(cfg.mlp_widths) + 1, x, last_relu=False)
    rest = load_skeleton().rest_joints
    return nn.add(rest, nn.reshape(out, batch + (N_JOINTS, 3)) * cfg.output_scale)


def point_features(store: ParamStore, cfg: DispNetConfig, feats, mask) -> Tensor:
    """Shared per-joint PointNet: (..., M, 6) -> (..., F); empty sets give zeros.

    Only valid rows go through the MLP; the pooled result equals a masked
    max-pool over the padded sets.
    """
    feats = np.asarray(feats, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    lead = feats.shape[:-2]
    n_sets = int(np.prod(lead))
    flat_mask = mask.reshape(n_sets, -1)
    seg, slot = np.nonzero(flat_mask)
    rows = feats.reshape(n_sets, -1, 6)[seg, slot].copy()
    rows[:, :3] *= cfg.point_scale
    h = _mlp(store, "feat", len(cfg.feat_widths), rows)
    pooled = nn.segment_max(h, seg, n_sets)
    return nn.reshape(pooled, lead + (cfg.feat_widths[-1],))


def disp_forward(store: ParamStore, cfg: DispNetConfig, inputs: DispInputs, local: bool = False) -> Tensor:
    """Displacements (T, 21, 3) in the global frame, or in joint frames if ``local``."""
    T = inputs.feats.shape[0]
    if inputs.feats.shape[1:3] != inputs.mask.shape[1:] or inputs.embed.shape != (T, N_JOINTS, 3):
        raise nn.ShapeMismatch("displacement inputs disagree in shape")
    if T > cfg.max_frames:
        raise nn.ShapeMismatch(f"sequence of {T} frames exceeds max_frames={cfg.max_frames}")
    f = point_features(store, cfg, inputs.feats, inputs.mask)
    e = _mlp(store, "embed", len(cfg.embed_widths), inputs.embed * cfg.embed_scale, last_relu=False)
    X = nn.concat([f, e], axis=-1)  # (T, 21, d)
    for i, kind in enumerate(cfg.blocks):
        seq = X if kind == "S" else nn.swapaxes(X, 0, 1)  # temporal: (21, T, d)
        if cfg.attention:
            q_in = seq
            if kind == "T":
                q_in = nn.add(seq, store[f"block{i}.pos"][:T])
            seq = nn.add(seq, nn.self_attention(q_in, store[f"block{i}.Wq"], store[f"block{i}.Wk"],
                                                store[f"block{i}.Wv"]))
        seq = nn.add(seq, _mlp(store, f"block{i}.ffn", 2, seq, last_relu=False))
        X = seq if kind == "S" else nn.swapaxes(seq, 0, 1)
    d_local = nn.linear(X, store["head.W"], store["head.b"]) * cfg.output_scale
    if local:
        return d_local
    # d_k = G_k d_local_k
    rots = np.asarray(inputs.rotations, dtype=np.float64)
    return nn.reshape(nn.matmul(rots, nn.reshape(d_local, (T, N_JOINTS, 3, 1))), (T, N_JOINTS, 3))


# ---------------------------------------------------------------------------
# losses


def loss_init(j_init, j_gt) -> Tensor:
    """Sum of squared joint errors divided by the joint count, averaged over leading axes."""
    d = nn.sub(j_init, j_gt)
    sq = nn.tsum(nn.mul(d, d), axis=(-2, -1))
    return nn.mean(sq) * (1.0 / N_JOINTS)


def loss_disp(j_init, d, j_gt) -> Tensor:
    """Mean over frames of the per-joint summed squared error of j_init + d."""
    return loss_init(nn.add(j_init, d), j_gt)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    init: ParamStore
    disp: ParamStore | None
    log: list = field(default_factory=list)
    stage1_done: int = 0
    stage2_done: int = 0

    def log_lines(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.log)


def predict_init(store: ParamStore, config: PipelineConfig, record: SequenceRecord, seed: int,
                 inputs: InitInputs | None = None) -> np.ndarray:
    """Global initial joints (T, 21, 3) for a record."""
    if inputs is None:
        inputs = init_inputs(record, config, seed)
    rel = init_forward(store, config.init_net, inputs.windows, inputs.clouds).data
    return from_wrist_frame(rel, record)


def _stage1(store: ParamStore, config: PipelineConfig, data: list[InitInputs], seed: int, epochs: int,
            log: list, start_epoch: int = 0) -> None:
    tc = config.train
    clouds = np.concatenate([d.clouds for d in data])
    windows = np.concatenate([d.windows for d in data])
    targets = np.concatenate([d.targets for d in data])
    n = len(clouds)
    for epoch in range(start_epoch, start_epoch + epochs):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1, epoch]))
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, tc.batch_frames):
            idx = order[s : s + tc.batch_frames]
            store.zero_grad()
            loss = loss_init(init_forward(store, config.init_net, windows[idx], clouds[idx]), targets[idx])
            loss.backward()
            store.adam_step(tc.lr_init)
            total += loss.item() * len(idx)
        log.append({"stage": "init", "epoch": epoch, "loss": total / n})


def _pose_offset(rec: SequenceRecord, delta: np.ndarray) -> np.ndarray:
    """Joint displacement caused by adding ``delta`` to every frame's ground-truth angles."""
    h = rec.hand_trajectory
    beta = rec.gt_beta if rec.gt_beta is not None else np.zeros(10)
    j0, _ = forward_kinematics_batch(beta, rec.gt_theta, h.rotation, h.translation)
    j1, _ = forward_kinematics_batch(beta, rec.gt_theta + delta, h.rotation, h.translation)
    return j1 - j0


def stage2_inputs(records: list[SequenceRecord], init_store: ParamStore, config: PipelineConfig, seed: int,
                  init_data: list[InitInputs] | None = None) -> list[tuple[DispInputs, np.ndarray]]:
    """Sensor inputs around frozen initial predictions, plus jittered copies."""
    tc = config.train
    items = []
    for i, rec in enumerate(records):
        base = predict_init(init_store, config, rec, seed + i, None if init_data is None else init_data[i])
        surface = grid = None
        if config.sensor.radius > 0:
            surface = object_surface(rec.object_mesh, config, seed + i)
            grid = HashGrid(surface.points, config.sensor.radius)
        for c in range(1 + tc.stage2_copies):
            joints = base
            if c > 0:
                rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2, i, c]))
                joints = base + rng.normal(0.0, tc.stage2_noise, size=base.shape)
                if tc.stage2_pose_noise > 0 and rec.gt_theta is not None:
                    joints = joints + _pose_offset(rec, rng.normal(0.0, tc.stage2_pose_noise, size=(15, 3)))
            items.append((disp_inputs(rec, joints, config, seed + i, surface=surface, grid=grid), rec.gt_joints))
    return items


def _stage2(store: ParamStore, config: PipelineConfig, items, seed: int, epochs: int, log: list,
            start_epoch: int = 0) -> None:
    tc = config.train
    for epoch in range(start_epoch, start_epoch + epochs):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 3, epoch]))
        order = rng.permutation(len(items))
        total = 0.0
        for s in range(0, len(order), tc.batch_sequences):
            chunk = order[s : s + tc.batch_sequences]
            store.zero_grad()
            losses = []
            for j in chunk:
                inputs, gt = items[j]
                d = disp_forward(store, config.disp_net, inputs)
                losses.append(loss_disp(inputs.init_joints, d, gt))
            loss = losses[0] if len(losses) == 1 else nn.mean(nn.stack(losses))
            loss.backward()
            store.adam_step(tc.lr_disp)
            total += loss.item() * len(chunk)
        log.append({"stage": "disp", "epoch": epoch, "loss": total / len(items)})


def train(records: list[SequenceRecord], config: PipelineConfig, seed: int,
          init_store: ParamStore | None = None, stage1_done: int = 0,
          disp_store: ParamStore | None = None, stage2_done: int = 0,
          stage1_epochs: int | None = None, stage2_epochs: int | None = None,
          displacement: bool = True) -> TrainResult:
    """Stage 1 fits the init net on single frames; stage 2 freezes it and fits the displacement net.

    Training runs up to ``stage1_epochs`` / ``stage2_epochs`` in total.  Epoch
    shuffles are keyed by epoch index, so continuing from stores saved after
    ``stage1_done`` / ``stage2_done`` epochs reproduces an uninterrupted run.
    A shared, already trained init net is reused by passing it with
    ``stage1_done`` equal to the epoch budget.
    """
    records = [r for r in records if r.gt_joints is not None]
    if not records:
        raise EmptyDataset("training needs at least one record with ground-truth joints")
    tc = config.train
    e1 = tc.stage1_epochs if stage1_epochs is None else stage1_epochs
    e2 = tc.stage2_epochs if stage2_epochs is None else stage2_epochs
    log: list = []
    init_data = [init_inputs(r, config, seed + i) for i, r in enumerate(records)]
    if init_store is None:
        init_store = init_net_params(config.init_net, config.sensor.window_k, seed)
        stage1_done = 0
    if stage1_done < e1:
        _stage1(init_store, config, init_data, seed, e1 - stage1_done, log, stage1_done)
    if not displacement:
        return TrainResult(init_store, None, log, max(e1, stage1_done), 0)
    if disp_store is None:
        disp_store = disp_net_params(config.disp_net, seed)
        stage2_done = 0
    if stage2_done < e2:
        items = stage2_inputs(records, init_store, config, seed, init_data)
        _stage2(disp_store, config, items, seed, e2 - stage2_done, log, stage2_done)
    return TrainResult(init_store, disp_store, log, max(e1, stage1_done), max(e2, stage2_done))


def predict(init_store: ParamStore, disp_store: ParamStore | None, config: PipelineConfig,
            record: SequenceRecord, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(initial joints, refined joints), both global (T, 21, 3)."""
    j_init = predict_init(init_store, config, record, seed)
    if disp_store is None:
        return j_init, j_init.copy()
    inputs = disp_inputs(record, j_init, config, seed)
    d = disp_forward(disp_store, config.disp_net, inputs).data
    return j_init, j_init + d
