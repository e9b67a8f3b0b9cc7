"""Pipeline configuration: every module default in one serializable tree."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class SensorConfig:
    cube_side: float = 0.18
    crop_points: int = 2000
    window_k: int = 10
    window_seconds: float = 1.0
    radius: float = 0.025
    max_points: int = 300
    # object surface samples for the joint sensors, per cm^2 of area
    surface_density: float = 4.0
    surface_min: int = 500
    surface_max: int = 20000


@dataclass
class InitNetConfig:
    point_widths: tuple = (64, 128, 256)
    mlp_widths: tuple = (256, 128)
    input_scale: float = 10.0
    output_scale: float = 0.1


@dataclass
class DispNetConfig:
    feat_widths: tuple = (32, 64, 64)
    embed_widths: tuple = (64, 64)
    blocks: tuple = ("S", "T", "S", "T")
    attention: bool = True
    max_frames: int = 128
    point_scale: float = 40.0
    embed_scale: float = 10.0
    output_scale: float = 0.01


@dataclass
class TrainConfig:
    stage1_epochs: int = 200
    stage2_epochs: int = 200
    lr_init: float = 1e-3
    lr_disp: float = 1e-3
    batch_frames: int = 64
    batch_sequences: int = 1
    # stage-2 augmentation: extra copies of each sequence with perturbed initial joints
    stage2_copies: int = 2
    stage2_noise: float = 0.002
    # std (rad) of a per-copy joint-angle offset held over the whole sequence; needs gt pose
    stage2_pose_noise: float = 0.1


@dataclass
class FitConfig:
    w_beta: float = 1e-3
    w_pose: float = 1e-4
    w_vel: float = 1e-2
    w_acc: float = 1e-3
    iters: int = 400
    lr: float = 0.05


@dataclass
class SynthConfig:
    frames: int = 60
    fps: float = 30.0
    sigma_pose: float = 0.1
    sigma_rot: float = 0.15
    approach_speed: float = 0.004
    beta_sigma: float = 0.5
    iv_threshold_cm3: float = 4.0
    iv_voxel_mm: float = 2.0
    object_kinds: tuple = ("box", "sphere", "cylinder", "capsule")
    object_size: tuple = (0.05, 0.11)
    object_spacing: float = 0.006
    contact_tol: float = 0.002
    grasp_retries: int = 50
    max_attempts_per_sequence: int = 20


@dataclass
class MetricsConfig:
    contact_threshold: float = 0.002
    voxel_mm: float = 2.0


@dataclass
class PipelineConfig:
    seed: int = 0
    sensor: SensorConfig = field(default_factory=SensorConfig)
    init_net: InitNetConfig = field(default_factory=InitNetConfig)
    disp_net: DispNetConfig = field(default_factory=DispNetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def validate(self) -> "PipelineConfig":
        s = self.sensor
        if not (s.cube_side > 0 and s.crop_points > 0 and s.window_k >= 1 and s.window_seconds > 0):
            raise ValueError("sensor sizes must be positive")
        if s.radius < 0 or s.radius >= s.cube_side:
            raise ValueError("sensor radius must lie in [0, cube_side)")
        if s.max_points < 1:
            raise ValueError("max_points must be >= 1")
        for widths in (self.init_net.point_widths, self.init_net.mlp_widths, self.disp_net.feat_widths,
                       self.disp_net.embed_widths):
            if not widths or any(int(w) <= 0 for w in widths):
                raise ValueError("network widths must be positive")
        if any(b not in ("S", "T") for b in self.disp_net.blocks):
            raise ValueError("blocks must be 'S' or 'T'")
        if self.synth.frames < 2 or self.synth.fps <= 0:
            raise ValueError("synthetic sequences need >= 2 frames and positive fps")
        if self.fit.iters < 0 or self.fit.lr <= 0:
            raise ValueError("fitting needs iters >= 0 and lr > 0")
        return self

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in data:
                continue
            value = data[f.name]
            sub = f.default_factory if f.default_factory is not dataclasses.MISSING else None
            if sub is not None and isinstance(value, dict):
                kwargs[f.name] = _build(sub, value)
            else:
                kwargs[f.name] = value
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kwargs).validate()

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **sections) -> "PipelineConfig":
        """Copy with some sections updated, e.g. ``cfg.replace(sensor={"radius": 0.0})``."""
        data = self.to_dict()
        for name, updates in sections.items():
            if isinstance(updates, dict):
                data[name].update(updates)
            else:
                data[name] = updates
        return PipelineConfig.from_dict(data)


def _build(factory, values: dict):
    proto = factory()
    names = {f.name: f for f in dataclasses.fields(proto)}
    unknown = set(values) - set(names)
    if unknown:
        raise ValueError(f"unknown config keys for {type(proto).__name__}: {sorted(unknown)}")
    fixed = {}
    for k, v in values.items():
        default = getattr(proto, k)
        fixed[k] = tuple(v) if isinstance(default, tuple) else v
    return dataclasses.replace(proto, **fixed)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def desk_config(seed: int = 0) -> PipelineConfig:
    """Reduced sizes for single-core runs; sensor geometry constants are unchanged."""
    return PipelineConfig(
        seed=seed,
        sensor=SensorConfig(crop_points=128, max_points=32, surface_density=2.0, surface_min=400, surface_max=4000),
        init_net=InitNetConfig(point_widths=(32, 64, 128), mlp_widths=(128, 128)),
        disp_net=DispNetConfig(feat_widths=(16, 32, 32), embed_widths=(32, 32)),
        train=TrainConfig(stage1_epochs=150, stage2_epochs=150, lr_init=2e-3, lr_disp=1e-3, batch_frames=96),
        fit=FitConfig(iters=200),
    ).validate()
