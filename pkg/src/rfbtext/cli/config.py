"""Training configuration, YAML round-trip, and the LR decay schedule."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import yaml

from ..network import DetectorConfig


@dataclass
class TrainConfig:
    train_images: str = ""
    train_gts: str = ""
    val_images: str | None = None
    val_gts: str | None = None

    crop_size: int = 512
    batch_size: int = 16
    steps: int = 100000
    seed: int = 0

    # adaptive-subgradient optimizer with stepped exponential decay
    initial_lr: float = 1e-3
    decay_factor: float = 0.1
    decay_every: int = 27300
    lr_floor: float = 1e-5

    checkpoint_every: int = 1000
    eval_every: int = 1000
    patience: int = 5  # early stop after this many eval rounds without F gain

    shrink: float = 0.3
    max_ingest_side: int = 2400
    score_threshold: float = 0.8
    nms_iou_threshold: float = 0.2
    use_native_nms: bool | None = None  # None = native when built; False forces reference

    model: DetectorConfig = field(default_factory=DetectorConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = DetectorConfig.from_dict(self.model)
        if min(self.crop_size, self.batch_size, self.steps, self.decay_every) <= 0:
            raise ValueError("sizes and cadences must be positive")
        if self.lr_floor > self.initial_lr:
            raise ValueError("lr_floor must not exceed initial_lr")
        if self.crop_size % 32:
            raise ValueError("crop_size must be a multiple of 32")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    @classmethod
    def from_yaml(cls, text: str) -> "TrainConfig":
        data = yaml.safe_load(text) or {}
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_yaml(fh.read())


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    """Stepped exponential decay, floored: decays by decay_factor every
    decay_every minibatches, never below lr_floor."""
    if step < 0:
        raise ValueError("step must be >= 0")
    return max(cfg.initial_lr * cfg.decay_factor ** (step // cfg.decay_every), cfg.lr_floor)
