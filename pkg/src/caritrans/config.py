"""Hyperparameters and training configuration, with JSON round-tripping."""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .losses import GAN_LOSSES


@dataclass
class HyperParams:
    alpha1: float = 0.5
    alpha2: float = 0.5
    alpha3: float = 1.0
    alpha4: float = 1.0
    lambda_r: float = 10.0
    lambda_K: float = 1.0
    lambda_a: float = 1.0
    lambda_c: float = 1.0
    lambda_ctr: float = 0.5
    lambda_i: float = 8.0
    mg: float = 2.0
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    steps_stage1: int = 100_000
    steps_stage2: int = 50_000

    def __post_init__(self):
        weights = (*self.alphas, self.lambda_r, self.lambda_K, self.lambda_a,
                   self.lambda_c, self.lambda_ctr, self.lambda_i)
        if any(w < 0 for w in weights):
            raise ValueError("loss weights must be non-negative")
        if self.mg <= 0:
            raise ValueError("margin mg must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.steps_stage1 < 0 or self.steps_stage2 < 0:
            raise ValueError("step counts must be non-negative")

    @property
    def alphas(self):
        return (self.alpha1, self.alpha2, self.alpha3, self.alpha4)

    @property
    def betas(self):
        return (self.beta1, self.beta2)


@dataclass
class TrainConfig:
    hp: HyperParams = field(default_factory=HyperParams)
    data_root: str = "data"
    image_size: int = 256
    batch_size: int = 1
    seed: int = 0
    checkpoint_dir: str = "checkpoints"
    log_every: int = 100
    save_every: int = 10_000
    gan_loss: str = "nonsaturating"
    control_grid_k: int = 4
    d_max: float = 0.1
    tps_reg: float = 1e-6
    latent_channels: int = 256
    disc_base: int = 64
    disc_steps: int = 1
    extractor_weights: str | None = None
    content_layer: str = "relu3_3"
    style_layer: str = "relu2_2"
    holdout: int = 0
    device: str = "cpu"

    def __post_init__(self):
        if isinstance(self.hp, dict):
            self.hp = HyperParams(**self.hp)
        if self.image_size < 16 or self.image_size % 4:
            raise ValueError("image_size must be >= 16 and divisible by 4")
        if self.batch_size < 1 or self.log_every < 1 or self.save_every < 1 or self.disc_steps < 1:
            raise ValueError("batch_size, log_every, save_every and disc_steps must be >= 1")
        if self.gan_loss not in GAN_LOSSES:
            raise ValueError(f"gan_loss must be one of {GAN_LOSSES}")
        if self.control_grid_k < 1:
            raise ValueError("control_grid_k must be >= 1")
        if self.d_max <= 0 or self.tps_reg < 0:
            raise ValueError("d_max must be positive and tps_reg non-negative")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "hp" in data:
            hp_known = {f.name for f in dataclasses.fields(HyperParams)}
            bad = set(data["hp"]) - hp_known
            if bad:
                raise ValueError(f"unknown hp keys: {sorted(bad)}")
            data["hp"] = HyperParams(**data["hp"])
        return cls(**data)

    def replace(self, **changes):
        hp_changes = changes.pop("hp", None)
        cfg = dataclasses.replace(self, **changes)
        cfg.hp = dataclasses.replace(cfg.hp, **(hp_changes or {}))
        return cfg


def load_defaults():
    return TrainConfig()


PRESETS = {
    "desk": dict(
        image_size=64,
        latent_channels=64,
        disc_base=16,
        control_grid_k=4,
        hp=dict(steps_stage1=2000, steps_stage2=1000),
    ),
}


def apply_preset(cfg, name):
    try:
        preset = dict(PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return cfg.replace(**{**preset, "hp": dict(preset.get("hp", {}))})


def save_config(cfg, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


def load_config(path, base=None):
    """Read a JSON config; keys present override ``base`` (defaults if None)."""
    data = json.loads(Path(path).read_text())
    merged = (base or load_defaults()).to_dict()
    hp = {**merged["hp"], **data.pop("hp", {})}
    merged.update(data)
    merged["hp"] = hp
    return TrainConfig.from_dict(merged)
