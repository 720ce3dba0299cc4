"""Two-stage optimisation: style rendering first, then distortion prediction
on top of the frozen rendering networks."""

import copy
import hashlib
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .backbone import Backbone, StyleDiscriminators
from .config import TrainConfig
from .data import Domain, UnpairedSampler, load_corpus
from .dpm import DistortionModules, WarpDiscriminators, adv_warp_disc_loss, adv_warp_gen_loss, identity_loss
from .exceptions import NonFiniteLoss, StageMismatch
from .extractor import load_extractor
from .losses import (
    adv_style_disc_loss,
    adv_style_gen_loss,
    contrastive_style_from_features,
    feature_distance,
    kl_loss,
    reconstruction_loss,
)
from .tps import default_control_points, warp_image

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """Everything needed to resume training or run inference."""

    stage: int
    step: int
    config: TrainConfig
    backbone: Backbone
    style_discs: StyleDiscriminators
    dpms: DistortionModules | None = None
    warp_discs: WarpDiscriminators | None = None
    optimizer_states: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def control_points(self):
        return default_control_points(self.config.control_grid_k)

    def save(self, path):
        """Write a single-file archive atomically (temp file, then rename)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "format_version": self.format_version,
            "stage": self.stage,
            "step": self.step,
            "config": self.config.to_dict(),
            "backbone": self.backbone.state_dict(),
            "style_discs": self.style_discs.state_dict(),
            "dpms": None if self.dpms is None else self.dpms.state_dict(),
            "warp_discs": None if self.warp_discs is None else self.warp_discs.state_dict(),
            "optimizers": self.optimizer_states,
        }
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        os.close(fd)
        try:
            torch.save(payload, tmp)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        return path

    @classmethod
    def load(cls, path, device="cpu"):
        payload = torch.load(path, map_location=device, weights_only=True)
        version = payload.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format_version {version!r}")
        cfg = TrainConfig.from_dict(payload["config"])
        backbone, style_discs = build_stage1_models(cfg)
        backbone.load_state_dict(payload["backbone"])
        style_discs.load_state_dict(payload["style_discs"])
        dpms = warp_discs = None
        if payload["dpms"] is not None:
            dpms, warp_discs = build_stage2_models(cfg)
            dpms.load_state_dict(payload["dpms"])
            warp_discs.load_state_dict(payload["warp_discs"])
        ckpt = cls(
            stage=payload["stage"],
            step=payload["step"],
            config=cfg,
            backbone=backbone,
            style_discs=style_discs,
            dpms=dpms,
            warp_discs=warp_discs,
            optimizer_states=payload["optimizers"],
        )
        return ckpt.to(device)

    def to(self, device):
        for m in (self.backbone, self.style_discs, self.dpms, self.warp_discs):
            if m is not None:
                m.to(device)
        return self


def build_stage1_models(cfg):
    backbone = Backbone(cfg.latent_channels, cfg.image_size)
    discs = StyleDiscriminators(cfg.image_size, cfg.disc_base)
    return backbone, discs


def build_stage2_models(cfg):
    cps = default_control_points(cfg.control_grid_k)
    return DistortionModules(cps.n_free, cfg.d_max), WarpDiscriminators(cfg.image_size, cfg.disc_base)


def state_hash(module):
    """SHA-256 over a module's state dict, for bit-identity checks."""
    h = hashlib.sha256()
    for key, value in sorted(module.state_dict().items()):
        h.update(key.encode())
        h.update(value.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def _adam(params, hp):
    return torch.optim.Adam(params, lr=hp.lr, betas=hp.betas)


def build_sampler(cfg):
    index = load_corpus(cfg.data_root)
    index, _ = index.split_holdout(cfg.holdout)
    return UnpairedSampler.from_corpus(index, cfg.image_size)


class _StageTrainer:
    stage = 0
    # keeps the two stages' batch streams apart under the same seed
    seed_offset = 0

    def __init__(self, cfg, sampler=None):
        self.cfg = cfg
        self.device = torch.device(cfg.device)
        self.sampler = sampler if sampler is not None else build_sampler(cfg)
        self.history = []
        self.step = 0
        self.ckpt_dir = Path(cfg.checkpoint_dir)
        self.ckpt_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.ckpt_dir / f"stage{self.stage}.log"

    def batch(self):
        seed = (self.cfg.seed * 1_000_003 + self.seed_offset + self.step) % 2**63
        x, y = self.sampler.sample(self.cfg.batch_size, seed)
        return x.data.to(self.device), y.data.to(self.device)

    def _record(self, terms):
        values = {k: float(v.detach()) for k, v in terms.items()}
        if not all(math.isfinite(v) for v in values.values()):
            raise NonFiniteLoss(self.step, values)
        self.history.append(values)
        if self.step % self.cfg.log_every == 0:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                for name, v in values.items():
                    fh.write(f"{self.step}\t{name}\t{v:.8g}\n")
            logger.info("stage %d step %d %s", self.stage, self.step,
                        " ".join(f"{k}={v:.4g}" for k, v in values.items()))
        return values

    def run(self, steps=None):
        steps = self.total_steps if steps is None else steps
        for _ in range(steps):
            self.step += 1
            self.train_step()
            if self.step % self.cfg.save_every == 0:
                self.checkpoint().save(self.ckpt_dir / f"stage{self.stage}_step{self.step:07d}.pt")
        ckpt = self.checkpoint()
        ckpt.save(self.ckpt_dir / f"stage{self.stage}.pt")
        return ckpt


class Stage1Trainer(_StageTrainer):
    """Style rendering: encoders/decoders against the four style critics."""

    stage = 1
    seed_offset = 0

    def __init__(self, cfg, sampler=None, extractor=None):
        super().__init__(cfg, sampler)
        torch.manual_seed(cfg.seed)
        self.backbone, self.discs = build_stage1_models(cfg)
        self.backbone.to(self.device)
        self.discs.to(self.device)
        if extractor is None:
            extractor = load_extractor(
                cfg.extractor_weights, layers=(cfg.style_layer, cfg.content_layer), device=self.device
            )
        self.extractor = extractor
        self.opt_g = _adam(self.backbone.parameters(), cfg.hp)
        self.opt_d = _adam(self.discs.parameters(), cfg.hp)
        self.noise = torch.Generator(device=self.device).manual_seed(cfg.seed + 1)
        self.total_steps = cfg.hp.steps_stage1

    def generator_losses(self, x, y):
        cfg, hp, bb = self.cfg, self.cfg.hp, self.backbone
        code_a = bb.encode(x, Domain.PHOTO, sample=True, generator=self.noise)
        code_b = bb.encode(y, Domain.CARICATURE, sample=True, generator=self.noise)
        _, x_rec = bb.decode(code_a, Domain.PHOTO)
        x_r_low, x_r = bb.decode(code_a, Domain.CARICATURE)
        _, y_rec = bb.decode(code_b, Domain.CARICATURE)
        y_r_low, y_r = bb.decode(code_b, Domain.PHOTO)

        feats = self.extractor(torch.cat([x, x_r, y, y_r]))
        fx, fxr, fy, fyr = feats[cfg.content_layer].chunk(4)
        sx, sxr, sy, syr = feats[cfg.style_layer].chunk(4)

        terms = {
            "rec": reconstruction_loss(x_rec, x, y_rec, y),
            "kl": kl_loss(code_a.mean, code_b.mean),
            "adv_g": adv_style_gen_loss(self.discs, x_r_low, x_r, y_r_low, y_r, cfg.gan_loss),
            "cont": feature_distance(fx, fxr) + feature_distance(fy, fyr),
            "ctr": contrastive_style_from_features(sxr, syr, sx, sy, hp.alphas, hp.mg),
        }
        total = (
            hp.lambda_r * terms["rec"]
            + hp.lambda_K * terms["kl"]
            + hp.lambda_a * terms["adv_g"]
            + hp.lambda_c * terms["cont"]
            + hp.lambda_ctr * terms["ctr"]
        )
        fakes = tuple(t.detach() for t in (x_r_low, x_r, y_r_low, y_r))
        return total, terms, fakes

    def train_step(self):
        x, y = self.batch()
        self.backbone.train()

        self.discs.requires_grad_(False)
        total, terms, fakes = self.generator_losses(x, y)
        terms["gen_total"] = total
        if not torch.isfinite(total):
            raise NonFiniteLoss(self.step, {k: float(v.detach()) for k, v in terms.items()})
        self.opt_g.zero_grad(set_to_none=True)
        total.backward()
        self.opt_g.step()
        self.discs.requires_grad_(True)

        for _ in range(self.cfg.disc_steps):
            d_loss = self.cfg.hp.lambda_a * adv_style_disc_loss(self.discs, x, y, *fakes)
            self.opt_d.zero_grad(set_to_none=True)
            d_loss.backward()
            self.opt_d.step()
        terms["adv_d"] = d_loss.detach()
        return self._record({k: v.detach() for k, v in terms.items()})

    def checkpoint(self):
        return Checkpoint(
            stage=1,
            step=self.step,
            config=self.cfg,
            backbone=self.backbone,
            style_discs=self.discs,
            optimizer_states={"gen": self.opt_g.state_dict(), "style_disc": self.opt_d.state_dict()},
        )


class Stage2Trainer(_StageTrainer):
    """Distortion prediction with the rendering networks frozen."""

    stage = 2
    seed_offset = 500_000_000

    def __init__(self, cfg, stage1, sampler=None):
        if stage1.stage != 1:
            raise StageMismatch(f"stage 2 needs a stage-1 checkpoint, got stage {stage1.stage}")
        super().__init__(cfg, sampler)
        self.backbone = copy.deepcopy(stage1.backbone).to(self.device)
        self.backbone.requires_grad_(False)
        self.backbone.eval()
        self.style_discs = stage1.style_discs
        self.stage1_optim = stage1.optimizer_states
        torch.manual_seed(cfg.seed + 2)
        self.dpms, self.warp_discs = build_stage2_models(cfg)
        self.dpms.to(self.device)
        self.warp_discs.to(self.device)
        self.cps = default_control_points(cfg.control_grid_k)
        self.opt_dpm = _adam(self.dpms.parameters(), cfg.hp)
        self.opt_d = _adam(self.warp_discs.parameters(), cfg.hp)
        self.total_steps = cfg.hp.steps_stage2

    def train_step(self):
        cfg, hp = self.cfg, self.cfg.hp
        x, y = self.batch()
        with torch.no_grad():
            x_r = self.backbone.render(x, Domain.PHOTO)[1]
            y_r = self.backbone.render(y, Domain.CARICATURE)[1]

        self.warp_discs.requires_grad_(False)
        x_to_y = warp_image(x_r, self.cps, self.dpms.photo(x), reg=cfg.tps_reg)
        y_to_x = warp_image(y_r, self.cps, self.dpms.cari(y), reg=cfg.tps_reg)
        terms = {
            "adv_g": adv_warp_gen_loss(self.warp_discs, x_to_y, y_to_x, cfg.gan_loss),
            "idt": identity_loss(x_to_y, x, y_to_x, y),
        }
        total = hp.lambda_a * terms["adv_g"] + hp.lambda_i * terms["idt"]
        terms["dpm_total"] = total
        if not torch.isfinite(total):
            raise NonFiniteLoss(self.step, {k: float(v.detach()) for k, v in terms.items()})
        self.opt_dpm.zero_grad(set_to_none=True)
        total.backward()
        self.opt_dpm.step()
        self.warp_discs.requires_grad_(True)

        fakes = (x_to_y.detach(), y_to_x.detach())
        for _ in range(cfg.disc_steps):
            d_loss = hp.lambda_a * adv_warp_disc_loss(self.warp_discs, x, y, *fakes)
            self.opt_d.zero_grad(set_to_none=True)
            d_loss.backward()
            self.opt_d.step()
        terms["adv_d"] = d_loss.detach()
        return self._record({k: v.detach() for k, v in terms.items()})

    def checkpoint(self):
        return Checkpoint(
            stage=2,
            step=self.step,
            config=self.cfg,
            backbone=self.backbone,
            style_discs=self.style_discs,
            dpms=self.dpms,
            warp_discs=self.warp_discs,
            optimizer_states={
                **self.stage1_optim,
                "dpm": self.opt_dpm.state_dict(),
                "warp_disc": self.opt_d.state_dict(),
            },
        )


def train_stage1(cfg, sampler=None, extractor=None):
    return Stage1Trainer(cfg, sampler, extractor).run()


def train_stage2(cfg, stage1, sampler=None):
    return Stage2Trainer(cfg, stage1, sampler).run()
