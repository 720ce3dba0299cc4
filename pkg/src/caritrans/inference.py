"""Bidirectional translation from a trained checkpoint, figure-style grids and
a style-separation report."""

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .data import Domain, ImageBatch, UnpairedSampler
from .dpm import exaggerate, perturb_input, predict_displacements
from .exceptions import StageMismatch
from .extractor import load_extractor
from .losses import style_distance
from .tps import DisplacementField, control_point_offsets, warp_image
from .validation import check_image_batch

DIRECTIONS = {"p2c": Domain.PHOTO, "c2p": Domain.CARICATURE}


@dataclass
class Translation:
    render: torch.Tensor  # cross-domain decode before warping
    output: torch.Tensor
    displacements: DisplacementField | None  # after exaggeration; None if not warped
    offsets: torch.Tensor | None  # per control point, pinned ones included


def _source_domain(direction):
    if isinstance(direction, Domain):
        return direction
    try:
        return DIRECTIONS[direction]
    except KeyError:
        raise ValueError(f"direction must be one of {sorted(DIRECTIONS)}, got {direction!r}") from None


@torch.no_grad()
def translate_details(ckpt, image, direction="p2c", alpha=1.0, noise_seed=None, warp=None,
                      sigma=1.0, clamp=0.1):
    """Translate and keep the intermediate render and displacement field.

    ``warp=None`` warps photo->caricature and leaves caricature->photo
    render-only; pass True/False to force either way. Latents are never
    sampled; randomness enters only through ``noise_seed`` perturbing the
    distortion-module input.
    """
    source = _source_domain(direction)
    x = image.data if isinstance(image, ImageBatch) else image
    x = check_image_batch(x).to(next(ckpt.backbone.parameters()).device)
    bb = ckpt.backbone
    bb.eval()
    render = bb.render(x, source, sample=False)[1]

    demanded = warp is True
    want_warp = warp if warp is not None else source is Domain.PHOTO
    if not want_warp:
        return Translation(render, render, None, None)
    if ckpt.dpms is None:
        if demanded:
            raise StageMismatch("warping needs a stage-2 checkpoint")
        warnings.warn("stage-1 checkpoint has no distortion modules; returning the unwarped render",
                      stacklevel=2)
        return Translation(render, render, None, None)

    dpm_input = x if noise_seed is None else perturb_input(x, sigma, clamp, seed=noise_seed)
    field = exaggerate(predict_displacements(ckpt.dpms.net(source), dpm_input), alpha)
    cps = ckpt.control_points
    offsets = control_point_offsets(cps, field)
    if not field.vectors.any():
        # a zero field is the identity warp; skip resampling so it is exact
        return Translation(render, render, field, offsets)
    output = warp_image(render, cps, field, reg=ckpt.config.tps_reg)
    return Translation(render, output, field, offsets)


def translate(ckpt, image, direction="p2c", alpha=1.0, noise_seed=None, warp=None):
    return translate_details(ckpt, image, direction, alpha, noise_seed, warp).output


def to_uint8(images):
    """``[-1, 1]`` channels-first tensor -> ``[N, H, W, 3]`` uint8, round-half-even."""
    arr = images.detach().cpu().double().numpy()
    if arr.ndim == 3:
        arr = arr[None]
    arr = np.rint((arr + 1.0) * 127.5).clip(0, 255).astype(np.uint8)
    return arr.transpose(0, 2, 3, 1)


def save_png(image, path):
    Image.fromarray(to_uint8(image)[0]).save(path, format="PNG")


def emit_grid(ckpt, inputs, alphas=(), seeds=(), out=None, direction="p2c", alpha=1.0):
    """Montage with one row per input: the input, then a cell per alpha or per seed.

    Seed columns use ``alpha`` as the exaggeration. Returns the montage as a
    ``[rows * S, cols * S, 3]`` uint8 array and writes it to ``out`` if given.
    """
    if not inputs:
        raise ValueError("need at least one input image")
    alphas, seeds = list(alphas), list(seeds)
    if alphas and seeds:
        raise ValueError("give either alphas or seeds, not both")
    size = ckpt.config.image_size
    rows = []
    for img in inputs:
        x = check_image_batch(img, size=size)[:1]
        cells = [x]
        for a in alphas:
            cells.append(translate(ckpt, x, direction, alpha=a))
        for s in seeds:
            cells.append(translate(ckpt, x, direction, alpha=alpha, noise_seed=s))
        rows.append(np.concatenate([to_uint8(c)[0] for c in cells], axis=1))
    montage = np.concatenate(rows, axis=0)
    if out is not None:
        out = Path(out)
        try:
            Image.fromarray(montage).save(out, format="PNG")
        except (OSError, ValueError) as exc:
            raise OSError(f"cannot write grid to {out}: {exc}") from exc
    return montage


@torch.no_grad()
def eval_style_gap(ckpt, corpus, n, extractor=None, seed=0):
    """Mean style distance of photo renders to caricatures vs to their own photos.

    A ratio below 1 means renders sit stylistically closer to the caricature
    domain than to the photos they came from.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    cfg = ckpt.config
    if extractor is None:
        extractor = load_extractor(cfg.extractor_weights, layers=(cfg.style_layer,))
    sampler = corpus if isinstance(corpus, UnpairedSampler) else UnpairedSampler.from_corpus(corpus, cfg.image_size)
    ckpt.backbone.eval()
    to_cari, to_photo = [], []
    for i in range(n):
        xb, yb = sampler.sample(1, seed + i)
        x, y = xb.data, yb.data
        x_r = ckpt.backbone.render(x, Domain.PHOTO, sample=False)[1]
        f = extractor(torch.cat([x_r, y, x]))[cfg.style_layer]
        fxr, fy, fx = f.chunk(3)
        to_cari.append(float(style_distance(fxr, fy)))
        to_photo.append(float(style_distance(fxr, fx)))
    cari_mean, photo_mean = float(np.mean(to_cari)), float(np.mean(to_photo))
    return {
        "caricature_distance": cari_mean,
        "photo_distance": photo_mean,
        "ratio": cari_mean / photo_mean if photo_mean > 0 else float("inf"),
    }
