"""Distortion prediction: a four-layer MLP that maps an image to bounded
control-point displacements, the warp critics, and the stage-2 losses."""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import PatchDiscriminator
from .data import Domain
from .exceptions import ShapeMismatch
from .losses import discriminator_adv_loss, generator_adv_loss
from .tps import DisplacementField
from .validation import check_same_shape

DPM_INPUT = 32
HIDDEN = (512, 256, 128)


class DpmNet(nn.Module):
    """Image -> ``[B, n_free, 2]`` displacements, each within ``[-d_max, d_max]``.

    The image is bilinearly resized to 32x32 and flattened before the four
    fully connected layers; a scaled tanh bounds the output.
    """

    def __init__(self, n_free, d_max=0.1, hidden=HIDDEN):
        super().__init__()
        self.n_free = n_free
        self.d_max = d_max
        widths = (3 * DPM_INPUT * DPM_INPUT, *hidden)
        layers = []
        for cin, cout in zip(widths[:-1], widths[1:]):
            layers += [nn.Linear(cin, cout), nn.LeakyReLU(0.2, inplace=True)]
        layers.append(nn.Linear(widths[-1], n_free * 2))
        self.mlp = nn.Sequential(*layers)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeMismatch(f"expected [B, 3, H, W] images, got {tuple(x.shape)}")
        small = F.interpolate(x, size=(DPM_INPUT, DPM_INPUT), mode="bilinear", align_corners=False)
        raw = self.mlp(small.flatten(1))
        return self.d_max * torch.tanh(raw).view(-1, self.n_free, 2)


class DistortionModules(nn.Module):
    """One DPM per domain, keyed by the domain of the image it reads."""

    def __init__(self, n_free, d_max=0.1):
        super().__init__()
        self.photo = DpmNet(n_free, d_max)
        self.cari = DpmNet(n_free, d_max)

    def net(self, domain):
        return self.photo if Domain(domain) is Domain.PHOTO else self.cari


class WarpDiscriminators(nn.Module):
    """Full-scale critics judging warped outputs, one per target domain."""

    def __init__(self, image_size=64, base=16):
        super().__init__()
        self.image_size = image_size
        self.photo = PatchDiscriminator(base)
        self.cari = PatchDiscriminator(base)

    def discriminate(self, image, domain):
        if tuple(image.shape[-2:]) != (self.image_size,) * 2:
            raise ShapeMismatch(f"warp critic expects {self.image_size}px images")
        return (self.photo if Domain(domain) is Domain.PHOTO else self.cari)(image)


def predict_displacements(net, image):
    return DisplacementField(net(image), bound=net.d_max)


def perturb_input(image, sigma=1.0, clamp=0.1, seed=None, generator=None):
    """Add Gaussian noise clipped to ``[-clamp, clamp]``, then clip to [-1, 1]."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if generator is None and seed is not None:
        generator = torch.Generator(device=image.device).manual_seed(int(seed))
    noise = sigma * torch.randn(image.shape, generator=generator, dtype=image.dtype, device=image.device)
    return (image + noise.clamp(-clamp, clamp)).clamp(-1.0, 1.0)


def exaggerate(field, alpha):
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    return DisplacementField(field.vectors * alpha, bound=field.bound * alpha)


def adv_warp_gen_loss(discs, x_to_y, y_to_x, mode="nonsaturating"):
    scores = [discs.discriminate(x_to_y, Domain.CARICATURE), discs.discriminate(y_to_x, Domain.PHOTO)]
    return generator_adv_loss(scores, mode)


def adv_warp_disc_loss(discs, real_photo, real_cari, x_to_y, y_to_x):
    real = [discs.discriminate(real_cari, Domain.CARICATURE), discs.discriminate(real_photo, Domain.PHOTO)]
    fake = [discs.discriminate(x_to_y, Domain.CARICATURE), discs.discriminate(y_to_x, Domain.PHOTO)]
    return discriminator_adv_loss(real, fake)


def identity_loss(x_to_y, x, y_to_x, y):
    check_same_shape((x_to_y, x), (y_to_x, y))
    return (x_to_y - x).abs().mean() + (y_to_x - y).abs().mean()
