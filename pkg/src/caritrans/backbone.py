"""Shared-latent encoder/decoder pair and the multi-scale style discriminators.

Each domain has its own encoder and decoder, but the last two encoder stages
and the first two decoder stages are one module instance referenced from both
domains, so the two streams literally share storage for those weights.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import Domain
from .exceptions import ShapeMismatch


@dataclass
class ContentCode:
    mean: torch.Tensor
    sample: torch.Tensor
    noise: torch.Tensor


class ResBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels, affine=True),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels, affine=True),
        )

    def forward(self, x):
        return x + self.body(x)


def _conv_block(cin, cout, kernel, stride):
    pad = (kernel - 1) // 2 if stride == 1 else 1
    return nn.Sequential(
        nn.Conv2d(cin, cout, kernel, stride=stride, padding=pad),
        nn.InstanceNorm2d(cout, affine=True),
        nn.ReLU(inplace=True),
    )


def _up_block(cin, cout):
    return nn.Sequential(
        nn.Upsample(scale_factor=2, mode="nearest"),
        nn.Conv2d(cin, cout, 5, padding=2, padding_mode="reflect"),
        nn.InstanceNorm2d(cout, affine=True),
        nn.ReLU(inplace=True),
    )


def _rgb_head(cin):
    return nn.Sequential(nn.Conv2d(cin, 3, 7, padding=3, padding_mode="reflect"), nn.Tanh())


class Encoder(nn.Module):
    """Domain-private downsampling stages followed by the shared block.

    The first stage keeps resolution; the next two halve it, so the content
    mean sits at a quarter of the input resolution.
    """

    def __init__(self, latent_channels, shared):
        super().__init__()
        base = latent_channels // 4
        self.private = nn.Sequential(
            _conv_block(3, base, 7, 1),
            _conv_block(base, 2 * base, 4, 2),
            _conv_block(2 * base, latent_channels, 4, 2),
        )
        self.shared = shared

    def forward(self, x):
        return self.shared(self.private(x))


class Decoder(nn.Module):
    """Shared block, then two upsampling stages with an RGB head after each.

    Returns ``(half_resolution, full_resolution)`` images in [-1, 1].
    """

    def __init__(self, latent_channels, shared):
        super().__init__()
        base = latent_channels // 4
        self.shared = shared
        self.up1 = _up_block(latent_channels, 2 * base)
        self.head_low = _rgb_head(2 * base)
        self.up2 = _up_block(2 * base, base)
        self.head_full = _rgb_head(base)

    def forward(self, c):
        h = self.up1(self.shared(c))
        low = self.head_low(h)
        full = self.head_full(self.up2(h))
        return low, full


class Backbone(nn.Module):
    def __init__(self, latent_channels=64, image_size=64):
        super().__init__()
        if latent_channels % 4:
            raise ValueError("latent_channels must be divisible by 4")
        if image_size % 4:
            raise ValueError("image_size must be divisible by 4")
        self.latent_channels = latent_channels
        self.image_size = image_size
        self.shared_enc = nn.Sequential(ResBlock(latent_channels), ResBlock(latent_channels))
        self.shared_dec = nn.Sequential(ResBlock(latent_channels), ResBlock(latent_channels))
        self.enc_photo = Encoder(latent_channels, self.shared_enc)
        self.enc_cari = Encoder(latent_channels, self.shared_enc)
        self.dec_photo = Decoder(latent_channels, self.shared_dec)
        self.dec_cari = Decoder(latent_channels, self.shared_dec)

    def encoder(self, domain):
        return self.enc_photo if Domain(domain) is Domain.PHOTO else self.enc_cari

    def decoder(self, domain):
        return self.dec_photo if Domain(domain) is Domain.PHOTO else self.dec_cari

    def encode(self, x, domain, sample=None, generator=None):
        """Map images to a content code ``c = mean + s``.

        ``s`` is standard normal when sampling (default: ``self.training``),
        otherwise exactly zero.
        """
        if x.ndim != 4 or x.shape[1] != 3 or tuple(x.shape[-2:]) != (self.image_size,) * 2:
            raise ShapeMismatch(
                f"encoder expects [B, 3, {self.image_size}, {self.image_size}], got {tuple(x.shape)}"
            )
        mean = self.encoder(domain)(x)
        if sample is None:
            sample = self.training
        if sample:
            noise = torch.randn(mean.shape, generator=generator, device=mean.device, dtype=mean.dtype)
        else:
            noise = torch.zeros_like(mean)
        return ContentCode(mean=mean, sample=mean + noise, noise=noise)

    def decode(self, code, domain):
        c = code.sample if isinstance(code, ContentCode) else code
        expected = (self.latent_channels, self.image_size // 4, self.image_size // 4)
        if c.ndim != 4 or tuple(c.shape[1:]) != expected:
            raise ShapeMismatch(f"decoder expects [B, {expected}], got {tuple(c.shape)}")
        return self.decoder(domain)(c)

    def render(self, x, source, sample=False, generator=None):
        """Cross-domain translation without warping; returns ``(low, full)``."""
        code = self.encode(x, source, sample=sample, generator=generator)
        return self.decode(code, Domain(source).other)


class PatchDiscriminator(nn.Module):
    """Convolutional critic emitting a map of per-patch probabilities."""

    def __init__(self, base=16, n_layers=3):
        super().__init__()
        layers = [nn.Conv2d(3, base, 4, stride=2, padding=1), nn.LeakyReLU(0.2, inplace=True)]
        ch = base
        for _ in range(n_layers - 1):
            layers += [nn.Conv2d(ch, ch * 2, 4, stride=2, padding=1), nn.LeakyReLU(0.2, inplace=True)]
            ch *= 2
        layers.append(nn.Conv2d(ch, 1, 3, padding=1))
        self.net = nn.Sequential(*layers)

    def logits(self, x):
        return self.net(x)

    def forward(self, x):
        return torch.sigmoid(self.net(x))


class StyleDiscriminators(nn.Module):
    """Four critics: (photo, caricature) x (half, full) resolution."""

    def __init__(self, image_size=64, base=16):
        super().__init__()
        self.image_size = image_size
        self.photo_low = PatchDiscriminator(base)
        self.photo_full = PatchDiscriminator(base)
        self.cari_low = PatchDiscriminator(base)
        self.cari_full = PatchDiscriminator(base)

    def critic(self, domain, scale):
        low = scale == "low"
        if Domain(domain) is Domain.PHOTO:
            return self.photo_low if low else self.photo_full
        return self.cari_low if low else self.cari_full

    def discriminate(self, image, domain, scale):
        if scale not in ("low", "full"):
            raise ValueError(f"scale must be 'low' or 'full', got {scale!r}")
        size = self.image_size // 2 if scale == "low" else self.image_size
        if tuple(image.shape[-2:]) != (size, size):
            raise ShapeMismatch(f"{scale}-scale critic expects {size}x{size}, got {tuple(image.shape[-2:])}")
        return self.critic(domain, scale)(image)


def downscale(x):
    """Half-resolution copy of real images for the low-scale critics."""
    return F.avg_pool2d(x, 2)
