"""Stage-1 objectives: reconstruction, KL, style adversarial, content and
the Gram-matrix contrastive style loss.

Adversarial terms consume critic *probabilities* (already through a logistic
map). Every expectation is a mean over batch and patch positions.
"""

import torch

from .backbone import downscale
from .data import Domain
from .exceptions import ChannelMismatch, ShapeMismatch
from .validation import check_same_shape

EPS = 1e-7
GAN_LOSSES = ("nonsaturating", "minimax")


def _log(p):
    return torch.log(p.clamp(EPS, 1.0 - EPS))


def reconstruction_loss(x_rec, x, y_rec, y):
    """Per-element mean absolute error of each domain, summed."""
    check_same_shape((x_rec, x), (y_rec, y))
    return (x_rec - x).abs().mean() + (y_rec - y).abs().mean()


def kl_divergence(mu):
    """KL(N(mu, I) || N(0, I)) = 0.5 * sum(mu^2), summed per sample, batch-averaged."""
    return 0.5 * mu.pow(2).flatten(1).sum(1).mean()


def kl_loss(mu_a, mu_b):
    return kl_divergence(mu_a) + kl_divergence(mu_b)


def generator_adv_loss(fake_scores, mode="nonsaturating"):
    """Sum over critics of the generator objective on fake probabilities.

    ``nonsaturating`` gives ``-E[log D(fake)]``; ``minimax`` gives the literal
    ``E[log(1 - D(fake))]``.
    """
    if mode not in GAN_LOSSES:
        raise ValueError(f"gan_loss must be one of {GAN_LOSSES}, got {mode!r}")
    total = 0.0
    for s in fake_scores:
        total = total + (-_log(s).mean() if mode == "nonsaturating" else _log(1.0 - s).mean())
    return total


def discriminator_adv_loss(real_scores, fake_scores):
    """``-sum E[log D(real)] - sum E[log(1 - D(fake))]``."""
    total = 0.0
    for s in real_scores:
        total = total - _log(s).mean()
    for s in fake_scores:
        total = total - _log(1.0 - s).mean()
    return total


def adv_style_gen_loss(discs, x_r_low, x_r, y_r_low, y_r, mode="nonsaturating"):
    """Rendered photos face the caricature critics and vice versa, at both scales."""
    scores = [
        discs.discriminate(x_r_low, Domain.CARICATURE, "low"),
        discs.discriminate(x_r, Domain.CARICATURE, "full"),
        discs.discriminate(y_r_low, Domain.PHOTO, "low"),
        discs.discriminate(y_r, Domain.PHOTO, "full"),
    ]
    return generator_adv_loss(scores, mode)


def adv_style_disc_loss(discs, x, y, x_r_low, x_r, y_r_low, y_r):
    """Critic loss; ``x``/``y`` are full-scale reals, downscaled here for the low critics."""
    real = [
        discs.discriminate(downscale(y), Domain.CARICATURE, "low"),
        discs.discriminate(y, Domain.CARICATURE, "full"),
        discs.discriminate(downscale(x), Domain.PHOTO, "low"),
        discs.discriminate(x, Domain.PHOTO, "full"),
    ]
    fake = [
        discs.discriminate(x_r_low, Domain.CARICATURE, "low"),
        discs.discriminate(x_r, Domain.CARICATURE, "full"),
        discs.discriminate(y_r_low, Domain.PHOTO, "low"),
        discs.discriminate(y_r, Domain.PHOTO, "full"),
    ]
    return discriminator_adv_loss(real, fake)


def feature_distance(f, g):
    """Batch-averaged Frobenius norm of a feature difference."""
    check_same_shape((f, g))
    return (f - g).flatten(1).norm(dim=1).mean()


def content_loss(extractor, x, x_r, y, y_r, layer="relu3_3"):
    feats = [extractor(t)[layer] for t in (x, x_r, y, y_r)]
    return feature_distance(feats[0], feats[1]) + feature_distance(feats[2], feats[3])


def gram(f):
    """Unnormalised channel inner products: ``G[b, i, j] = <f[b, i], f[b, j]>``."""
    if f.ndim != 4:
        raise ShapeMismatch(f"feature map must be [B, C, H, W], got {tuple(f.shape)}")
    flat = f.flatten(2)
    return flat @ flat.transpose(1, 2)


def style_distance(m, n, reduction="mean"):
    """Gram style distance ``sum_ij (G^m - G^n)^2 / (4 * C * H * W)``.

    The sum runs over every C x C Gram entry. With ``reduction="none"`` the
    per-sample distances are returned.
    """
    if m.ndim != 4 or n.ndim != 4:
        raise ShapeMismatch("feature maps must be [B, C, H, W]")
    if m.shape[1] != n.shape[1]:
        raise ChannelMismatch(f"channel counts differ: {m.shape[1]} vs {n.shape[1]}")
    check_same_shape((m, n))
    _, c, h, w = m.shape
    d = (gram(m) - gram(n)).pow(2).sum(dim=(1, 2)) / (4.0 * c * h * w)
    if reduction == "none":
        return d
    return d.mean()


def contrastive(i1, i2, label, margin):
    """Margin contrastive style term, batch-averaged.

    label 1 pulls the pair's styles together (``d^2 / 2``); label 0 pushes
    them at least ``margin`` apart (``max(margin - d, 0)^2 / 2``).
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    if label == 1:
        d = style_distance(i1, i2, reduction="none")
        per = d.pow(2)
    elif label == 0:
        d = style_distance(i2, i1, reduction="none")
        per = torch.clamp(margin - d, min=0.0).pow(2)
    else:
        raise ValueError(f"label must be 0 or 1, got {label!r}")
    return 0.5 * per.mean()


def contrastive_style_terms(f_xr, f_yr, f_x, f_y, margin):
    """The four unweighted contrastive terms on precomputed style features."""
    return (
        contrastive(f_xr, f_x, 0, margin),
        contrastive(f_xr, f_y, 1, margin),
        contrastive(f_yr, f_y, 0, margin),
        contrastive(f_yr, f_x, 1, margin),
    )


def contrastive_style_from_features(f_xr, f_yr, f_x, f_y, alphas, margin):
    terms = contrastive_style_terms(f_xr, f_yr, f_x, f_y, margin)
    return sum(a * t for a, t in zip(alphas, terms))


def contrastive_style_loss(x_r, y_r, x, y, extractor, hp, layer="relu2_2"):
    """Pull each render's style toward the other domain, push it from its own."""
    f = [extractor(t)[layer] for t in (x_r, y_r, x, y)]
    return contrastive_style_from_features(*f, alphas=hp.alphas, margin=hp.mg)
