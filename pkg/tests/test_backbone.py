import numpy as np
import pytest
import torch

from caritrans.backbone import Backbone, StyleDiscriminators
from caritrans.data import Domain
from caritrans.exceptions import ShapeMismatch
from caritrans.losses import kl_loss, reconstruction_loss


@pytest.fixture
def backbone():
    torch.manual_seed(0)
    return Backbone(latent_channels=16, image_size=32)


def test_weight_sharing_is_storage_identity(backbone):
    for a, b in zip(backbone.enc_photo.shared.parameters(), backbone.enc_cari.shared.parameters()):
        assert a is b
    for a, b in zip(backbone.dec_photo.shared.parameters(), backbone.dec_cari.shared.parameters()):
        assert a is b
    private_a = set(map(id, backbone.enc_photo.private.parameters()))
    private_b = set(map(id, backbone.enc_cari.private.parameters()))
    assert not private_a & private_b


def test_perturbing_shared_block_via_photo_handle_changes_caricature_encoder(backbone):
    backbone.eval()
    y = torch.rand(1, 3, 32, 32) * 2 - 1
    before = backbone.encode(y, Domain.CARICATURE).mean.clone()
    with torch.no_grad():
        next(backbone.enc_photo.shared.parameters()).add_(0.5)
    after = backbone.encode(y, Domain.CARICATURE).mean
    assert not torch.allclose(before, after)


def test_eval_mode_sample_equals_mean(backbone):
    backbone.eval()
    code = backbone.encode(torch.zeros(2, 3, 32, 32), Domain.PHOTO)
    assert torch.equal(code.sample, code.mean)
    assert not code.noise.any()


def test_training_mode_noise_is_seeded(backbone):
    backbone.train()
    x = torch.rand(1, 3, 32, 32) * 2 - 1
    a = backbone.encode(x, Domain.PHOTO, generator=torch.Generator().manual_seed(3))
    b = backbone.encode(x, Domain.PHOTO, generator=torch.Generator().manual_seed(3))
    assert torch.equal(a.noise, b.noise) and torch.equal(a.sample, b.sample)
    assert torch.equal(a.sample, a.mean + a.noise)
    assert torch.allclose(a.sample - a.mean, a.noise, atol=1e-6)


def test_noise_moments(backbone):
    backbone.train()
    g = torch.Generator().manual_seed(0)
    x = torch.zeros(1, 3, 32, 32)
    # 10^4 draws per latent element
    noise = backbone.encode(x.expand(10_000, -1, -1, -1), Domain.PHOTO, generator=g).noise
    assert noise.mean(0).abs().max() < 0.05
    var = noise.var(0)
    assert 0.9 <= var.min() and var.max() <= 1.1


def test_mean_resolution_and_decode_shapes(backbone):
    backbone.eval()
    code = backbone.encode(torch.zeros(3, 3, 32, 32), Domain.PHOTO)
    assert code.mean.shape == (3, 16, 8, 8)
    low, full = backbone.decode(code, Domain.CARICATURE)
    assert low.shape == (3, 3, 16, 16) and full.shape == (3, 3, 32, 32)


def test_decode_range_for_random_code(backbone):
    low, full = backbone.decode(torch.randn(2, 16, 8, 8) * 10, Domain.PHOTO)
    assert low.abs().max() <= 1 and full.abs().max() <= 1


def test_shape_errors(backbone):
    with pytest.raises(ShapeMismatch):
        backbone.encode(torch.zeros(1, 3, 16, 16), Domain.PHOTO)
    with pytest.raises(ShapeMismatch):
        backbone.decode(torch.zeros(1, 16, 4, 4), Domain.PHOTO)


def test_discriminator_scores_in_open_interval_and_deterministic():
    torch.manual_seed(0)
    discs = StyleDiscriminators(image_size=32, base=8)
    x = torch.rand(2, 3, 32, 32) * 2 - 1
    s1 = discs.discriminate(x, Domain.PHOTO, "full")
    s2 = discs.discriminate(x, Domain.PHOTO, "full")
    assert torch.equal(s1, s2)
    assert (s1 > 0).all() and (s1 < 1).all()
    low = discs.discriminate(x[:, :, ::2, ::2], Domain.CARICATURE, "low")
    assert (low > 0).all() and (low < 1).all()
    with pytest.raises(ShapeMismatch):
        discs.discriminate(x, Domain.PHOTO, "low")


def test_untrained_discriminator_is_near_chance(backbone):
    torch.manual_seed(1)
    discs = StyleDiscriminators(image_size=32, base=8)
    real = torch.rand(4, 3, 32, 32) * 2 - 1
    backbone.eval()
    fake = backbone.render(real, Domain.PHOTO)[1]
    gap = (discs.discriminate(real, Domain.CARICATURE, "full").mean()
           - discs.discriminate(fake, Domain.CARICATURE, "full").mean()).abs()
    assert gap < 0.2


def test_reconstruction_overfit_one_image():
    torch.manual_seed(0)
    bb = Backbone(latent_channels=16, image_size=32)
    yy, xx = np.mgrid[0:32, 0:32] / 31.0
    x = torch.tensor(np.stack([xx, yy, (xx + yy) / 2]) * 2 - 1, dtype=torch.float32)[None]
    opt = torch.optim.Adam(bb.parameters(), lr=1e-3, betas=(0.5, 0.999))
    g = torch.Generator().manual_seed(0)
    bb.train()
    for _ in range(500):
        code = bb.encode(x, Domain.PHOTO, generator=g)
        loss = reconstruction_loss(bb.decode(code, Domain.PHOTO)[1], x, x, x)
        opt.zero_grad()
        loss.backward()
        opt.step()
    bb.eval()
    x_rec = bb.decode(bb.encode(x, Domain.PHOTO), Domain.PHOTO)[1]
    assert (x_rec - x).abs().mean() < 0.15


def test_shared_latent_consistency_improves_with_training():
    """||Enc_a(x) - Enc_b(Dec_b(Enc_a(x)))|| falls under reconstruction + KL pressure."""
    torch.manual_seed(0)
    bb = Backbone(latent_channels=16, image_size=32)
    g = torch.Generator().manual_seed(1)
    x = torch.rand(2, 3, 32, 32, generator=g) * 2 - 1
    y = torch.rand(2, 3, 32, 32, generator=g) * 2 - 1

    def gap():
        bb.eval()
        with torch.no_grad():
            mu = bb.encode(x, Domain.PHOTO).mean
            back = bb.encode(bb.decode(mu, Domain.CARICATURE)[1], Domain.CARICATURE).mean
            return (mu - back).norm().item()

    before = gap()
    opt = torch.optim.Adam(bb.parameters(), lr=1e-3, betas=(0.5, 0.999))
    bb.train()
    for _ in range(150):
        ca = bb.encode(x, Domain.PHOTO, generator=g)
        cb = bb.encode(y, Domain.CARICATURE, generator=g)
        loss = 10 * reconstruction_loss(bb.decode(ca, Domain.PHOTO)[1], x, bb.decode(cb, Domain.CARICATURE)[1], y)
        loss = loss + kl_loss(ca.mean, cb.mean)
        opt.zero_grad()
        loss.backward()
        opt.step()
    assert gap() < before


def test_round_trip_preserves_batch_and_channels(backbone):
    backbone.eval()
    x = torch.zeros(5, 3, 32, 32)
    code = backbone.encode(x, Domain.PHOTO)
    low, full = backbone.decode(code, Domain.PHOTO)
    assert code.mean.shape[:2] == (5, 16)
    assert low.shape[:2] == full.shape[:2] == (5, 3)
