"""scikit-learn style wrapper around the two-stage translator."""

import tempfile

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import HyperParams, TrainConfig
from .data import UnpairedSampler
from .extractor import load_extractor
from .inference import translate
from .trainer import Stage1Trainer, Stage2Trainer
from .validation import check_image_batch


class CaricatureTranslator(TransformerMixin, BaseEstimator):
    """Unpaired photo <-> caricature translator.

    ``fit(X, y)`` takes two *unpaired* image sets: ``X`` photos and ``y``
    caricatures, either 8-bit ``[N, H, W, 3]`` arrays or float
    ``[N, 3, H, W]`` tensors in [-1, 1] at ``image_size``. ``transform`` maps
    photos to warped caricatures; ``inverse_transform`` maps caricatures to
    photos (render only).

    Parameters
    ----------
    image_size, latent_channels, disc_base : int
        Network geometry.
    hyperparams : HyperParams or None
        Loss weights, optimiser constants and step counts; defaults if None.
    extractor_weights : str
        Path to VGG16 weights for the perceptual losses.
    alpha : float
        Exaggeration applied by ``transform``.
    noise_seed : int or None
        When set, ``transform`` perturbs the distortion input for diversity.
    """

    def __init__(self, image_size=256, latent_channels=256, disc_base=64, hyperparams=None,
                 extractor_weights=None, gan_loss="nonsaturating", control_grid_k=4, d_max=0.1,
                 batch_size=1, alpha=1.0, noise_seed=None, random_state=0, checkpoint_dir=None,
                 device="cpu"):
        self.image_size = image_size
        self.latent_channels = latent_channels
        self.disc_base = disc_base
        self.hyperparams = hyperparams
        self.extractor_weights = extractor_weights
        self.gan_loss = gan_loss
        self.control_grid_k = control_grid_k
        self.d_max = d_max
        self.batch_size = batch_size
        self.alpha = alpha
        self.noise_seed = noise_seed
        self.random_state = random_state
        self.checkpoint_dir = checkpoint_dir
        self.device = device

    def _config(self, checkpoint_dir):
        return TrainConfig(
            hp=self.hyperparams if self.hyperparams is not None else HyperParams(),
            image_size=self.image_size,
            latent_channels=self.latent_channels,
            disc_base=self.disc_base,
            batch_size=self.batch_size,
            seed=self.random_state,
            checkpoint_dir=checkpoint_dir,
            gan_loss=self.gan_loss,
            control_grid_k=self.control_grid_k,
            d_max=self.d_max,
            extractor_weights=self.extractor_weights,
            device=self.device,
        )

    def fit(self, X, y):
        photos = check_image_batch(X, size=self.image_size)
        caris = check_image_batch(y, size=self.image_size)
        sampler = UnpairedSampler(photos, caris)
        workdir = self.checkpoint_dir
        tmp = None
        if workdir is None:
            tmp = tempfile.TemporaryDirectory(prefix="caritrans-")
            workdir = tmp.name
        try:
            cfg = self._config(workdir)
            extractor = load_extractor(cfg.extractor_weights, (cfg.style_layer, cfg.content_layer), cfg.device)
            stage1 = Stage1Trainer(cfg, sampler, extractor)
            ckpt1 = stage1.run()
            stage2 = Stage2Trainer(cfg, ckpt1, sampler)
            self.checkpoint_ = stage2.run()
            self.history_ = {"stage1": stage1.history, "stage2": stage2.history}
        finally:
            if tmp is not None:
                tmp.cleanup()
        return self

    def transform(self, X):
        check_is_fitted(self, "checkpoint_")
        x = check_image_batch(X, size=self.image_size)
        return translate(self.checkpoint_, x, "p2c", alpha=self.alpha, noise_seed=self.noise_seed)

    def inverse_transform(self, X):
        check_is_fitted(self, "checkpoint_")
        x = check_image_batch(X, size=self.image_size)
        return translate(self.checkpoint_, x, "c2p")
