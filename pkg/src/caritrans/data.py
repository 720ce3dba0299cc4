"""Unpaired two-domain image corpus: discovery, preprocessing and sampling."""

import enum
import functools
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .exceptions import MissingDomainDir
from .validation import check_image_size

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


class Domain(str, enum.Enum):
    PHOTO = "photo"
    CARICATURE = "caricature"

    @property
    def other(self):
        return Domain.CARICATURE if self is Domain.PHOTO else Domain.PHOTO


@dataclass(frozen=True)
class CorpusIndex:
    root: Path
    photo_paths: tuple
    caricature_paths: tuple

    def __post_init__(self):
        if not self.photo_paths or not self.caricature_paths:
            raise MissingDomainDir("both domains need at least one image")
        if set(self.photo_paths) & set(self.caricature_paths):
            raise ValueError("a path appears in both domains")

    @property
    def sizes(self):
        return len(self.photo_paths), len(self.caricature_paths)

    def paths(self, domain):
        return self.photo_paths if Domain(domain) is Domain.PHOTO else self.caricature_paths

    def split_holdout(self, n):
        """Reserve the last ``n`` images of each domain; returns ``(train, held_out)``."""
        if n <= 0:
            return self, None
        if n >= min(self.sizes):
            raise ValueError(f"holdout {n} leaves a domain empty (sizes {self.sizes})")
        train = CorpusIndex(self.root, self.photo_paths[:-n], self.caricature_paths[:-n])
        held = CorpusIndex(self.root, self.photo_paths[-n:], self.caricature_paths[-n:])
        return train, held


@dataclass(frozen=True)
class ImageBatch:
    """Channels-first images in [-1, 1] tagged with their domain."""

    data: torch.Tensor
    domain: Domain


def _decodable(path):
    try:
        with Image.open(path) as im:
            im.load()
        return True
    except Exception as exc:  # PIL raises a zoo of types for broken files
        warnings.warn(f"skipping unreadable image {path}: {exc}", stacklevel=3)
        return False


def load_corpus(root):
    """Index ``root/photos`` and ``root/caricatures``, sorted by filename.

    Files that fail to decode are skipped with a warning.
    """
    root = Path(root)
    found = {}
    for name in ("photos", "caricatures"):
        d = root / name
        if not d.is_dir():
            raise MissingDomainDir(f"missing domain directory {d}")
        candidates = sorted(
            (p for p in d.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES),
            key=lambda p: p.name,
        )
        paths = tuple(str(p) for p in candidates if _decodable(p))
        if not paths:
            raise MissingDomainDir(f"no decodable images in {d}")
        found[name] = paths
    index = CorpusIndex(root, found["photos"], found["caricatures"])
    logger.info("corpus %s: %d photos, %d caricatures", root, *index.sizes)
    return index


def preprocess(raw_image, size):
    """Resize an 8-bit RGB image to ``size`` x ``size`` and map it to [-1, 1].

    Resampling is plain bilinear with half-pixel centers (no antialiasing).
    Returns a ``[1, 3, size, size]`` float tensor.
    """
    size = check_image_size(size)
    arr = np.asarray(raw_image)
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=-1)
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ValueError(f"expected an RGB image, got array of shape {arr.shape}")
    t = torch.from_numpy(arr.astype(np.float32)).permute(2, 0, 1).unsqueeze(0)
    t = t / 127.5 - 1.0
    if t.shape[-2:] != (size, size):
        t = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False)
    return t.clamp_(-1.0, 1.0)


def read_image(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


@functools.lru_cache(maxsize=4096)
def _load_preprocessed(path, size):
    return preprocess(read_image(path), size)[0]


def load_image(path, size):
    """Decode and preprocess one file to a ``[3, size, size]`` tensor (cached)."""
    return _load_preprocessed(str(path), int(size)).clone()


def sample_batch(index, batch, seed, size=64):
    """Draw an unpaired (photo, caricature) batch uniformly with replacement.

    Deterministic for a fixed ``seed``.
    """
    if batch < 1:
        raise ValueError("batch must be >= 1")
    rng = np.random.default_rng(seed)
    pi = rng.integers(0, len(index.photo_paths), size=batch)
    ci = rng.integers(0, len(index.caricature_paths), size=batch)
    photos = torch.stack([load_image(index.photo_paths[i], size) for i in pi])
    caris = torch.stack([load_image(index.caricature_paths[i], size) for i in ci])
    return ImageBatch(photos, Domain.PHOTO), ImageBatch(caris, Domain.CARICATURE)


class UnpairedSampler:
    """In-memory pools of preprocessed images for the training loop."""

    def __init__(self, photos, caricatures):
        if len(photos) == 0 or len(caricatures) == 0:
            raise MissingDomainDir("both domains need at least one image")
        self.photos = photos
        self.caricatures = caricatures

    @classmethod
    def from_corpus(cls, index, size):
        photos = torch.stack([load_image(p, size) for p in index.photo_paths])
        caris = torch.stack([load_image(p, size) for p in index.caricature_paths])
        return cls(photos, caris)

    def sample(self, batch, seed):
        rng = np.random.default_rng(seed)
        pi = torch.from_numpy(rng.integers(0, len(self.photos), size=batch))
        ci = torch.from_numpy(rng.integers(0, len(self.caricatures), size=batch))
        return (
            ImageBatch(self.photos[pi], Domain.PHOTO),
            ImageBatch(self.caricatures[ci], Domain.CARICATURE),
        )
