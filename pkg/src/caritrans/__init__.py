"""Unsupervised photo <-> caricature translation with contrastive Gram-matrix
style supervision and learned thin-plate-spline exaggeration."""

from .backbone import Backbone, ContentCode, StyleDiscriminators
from .config import HyperParams, TrainConfig, load_config, load_defaults, save_config
from .data import CorpusIndex, Domain, ImageBatch, load_corpus, preprocess, sample_batch
from .dpm import DpmNet, exaggerate, perturb_input, predict_displacements
from .estimator import CaricatureTranslator
from .inference import emit_grid, eval_style_gap, translate
from .tps import ControlPointSet, DisplacementField, default_control_points, solve_tps, warp_image
from .trainer import Checkpoint, train_stage1, train_stage2

__all__ = [
    "Backbone",
    "CaricatureTranslator",
    "Checkpoint",
    "ContentCode",
    "ControlPointSet",
    "CorpusIndex",
    "DisplacementField",
    "Domain",
    "DpmNet",
    "HyperParams",
    "ImageBatch",
    "StyleDiscriminators",
    "TrainConfig",
    "default_control_points",
    "emit_grid",
    "eval_style_gap",
    "exaggerate",
    "load_config",
    "load_corpus",
    "load_defaults",
    "perturb_input",
    "predict_displacements",
    "preprocess",
    "sample_batch",
    "save_config",
    "solve_tps",
    "train_stage1",
    "train_stage2",
    "translate",
    "warp_image",
]

__version__ = "0.1.0"
