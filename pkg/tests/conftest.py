import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthetic import write_corpus  # noqa: E402

from caritrans.config import load_defaults  # noqa: E402
from caritrans.extractor import save_random_extractor  # noqa: E402
from caritrans.trainer import train_stage1, train_stage2  # noqa: E402


@pytest.fixture(scope="session")
def extractor_weights(tmp_path_factory):
    """Seeded random VGG16 weights; no pretrained download in CI."""
    return save_random_extractor(tmp_path_factory.mktemp("vgg") / "vgg16.pth", seed=0)


@pytest.fixture
def corpus(tmp_path):
    return write_corpus(tmp_path / "data", n_photos=2, n_caris=3, size=48, seed=1)


def make_tiny_config(tmp_path, extractor_weights):
    root = write_corpus(tmp_path / "tiny", n_photos=2, n_caris=2, size=32, seed=2)
    return load_defaults().replace(
        data_root=str(root),
        checkpoint_dir=str(tmp_path / "ckpt"),
        image_size=32,
        latent_channels=16,
        disc_base=8,
        extractor_weights=str(extractor_weights),
        log_every=1,
        save_every=1000,
        hp=dict(steps_stage1=10, steps_stage2=10),
    )


@pytest.fixture
def tiny_config(tmp_path, extractor_weights):
    """A 32px, narrow configuration for fast trainer tests."""
    return make_tiny_config(tmp_path, extractor_weights)


@pytest.fixture(scope="session")
def tiny_checkpoints(tmp_path_factory, extractor_weights):
    """(config, stage-1 checkpoint, stage-2 checkpoint) after a few steps each."""
    cfg = make_tiny_config(tmp_path_factory.mktemp("trained"), extractor_weights)
    cfg = cfg.replace(hp=dict(steps_stage1=5, steps_stage2=5))
    s1 = train_stage1(cfg)
    s2 = train_stage2(cfg, s1)
    return cfg, s1, s2


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.RESULTS[number])
