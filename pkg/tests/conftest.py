import os

import numpy as np
import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training/e2e checks")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_unit_image(rng, channels=3, size=32):
    """Float image in [0, 1], channel-first."""
    return rng.random((channels, size, size), dtype=np.float64)


TINY_SIZE = 32


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """One-step training run at 32px: (checkpoint path, dataset dir, config).

    Shared by the CLI, service, and acceptance suites so the checkpoint is
    built once.
    """
    from scat_inpaint.data import save_unit_image, signed_to_unit, synthetic_textures
    from scat_inpaint.losses import LossWeights
    from scat_inpaint.networks import NetworkSettings
    from scat_inpaint.trainer import TrainConfig, fit

    root = tmp_path_factory.mktemp("tiny_run")
    data_dir = root / "data"
    os.makedirs(data_dir)
    for i, img in enumerate(synthetic_textures(4, TINY_SIZE, seed=3)):
        save_unit_image(signed_to_unit(img), str(data_dir / f"img_{i:03d}.png"))
    config = TrainConfig(
        dataset_dir=str(data_dir),
        out_dir=str(root / "run"),
        image_size=TINY_SIZE,
        batch_size=2,
        max_steps=1,
        networks=NetworkSettings(
            generator_base=2,
            generator_blocks=1,
            dilation_rates=(1, 2, 4, 8),
            discriminator_base=4,
            discriminator_taps=3,
            segmentation_base=4,
            segmentation_depth=2,
        ),
        loss_weights=LossWeights(num_negatives_m=2),
        seed=0,
        checkpoint_every=0,
        log_every=1,
    )
    fit(config)
    return os.path.join(config.out_dir, "checkpoint.pt"), str(data_dir), config
