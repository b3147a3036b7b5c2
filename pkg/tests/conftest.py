import os

import numpy as np
import pytest
from scipy import ndimage

from src.domain.models.mapping_models import DocumentImage
from src.domain.models.run_config import NetConfig, RunConfig
from src.infrastructure.corpus_generator import generate_corpus
from src.infrastructure.dataset_store import save_image, write_dataset


def pytest_collection_modifyitems(config, items):
    if os.getenv("DVD_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="slow; set DVD_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def textured_image(size=128, seed=0, sigma=2.0, channels=1):
    """Smooth random texture in [0.1, 0.9]; rich enough for dense flow."""
    rng = np.random.default_rng(seed)
    planes = []
    for _ in range(channels):
        noise = ndimage.gaussian_filter(rng.random((size, size)), sigma)
        noise = (noise - noise.min()) / (noise.max() - noise.min())
        planes.append(0.1 + 0.8 * noise)
    return DocumentImage(np.stack(planes, axis=-1))


def put_image(path, seed=0, size=32):
    path.parent.mkdir(parents=True, exist_ok=True)
    save_image(textured_image(size=size, seed=seed), path)
    return path


@pytest.fixture
def texture():
    return textured_image()


@pytest.fixture
def tiny_net():
    return NetConfig(latent_size=8, dim=16, n_ceb=1, n_fgb=1, n_heads=2,
                     time_dim=16, feat_dim=8, input_size=32)


@pytest.fixture
def tiny_config(tiny_net):
    return RunConfig.model_validate({
        "seed": 3,
        "net": tiny_net.model_dump(),
        "schedule": {"T": 20},
        "training": {"batch_size": 2, "updates": 2, "rollout_steps": 2, "log_every": 1, "ckpt_every": 1},
        "sampling": {"steps": 2, "dual_hypothesis": False},
        "eval": {"text_backend": "none"},
        "synth": {"count": 6, "size": 64},
    })


@pytest.fixture(scope="session")
def small_records():
    return generate_corpus(count=6, size=64, latent_size=8, seed=11)


@pytest.fixture
def dataset_dir(tmp_path, small_records):
    root = tmp_path / "corpus"
    write_dataset(small_records, root, latent_size=8, seed=11, extra={"config_hash": "c0ffee00c0ffee00"})
    return root
