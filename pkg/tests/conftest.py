import numpy as np
import pytest

from stylealign import data
from stylealign.model import init_model


@pytest.fixture(scope="session")
def small_dataset():
    cfg = data.SyntheticConfig(
        n_clusters=8, clips_per_cluster=5, d_s=12, d_t=10, noise_sigma=0.3,
        captions_per_clip=3,
    )
    return data.generate_synthetic(cfg, seed=7)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def random_unit_rows(rng, n, d):
    M = rng.normal(size=(n, d))
    return M / np.linalg.norm(M, axis=1, keepdims=True)


def jittered_model(d_in_s, d_in_t, d, hidden, seed):
    """Init model with small random biases so no projection row degenerates."""
    rng = np.random.default_rng([seed, 99])
    model = init_model(d_in_s, d_in_t, d=d, hidden=hidden, seed=seed)
    for head in (model.speech_head, model.text_head):
        head.b1 += 0.1 * rng.normal(size=head.b1.shape)
        head.b2 += 0.1 * rng.normal(size=head.b2.shape)
    return model
