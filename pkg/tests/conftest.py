import numpy as np
import pytest

from chartcomp.charting import Chart
from chartcomp.datagen import ArrayGeometry, Rect, SceneConfig, SplitCounts, build_scene, generate_dataset
from chartcomp.model import ModelConfig, init_model


def small_scene_config(seed=11, scatterers=8, subcarriers=8):
    return SceneConfig(carrier_frequency=3e7, bandwidth=2e7, subcarrier_count=subcarriers,
                       area=Rect(0.0, 0.0, 20.0, 20.0), scatterer_count=scatterers,
                       bs_position=(-40.0, 10.0), rng_seed=seed)


def random_channels(rng, dim, n):
    return rng.normal(size=(dim, n)) + 1j * rng.normal(size=(dim, n))


def tiny_model(seed, D=8, N=5, d=2, F=4, T=6, n_out=4, batch=3, sigma_B=0.7):
    """Randomized miniature model plus a channel batch, for gradient checks."""
    rng = np.random.default_rng(seed)
    cal = random_channels(rng, D, N)
    chart = Chart(Z=rng.normal(size=(d, N)))
    cfg = ModelConfig(d=d, F=F, T=T, sigma_B=sigma_B, target_subcarrier=0, rng_seed=seed)
    enc, dec = init_model(cfg, chart, cal, n_out=n_out)
    H = random_channels(rng, D, batch)
    targets = H[:n_out, :]
    return enc, dec, H, targets


@pytest.fixture(scope="session")
def los_dataset():
    """Small line-of-sight dataset shared by training-path tests."""
    scene = build_scene(small_scene_config(seed=17, scatterers=0))
    return generate_dataset(scene, ArrayGeometry(antenna_count=8),
                            SplitCounts(calibration=80, train=200, test=80),
                            placement="uniform")
