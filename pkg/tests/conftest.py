import numpy as np
import pytest

from hsrfusion import SceneConfig, build_spatial_response


def desk_scene_config(seed, **overrides):
    """The desk-scale scene family used across the suite: 50 SR bands,
    6 MS bands, 6 materials on a 16x16 grid decimated by 2 with a
    non-overlapping box kernel."""
    params = dict(
        sr_bands=50, ms_bands=6, materials=6, width=16, height=16,
        factor=2, max_support=3, kernel="uniform", kernel_size=2,
        seed=seed, require_dominance=False,
    )
    params.update(overrides)
    return SceneConfig(**params)


@pytest.fixture(scope="session")
def desk_spatial():
    return build_spatial_response(16, 16, kernel="uniform", kernel_size=2, factor=2)


def random_simplex_columns(rng, rows, cols):
    v = rng.exponential(size=(rows, cols))
    return v / v.sum(axis=0, keepdims=True)
