import numpy as np
import pytest
import torch

from cinediff.kspace import make_mask, undersample
from cinediff.phantom import PhantomSpec, generate_phantom

torch.set_num_threads(2)


@pytest.fixture(scope="session")
def small_phantom():
    return generate_phantom(PhantomSpec(seed=3, n_frames=4, height=16, width=16, cardiac_period=4, n_ellipses=3))


@pytest.fixture(scope="session")
def small_kspace(small_phantom):
    mask = make_mask(4, 16, 4.0, center_lines=2, seed=5)
    return undersample(small_phantom, mask)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
