import numpy as np
import pytest
import torch

from avtse.network import NetworkConfig


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)


@pytest.fixture
def tiny_cfg() -> NetworkConfig:
    return NetworkConfig(
        k=8,
        d_audio=12,
        d_visual=10,
        d=6,
        r=2,
        recurrent_hidden=5,
        win=16,
        hop=8,
        visual_mode="oracle",
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
