"""Shared fixtures: tiny configurations and the --runslow switch"""

import pytest
import torch

from tokgen_module.harness.config import RunConfig
from tokgen_module.seqcodec.layout import layout_build
from tokgen_module.tokenizer.config import TokenizerConfig
from tokgen_module.tokenizer.model import DualViTok
from tokgen_module.unilm.config import ModelConfig
from tokgen_module.unilm.model import UnifiedLM


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tiny_tok_config():
    return TokenizerConfig.tiny()


@pytest.fixture
def tiny_tokenizer(tiny_tok_config):
    torch.manual_seed(0)
    return DualViTok(tiny_tok_config)


@pytest.fixture
def tiny_images():
    g = torch.Generator().manual_seed(0)
    return torch.rand(2, 3, 16, 16, generator=g)


@pytest.fixture
def tiny_layout():
    cfg = TokenizerConfig.tiny()
    return ModelConfig.tiny().layout_for(cfg.sem_codebook_size, cfg.pix_codebook_size, cfg.pixel_ratio)


@pytest.fixture
def small_layout():
    """Hand-sized layout: T=10, K_s=5, K_p=6, up to 4x4 semantic cells."""
    return layout_build(10, 5, 6, 4, 4)


@pytest.fixture
def tiny_lm(tiny_layout):
    torch.manual_seed(0)
    return UnifiedLM(ModelConfig.tiny(), tiny_layout)


@pytest.fixture
def tiny_run_config(tmp_path):
    return RunConfig.tiny(output_dir=str(tmp_path / "run"))
