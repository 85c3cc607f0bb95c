import numpy as np
import pytest

from src.config import PipelineParams
from src.manifolds import ManifoldSpec
from src.pipeline import VDMPipeline


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sphere_pipeline():
    """A fitted pipeline on 600 points of S^2."""
    pipeline = VDMPipeline(PipelineParams(eps_pca=0.1, dim=2, seed=0))
    pipeline.sample(ManifoldSpec(kind="sphere", n=600, seed=7))
    pipeline.fit()
    return pipeline
