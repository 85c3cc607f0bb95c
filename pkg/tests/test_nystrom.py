import numpy as np
import pytest

from src.config import PipelineParams
from src.manifolds import ManifoldSpec, PointCloud, sample
from src.nystrom import ExtensionConfig, NystromExtender, SampledVectorField, extend_field
from src.pipeline import VDMPipeline
from src.utils import ConfigError, DataError


def z_gradient(points: np.ndarray) -> np.ndarray:
    """Tangential part of e_z on the unit sphere."""
    e_z = np.array([0.0, 0.0, 1.0])
    return e_z - points[:, 2:3] * points


def random_sphere_point(rng) -> np.ndarray:
    y = rng.standard_normal(3)
    return y / np.linalg.norm(y)


@pytest.fixture(scope="module")
def extender(sphere_pipeline):
    return sphere_pipeline.extender()


def test_config_checks():
    with pytest.raises(ConfigError):
        ExtensionConfig(eps=0.3, eps_pca=0.1, delta=0.0)
    with pytest.raises(ConfigError):
        ExtensionConfig(eps=-1.0, eps_pca=0.1)


def test_in_sample_points_reproduce_the_eigenvectors(sphere_pipeline, extender):
    right = sphere_pipeline.spectrum.right_vectors().reshape(600, 2, -1)
    for i in (0, 17, 311, 599):
        extended = extender.extend_eigenvectors(sphere_pipeline.cloud.points[i])
        np.testing.assert_allclose(extended, right[i][:, extender.retained], atol=1e-10)
    l = int(extender.retained[3])
    np.testing.assert_allclose(extender.extend_eigenvector(sphere_pipeline.cloud.points[5], l),
                               right[5][:, l], atol=1e-10)


def test_extension_is_linear_and_tangent(sphere_pipeline, extender, rng):
    spec, frames = sphere_pipeline.spectrum, sphere_pipeline.frames
    f = SampledVectorField.from_blocks(rng.standard_normal(spec.n * spec.d), spec)
    g = SampledVectorField.from_ambient(frames, z_gradient(sphere_pipeline.cloud.points), spec)
    combined = SampledVectorField.from_blocks(2.0 * f.coefficients - 3.0 * g.coefficients, spec)
    y = random_sphere_point(rng)

    out = extender.extend(combined, y)
    np.testing.assert_allclose(out, 2.0 * extender.extend(f, y) - 3.0 * extender.extend(g, y), atol=1e-10)
    frame = extender.local_frame(y)
    np.testing.assert_allclose(out - frame @ (frame.T @ out), 0.0, atol=1e-12)


def test_module_function_matches_the_extender(sphere_pipeline, extender, rng):
    p = sphere_pipeline
    field = SampledVectorField.from_ambient(p.frames, z_gradient(p.cloud.points), p.spectrum)
    y = random_sphere_point(rng)
    expected = extender.extend(field, y)
    np.testing.assert_allclose(extend_field(p.cloud, p.frames, p.agraph, p.spectrum, field, y, extender.cfg),
                               expected, atol=1e-12)
    many = extender.extend_many(field, np.vstack([y, y]), threads=2)
    np.testing.assert_allclose(many, np.vstack([expected, expected]), atol=1e-12)


def test_cutoff_above_the_spectrum(sphere_pipeline):
    p = sphere_pipeline
    cfg = ExtensionConfig(eps=p.params.eps, eps_pca=p.params.eps_pca, delta=1.5)
    with pytest.raises(DataError, match="delta=1.5"):
        NystromExtender(p.cloud, p.frames, p.agraph, p.spectrum, cfg)


def test_unretained_eigenvector(sphere_pipeline):
    p = sphere_pipeline
    cutoff = 0.5 * (abs(p.spectrum.values[0]) + abs(p.spectrum.values[-1]))
    cfg = ExtensionConfig(eps=p.params.eps, eps_pca=p.params.eps_pca, delta=cutoff)
    ext = NystromExtender(p.cloud, p.frames, p.agraph, p.spectrum, cfg)
    with pytest.raises(DataError, match="not retained"):
        ext.extend_eigenvector(p.cloud.points[0], p.spectrum.m - 1)


def test_far_queries_are_rejected(extender):
    with pytest.raises(DataError, match="PCA neighbors"):
        extender.extend_eigenvectors(np.array([10.0, 0.0, 0.0]))
    with pytest.raises(DataError, match="dimension"):
        extender.extend_many(SampledVectorField(np.zeros(1), np.zeros(1)), np.zeros((2, 2)))


def test_field_shape_is_checked(sphere_pipeline):
    with pytest.raises(DataError):
        SampledVectorField.from_blocks(np.zeros(7), sphere_pipeline.spectrum)
    with pytest.raises(DataError):
        SampledVectorField.from_ambient(sphere_pipeline.frames, np.zeros((600, 2)), sphere_pipeline.spectrum)


# regression bound on the median relative error at 5% held-out points
HELD_OUT_MEDIAN_BOUND = 0.15


@pytest.mark.slow
def test_held_out_points_recover_a_smooth_field(record_property):
    cloud = sample(ManifoldSpec(kind="sphere", n=2000, seed=11))
    held = np.random.default_rng(0).choice(cloud.n, size=cloud.n // 20, replace=False)
    train = np.setdiff1d(np.arange(cloud.n), held)

    pipeline = VDMPipeline(PipelineParams(eps_pca=0.1, dim=2, n_eigs=40, seed=0))
    pipeline.fit(PointCloud(points=cloud.points[train]))
    truth = z_gradient(cloud.points)
    field = SampledVectorField.from_ambient(pipeline.frames, truth[train], pipeline.spectrum)
    estimates = pipeline.extender().extend_many(field, cloud.points[held], threads=4)

    errors = np.linalg.norm(estimates - truth[held], axis=1) / np.linalg.norm(truth[held], axis=1)
    record_property("held_out_median_error", float(np.median(errors)))
    assert np.median(errors) < HELD_OUT_MEDIAN_BOUND
