import numpy as np
import pytest
from scipy.stats import special_ortho_group

from src.manifolds import ManifoldSpec, PointCloud, analytic_sphere_coords, sample
from src.neighbors import build_graph
from src.tangent import (
    KernelSpec,
    local_dimension,
    local_pca,
    lower_median,
    subspace_angles,
    weighted_svd,
)
from src.utils import ConfigError, DataError


class TestKernels:
    def test_gaussian5(self):
        k = KernelSpec.named("gaussian5")
        np.testing.assert_allclose(k.evaluate(np.array([0.0, 0.5, 1.0, 1.5])),
                                   [1.0, np.exp(-1.25), np.exp(-5.0), 0.0])

    def test_epanechnikov(self):
        k = KernelSpec.named("epanechnikov")
        np.testing.assert_allclose(k.evaluate(np.array([0.0, 0.5, 1.0, 2.0])), [1.0, 0.75, 0.0, 0.0])

    def test_unknown_names(self):
        with pytest.raises(ConfigError):
            KernelSpec.named("cosine")
        with pytest.raises(ConfigError):
            KernelSpec(kind="box")


def test_local_dimension_uses_cumulative_energy():
    assert local_dimension(np.array([1.0, 1.0, 0.01]), 0.9) == 2
    assert local_dimension(np.array([1.0, 0.1, 0.1]), 0.9) == 1
    assert local_dimension(np.array([1.0, 1.0, 1.0]), 0.9) == 3


def test_lower_median():
    assert lower_median(np.array([1, 2, 2, 3])) == 2
    assert lower_median(np.array([1, 2])) == 1
    assert lower_median(np.array([3, 1, 2])) == 2
    with pytest.raises(DataError):
        lower_median(np.array([], dtype=int))


def test_weighted_svd_matches_covariance_eigenvalues(rng):
    neighbors = rng.standard_normal((12, 4))
    center = rng.standard_normal(4)
    distances = np.linalg.norm(neighbors - center, axis=1)
    radius = distances.max() * 1.1
    kernel = KernelSpec()
    s, u = weighted_svd(neighbors, center, distances, radius, kernel)

    b = (neighbors - center).T * np.sqrt(kernel.evaluate(distances / radius))
    eigenvalues = np.sort(np.linalg.eigvalsh(b @ b.T))[::-1]
    np.testing.assert_allclose(s[:4], np.sqrt(np.clip(eigenvalues, 0, None)), atol=1e-8)
    assert np.all(s[4:] == 0)
    np.testing.assert_allclose(u.T @ u, np.eye(4), atol=1e-12)


def test_frames_follow_the_sphere_tangent_planes():
    cloud = sample(ManifoldSpec(kind="sphere", n=2000, seed=3))
    graph = build_graph(cloud, np.sqrt(0.1))
    report, frames = local_pca(cloud, graph, KernelSpec(), gamma=0.9)
    assert report.global_dim == 2
    assert frames.orthonormality_error() < 1e-12
    angles = subspace_angles(frames, analytic_sphere_coords(cloud))
    assert np.mean(angles < 0.2) >= 0.99


def test_fixed_dimension_overrides_the_estimate():
    cloud = sample(ManifoldSpec(kind="sphere", n=500, seed=3))
    graph = build_graph(cloud, np.sqrt(0.2))
    report, frames = local_pca(cloud, graph, KernelSpec(), fixed_dim=3, threads=2)
    assert report.global_dim == 2
    assert frames.dim == 3


def test_dimension_of_a_line():
    cloud = sample(ManifoldSpec(kind="interval", n=2000, sampling="grid"))
    graph = build_graph(cloud, np.sqrt(2000.0 ** -1))
    report, _ = local_pca(cloud, graph, KernelSpec())
    assert report.global_dim == 1


@pytest.mark.slow
def test_dimension_of_the_torus():
    cloud = sample(ManifoldSpec(kind="torus2", n=2000, seed=9))
    graph = build_graph(cloud, np.sqrt(0.25))
    assert not graph.isolated().size
    report, _ = local_pca(cloud, graph, KernelSpec())
    assert report.global_dim == 2


@pytest.mark.slow
def test_dimension_of_the_three_sphere():
    cloud = sample(ManifoldSpec(kind="sphere", d=3, n=4000, seed=3))
    report, frames = local_pca(cloud, build_graph(cloud, np.sqrt(0.2)), KernelSpec(), threads=4)
    assert report.global_dim == 3
    assert frames.dim == 3


def test_frames_rotate_with_the_cloud():
    cloud = sample(ManifoldSpec(kind="sphere", n=500, seed=12))
    rotation = special_ortho_group.rvs(3, random_state=4)
    turned = PointCloud(points=cloud.points @ rotation.T)
    _, frames = local_pca(cloud, build_graph(cloud, np.sqrt(0.2)), KernelSpec(), fixed_dim=2)
    _, moved = local_pca(turned, build_graph(turned, np.sqrt(0.2)), KernelSpec(), fixed_dim=2)

    projector = np.einsum("npd,nqd->npq", frames.bases, frames.bases)
    expected = np.einsum("ab,nbc,dc->nad", rotation, projector, rotation)
    actual = np.einsum("npd,nqd->npq", moved.bases, moved.bases)
    assert np.max(np.linalg.norm(actual - expected, axis=(1, 2))) < 1e-8


def test_coplanar_points_in_r5(rng):
    plane = special_ortho_group.rvs(5, random_state=7)[:, :2]
    points = rng.uniform(0.0, 1.0, size=(300, 2)) @ plane.T + 0.5
    cloud = PointCloud(points=points)
    report, frames = local_pca(cloud, build_graph(cloud, 0.3), KernelSpec())

    assert np.all(report.local_dims == 2)
    assert report.global_dim == 2
    for s in report.singular_values:
        assert s[2] <= 1e-10 * s[0]
    projector = plane @ plane.T
    np.testing.assert_allclose(np.einsum("npd,nqd->npq", frames.bases, frames.bases),
                               np.broadcast_to(projector, (300, 5, 5)), atol=1e-10)


def test_empty_neighborhood_names_the_point():
    cloud = PointCloud(points=np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [9.0, 9.0]]))
    with pytest.raises(DataError, match="Point 3"):
        local_pca(cloud, build_graph(cloud, 0.5), KernelSpec())


def test_too_few_neighbors_for_the_frame():
    cloud = PointCloud(points=np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [5.0, 0.0, 0.0],
                                        [5.1, 0.0, 0.0], [5.0, 0.1, 0.0]]))
    with pytest.raises(DataError, match="fewer than the frame dimension"):
        local_pca(cloud, build_graph(cloud, 0.5), KernelSpec(), fixed_dim=2)


def test_gamma_range():
    cloud = sample(ManifoldSpec(kind="sphere", n=50))
    with pytest.raises(ConfigError):
        local_pca(cloud, build_graph(cloud, 0.5), KernelSpec(), gamma=1.0)
