import numpy as np
import pytest

from src.alignment import align_frames, regauge
from src.spectral import (
    Spectrum,
    detect_multiplicities,
    eigensolve,
    group_eigenvalues,
    order_by_magnitude,
    repair_degeneracy,
    repair_eigenvalues,
)
from src.tangent import KernelSpec
from src.utils import ConfigError, DataError
from src.vdm_operator import build

from tests.helpers import cycle_alignment_graph, random_alignment_graph, random_orthogonal, two_node_graph


def dense_top(op, m):
    values, vectors = np.linalg.eigh(op.to_dense())
    order = order_by_magnitude(values)[:m]
    return values[order], vectors[:, order]


def test_two_node_spectrum():
    spec = eigensolve(build(two_node_graph(2)), 4)
    np.testing.assert_allclose(np.sort(spec.values), [-1.0, -1.0, 1.0, 1.0], atol=1e-14)
    assert spec.values[0] > 0


def test_ordering_by_magnitude():
    assert order_by_magnitude(np.array([0.5, -0.5, 0.9, -0.1])).tolist() == [2, 0, 1, 3]


@pytest.mark.parametrize("dense_max", [10_000, 0])
def test_top_eigenvalues_match_dense(dense_max):
    op = build(random_alignment_graph(45, 2, seed=3, extra_edges=120), 1.0)
    spec = eigensolve(op, 10, seed=1, dense_max=dense_max)
    expected, _ = dense_top(op, 10)
    np.testing.assert_allclose(spec.values, expected, atol=1e-8)
    assert spec.residuals.max() < 1e-8
    np.testing.assert_allclose(spec.vectors.T @ spec.vectors, np.eye(10), atol=1e-8)


def test_right_vectors_are_eigenvectors_of_the_averaging_operator():
    op = build(random_alignment_graph(30, 3, seed=4, extra_edges=60), 1.0)
    spec = eigensolve(op, 6)
    right = spec.right_vectors()
    np.testing.assert_allclose(op.apply_avg(right), right * spec.values, atol=1e-10)
    assert spec.vector_field(0).shape == (30, 3)


def test_m_range():
    op = build(two_node_graph(2))
    with pytest.raises(ConfigError):
        eigensolve(op, 0)
    with pytest.raises(ConfigError):
        eigensolve(op, 5)


def test_group_eigenvalues():
    profile = group_eigenvalues([1.0, 0.999, 0.998, 0.9, 0.895, -0.95], tau=0.01)
    assert profile.sizes == [3, 2]
    assert profile.groups[0][0] == 1.0


def test_group_eigenvalues_errors():
    with pytest.raises(DataError):
        group_eigenvalues([], 0.01)
    with pytest.raises(ConfigError):
        group_eigenvalues([1.0], 0.0)


def test_exact_degeneracy_on_a_flat_cycle():
    # S~ = (normalized cycle adjacency) x I_2: eigenvalue cos(2 pi k / 12), doubled by k <-> 12 - k
    op = build(cycle_alignment_graph(12, 2, identity=True))
    spec = eigensolve(op, 12)
    assert detect_multiplicities(spec, 0.01).sizes == [2, 4]


def test_repair_eigenvalues():
    values = np.array([0.9, 0.89, 0.88, 0.7, 0.69])
    np.testing.assert_allclose(repair_eigenvalues(values, [1, 2]), [0.9, 0.89, 0.89, 0.7, 0.69])
    with pytest.raises(DataError):
        repair_eigenvalues(values, [3, 3])
    with pytest.raises(ConfigError):
        repair_eigenvalues(values, [0])


def test_repair_degeneracy_leaves_the_original_alone():
    spec = Spectrum(values=np.array([1.0, 0.95, 0.9]), vectors=np.eye(3), degrees=np.ones(3), d=1)
    repaired = repair_degeneracy(spec, [1, 2])
    np.testing.assert_allclose(repaired.values, [1.0, 0.95, 0.95])
    np.testing.assert_allclose(spec.values, [1.0, 0.95, 0.9])
    assert repaired.vectors is spec.vectors


def test_repair_degeneracy_is_idempotent():
    spec = Spectrum(values=np.array([1.0, 0.97, 0.96, 0.8, 0.78, 0.77]), vectors=np.eye(6),
                    degrees=np.ones(6), d=1)
    once = repair_degeneracy(spec, [1, 2, 3])
    twice = repair_degeneracy(once, [1, 2, 3])
    np.testing.assert_array_equal(twice.values, once.values)
    np.testing.assert_array_equal(once.values, [1.0, 0.97, 0.97, 0.8, 0.8, 0.8])


def test_to_dict_includes_groups():
    spec = Spectrum(values=np.array([1.0, 0.999, 0.5]), vectors=np.eye(3), degrees=np.ones(3), d=1,
                    residuals=np.zeros(3))
    out = spec.to_dict(detect_multiplicities(spec, 0.01))
    assert out["eigenvalues"] == [1.0, 0.999, 0.5]
    assert out["groups"] == [[1.0, 2], [0.5, 1]]


def test_eigenvalues_are_gauge_invariant(sphere_pipeline, rng):
    p = sphere_pipeline.params
    moved = regauge(sphere_pipeline.frames, random_orthogonal(rng, sphere_pipeline.cloud.n, 2))
    agraph = align_frames(moved, sphere_pipeline.graph, KernelSpec.named(p.weight_kernel))
    spec = eigensolve(build(agraph, p.alpha), sphere_pipeline.spectrum.m)
    np.testing.assert_allclose(spec.values, sphere_pipeline.spectrum.values, rtol=1e-8)
