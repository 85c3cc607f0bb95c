import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.alignment import SINGULAR_TOLERANCE, AlignmentGraph, closest_orthogonal
from src.manifolds import PointCloud
from src.neighbors import PointIndex
from src.spectral import Spectrum
from src.tangent import KernelSpec, TangentFrames, weighted_svd
from src.utils import ConfigError, DataError, NumericalError, parallel_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExtensionConfig:
    """
    Parameters of the out-of-sample extension.

    Args:
        eps: Alignment scale used for the query's weighted sums
        eps_pca: Local PCA scale used for the query's frame
        delta: Eigenvectors with |lambda| <= delta are not extended
    """
    eps: float
    eps_pca: float
    delta: float = 0.05
    pca_kernel: KernelSpec = field(default_factory=KernelSpec)
    weight_kernel: KernelSpec = field(default_factory=KernelSpec)

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError(f"Extension delta must be positive, got {self.delta}")
        if not (self.eps > 0 and self.eps_pca > 0):
            raise ConfigError("eps and eps_pca must be positive")


@dataclass
class SampledVectorField:
    """
    A tangent vector field observed on the sample.

    `coefficients` is the block vector x with x(i) = O_i^T X(x_i);
    `spectral` holds its coordinates a_l in the right eigenvector basis
    w_l of D^-1 S, a_l = v_l^T D^(1/2) x.
    """
    coefficients: np.ndarray
    spectral: np.ndarray

    @classmethod
    def from_blocks(cls, x: np.ndarray, spec: Spectrum) -> "SampledVectorField":
        x = np.asarray(x, dtype=float).ravel()
        if x.size != spec.n * spec.d:
            raise DataError(f"Field has {x.size} entries, expected n*d = {spec.n * spec.d}")
        weighted = x * np.repeat(np.sqrt(spec.degrees), spec.d)
        spectral = spec.vectors.T @ weighted
        if not np.all(np.isfinite(spectral)):
            raise DataError("Field has non-finite spectral coefficients")
        return cls(coefficients=x, spectral=spectral)

    @classmethod
    def from_ambient(cls, frames: TangentFrames, vectors: np.ndarray,
                     spec: Spectrum) -> "SampledVectorField":
        """Project ambient vectors (n, p) onto the frames and expand."""
        vectors = np.asarray(vectors, dtype=float)
        if vectors.shape != (frames.n, frames.ambient_dim):
            raise DataError(f"Ambient field has shape {vectors.shape}, "
                            f"expected {(frames.n, frames.ambient_dim)}")
        x = np.einsum("npd,np->nd", frames.bases, vectors)
        return cls.from_blocks(x, spec)


class NystromExtender:
    """
    Extends eigenvector fields, and fields expanded in them, to new points.

    Preprocessing (KD-tree, right eigenvectors, density scaling) happens
    once; every query only touches the sample points near it.
    """

    def __init__(self, cloud: PointCloud, frames: TangentFrames, agraph: AlignmentGraph,
                 spec: Spectrum, cfg: ExtensionConfig):
        if not (cloud.n == frames.n == agraph.n == spec.n):
            raise DataError("Cloud, frames, alignment graph and spectrum disagree on n")
        self.cloud = cloud
        self.frames = frames
        self.spec = spec
        self.cfg = cfg
        self.index = PointIndex(cloud)
        self.retained = np.flatnonzero(np.abs(spec.values) > cfg.delta)
        if self.retained.size == 0:
            raise DataError(f"No eigenvalue exceeds the extension cutoff delta={cfg.delta}")
        self.density_scale = agraph.degrees ** (-spec.alpha)
        self.right = spec.right_vectors().reshape(spec.n, spec.d, spec.m)
        logger.info("Nystrom extender: %d of %d eigenvectors retained (delta=%.3g)",
                    self.retained.size, spec.m, cfg.delta)

    @property
    def d(self) -> int:
        return self.frames.dim

    def local_frame(self, y: np.ndarray) -> np.ndarray:
        """O_y from local PCA over the sample neighbors of y."""
        y = np.asarray(y, dtype=float)
        same = self.index.coincident(y)
        if same >= 0:
            return self.frames.bases[same]
        radius = math.sqrt(self.cfg.eps_pca)
        idx, dist = self.index.query(y, radius)
        if idx.size < self.d:
            raise DataError(f"Query point has {idx.size} PCA neighbors, needs at least {self.d}")
        _, u = weighted_svd(self.cloud.points[idx], y, dist, radius, self.cfg.pca_kernel)
        return u[:, :self.d]

    def _extend_basis(self, y: np.ndarray, frame: np.ndarray) -> np.ndarray:
        radius = math.sqrt(self.cfg.eps)
        idx, dist = self.index.query(y, radius)
        weights = self.cfg.weight_kernel.evaluate(dist / radius) * self.density_scale[idx]
        keep = weights > 0
        idx, weights = idx[keep], weights[keep]
        if idx.size == 0:
            raise DataError("Query point has no sample neighbor within sqrt(eps)")
        overlap = np.einsum("pa,jpb->jab", frame, self.frames.bases[idx])
        transforms, singular = closest_orthogonal(overlap)
        if np.any(singular[:, -1] < SINGULAR_TOLERANCE):
            j = int(idx[np.flatnonzero(singular[:, -1] < SINGULAR_TOLERANCE)[0]])
            raise NumericalError(f"Query frame is nearly orthogonal to the frame of point {j}")
        kept = self.retained
        averaged = np.einsum("j,jab,jbl->al", weights, transforms, self.right[idx][:, :, kept])
        return averaged / (weights.sum() * self.spec.values[kept])

    def extend_eigenvectors(self, y: np.ndarray) -> np.ndarray:
        """Extensions of all retained w_l at y as a (d, m(delta)) array in O_y coordinates."""
        y = np.asarray(y, dtype=float)
        return self._extend_basis(y, self.local_frame(y))

    def extend_eigenvector(self, y: np.ndarray, l: int) -> np.ndarray:
        position = np.flatnonzero(self.retained == l)
        if position.size == 0:
            raise DataError(f"Eigenvector {l} is not retained at delta={self.cfg.delta}")
        return self.extend_eigenvectors(y)[:, int(position[0])]

    def extend(self, vector_field: SampledVectorField, y: np.ndarray) -> np.ndarray:
        """Ambient estimate O_y sum_l a_l w~_l(y) of the field at y."""
        y = np.asarray(y, dtype=float)
        frame = self.local_frame(y)
        extended = self._extend_basis(y, frame) @ vector_field.spectral[self.retained]
        return frame @ extended

    def extend_many(self, vector_field: SampledVectorField, queries: np.ndarray,
                    threads: int = 1) -> np.ndarray:
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        if queries.shape[1] != self.cloud.ambient_dim:
            raise DataError(f"Queries have dimension {queries.shape[1]}, "
                            f"expected {self.cloud.ambient_dim}")
        rows = parallel_map(lambda y: self.extend(vector_field, y), list(queries), threads)
        return np.vstack(rows) if rows else np.zeros((0, self.cloud.ambient_dim))


def extend_field(cloud: PointCloud, frames: TangentFrames, agraph: AlignmentGraph,
                 spec: Spectrum, vector_field: SampledVectorField, y: np.ndarray,
                 cfg: ExtensionConfig, extender: Optional[NystromExtender] = None) -> np.ndarray:
    """
    Extend a sampled vector field to the ambient point y.

    Returns:
        Ambient vector of length p lying in span(O_y)
    """
    extender = extender or NystromExtender(cloud, frames, agraph, spec, cfg)
    return extender.extend(vector_field, y)
