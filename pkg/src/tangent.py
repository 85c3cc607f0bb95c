import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import subspace_angles as scipy_subspace_angles
from scipy.linalg import svd

from src.manifolds import PointCloud
from src.neighbors import NeighborGraph
from src.utils import ConfigError, DataError, chunked, parallel_map

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-12
_CHUNK = 256


@dataclass(frozen=True)
class KernelSpec:
    """
    Kernel K supported on [0, 1].

    Args:
        kind: "epanechnikov" for K(u) = 1 - u^2, or "gaussian_truncated"
            for K(u) = exp(-a u^2)
        a: Decay rate of the truncated Gaussian
    """
    kind: str = "gaussian_truncated"
    a: float = 5.0

    def __post_init__(self):
        if self.kind not in ("epanechnikov", "gaussian_truncated"):
            raise ConfigError(f"Unknown kernel kind: {self.kind!r}")
        if self.kind == "gaussian_truncated" and not self.a > 0:
            raise ConfigError(f"Gaussian decay must be positive, got {self.a}")

    @classmethod
    def named(cls, name: str) -> "KernelSpec":
        if name == "epanechnikov":
            return cls(kind="epanechnikov")
        if name == "gaussian5":
            return cls(kind="gaussian_truncated", a=5.0)
        raise ConfigError(f"Unknown kernel name: {name!r}")

    def evaluate(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        inside = (u >= 0.0) & (u <= 1.0)
        if self.kind == "epanechnikov":
            values = 1.0 - u * u
        else:
            values = np.exp(-self.a * u * u)
        return np.where(inside, values, 0.0)


@dataclass
class LocalPcaReport:
    """Per-point spectra of B_i and the resulting dimension estimates."""
    singular_values: List[np.ndarray]
    neighbor_counts: np.ndarray
    local_dims: np.ndarray
    global_dim: int
    gamma: float


@dataclass
class TangentFrames:
    """Per-point p x d orthonormal bases, stacked as an (n, p, d) array."""
    bases: np.ndarray

    @property
    def n(self) -> int:
        return self.bases.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.bases.shape[1]

    @property
    def dim(self) -> int:
        return self.bases.shape[2]

    def orthonormality_error(self) -> float:
        gram = np.einsum("npi,npj->nij", self.bases, self.bases)
        return float(np.max(np.abs(gram - np.eye(self.dim)))) if self.n else 0.0


def weighted_svd(neighbors: np.ndarray, center: np.ndarray, distances: np.ndarray,
                 radius: float, kernel: KernelSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    SVD of B = X D, where X holds the neighbors shifted by `center` and
    D = diag(sqrt(K(dist / radius))). The covariance B B^T is never formed.

    Returns:
        Singular values padded with zeros to the neighbor count, and the
        left singular vectors as a (p, min(p, N)) array
    """
    weights = np.sqrt(kernel.evaluate(distances / radius))
    b = (neighbors - center).T * weights
    u, s, _ = svd(b, full_matrices=False, check_finite=False)
    s = np.where(s < RANK_TOLERANCE * s[0], 0.0, s) if s.size and s[0] > 0 else s
    padded = np.zeros(neighbors.shape[0])
    padded[:s.size] = s
    return padded, u


def local_dimension(singular_values: np.ndarray, gamma: float) -> int:
    """Smallest d with sum_{j<=d} s_j^2 / sum_j s_j^2 > gamma."""
    energy = singular_values ** 2
    total = energy.sum()
    if total <= 0:
        return 1
    explained = np.cumsum(energy) / total
    above = np.flatnonzero(explained > gamma)
    d = int(above[0]) + 1 if above.size else int(np.count_nonzero(energy))
    return max(1, d)


def estimate_dimension(report: LocalPcaReport) -> int:
    """Lower median of the local dimensions."""
    return lower_median(report.local_dims)


def lower_median(values: np.ndarray) -> int:
    ordered = np.sort(np.asarray(values, dtype=int))
    if ordered.size == 0:
        raise DataError("Cannot take the median of an empty set of local dimensions")
    return int(ordered[(ordered.size + 1) // 2 - 1])


def local_pca(cloud: PointCloud, graph: NeighborGraph, kernel: KernelSpec,
              gamma: float = 0.9, fixed_dim: Optional[int] = None,
              threads: int = 1) -> Tuple[LocalPcaReport, TangentFrames]:
    """
    Estimate tangent frames by weighted local PCA.

    Args:
        cloud: Sample points
        graph: Neighbor graph with radius sqrt(eps_pca)
        kernel: PCA weighting kernel
        gamma: Explained-variance threshold for the local dimensions
        fixed_dim: Frame dimension to use instead of the median estimate
        threads: Workers for the per-point loop

    Returns:
        The PCA report and the tangent frames
    """
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"gamma must lie in (0, 1), got {gamma}")
    if fixed_dim is not None and not 1 <= fixed_dim <= cloud.ambient_dim:
        raise ConfigError(f"fixed_dim must lie in [1, {cloud.ambient_dim}], got {fixed_dim}")

    counts = graph.degree_counts()
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise DataError(f"Point {int(empty[0])} has an empty PCA neighborhood "
                        f"({empty.size} such points); increase eps_pca")

    points = cloud.points

    def run(chunk: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
        out = []
        for i in chunk:
            idx, dist = graph.neighbors(i)
            out.append(weighted_svd(points[idx], points[i], dist, graph.radius, kernel))
        return out

    results = [r for part in parallel_map(run, chunked(np.arange(cloud.n), _CHUNK), threads)
               for r in part]
    singular_values = [s for s, _ in results]
    local_dims = np.array([local_dimension(s, gamma) for s in singular_values], dtype=int)
    report = LocalPcaReport(singular_values=singular_values, neighbor_counts=counts,
                            local_dims=local_dims, global_dim=lower_median(local_dims),
                            gamma=gamma)

    d = fixed_dim if fixed_dim is not None else report.global_dim
    short = np.flatnonzero(counts < d)
    if short.size:
        raise DataError(f"Point {int(short[0])} has {int(counts[short[0]])} PCA neighbors, "
                        f"fewer than the frame dimension {d} ({short.size} such points)")

    bases = np.stack([u[:, :d] for _, u in results])
    logger.info("local PCA: n=%d, p=%d, estimated dim=%d, frame dim=%d, median neighbors=%d",
                cloud.n, cloud.ambient_dim, report.global_dim, d, int(np.median(counts)))
    return report, TangentFrames(bases=bases)


def subspace_angles(frames: TangentFrames, reference: np.ndarray) -> np.ndarray:
    """Largest principal angle between span(O_i) and span(reference[i]) per point."""
    reference = np.asarray(reference, dtype=float)
    if reference.shape[:2] != frames.bases.shape[:2]:
        raise DataError(f"Reference bases have shape {reference.shape}, "
                        f"expected ({frames.n}, {frames.ambient_dim}, k)")
    return np.array([float(np.max(scipy_subspace_angles(o, r)))
                     for o, r in zip(frames.bases, reference)])
