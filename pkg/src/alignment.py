import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.sparse as sparse

from src.neighbors import NeighborGraph
from src.tangent import KernelSpec, TangentFrames
from src.utils import DataError, NumericalError, chunked, parallel_map

logger = logging.getLogger(__name__)

SINGULAR_TOLERANCE = 1e-12
_EDGE_CHUNK = 65536


def closest_orthogonal(m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Closest orthogonal matrices, in HS norm, to a stack of square matrices.

    Args:
        m: Array of shape (..., d, d)

    Returns:
        U V^T from the SVD of every matrix, and the singular values
    """
    u, s, vt = np.linalg.svd(m)
    return u @ vt, s


@dataclass
class AlignmentGraph:
    """
    Weighted graph with one orthogonal transform per undirected edge.

    Edge k joins rows[k] < cols[k]; transforms[k] is O_ij for that pair and
    O_ji = O_ij^T is implied.
    """
    n: int
    d: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    transforms: np.ndarray
    distances: np.ndarray

    @property
    def n_edges(self) -> int:
        return int(self.rows.size)

    @property
    def degrees(self) -> np.ndarray:
        return (np.bincount(self.rows, weights=self.weights, minlength=self.n)
                + np.bincount(self.cols, weights=self.weights, minlength=self.n))

    def alpha_weights(self, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Weights of W_alpha = D^-alpha W D^-alpha and their row sums.

        Returns:
            Per-edge normalized weights and deg_alpha for every node
        """
        degrees = self.degrees
        if np.any(degrees <= 0):
            node = int(np.flatnonzero(degrees <= 0)[0])
            raise NumericalError(f"Node {node} is isolated in the alignment graph (zero degree)")
        scale = degrees ** (-alpha)
        scaled = self.weights * scale[self.rows] * scale[self.cols]
        deg_alpha = (np.bincount(self.rows, weights=scaled, minlength=self.n)
                     + np.bincount(self.cols, weights=scaled, minlength=self.n))
        return scaled, deg_alpha

    def weight_matrix(self, alpha: float = 0.0) -> sparse.csr_matrix:
        """Symmetric sparse W_alpha."""
        w = self.alpha_weights(alpha)[0] if alpha else self.weights
        rows = np.concatenate([self.rows, self.cols])
        cols = np.concatenate([self.cols, self.rows])
        return sparse.csr_matrix((np.concatenate([w, w]), (rows, cols)), shape=(self.n, self.n))

    def transform(self, i: int, j: int) -> np.ndarray:
        """O_ij for any ordered pair of adjacent nodes."""
        a, b = (i, j) if i < j else (j, i)
        keys = self.rows.astype(np.int64) * self.n + self.cols
        k = int(np.searchsorted(keys, a * self.n + b))
        if k >= keys.size or keys[k] != a * self.n + b:
            raise DataError(f"Nodes {i} and {j} are not adjacent")
        return self.transforms[k] if i < j else self.transforms[k].T


def align_frames(frames: TangentFrames, graph: NeighborGraph, kernel: KernelSpec,
                 threads: int = 1) -> AlignmentGraph:
    """
    Align the frames of every adjacent pair.

    Args:
        frames: Tangent frames O_i
        graph: Neighbor graph with radius sqrt(eps)
        kernel: Weight kernel, w_ij = K(|x_i - x_j| / sqrt(eps))
        threads: Workers for the per-edge SVDs

    Returns:
        AlignmentGraph with O_ij = argmin_{O in O(d)} |O - O_i^T O_j|_HS
    """
    if frames.n != graph.n:
        raise DataError(f"Frames cover {frames.n} points but the graph has {graph.n}")
    weights = kernel.evaluate(graph.distances / graph.radius)
    keep = weights > 0
    rows, cols = graph.rows[keep], graph.cols[keep]
    weights, distances = weights[keep], graph.distances[keep]
    bases = frames.bases

    def run(edges: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        overlap = np.einsum("epi,epj->eij", bases[rows[edges]], bases[cols[edges]])
        return closest_orthogonal(overlap)

    parts = parallel_map(run, chunked(np.arange(rows.size), _EDGE_CHUNK), threads)
    d = frames.dim
    transforms = np.concatenate([p[0] for p in parts]) if parts else np.zeros((0, d, d))
    singular = np.concatenate([p[1] for p in parts]) if parts else np.zeros((0, d))

    if singular.size:
        smallest = singular[:, -1]
        bad = np.flatnonzero(smallest < SINGULAR_TOLERANCE)
        if bad.size:
            k = int(bad[0])
            raise NumericalError(
                f"Edge ({int(rows[k])}, {int(cols[k])}) is ill-conditioned: O_i^T O_j has singular "
                f"value {smallest[k]:.3g} (tangent planes nearly orthogonal); {bad.size} such edges")

    agraph = AlignmentGraph(n=frames.n, d=d, rows=rows, cols=cols, weights=weights,
                            transforms=transforms, distances=distances)
    logger.info("alignment: %d edges, d=%d, min degree=%.4g",
                agraph.n_edges, d, float(agraph.degrees.min()) if agraph.n else 0.0)
    return agraph


def regauge(frames: TangentFrames, rotations: np.ndarray) -> TangentFrames:
    """Replace every O_i by O_i R_i for orthogonal d x d matrices R_i."""
    return TangentFrames(bases=np.einsum("npd,nde->npe", frames.bases, rotations))
