import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import scipy.sparse as sparse
from scipy.spatial import cKDTree

from src.manifolds import PointCloud
from src.utils import ConfigError

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX_N = 1000
# Tree queries are padded by this relative slack and then filtered with the
# exact distance formula, so both construction paths agree on borderline pairs.
_QUERY_SLACK = 1e-9


def _pair_distances(points: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    diff = points[rows] - points[cols]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


@dataclass
class NeighborGraph:
    """
    Undirected epsilon-ball graph.

    Edges are stored once as (rows[k], cols[k], distances[k]) with
    rows < cols, sorted lexicographically; `adjacency` is the symmetric
    CSR matrix of distances.
    """
    n: int
    radius: float
    rows: np.ndarray
    cols: np.ndarray
    distances: np.ndarray
    adjacency: sparse.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        all_rows = np.concatenate([self.rows, self.cols])
        all_cols = np.concatenate([self.cols, self.rows])
        data = np.concatenate([self.distances, self.distances])
        adjacency = sparse.csr_matrix((data, (all_rows, all_cols)), shape=(self.n, self.n))
        adjacency.sort_indices()
        self.adjacency = adjacency

    @property
    def n_edges(self) -> int:
        return int(self.rows.size)

    def neighbors(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """Sorted neighbor indices of node i and their distances."""
        start, stop = self.adjacency.indptr[i], self.adjacency.indptr[i + 1]
        return self.adjacency.indices[start:stop], self.adjacency.data[start:stop]

    def degree_counts(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def isolated(self) -> np.ndarray:
        """Indices of points without any neighbor."""
        return np.flatnonzero(self.degree_counts() == 0)

    def as_csr(self) -> sparse.csr_matrix:
        return self.adjacency


def build_graph(cloud: PointCloud, radius: float, threads: int = 1) -> NeighborGraph:
    """
    Connect every pair of points with 0 < |x_i - x_j| < radius.

    Args:
        cloud: Input points
        radius: Ball radius (sqrt of the scale parameter)
        threads: Workers for the tree queries

    Returns:
        NeighborGraph with lexicographically ordered edges
    """
    if not radius > 0:
        raise ConfigError(f"radius must be positive, got {radius}")
    points = cloud.points
    n = cloud.n

    if n <= BRUTE_FORCE_MAX_N:
        rows, cols = np.triu_indices(n, k=1)
    else:
        tree = cKDTree(points)
        hits = tree.query_ball_point(points, radius * (1.0 + _QUERY_SLACK),
                                     workers=threads, return_sorted=True)
        counts = np.fromiter((len(h) for h in hits), dtype=np.intp, count=n)
        rows = np.repeat(np.arange(n), counts)
        cols = np.fromiter((j for h in hits for j in h), dtype=np.intp, count=int(counts.sum()))
        upper = cols > rows
        rows, cols = rows[upper], cols[upper]

    distances = _pair_distances(points, rows, cols)
    keep = (distances > 0.0) & (distances < radius)
    rows, cols, distances = rows[keep], cols[keep], distances[keep]
    order = np.lexsort((cols, rows))
    graph = NeighborGraph(n=n, radius=float(radius), rows=rows[order].astype(np.intp),
                          cols=cols[order].astype(np.intp), distances=distances[order])

    lonely = graph.isolated()
    if lonely.size:
        logger.warning("%d of %d points have no neighbor within radius %.4g (first: %d)",
                       lonely.size, n, radius, int(lonely[0]))
    logger.info("neighbor graph: n=%d, radius=%.4g, edges=%d, mean degree=%.1f",
                n, radius, graph.n_edges, 2.0 * graph.n_edges / n)
    return graph


class PointIndex:
    """KD-tree over a fixed sample, used for out-of-sample neighbor queries."""

    def __init__(self, cloud: PointCloud):
        self.points = cloud.points
        self.tree = cKDTree(self.points)

    def query(self, y: np.ndarray, radius: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Sample points with 0 < |x_j - y| < radius.

        Args:
            y: Query point of length p
            radius: Ball radius

        Returns:
            Sorted indices and their distances
        """
        y = np.asarray(y, dtype=float)
        idx = np.asarray(self.tree.query_ball_point(y, radius * (1.0 + _QUERY_SLACK),
                                                    return_sorted=True), dtype=np.intp)
        diff = self.points[idx] - y
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        keep = (dist > 0.0) & (dist < radius)
        return idx[keep], dist[keep]

    def coincident(self, y: np.ndarray) -> int:
        """Index of a sample point equal to y, or -1."""
        dist, idx = self.tree.query(np.asarray(y, dtype=float), k=1)
        return int(idx) if dist == 0.0 else -1
