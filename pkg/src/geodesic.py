import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import dijkstra as csgraph_dijkstra

from src.neighbors import NeighborGraph
from src.utils import DataError

logger = logging.getLogger(__name__)


@dataclass
class GeodesicResult:
    """Graph-geodesic distances from one source; +inf where unreachable."""
    source: int
    distances: np.ndarray


def _check_sources(graph: NeighborGraph, sources: Sequence[int]) -> np.ndarray:
    sources = np.atleast_1d(np.asarray(sources, dtype=np.intp))
    bad = sources[(sources < 0) | (sources >= graph.n)]
    if bad.size:
        raise DataError(f"Source index {int(bad[0])} is outside [0, {graph.n})")
    return sources


def dijkstra(graph: NeighborGraph, source: int) -> GeodesicResult:
    """
    Single-source shortest paths with Euclidean edge lengths.

    Args:
        graph: Neighbor graph (radius sqrt(eps))
        source: Index of the reference point

    Returns:
        GeodesicResult
    """
    src = int(_check_sources(graph, [source])[0])
    distances = csgraph_dijkstra(graph.as_csr(), directed=False, indices=src)
    unreachable = int(np.count_nonzero(np.isinf(distances)))
    if unreachable:
        logger.warning("%d points are unreachable from %d", unreachable, src)
    return GeodesicResult(source=src, distances=distances)


def geodesic_rows(graph: NeighborGraph, sources: Sequence[int]) -> np.ndarray:
    """Distance rows for several sources, shape (len(sources), n)."""
    sources = _check_sources(graph, sources)
    return np.atleast_2d(csgraph_dijkstra(graph.as_csr(), directed=False, indices=sources))
