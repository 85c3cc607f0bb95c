from typing import Tuple

import numpy as np

from src.alignment import AlignmentGraph


def random_orthogonal(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    """Haar-distributed O(d) matrices, shape (count, d, d)."""
    q, r = np.linalg.qr(rng.standard_normal((count, d, d)))
    return q * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]


def random_alignment_graph(n: int, d: int, seed: int = 0, extra_edges: int = 0) -> AlignmentGraph:
    """
    A connected graph: a path 0-1-...-(n-1) plus `extra_edges` random
    chords, with random O(d) transforms on every edge.
    """
    rng = np.random.default_rng(seed)
    pairs = {(i, i + 1) for i in range(n - 1)}
    while len(pairs) < n - 1 + extra_edges:
        i, j = sorted(rng.choice(n, size=2, replace=False))
        pairs.add((int(i), int(j)))
    rows, cols = (np.array(v, dtype=np.intp) for v in zip(*sorted(pairs)))
    w = rng.uniform(0.2, 1.0, rows.size)
    return AlignmentGraph(n=n, d=d, rows=rows, cols=cols, weights=w,
                          transforms=random_orthogonal(rng, rows.size, d), distances=w.copy())


def cycle_alignment_graph(n: int, d: int, seed: int = 0, identity: bool = False) -> AlignmentGraph:
    """Cycle with unit weights, so every node has the same degree."""
    rng = np.random.default_rng(seed)
    rows = np.arange(n - 1, dtype=np.intp)
    cols = rows + 1
    rows = np.concatenate([[0], rows])
    cols = np.concatenate([[n - 1], cols])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    transforms = (np.broadcast_to(np.eye(d), (n, d, d)).copy() if identity
                  else random_orthogonal(rng, n, d))
    w = np.ones(n)
    return AlignmentGraph(n=n, d=d, rows=rows, cols=cols, weights=w, transforms=transforms,
                          distances=w.copy())


def dense_s_alpha(agraph: AlignmentGraph, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
    """Dense S_alpha and deg_alpha assembled block by block."""
    n, d = agraph.n, agraph.d
    degrees = agraph.degrees
    s = np.zeros((n * d, n * d))
    deg_alpha = np.zeros(n)
    for k, (i, j) in enumerate(zip(agraph.rows, agraph.cols)):
        w = agraph.weights[k] / (degrees[i] ** alpha * degrees[j] ** alpha)
        s[i * d:(i + 1) * d, j * d:(j + 1) * d] = w * agraph.transforms[k]
        s[j * d:(j + 1) * d, i * d:(i + 1) * d] = w * agraph.transforms[k].T
        deg_alpha[i] += w
        deg_alpha[j] += w
    return s, deg_alpha


def dense_s_tilde(agraph: AlignmentGraph, alpha: float) -> np.ndarray:
    s, deg_alpha = dense_s_alpha(agraph, alpha)
    inv_sqrt = np.repeat(1.0 / np.sqrt(deg_alpha), agraph.d)
    return inv_sqrt[:, None] * s * inv_sqrt[None, :]


def two_node_graph(d: int) -> AlignmentGraph:
    """One edge of unit weight with O_01 = I."""
    return AlignmentGraph(n=2, d=d, rows=np.array([0]), cols=np.array([1]), weights=np.array([1.0]),
                          transforms=np.eye(d)[None], distances=np.array([1.0]))
