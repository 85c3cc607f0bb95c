import logging
from typing import Optional

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import LinearOperator

from src.alignment import AlignmentGraph
from src.utils import ConfigError, DataError

logger = logging.getLogger(__name__)


class VdmOperator:
    """
    The nd x nd block operator S_alpha together with its degrees.

    Blocks are kept once per undirected edge, `blocks[k]` being
    S_alpha(rows[k], cols[k]) = w~_ij O_ij; the mirrored block is its
    transpose. All products are matrix-free with respect to the dense
    nd x nd matrix.
    """

    def __init__(self, n: int, d: int, alpha: float, rows: np.ndarray, cols: np.ndarray,
                 weights: np.ndarray, transforms: np.ndarray, degrees: np.ndarray,
                 raw_degrees: np.ndarray):
        self.n = n
        self.d = d
        self.alpha = alpha
        self.rows = rows
        self.cols = cols
        self.weights = weights
        self.transforms = transforms
        self.blocks = weights[:, None, None] * transforms
        self.degrees = degrees
        self.raw_degrees = raw_degrees
        self._bsr: Optional[sparse.bsr_matrix] = None

    @property
    def size(self) -> int:
        return self.n * self.d

    def _block_matrix(self) -> sparse.bsr_matrix:
        if self._bsr is None:
            rows = np.concatenate([self.rows, self.cols])
            cols = np.concatenate([self.cols, self.rows])
            blocks = np.concatenate([self.blocks, self.blocks.transpose(0, 2, 1)])
            order = np.lexsort((cols, rows))
            indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=self.n))])
            self._bsr = sparse.bsr_matrix((blocks[order], cols[order], indptr),
                                          shape=(self.size, self.size),
                                          blocksize=(self.d, self.d))
        return self._bsr

    def _check(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.size:
            raise DataError(f"Block vector has length {v.shape[0]}, expected n*d = {self.size}")
        return v

    def _per_entry(self, values: np.ndarray, v: np.ndarray) -> np.ndarray:
        scale = np.repeat(values, self.d)
        return scale if v.ndim == 1 else scale[:, None]

    def apply_s(self, v: np.ndarray) -> np.ndarray:
        """S_alpha v."""
        return self._block_matrix() @ self._check(v)

    def apply_avg(self, v: np.ndarray) -> np.ndarray:
        """D_alpha^-1 S_alpha v, the transport-and-average operator."""
        v = self._check(v)
        return self.apply_s(v) / self._per_entry(self.degrees, v)

    def apply_sym(self, v: np.ndarray) -> np.ndarray:
        """S~_alpha v with S~_alpha = D_alpha^-1/2 S_alpha D_alpha^-1/2."""
        v = self._check(v)
        inv_sqrt = self._per_entry(1.0 / np.sqrt(self.degrees), v)
        return inv_sqrt * self.apply_s(inv_sqrt * v)

    def as_linear_operator(self, symmetric: bool = True) -> LinearOperator:
        apply = self.apply_sym if symmetric else self.apply_avg
        return LinearOperator((self.size, self.size), matvec=apply, matmat=apply, dtype=float)

    def to_dense(self, symmetric: bool = True) -> np.ndarray:
        """Dense S~_alpha (or D_alpha^-1 S_alpha); only sensible for small n*d."""
        dense = self._block_matrix().toarray()
        if symmetric:
            inv_sqrt = np.repeat(1.0 / np.sqrt(self.degrees), self.d)
            return inv_sqrt[:, None] * dense * inv_sqrt[None, :]
        return dense / np.repeat(self.degrees, self.d)[:, None]

    def quadratic_form(self, v: np.ndarray, sign: float = 1.0) -> float:
        """
        v^T (I + sign * S~) v as the edge sum
        sum_(i,j) w~_ij |v(i)/sqrt(deg(i)) + sign * O_ij v(j)/sqrt(deg(j))|^2,
        which is nonnegative for sign = +1 and -1.
        """
        v = self._check(v).reshape(self.n, self.d)
        scaled = v / np.sqrt(self.degrees)[:, None]
        moved = np.einsum("eab,eb->ea", self.transforms, scaled[self.cols])
        diff = scaled[self.rows] + sign * moved
        return float(np.sum(self.weights * np.einsum("ea,ea->e", diff, diff)))


def build(agraph: AlignmentGraph, alpha: float = 0.0) -> VdmOperator:
    """
    Assemble S_alpha = D^-alpha S D^-alpha and D_alpha from an alignment graph.

    Args:
        agraph: Weighted edges with their orthogonal transforms
        alpha: Density normalization exponent in [0, 1]

    Returns:
        VdmOperator; alpha = 0 gives S and D
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    weights, degrees = agraph.alpha_weights(alpha)
    op = VdmOperator(n=agraph.n, d=agraph.d, alpha=alpha, rows=agraph.rows, cols=agraph.cols,
                     weights=weights, transforms=agraph.transforms, degrees=degrees,
                     raw_degrees=agraph.degrees)
    logger.info("operator: n=%d, d=%d, alpha=%.3g, blocks=%d", op.n, op.d, alpha, weights.size)
    return op


def apply_avg(op: VdmOperator, v: np.ndarray) -> np.ndarray:
    return op.apply_avg(v)


def apply_sym(op: VdmOperator, v: np.ndarray) -> np.ndarray:
    return op.apply_sym(v)
