import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from src.utils import ConfigError, DataError, NumericalError
from src.vdm_operator import VdmOperator

logger = logging.getLogger(__name__)

DENSE_MAX = 3000
RESIDUAL_TOLERANCE = 1e-8


@dataclass
class Spectrum:
    """
    Leading eigenpairs of S~_alpha, ordered by decreasing |lambda|.

    `vectors` holds the orthonormal eigenvectors as columns of an
    (n*d, m) array; `degrees` are the deg_alpha used for the similarity
    transform to D_alpha^-1 S_alpha.
    """
    values: np.ndarray
    vectors: np.ndarray
    degrees: np.ndarray
    d: int
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    alpha: float = 0.0

    @property
    def n(self) -> int:
        return self.degrees.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def vector_field(self, l: int) -> np.ndarray:
        """Eigenvector v_l as an (n, d) array of per-point vectors."""
        return self.vectors[:, l].reshape(self.n, self.d)

    def right_vectors(self) -> np.ndarray:
        """w_l = D^-1/2 v_l, the right eigenvectors of D^-1 S."""
        return self.vectors / np.repeat(np.sqrt(self.degrees), self.d)[:, None]

    def to_dict(self, groups: Optional["MultiplicityProfile"] = None) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "eigenvalues": [float(v) for v in self.values],
            "residuals": [float(r) for r in self.residuals],
        }
        if groups is not None:
            out["groups"] = [[float(rep), int(count)] for rep, count in groups.groups]
        return out


@dataclass
class MultiplicityProfile:
    """Groups of numerically equal eigenvalues as (representative, count)."""
    groups: List[Tuple[float, int]]
    tau: float

    @property
    def sizes(self) -> List[int]:
        return [count for _, count in self.groups]


def order_by_magnitude(values: np.ndarray) -> np.ndarray:
    # |lambda| descending, positive before negative on ties, then index
    return np.lexsort((np.arange(values.size), (values <= 0).astype(int), -np.abs(values)))


def eigensolve(op: VdmOperator, m: int, seed: int = 0, dense_max: int = DENSE_MAX,
               maxiter: Optional[int] = None) -> Spectrum:
    """
    Top-m eigenpairs of S~_alpha by magnitude.

    Small problems (n*d <= dense_max) use a dense symmetric
    eigendecomposition; larger ones run implicitly restarted Lanczos
    (ARPACK) on the matrix-free operator.

    Args:
        op: The VDM operator
        m: Number of eigenpairs
        seed: Seed of the Krylov start vector
        dense_max: Size threshold of the dense path
        maxiter: Restart cap for the Krylov path

    Returns:
        Spectrum with residuals |S~ v_l - lambda_l v_l|
    """
    size = op.size
    if not 1 <= m <= size:
        raise ConfigError(f"m must lie in [1, {size}], got {m}")

    if size <= dense_max or m >= size - 1:
        values, vectors = eigh(op.to_dense(symmetric=True))
        method = "dense"
    else:
        rng = np.random.default_rng(seed)
        try:
            values, vectors = eigsh(op.as_linear_operator(symmetric=True), k=m, which="LM",
                                    v0=rng.standard_normal(size), maxiter=maxiter, tol=0)
        except ArpackNoConvergence as e:
            found = e.eigenvalues.size
            attained = (np.linalg.norm(op.apply_sym(e.eigenvectors) - e.eigenvectors * e.eigenvalues,
                                       axis=0) if found else np.zeros(0))
            raise NumericalError(f"Eigensolver did not converge: {found} of {m} eigenpairs found, "
                                 f"attained residuals {np.array2string(attained, precision=3)}") from e
        method = "lanczos"

    order = order_by_magnitude(values)[:m]
    values, vectors = values[order], vectors[:, order]
    residuals = np.linalg.norm(op.apply_sym(vectors) - vectors * values, axis=0)
    worst = float(residuals.max())
    if worst > RESIDUAL_TOLERANCE:
        logger.warning("largest eigen-residual %.3g exceeds %.0e", worst, RESIDUAL_TOLERANCE)
    logger.info("eigensolve (%s): n*d=%d, m=%d, lambda_1=%.6f, lambda_m=%.6f, max residual=%.2g",
                method, size, m, values[0], values[-1], worst)
    return Spectrum(values=values, vectors=vectors, degrees=op.degrees.copy(), d=op.d,
                    residuals=residuals, alpha=op.alpha)


def group_eigenvalues(values: Sequence[float], tau: float) -> MultiplicityProfile:
    """
    Group the positive eigenvalues, sorted descending, by relative gaps.

    Consecutive values join a group while (l_k - l_(k+1)) / max(|l_1|, 1e-15) < tau,
    where l_1 is the eigenvalue of largest magnitude.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise DataError("Cannot group an empty spectrum")
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    scale = max(float(np.max(np.abs(values))), 1e-15)
    positive = np.sort(values[values > 0])[::-1]
    groups: List[Tuple[float, int]] = []
    for k, value in enumerate(positive):
        if groups and (positive[k - 1] - value) / scale < tau:
            rep, count = groups[-1]
            groups[-1] = (rep, count + 1)
        else:
            groups.append((float(value), 1))
    return MultiplicityProfile(groups=groups, tau=tau)


def detect_multiplicities(spec: Spectrum, tau: float = 0.01) -> MultiplicityProfile:
    return group_eigenvalues(spec.values, tau)


def repair_eigenvalues(values: np.ndarray, group_sizes: Sequence[int]) -> np.ndarray:
    """Set every eigenvalue of a declared group to the group's first one."""
    values = np.array(values, dtype=float)
    if any(int(size) < 1 for size in group_sizes):
        raise ConfigError(f"Group sizes must be positive, got {list(group_sizes)}")
    if sum(int(size) for size in group_sizes) > values.size:
        raise DataError(f"Group sizes {list(group_sizes)} exceed the {values.size} "
                        "available eigenvalues")
    start = 0
    for size in group_sizes:
        values[start:start + size] = values[start]
        start += size
    return values


def repair_degeneracy(spec: Spectrum, group_sizes: Sequence[int]) -> Spectrum:
    """Spectrum copy with eigenvalues flattened inside each declared group."""
    return replace(spec, values=repair_eigenvalues(spec.values, group_sizes))
