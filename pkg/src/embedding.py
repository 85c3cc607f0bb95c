import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.sparse import diags
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from src.alignment import AlignmentGraph
from src.spectral import DENSE_MAX, Spectrum, order_by_magnitude, repair_eigenvalues
from src.utils import ConfigError, DataError, NumericalError, chunked, parallel_map

logger = logging.getLogger(__name__)

_POINT_CHUNK = 512


def _is_integer(t: float) -> bool:
    return float(t).is_integer()


def truncation_rank(values: np.ndarray, power: float, delta: float) -> int:
    """
    Number of leading eigenvalues with (|l_k| / |l_1|)^power > delta.

    `values` must be ordered by decreasing magnitude.
    """
    if not 0.0 <= delta < 1.0:
        raise ConfigError(f"delta must lie in [0, 1), got {delta}")
    values = np.asarray(values, dtype=float)
    if values.size == 0 or values[0] == 0:
        raise DataError("The leading eigenvalue is zero; the graph has no edges")
    ratios = (np.abs(values) / abs(values[0])) ** power
    below = np.flatnonzero(ratios <= delta)
    return int(below[0]) if below.size else int(values.size)


def _powers(values: np.ndarray, t: float) -> np.ndarray:
    if _is_integer(t):
        return np.power(values, int(t))
    if np.any(values <= 0):
        k = int(np.flatnonzero(values <= 0)[0])
        raise DataError(f"Non-integer t={t} needs positive retained eigenvalues, "
                        f"but eigenvalue {k} is {values[k]:.6g}")
    return np.power(values, t)


@dataclass
class VdmEmbedding:
    """
    Truncated vector diffusion mapping in the compressed m(m+1)/2 form.

    Coordinate (l, r), l <= r, of point i is
    c_lr (lambda_l lambda_r)^t <v_l(i), v_r(i)>, with c_lr = sqrt(2) off the
    diagonal; the normalized variant V'_t divides by deg(i).
    """
    t: float
    delta: float
    m: int
    normalized: bool
    coordinates: np.ndarray
    degrees: np.ndarray

    @property
    def n(self) -> int:
        return self.coordinates.shape[0]

    @property
    def embedded_dim(self) -> int:
        return self.coordinates.shape[1]

    def distances_from(self, ref: int) -> np.ndarray:
        return np.linalg.norm(self.coordinates - self.coordinates[ref], axis=1)

    def angular_distances_from(self, ref: int) -> np.ndarray:
        unit = _unit_rows(self.coordinates)
        return np.linalg.norm(unit - unit[ref], axis=1)

    def metadata(self) -> Dict[str, Any]:
        return {"kind": "vdm", "t": self.t, "delta": self.delta, "m": self.m,
                "normalized": self.normalized}


def _unit_rows(coordinates: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(coordinates, axis=1)
    if np.any(norms == 0):
        raise DataError(f"Point {int(np.flatnonzero(norms == 0)[0])} has a zero embedding vector")
    return coordinates / norms[:, None]


def vdm_embed(spec: Spectrum, t: float, delta: float = 0.2, normalized: bool = False,
              degrees: Optional[np.ndarray] = None, threads: int = 1) -> VdmEmbedding:
    """
    Truncated vector diffusion mapping V_t^delta (or V'_t^delta).

    Args:
        spec: Leading eigenpairs of S~
        t: Diffusion time; non-integer t needs positive retained eigenvalues
        delta: Truncation threshold in [0, 1)
        normalized: Divide every point's coordinates by its degree
        degrees: Degrees for the normalized variant, deg_alpha by default
        threads: Workers for the per-point Gram matrices

    Returns:
        VdmEmbedding with m(m+1)/2 coordinates per point
    """
    if not t > 0:
        raise ConfigError(f"t must be positive, got {t}")
    m = truncation_rank(spec.values, 2.0 * t, delta)
    if m == 0:
        raise DataError(f"delta={delta} retains no eigenvector")
    if m == spec.m and spec.m < spec.n * spec.d:
        logger.warning("all %d computed eigenpairs pass delta=%.3g at t=%g; the truncation "
                       "may need more eigenpairs", m, delta, t)
    scaled = _powers(spec.values[:m], t)
    weights = np.outer(scaled, scaled) * np.where(np.eye(m, dtype=bool), 1.0, np.sqrt(2.0))
    upper = np.triu_indices(m)
    fields = spec.vectors[:, :m].reshape(spec.n, spec.d, m)

    def run(points: np.ndarray) -> np.ndarray:
        gram = np.einsum("nal,nar->nlr", fields[points], fields[points])
        return (gram * weights)[:, upper[0], upper[1]]

    coordinates = np.concatenate(parallel_map(run, chunked(np.arange(spec.n), _POINT_CHUNK), threads))
    degrees = spec.degrees if degrees is None else np.asarray(degrees, dtype=float)
    if normalized:
        coordinates = coordinates / degrees[:, None]
    logger.info("VDM embedding: t=%g, delta=%.3g, m=%d, embedded dim=%d%s",
                t, delta, m, coordinates.shape[1], ", normalized" if normalized else "")
    return VdmEmbedding(t=float(t), delta=float(delta), m=m, normalized=normalized,
                        coordinates=coordinates, degrees=degrees)


def vdm_distance(emb: VdmEmbedding, i: int, j: int) -> float:
    """Vector diffusion distance between points i and j."""
    return float(np.linalg.norm(emb.coordinates[i] - emb.coordinates[j]))


def vdm_angular_distance(emb: VdmEmbedding, i: int, j: int) -> float:
    """|V(i)/|V(i)| - V(j)/|V(j)||, the same for V_t and V'_t."""
    unit = _unit_rows(emb.coordinates[[i, j]])
    return float(np.linalg.norm(unit[0] - unit[1]))


@dataclass
class DmEmbedding:
    """
    Truncated diffusion map Phi_t: coordinates mu_l^t phi_l(i) for
    l = 2..m; the constant top eigenvector is dropped.
    """
    t: float
    delta: float
    m: int
    coordinates: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    degrees: np.ndarray

    @property
    def n(self) -> int:
        return self.coordinates.shape[0]

    @property
    def embedded_dim(self) -> int:
        return self.coordinates.shape[1]

    def distances_from(self, ref: int) -> np.ndarray:
        return np.linalg.norm(self.coordinates - self.coordinates[ref], axis=1)

    def metadata(self) -> Dict[str, Any]:
        return {"kind": "dm", "t": self.t, "delta": self.delta, "m": self.m}


def dm_embed(agraph: AlignmentGraph, t: float, delta: float = 0.2, alpha: float = 0.0,
             n_eigs: Optional[int] = None, repair_groups: Sequence[int] = (),
             seed: int = 0) -> DmEmbedding:
    """
    Diffusion-maps baseline on the scalar weights of the alignment graph.

    Args:
        agraph: Alignment graph (only the weights are used)
        t: Diffusion time
        delta: Truncation threshold on (|mu_m| / mu_1)^t
        alpha: Density normalization exponent for W_alpha
        n_eigs: Eigenpairs to compute; all of them on the dense path
        repair_groups: Eigenvalue groups to flatten before powering
        seed: Seed of the Krylov start vector

    Returns:
        DmEmbedding with m - 1 coordinates per point
    """
    if not t > 0:
        raise ConfigError(f"t must be positive, got {t}")
    w = agraph.weight_matrix(alpha)
    n_parts, _ = connected_components(w, directed=False)
    if n_parts > 1:
        logger.warning("diffusion map graph has %d connected components", n_parts)
        raise DataError(f"The graph is disconnected ({n_parts} components); "
                        "the diffusion map needs a connected graph")
    degrees = np.asarray(w.sum(axis=1)).ravel()
    inv_sqrt = diags(1.0 / np.sqrt(degrees))
    conjugate = inv_sqrt @ w @ inv_sqrt

    n = agraph.n
    if n <= DENSE_MAX or (n_eigs is not None and n_eigs >= n - 1):
        values, vectors = eigh(conjugate.toarray())
    else:
        k = n_eigs or 200
        rng = np.random.default_rng(seed)
        try:
            values, vectors = eigsh(conjugate, k=k, which="LM", v0=rng.standard_normal(n), tol=0)
        except ArpackNoConvergence as e:
            found = e.eigenvalues.size
            attained = (np.linalg.norm(conjugate @ e.eigenvectors - e.eigenvectors * e.eigenvalues, axis=0)
                        if found else np.zeros(0))
            raise NumericalError(f"Diffusion map eigensolver did not converge: {found} of {k} eigenpairs "
                                 f"found, attained residuals {np.array2string(attained, precision=3)}") from e
    order = order_by_magnitude(values)
    if n_eigs is not None:
        order = order[:n_eigs]
    values, vectors = values[order], vectors[:, order]
    if abs(values[0] - 1.0) > 1e-8:
        logger.warning("top diffusion eigenvalue %.12f differs from 1", values[0])

    phi = vectors / np.sqrt(degrees)[:, None]
    values = repair_eigenvalues(values, list(repair_groups))
    m = truncation_rank(values, t, delta)
    if m == 0:
        raise DataError(f"delta={delta} retains no eigenvector")
    coordinates = _powers(values[1:m], t) * phi[:, 1:m]
    logger.info("DM embedding: t=%g, delta=%.3g, m=%d, embedded dim=%d", t, delta, m, m - 1)
    return DmEmbedding(t=float(t), delta=float(delta), m=m, coordinates=coordinates,
                       eigenvalues=values, eigenvectors=phi, degrees=degrees)


def dm_distance(emb: DmEmbedding, i: int, j: int) -> float:
    """Diffusion distance between points i and j."""
    return float(np.linalg.norm(emb.coordinates[i] - emb.coordinates[j]))
