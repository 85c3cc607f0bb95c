import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import special_ortho_group

from src.utils import DataError

logger = logging.getLogger(__name__)

KINDS = ("sphere", "torus2", "interval", "square")
SAMPLINGS = ("uniform_iid", "grid")

# (kind -> sampling schemes it supports)
_SUPPORTED = {
    "sphere": ("uniform_iid",),
    "torus2": ("uniform_iid",),
    "interval": ("grid",),
    "square": ("grid",),
}

# Multiplier of the default eps_pca rate; sized so the sparsest region of each
# kind still has several PCA neighbors.
_SCHEDULE_CONSTANTS = {"sphere": 1.0, "torus2": 10.0, "interval": 1.0, "square": 10.0}


@dataclass(frozen=True)
class ManifoldSpec:
    """
    Description of a synthetic test manifold and how to sample it.

    Args:
        kind: One of sphere, torus2, interval, square
        n: Requested number of points (the square grid rounds up to a square)
        seed: RNG seed, ignored by grid sampling
        sampling: uniform_iid or grid
        d: Sphere dimension (the sphere S^d lives in R^(d+1))
        ambient_dim: Optional ambient dimension p >= d+1 for spheres; the
            sphere is rotated into R^p by a fixed random rotation
        noise: Standard deviation of isotropic Gaussian ambient noise
    """
    kind: str
    n: int
    seed: int = 0
    sampling: str = "uniform_iid"
    d: int = 2
    ambient_dim: Optional[int] = None
    noise: float = 0.0

    def validate(self) -> "ManifoldSpec":
        if self.kind not in KINDS:
            raise DataError(f"Unknown manifold kind: {self.kind!r}")
        if self.sampling not in SAMPLINGS:
            raise DataError(f"Unknown sampling scheme: {self.sampling!r}")
        if self.sampling not in _SUPPORTED[self.kind]:
            raise DataError(f"Unsupported combination: {self.kind} with {self.sampling} sampling")
        if self.n < 1:
            raise DataError(f"n must be at least 1, got {self.n}")
        if self.kind == "sphere":
            if self.d < 1:
                raise DataError(f"sphere dimension must be at least 1, got {self.d}")
            if self.ambient_dim is not None and self.ambient_dim < self.d + 1:
                raise DataError(f"ambient_dim {self.ambient_dim} too small for S^{self.d}")
        elif self.ambient_dim is not None:
            raise DataError("ambient_dim is only supported for spheres")
        if self.noise < 0:
            raise DataError(f"noise must be nonnegative, got {self.noise}")
        return self

    @property
    def intrinsic_dim(self) -> int:
        return {"sphere": self.d, "torus2": 2, "interval": 1, "square": 2}[self.kind]

    @property
    def has_boundary(self) -> bool:
        return self.kind in ("interval", "square")

    @property
    def schedule_constant(self) -> float:
        return _SCHEDULE_CONSTANTS[self.kind]


@dataclass
class PointCloud:
    """n points in R^p; the only observable input of the pipeline."""
    points: np.ndarray
    spec: Optional[ManifoldSpec] = None
    # Intrinsic coordinates when the sampler has them, e.g. torus (u, v)
    parameters: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise DataError(f"A point cloud needs shape (n, p) with n, p >= 1, got {points.shape}")
        if not np.all(np.isfinite(points)):
            bad = int(np.argwhere(~np.isfinite(points))[0, 0])
            raise DataError(f"Point {bad} has non-finite coordinates")
        self.points = points

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]


def sample(spec: ManifoldSpec) -> PointCloud:
    """
    Draw a deterministic point cloud from a synthetic manifold.

    Args:
        spec: Manifold and sampling description

    Returns:
        PointCloud; identical specs give bit-identical clouds
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    parameters = None

    if spec.kind == "sphere":
        draws = rng.standard_normal((spec.n, spec.d + 1))
        points = draws / np.linalg.norm(draws, axis=1, keepdims=True)
        if spec.ambient_dim is not None and spec.ambient_dim > spec.d + 1:
            padded = np.zeros((spec.n, spec.ambient_dim))
            padded[:, :spec.d + 1] = points
            rotation = special_ortho_group.rvs(spec.ambient_dim, random_state=rng)
            points = padded @ rotation.T
    elif spec.kind == "torus2":
        parameters = rng.uniform(0.0, 2.0 * np.pi, size=(spec.n, 2))
        u, v = parameters[:, 0], parameters[:, 1]
        ring = 2.0 + np.cos(v)
        points = np.column_stack([ring * np.cos(u), ring * np.sin(u), np.sin(v)])
    elif spec.kind == "interval":
        points = np.linspace(-np.pi, np.pi, spec.n)[:, None]
    else:
        side = math.isqrt(spec.n)
        if side * side < spec.n:
            side += 1
        axis = np.linspace(0.0, 2.0 * np.pi, side)
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        points = np.column_stack([xx.ravel(), yy.ravel()])
        if side * side != spec.n:
            logger.info("square grid rounded up to %d x %d = %d points", side, side, side * side)

    if spec.noise > 0:
        points = points + spec.noise * rng.standard_normal(points.shape)

    logger.debug("sampled %s: n=%d, p=%d", spec.kind, points.shape[0], points.shape[1])
    return PointCloud(points=points, spec=spec, parameters=parameters)


def _require_sphere(cloud: PointCloud, tol: float = 1e-8) -> None:
    if cloud.spec is not None:
        if cloud.spec.kind != "sphere":
            raise DataError(f"Expected a sphere cloud, got {cloud.spec.kind}")
        if cloud.spec.ambient_dim not in (None, cloud.spec.d + 1):
            raise DataError("Analytic sphere frames need the sphere in its standard R^(d+1)")
    norms = np.linalg.norm(cloud.points, axis=1)
    off = np.flatnonzero(np.abs(norms - 1.0) > tol)
    if off.size:
        raise DataError(f"Point {int(off[0])} is not on the unit sphere (norm {norms[off[0]]:.6g})")
    if cloud.ambient_dim < 2:
        raise DataError("A sphere cloud needs ambient dimension at least 2")


def analytic_sphere_coords(cloud: PointCloud) -> np.ndarray:
    """
    Exact orthonormal tangent bases of S^(p-1) at every point.

    The basis at x is the image of e_1..e_(p-1) under the Householder
    reflection that sends e_p to x.

    Args:
        cloud: Points on the unit sphere in R^p

    Returns:
        Array of shape (n, p, p-1)
    """
    _require_sphere(cloud)
    x = cloud.points
    n, p = x.shape
    w = x.copy()
    w[:, -1] -= 1.0
    ww = np.einsum("ij,ij->i", w, w)
    bases = np.broadcast_to(np.eye(p)[:, :p - 1], (n, p, p - 1)).copy()
    moved = ww > 1e-30
    scale = 2.0 / ww[moved]
    bases[moved] -= scale[:, None, None] * w[moved, :, None] * w[moved, None, :p - 1]
    return bases


def sphere_parallel_transport(x: np.ndarray, y: np.ndarray, u: np.ndarray) -> np.ndarray:
    """
    Transport tangent vector(s) u at x to y along the shortest great circle.

    Args:
        x: Unit vector, start point
        y: Unit vector, end point (y != -x)
        u: Tangent vector(s) at x, shape (p,) or (p, k)

    Returns:
        The transported vector(s), tangent at y
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    cos = float(x @ y)
    if cos <= -1.0 + 1e-12:
        raise DataError("Parallel transport between antipodal points is not unique")
    coefficient = (y @ u) / (1.0 + cos)
    return u - np.multiply.outer(x + y, coefficient)
