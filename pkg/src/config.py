import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from src.utils import ConfigError

load_dotenv()

KERNEL_NAMES = ("gaussian5", "epanechnikov")


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from e


@dataclass(frozen=True)
class Settings:
    """Process-wide settings read from the environment (and `.env`)."""
    threads: int = 1
    log_level: str = "INFO"
    output_dir: str = "artifacts"

    @classmethod
    def from_env(cls) -> "Settings":
        return cls(
            threads=_env_int("VDMKIT_THREADS", 1),
            log_level=os.getenv("VDMKIT_LOG_LEVEL", "INFO"),
            output_dir=os.getenv("VDMKIT_OUTPUT_DIR", "artifacts"),
        )


def default_eps_pca(n: int, d: int, boundary: bool = False, constant: float = 1.0) -> float:
    """
    Local PCA scale from the sample size.

    Args:
        n: Number of sample points
        d: Intrinsic dimension
        boundary: Whether the manifold has a boundary
        constant: Multiplicative constant of the rate

    Returns:
        constant * n^(-2/(d+1)) with boundary, constant * n^(-2/(d+2)) without
    """
    if n < 1 or d < 1:
        raise ConfigError(f"default_eps_pca needs n >= 1 and d >= 1, got n={n}, d={d}")
    exponent = 2.0 / (d + 1) if boundary else 2.0 / (d + 2)
    return constant * float(n) ** (-exponent)


def default_eps(eps_pca: float, d: int) -> float:
    """Alignment scale eps = eps_pca^((d+1)/(d+4))."""
    if eps_pca <= 0 or d < 1:
        raise ConfigError(f"default_eps needs eps_pca > 0 and d >= 1, got {eps_pca}, {d}")
    return float(eps_pca) ** ((d + 1.0) / (d + 4.0))


@dataclass
class PipelineParams:
    """
    Numerical parameters of one pipeline run.

    `eps_pca` and `eps` may stay None; `resolve` fills them from the
    schedules once the sample size and dimension are known.
    """
    eps_pca: Optional[float] = None
    eps: Optional[float] = None
    alpha: float = 1.0
    gamma: float = 0.9
    dim: Optional[int] = None
    pca_kernel: str = "gaussian5"
    weight_kernel: str = "gaussian5"
    t: float = 100.0
    delta: float = 0.2
    normalized: bool = True
    n_eigs: int = 30
    tau: float = 0.01
    repair_groups: List[int] = field(default_factory=list)
    dm_repair_groups: List[int] = field(default_factory=list)
    extension_delta: float = 0.05
    seed: int = 0

    def validate(self) -> "PipelineParams":
        if self.eps_pca is not None and self.eps_pca <= 0:
            raise ConfigError(f"eps_pca must be positive, got {self.eps_pca}")
        if self.eps is not None and self.eps <= 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.dim is not None and self.dim < 1:
            raise ConfigError(f"dim must be at least 1, got {self.dim}")
        for name in (self.pca_kernel, self.weight_kernel):
            if name not in KERNEL_NAMES:
                raise ConfigError(f"Unknown kernel {name!r}; choose from {', '.join(KERNEL_NAMES)}")
        if self.t <= 0:
            raise ConfigError(f"t must be positive, got {self.t}")
        if not 0.0 <= self.delta < 1.0:
            raise ConfigError(f"delta must lie in [0, 1), got {self.delta}")
        if self.n_eigs < 1:
            raise ConfigError(f"n_eigs must be at least 1, got {self.n_eigs}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.extension_delta <= 0:
            raise ConfigError(f"extension_delta must be positive, got {self.extension_delta}")
        if any(size < 1 for size in self.repair_groups + self.dm_repair_groups):
            raise ConfigError("repair group sizes must be positive integers")
        return self

    def resolve(self, n: int, d: int, boundary: bool = False, constant: float = 1.0) -> "PipelineParams":
        """Return a copy with eps_pca/eps filled in from the schedules."""
        eps_pca = self.eps_pca if self.eps_pca is not None else default_eps_pca(n, d, boundary, constant)
        eps = self.eps if self.eps is not None else default_eps(eps_pca, d)
        resolved = PipelineParams(**{**asdict(self), "eps_pca": eps_pca, "eps": eps})
        return resolved.validate()

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineParams":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"Unknown pipeline parameters: {', '.join(unknown)}")
        return cls(**known).validate()
