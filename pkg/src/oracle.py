from dataclasses import dataclass
from typing import Dict, List, Tuple

from src.utils import ConfigError

# Leading multiplicities of the connection Laplacian on 1-forms of S^d,
# families with equal eigenvalues already merged.
KNOWN_MULTIPLICITIES: Dict[int, Tuple[int, ...]] = {
    2: (6, 10, 14),
    3: (4, 6, 9, 16, 16),
    4: (5, 10, 14),
    5: (6, 15, 20),
    6: (7, 21, 27),
}


@dataclass(frozen=True)
class SpectrumEntry:
    eigenvalue: float
    multiplicity: int
    weight: str


@dataclass
class SphereSpectrumTable:
    """Eigenvalues of the connection Laplacian on S^d with multiplicities, sorted by eigenvalue."""
    d: int
    entries: List[SpectrumEntry]

    def __post_init__(self):
        if any(e.multiplicity < 1 for e in self.entries):
            raise ConfigError("Multiplicities must be positive integers")
        self.entries = sorted(self.entries, key=lambda e: (e.eigenvalue, e.weight))

    @property
    def multiplicities(self) -> List[int]:
        return [e.multiplicity for e in self.entries]


def s2_table(kmax: int) -> SphereSpectrumTable:
    """Eigenvalue k(k+1) with multiplicity 2(2k+1), k = 1..kmax."""
    if kmax < 1:
        raise ConfigError(f"kmax must be at least 1, got {kmax}")
    entries = [SpectrumEntry(float(k * (k + 1)), 2 * (2 * k + 1), f"{k}L1")
               for k in range(1, kmax + 1)]
    return SphereSpectrumTable(d=2, entries=entries)


def s3_table(kmax: int) -> SphereSpectrumTable:
    """
    The three families on S^3: kL1 with eigenvalue k(k+2) and
    multiplicity (k+1)^2, and kL1 + L2, kL1 - L2, each with eigenvalue
    (k+1)^2 and multiplicity k(k+2).
    """
    if kmax < 1:
        raise ConfigError(f"kmax must be at least 1, got {kmax}")
    entries = []
    for k in range(1, kmax + 1):
        entries.append(SpectrumEntry(float(k * (k + 2)), (k + 1) ** 2, f"{k}L1"))
        for sign in "+-":
            entries.append(SpectrumEntry(float((k + 1) ** 2), k * (k + 2), f"{k}L1{sign}L2"))
    return SphereSpectrumTable(d=3, entries=entries)


def merged_multiplicities(table: SphereSpectrumTable) -> List[int]:
    """Multiplicities after merging the entries that share an eigenvalue."""
    merged: List[Tuple[float, int]] = []
    for entry in table.entries:
        if merged and merged[-1][0] == entry.eigenvalue:
            merged[-1] = (entry.eigenvalue, merged[-1][1] + entry.multiplicity)
        else:
            merged.append((entry.eigenvalue, entry.multiplicity))
    return [count for _, count in merged]


def predicted_multiplicities(d: int, count: int) -> List[int]:
    """
    Leading `count` eigenspace multiplicities for 1-forms on S^d.

    Args:
        d: Sphere dimension, 2..6
        count: Number of eigenspaces

    Returns:
        Multiplicities in order of increasing Laplacian eigenvalue
    """
    if d not in KNOWN_MULTIPLICITIES:
        raise ConfigError(f"Sphere dimension must lie in 2..6, got {d}")
    if count < 1:
        raise ConfigError(f"count must be at least 1, got {count}")
    known = KNOWN_MULTIPLICITIES[d]
    if count <= len(known):
        return list(known[:count])
    if d == 2:
        return merged_multiplicities(s2_table(count))
    if d == 3:
        # every k contributes at most two merged groups
        return merged_multiplicities(s3_table(count))[:count]
    raise ConfigError(f"Only {len(known)} multiplicities are known for S^{d}, asked for {count}")
