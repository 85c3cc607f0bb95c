import json
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.manifolds import ManifoldSpec, PointCloud
from src.spectral import MultiplicityProfile, Spectrum
from src.utils import DataError, FormatError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


def _line_from_parser_error(message: str) -> int:
    found = re.search(r"line (\d+)", message)
    return int(found.group(1)) if found else 0


def _parses(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _to_float(frame: pd.DataFrame, path: str, first_line: int, allow_inf: bool) -> np.ndarray:
    missing = frame.isna().any(axis=1).to_numpy()
    if missing.any():
        row = int(np.flatnonzero(missing)[0])
        width = int(frame.iloc[row].notna().sum())
        raise FormatError(f"expected {frame.shape[1]} columns, found {width}", path, first_line + row)
    try:
        values = frame.to_numpy(dtype=str).astype(float)
    except ValueError:
        cells = frame.to_numpy(dtype=str)
        row, col = next((r, c) for r, c in np.ndindex(cells.shape) if not _parses(cells[r, c]))
        raise FormatError(f"cannot parse {cells[row, col]!r} as a number", path, first_line + row)
    bad = np.isnan(values) if allow_inf else ~np.isfinite(values)
    if bad.any():
        row = int(np.argwhere(bad)[0, 0])
        raise FormatError("non-finite value", path, first_line + row)
    return values


def read_matrix(path: PathLike, columns: Optional[int] = None, header: bool = False,
                allow_inf: bool = False) -> Tuple[np.ndarray, List[str]]:
    """
    Read a numeric CSV matrix.

    Args:
        path: CSV file
        columns: Required column count, if known
        header: Whether the first line holds column names
        allow_inf: Accept +-inf (unreachable geodesic distances)

    Returns:
        The (rows, columns) array and the column names ([] without a header)
    """
    path = str(path)
    try:
        frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
                            skip_blank_lines=True)
    except FileNotFoundError as e:
        raise DataError(f"Missing file: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise FormatError("file is empty", path) from e
    except pd.errors.ParserError as e:
        raise FormatError(str(e).strip(), path, _line_from_parser_error(str(e))) from e

    names: List[str] = []
    first_line = 1
    if header:
        names = [str(v) for v in frame.iloc[0]]
        frame = frame.iloc[1:].reset_index(drop=True)
        first_line = 2
    if columns is not None and frame.shape[1] != columns:
        raise FormatError(f"expected {columns} columns, found {frame.shape[1]}", path, first_line)
    values = _to_float(frame, path, first_line, allow_inf)
    logger.debug("read %s: %d x %d", path, values.shape[0], values.shape[1])
    return values, names


def write_matrix(path: PathLike, values: np.ndarray, names: Optional[List[str]] = None) -> None:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    frame = pd.DataFrame(values, columns=names)
    frame.to_csv(path, header=names is not None, index=False, float_format=FLOAT_FORMAT,
                 lineterminator="\n")


def write_cloud(path: PathLike, cloud: PointCloud, header: bool = False) -> None:
    """One point per row, full-precision decimals."""
    names = [f"x{k}" for k in range(cloud.ambient_dim)] if header else None
    write_matrix(path, cloud.points, names)
    logger.info("wrote cloud %s (n=%d, p=%d)", path, cloud.n, cloud.ambient_dim)


def read_cloud(path: PathLike, ambient_dim: Optional[int] = None, header: bool = False) -> PointCloud:
    points, _ = read_matrix(path, columns=ambient_dim, header=header)
    return PointCloud(points=points)


def write_json(path: PathLike, payload: Dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, allow_nan=False)
        f.write("\n")


def read_json(path: PathLike) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise DataError(f"Missing file: {path}") from e
    except json.JSONDecodeError as e:
        raise FormatError(e.msg, str(path), e.lineno) from e


def _check_schema(payload: Dict[str, Any], path: PathLike) -> None:
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}",
                          str(path))


def write_spectrum(path: PathLike, spec: Spectrum, groups: Optional[MultiplicityProfile] = None,
                   vectors_path: Optional[PathLike] = None) -> None:
    """
    Spectrum JSON: eigenvalues, residuals, degrees and, optionally, the
    multiplicity groups. Eigenvectors go to a separate CSV when
    `vectors_path` is given.
    """
    payload = {"schema_version": SCHEMA_VERSION, "d": spec.d, "alpha": spec.alpha,
               **spec.to_dict(groups), "degrees": [float(v) for v in spec.degrees]}
    if groups is not None:
        payload["tau"] = groups.tau
    if vectors_path is not None:
        write_matrix(vectors_path, spec.vectors)
        payload["vectors"] = Path(vectors_path).name
    write_json(path, payload)
    logger.info("wrote spectrum %s (m=%d)", path, spec.m)


def read_spectrum(path: PathLike) -> Tuple[Spectrum, Optional[MultiplicityProfile]]:
    payload = read_json(path)
    _check_schema(payload, path)
    try:
        values = np.asarray(payload["eigenvalues"], dtype=float)
        degrees = np.asarray(payload["degrees"], dtype=float)
        d = int(payload["d"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"incomplete spectrum: {e}", str(path)) from e
    vectors = np.zeros((degrees.size * d, 0))
    if "vectors" in payload:
        vectors, _ = read_matrix(Path(path).parent / payload["vectors"], columns=values.size)
    groups = None
    if "groups" in payload:
        groups = MultiplicityProfile(groups=[(float(r), int(c)) for r, c in payload["groups"]],
                                     tau=float(payload.get("tau", 0.0)))
    spec = Spectrum(values=values, vectors=vectors, degrees=degrees, d=d,
                    residuals=np.asarray(payload.get("residuals", []), dtype=float),
                    alpha=float(payload.get("alpha", 0.0)))
    return spec, groups


def write_embedding(csv_path: PathLike, coordinates: np.ndarray, metadata: Dict[str, Any]) -> Path:
    """Embedding coordinates as CSV plus a JSON sidecar next to it."""
    write_matrix(csv_path, coordinates)
    sidecar = Path(csv_path).with_suffix(".json")
    write_json(sidecar, {"schema_version": SCHEMA_VERSION, **metadata,
                         "shape": list(np.atleast_2d(coordinates).shape)})
    logger.info("wrote embedding %s (%s)", csv_path, metadata.get("kind", "?"))
    return sidecar


def read_embedding(csv_path: PathLike) -> Tuple[np.ndarray, Dict[str, Any]]:
    sidecar = Path(csv_path).with_suffix(".json")
    metadata = read_json(sidecar)
    _check_schema(metadata, sidecar)
    shape = metadata.get("shape")
    coordinates, _ = read_matrix(csv_path, columns=shape[1] if shape else None)
    if shape and list(coordinates.shape) != list(shape):
        raise FormatError(f"expected shape {shape}, found {list(coordinates.shape)}", str(csv_path))
    return coordinates, metadata


def write_distances(path: PathLike, columns: Dict[str, np.ndarray]) -> None:
    """
    Distance rows with a header: `index` followed by one column per
    distance kind. Unreachable geodesic distances are written as inf.
    """
    lengths = {k: np.asarray(v).shape[0] for k, v in columns.items()}
    if len(set(lengths.values())) > 1:
        raise DataError(f"Distance columns differ in length: {lengths}")
    n = next(iter(lengths.values()), 0)
    frame = pd.DataFrame({"index": np.arange(n), **{k: np.asarray(v, dtype=float)
                                                  for k, v in columns.items()}})
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("wrote distances %s (%s)", path, ", ".join(columns))


def read_distances(path: PathLike) -> Dict[str, np.ndarray]:
    values, names = read_matrix(path, header=True, allow_inf=True)
    if not names or names[0] != "index":
        raise FormatError("first column must be 'index'", str(path), 1)
    return {name: values[:, k] for k, name in enumerate(names)}


@dataclass
class Manifest:
    """What a pipeline run was given and what it wrote."""
    params: Dict[str, Any]
    manifold: Optional[Dict[str, Any]] = None
    artifacts: Dict[str, str] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def manifold_spec(self) -> Optional[ManifoldSpec]:
        return ManifoldSpec(**self.manifold) if self.manifold else None

    def artifact(self, name: str, root: PathLike) -> Path:
        if name not in self.artifacts:
            raise DataError(f"Manifest lists no {name!r} artifact")
        path = Path(root) / self.artifacts[name]
        if not path.exists():
            raise DataError(f"Artifact {name!r} is missing: {path}")
        return path


def write_manifest(path: PathLike, manifest: Manifest) -> None:
    write_json(path, asdict(manifest))


def read_manifest(path: PathLike) -> Manifest:
    payload = read_json(path)
    _check_schema(payload, path)
    known = set(Manifest.__dataclass_fields__)
    unknown = sorted(set(payload) - known)
    if unknown:
        raise FormatError(f"unknown manifest fields: {', '.join(unknown)}", str(path))
    if "params" not in payload:
        raise FormatError("manifest has no params", str(path))
    return Manifest(**payload)
