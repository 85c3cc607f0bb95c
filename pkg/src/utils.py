import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


class VDMError(Exception):
    """Base class for every error raised by vdmkit."""


class ConfigError(VDMError, ValueError):
    """Invalid parameter or inconsistent flag combination."""


class DataError(VDMError, ValueError):
    """Input data cannot be processed (bad shapes, too few neighbors, ...)."""


class FormatError(DataError):
    """Malformed artifact file."""

    def __init__(self, message: str, path: str = "", line: int = 0):
        self.path = path
        self.line = line
        location = f"{path}:{line}: " if path and line else (f"{path}: " if path else "")
        super().__init__(f"{location}{message}")


class NumericalError(VDMError, RuntimeError):
    """A numerical step failed (ill-conditioning, non-convergence)."""


LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: str = "INFO") -> None:
    """
    Route all vdmkit loggers to stderr.

    Args:
        level: Logging level name (DEBUG, INFO, WARNING, ...)
    """
    root = logging.getLogger("src")
    root.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    try:
        root.setLevel(level.upper())
    except ValueError as e:
        raise ConfigError(f"Unknown log level: {level}") from e


def chunked(items: Sequence[T], size: int) -> List[Sequence[T]]:
    """Split a sequence into consecutive slices of at most `size` items."""
    size = max(1, int(size))
    return [items[i:i + size] for i in range(0, len(items), size)]


def parallel_map(func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """
    Order-preserving map over a thread pool.

    Args:
        func: Function applied to every item
        items: Work items
        threads: Worker cap; 1 or less runs in the calling thread

    Returns:
        Results in the order of `items`
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(func, items))
