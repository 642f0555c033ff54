from pathlib import Path
from typing import List, Sequence, Tuple, Union
import logging

import numpy as np

from src.core.exceptions import DataError, MissingArtifactError

logger = logging.getLogger(__name__)

INT_DTYPE = np.dtype("<i8")
FLOAT_DTYPE = np.dtype("<f8")

def write_archive(
    path: Union[str, Path],
    magic: bytes,
    dims: Sequence[int],
    arrays: Sequence[np.ndarray],
) -> None:
    """magic (8 bytes), n_dims and dims as <i8, then each array as row-major <f8; no timestamps"""
    if len(magic) != 8:
        raise ValueError("archive magic must be exactly 8 bytes")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(magic)
        f.write(np.array([len(dims)], dtype=INT_DTYPE).tobytes())
        f.write(np.asarray(dims, dtype=INT_DTYPE).tobytes())
        for array in arrays:
            f.write(np.ascontiguousarray(array, dtype=FLOAT_DTYPE).tobytes())
    logger.debug(f"Wrote {magic.decode()} archive {path}")

class ArchiveReader:
    """Sequential reader over the float64 payload"""

    def __init__(self, payload: np.ndarray, path: Path):
        self._payload = payload
        self._offset = 0
        self._path = path

    def take(self, *shape: int) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        if self._offset + count > self._payload.size:
            raise DataError(f"{self._path}: archive payload is truncated")
        chunk = self._payload[self._offset:self._offset + count].reshape(shape)
        self._offset += count
        return chunk.copy()

    def finish(self) -> None:
        if self._offset != self._payload.size:
            raise DataError(f"{self._path}: archive has {self._payload.size - self._offset} trailing values")

def read_archive(path: Union[str, Path], magic: bytes) -> Tuple[List[int], ArchiveReader]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"archive not found: {path}")
    raw = path.read_bytes()
    if raw[:8] != magic:
        raise DataError(f"{path}: not a {magic.decode()} archive")
    offset = 8
    n_dims = int(np.frombuffer(raw, dtype=INT_DTYPE, count=1, offset=offset)[0])
    offset += INT_DTYPE.itemsize
    dims = np.frombuffer(raw, dtype=INT_DTYPE, count=n_dims, offset=offset).tolist()
    offset += n_dims * INT_DTYPE.itemsize
    if (len(raw) - offset) % FLOAT_DTYPE.itemsize:
        raise DataError(f"{path}: payload is not a whole number of float64 values")
    payload = np.frombuffer(raw, dtype=FLOAT_DTYPE, offset=offset)
    return [int(d) for d in dims], ArchiveReader(payload, path)
