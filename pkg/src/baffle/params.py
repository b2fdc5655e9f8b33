"""Fixed partitioning of flat parameter vectors into transaction-sized chunks.

A model travels over the ledger as independently serialized slices ("chunks")
of one flat weight vector.  The partition is decided once per learning task and
shared by every agent; chunk payloads are IEEE-754 binary32, little-endian, in
index order, so byte-for-byte agreement across agents is guaranteed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Default ceiling on a single transaction payload (24 kB).
MAX_TX_PAYLOAD_BYTES = 24_576

#: Parameters are encoded as IEEE-754 binary32.
BYTES_PER_PARAM = 4

_WIRE_DTYPE = np.dtype("<f4")


class PartitionError(ValueError):
    """Invalid partition configuration (sizes, limits, multiples)."""


class EncodingError(ValueError):
    """Parameter data that cannot be encoded or decoded."""


@dataclass(frozen=True)
class PartitionScheme:
    """Contiguous, disjoint split of ``total_params`` weights into chunks.

    Every chunk except possibly the last holds ``chunk_size_bytes // 4``
    parameters; the last chunk may be short, never padded.  The scheme is part
    of a task's identity: all agents must build it from the same inputs.
    """

    total_params: int
    chunk_size_bytes: int
    boundaries: tuple[tuple[int, int], ...]

    @property
    def chunk_count(self) -> int:
        return len(self.boundaries)

    def chunk_length(self, chunk_id: int) -> int:
        """Number of parameters held by ``chunk_id``."""
        return self.boundaries[chunk_id][1]

    def chunk_slice(self, chunk_id: int) -> slice:
        """Index range of ``chunk_id`` within the flat vector."""
        start, length = self.boundaries[chunk_id]
        return slice(start, start + length)


@dataclass(frozen=True)
class Chunk:
    """One serialized slice of the parameter vector."""

    chunk_id: int
    payload: bytes

    @property
    def param_count(self) -> int:
        return len(self.payload) // BYTES_PER_PARAM


def build_partition(
    total_params: int,
    chunk_size_bytes: int,
    *,
    max_payload_bytes: int = MAX_TX_PAYLOAD_BYTES,
) -> PartitionScheme:
    """Split ``total_params`` weights into chunks of at most ``chunk_size_bytes``.

    The chunk count is ``ceil(total_params * 4 / chunk_size_bytes)``.
    Deterministic for fixed inputs.

    Raises:
        PartitionError: non-positive parameter count, a chunk size that is not
            a positive multiple of 4, or one exceeding ``max_payload_bytes``.
    """
    if total_params < 1:
        raise PartitionError(f"total_params must be >= 1, got {total_params}")
    if chunk_size_bytes < BYTES_PER_PARAM or chunk_size_bytes % BYTES_PER_PARAM:
        raise PartitionError(
            f"chunk_size_bytes must be a positive multiple of {BYTES_PER_PARAM}, "
            f"got {chunk_size_bytes}"
        )
    if chunk_size_bytes > max_payload_bytes:
        raise PartitionError(
            f"chunk_size_bytes {chunk_size_bytes} exceeds the "
            f"{max_payload_bytes}-byte transaction payload limit"
        )

    params_per_chunk = chunk_size_bytes // BYTES_PER_PARAM
    chunk_count = math.ceil(total_params / params_per_chunk)
    boundaries = []
    for c in range(chunk_count):
        start = c * params_per_chunk
        length = min(params_per_chunk, total_params - start)
        boundaries.append((start, length))
    return PartitionScheme(
        total_params=total_params,
        chunk_size_bytes=chunk_size_bytes,
        boundaries=tuple(boundaries),
    )


def as_param_vector(values: np.ndarray | list[float]) -> np.ndarray:
    """Validate and return ``values`` as a finite 1-D float array.

    Raises:
        EncodingError: empty input or non-finite entries.
    """
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise EncodingError("parameter vector must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise EncodingError("parameter vector contains non-finite values")
    return arr


def serialize_chunk(values: np.ndarray, scheme: PartitionScheme, chunk_id: int) -> Chunk:
    """Encode one slice of ``values`` as binary32 little-endian bytes.

    Raises:
        IndexError: ``chunk_id`` outside the scheme.
        EncodingError: vector length mismatch or non-finite values in the slice.
    """
    if not 0 <= chunk_id < scheme.chunk_count:
        raise IndexError(f"chunk_id {chunk_id} out of range [0, {scheme.chunk_count})")
    arr = np.asarray(values).reshape(-1)
    if arr.size != scheme.total_params:
        raise EncodingError(
            f"vector length {arr.size} does not match scheme total {scheme.total_params}"
        )
    part = np.ascontiguousarray(arr[scheme.chunk_slice(chunk_id)], dtype=_WIRE_DTYPE)
    if not np.all(np.isfinite(part)):
        raise EncodingError(f"chunk {chunk_id} contains non-finite values")
    return Chunk(chunk_id=chunk_id, payload=part.tobytes())


def deserialize_chunk(chunk: Chunk) -> np.ndarray:
    """Decode a chunk payload back to a float32 parameter slice.

    Exact inverse of :func:`serialize_chunk` for single-precision values.

    Raises:
        EncodingError: empty payload or length not a multiple of 4.
    """
    return decode_payload(chunk.payload)


def decode_payload(payload: bytes) -> np.ndarray:
    """Decode raw binary32 little-endian bytes to a float32 array."""
    if len(payload) == 0:
        raise EncodingError("empty chunk payload")
    if len(payload) % BYTES_PER_PARAM:
        raise EncodingError(
            f"payload length {len(payload)} is not a multiple of {BYTES_PER_PARAM}"
        )
    return np.frombuffer(payload, dtype=_WIRE_DTYPE).copy()


def score_chunk(local_slice: np.ndarray, global_slice: np.ndarray) -> float:
    """Euclidean distance between a local and a global chunk slice.

    This is the bid value: zero iff the slices are identical.

    Raises:
        ValueError: slices of different lengths.
    """
    a = np.asarray(local_slice, dtype=np.float64).reshape(-1)
    b = np.asarray(global_slice, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise ValueError(f"slice length mismatch: {a.size} vs {b.size}")
    return float(np.linalg.norm(a - b))
