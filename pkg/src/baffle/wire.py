"""Byte-exact transaction payload encodings.

Gas is charged per payload byte, so the on-wire layout is fixed:

=========  =================================================================
kind       layout (all little-endian, no padding)
=========  =================================================================
header     u8 kind, u8 reserved(0), u16 round, u32 agent_id        (8 bytes)
bid        header + per entry: u32 chunk_id, f64 score         (12 bytes/ea)
push       header + u32 chunk_id + chunk payload (binary32 LE params)
signal     header only
register   header + u64 total_params + u32 chunk_size_bytes
           + u32 participation_level
=========  =================================================================
"""

from __future__ import annotations

import struct
from enum import IntEnum

HEADER_BYTES = 8
BID_ENTRY_BYTES = 12

_HEADER = struct.Struct("<BBHI")
_BID_ENTRY = struct.Struct("<Id")
_PUSH_CHUNK_ID = struct.Struct("<I")
_REGISTER_BODY = struct.Struct("<QII")


class WireError(ValueError):
    """Malformed transaction payload."""


class TxKind(IntEnum):
    REGISTER = 1
    BID = 2
    PUSH = 3
    SIGNAL = 4


def encode_header(kind: TxKind, round_index: int, agent_id: int) -> bytes:
    if not 0 <= round_index < 1 << 16:
        raise WireError(f"round {round_index} does not fit in u16")
    if not 0 <= agent_id < 1 << 32:
        raise WireError(f"agent_id {agent_id} does not fit in u32")
    return _HEADER.pack(int(kind), 0, round_index, agent_id)


def decode_header(payload: bytes) -> tuple[TxKind, int, int]:
    """Return (kind, round, agent_id) from the first 8 bytes."""
    if len(payload) < HEADER_BYTES:
        raise WireError(f"payload shorter than {HEADER_BYTES}-byte header")
    kind, _, round_index, agent_id = _HEADER.unpack_from(payload)
    try:
        return TxKind(kind), round_index, agent_id
    except ValueError as exc:
        raise WireError(f"unknown transaction kind {kind}") from exc


def encode_bid(agent_id: int, round_index: int, entries: list[tuple[int, float]]) -> bytes:
    parts = [encode_header(TxKind.BID, round_index, agent_id)]
    parts.extend(_BID_ENTRY.pack(chunk_id, score) for chunk_id, score in entries)
    return b"".join(parts)


def decode_bid(payload: bytes) -> tuple[int, int, list[tuple[int, float]]]:
    kind, round_index, agent_id = decode_header(payload)
    if kind is not TxKind.BID:
        raise WireError(f"expected BID payload, got {kind.name}")
    body = payload[HEADER_BYTES:]
    if len(body) % BID_ENTRY_BYTES:
        raise WireError(f"bid body length {len(body)} is not a multiple of {BID_ENTRY_BYTES}")
    entries = [
        _BID_ENTRY.unpack_from(body, offset)
        for offset in range(0, len(body), BID_ENTRY_BYTES)
    ]
    return agent_id, round_index, [(int(c), float(s)) for c, s in entries]


def encode_push(agent_id: int, round_index: int, chunk_id: int, chunk_payload: bytes) -> bytes:
    return (
        encode_header(TxKind.PUSH, round_index, agent_id)
        + _PUSH_CHUNK_ID.pack(chunk_id)
        + chunk_payload
    )


def decode_push(payload: bytes) -> tuple[int, int, int, bytes]:
    """Return (agent_id, round, chunk_id, chunk_payload)."""
    kind, round_index, agent_id = decode_header(payload)
    if kind is not TxKind.PUSH:
        raise WireError(f"expected PUSH payload, got {kind.name}")
    if len(payload) < HEADER_BYTES + _PUSH_CHUNK_ID.size:
        raise WireError("push payload missing chunk id")
    (chunk_id,) = _PUSH_CHUNK_ID.unpack_from(payload, HEADER_BYTES)
    return agent_id, round_index, chunk_id, payload[HEADER_BYTES + _PUSH_CHUNK_ID.size :]


def encode_signal(agent_id: int, round_index: int) -> bytes:
    return encode_header(TxKind.SIGNAL, round_index, agent_id)


def decode_signal(payload: bytes) -> tuple[int, int]:
    """Return (agent_id, round)."""
    kind, round_index, agent_id = decode_header(payload)
    if kind is not TxKind.SIGNAL:
        raise WireError(f"expected SIGNAL payload, got {kind.name}")
    if len(payload) != HEADER_BYTES:
        raise WireError("signal payload carries unexpected body bytes")
    return agent_id, round_index


def encode_register(
    agent_id: int, total_params: int, chunk_size_bytes: int, participation_level: int
) -> bytes:
    return encode_header(TxKind.REGISTER, 0, agent_id) + _REGISTER_BODY.pack(
        total_params, chunk_size_bytes, participation_level
    )


def decode_register(payload: bytes) -> tuple[int, int, int, int]:
    """Return (agent_id, total_params, chunk_size_bytes, participation_level)."""
    kind, _, agent_id = decode_header(payload)
    if kind is not TxKind.REGISTER:
        raise WireError(f"expected REGISTER payload, got {kind.name}")
    if len(payload) != HEADER_BYTES + _REGISTER_BODY.size:
        raise WireError("register payload has wrong length")
    total_params, chunk_size_bytes, pl = _REGISTER_BODY.unpack_from(payload, HEADER_BYTES)
    return agent_id, total_params, chunk_size_bytes, pl
