"""On-disk chain streams: magic, length-prefixed JSON header, one byte per symbol.

Symbols are 0, 1 or 2 (erased). The header carries the code and coupling
parameters plus the interleaver seed, so a stream decodes on its own.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .chain import ChainInterleavers, ConfigError, CouplingConfig, encode_chain
from .decoding import ERASED, bec_transmit, ff_fb_decode
from .trellis import TrellisError, build_trellis

MAGIC = b"PICDTC\x00\x01"
HEADER_KEYS = ("g_f", "g_f2", "g_b", "K", "Kc", "m", "L", "interleaver_seed", "payload_bytes")


class FormatError(ValueError):
    """Malformed stream file; ``offset`` is the byte where parsing failed."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"byte offset {offset}: {message}")
        self.offset = offset


def _coupling(header: dict) -> CouplingConfig:
    return CouplingConfig(K=header["K"], Kc=header["Kc"], m=header["m"], L=header["L"])


def capacity_bytes(config: CouplingConfig) -> int:
    return config.payload_bits // 8


def encode_payload(payload: bytes, header: dict, erase: float = 0.0, seed: int = 0) -> bytes:
    """Encode ``payload`` into a stream file, optionally through a BEC(erase)."""
    header = dict(header, payload_bytes=len(payload))
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise ConfigError(f"header is missing {missing}")
    config = _coupling(header)
    if len(payload) > capacity_bytes(config):
        raise ConfigError(f"payload of {len(payload)} bytes exceeds capacity {capacity_bytes(config)}")
    trellis = build_trellis(header["g_f"], header["g_f2"], header["g_b"])
    bits = np.zeros(config.payload_bits, np.uint8)
    bits[: 8 * len(payload)] = np.unpackbits(np.frombuffer(payload, np.uint8))
    il = ChainInterleavers.from_seed(config, header["interleaver_seed"])
    stream = encode_chain(bits, config, il, trellis).to_stream()
    if erase > 0.0:
        stream = bec_transmit(stream, erase, np.random.default_rng(seed))
    head = json.dumps({k: header[k] for k in HEADER_KEYS}, sort_keys=True).encode()
    return MAGIC + struct.pack(">I", len(head)) + head + stream.astype(np.uint8).tobytes()


def read_stream(data: bytes) -> tuple[dict, np.ndarray]:
    """Parse a stream file, raising :class:`FormatError` on any defect."""
    n = len(MAGIC)
    if len(data) < n:
        raise FormatError(len(data), "truncated magic")
    if data[:n] != MAGIC:
        raise FormatError(0, "bad magic")
    if len(data) < n + 4:
        raise FormatError(len(data), "truncated header length")
    (hlen,) = struct.unpack(">I", data[n:n + 4])
    body_at = n + 4 + hlen
    if len(data) < body_at:
        raise FormatError(len(data), f"truncated header, expected {hlen} bytes")
    try:
        header = json.loads(data[n + 4:body_at])
        if not isinstance(header, dict):
            raise ValueError("header is not an object")
        missing = [k for k in HEADER_KEYS if k not in header]
        if missing:
            raise ValueError(f"header is missing {missing}")
        config = _coupling(header)
        build_trellis(header["g_f"], header["g_f2"], header["g_b"])
    except (ValueError, TypeError, TrellisError) as exc:
        raise FormatError(n + 4, f"invalid header: {exc}") from exc
    if header["payload_bytes"] > capacity_bytes(config):
        raise FormatError(n + 4, "payload_bytes exceeds code capacity")
    body = np.frombuffer(data, np.uint8, offset=body_at)
    need = config.transmitted_bits
    if body.size < need:
        raise FormatError(len(data), f"truncated stream, {need - body.size} symbols missing")
    if body.size > need:
        raise FormatError(body_at + need, "trailing bytes after stream")
    bad = np.flatnonzero(body > ERASED)
    if bad.size:
        raise FormatError(body_at + int(bad[0]), f"invalid symbol {body[bad[0]]}")
    return header, body


def decode_stream(data: bytes, max_sweeps: int = 20, max_inner_iters: int = 30) -> tuple[bytes, bytes]:
    """Decode a stream file into ``(payload, erasure_flags)``.

    Erased payload bits come out as 0 with the matching flag bit set; the
    flags are packed MSB first like the payload.
    """
    header, body = read_stream(data)
    config = _coupling(header)
    trellis = build_trellis(header["g_f"], header["g_f2"], header["g_b"])
    il = ChainInterleavers.from_seed(config, header["interleaver_seed"])
    res = ff_fb_decode(trellis, config, il, body, max_sweeps, max_inner_iters)
    bits = res.payload[: 8 * header["payload_bytes"]]
    erased = bits == ERASED
    payload = np.packbits(np.where(erased, 0, bits).astype(np.uint8)).tobytes()
    return payload, np.packbits(erased.astype(np.uint8)).tobytes()
