"""Generative hits: block split/merge and the generation cost model."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

from .models import ScenarioKind
from .trace import Modality, RequestRecord, key_prefix

S = ScenarioKind


class BlockRangeError(ValueError):
    pass


class TilingError(ValueError):
    def __init__(self, message: str, boundary: int):
        super().__init__(message)
        self.boundary = boundary


class PayloadMissingError(LookupError):
    pass


def _default_base() -> Dict[ScenarioKind, int]:
    return {S.DISASSEMBLE: 1000, S.COMBINE: 1000, S.RESHAPE: 40_000, S.REFORMAT: 40_000, S.REVISE: 120_000}


def _default_per_byte() -> Dict[ScenarioKind, float]:
    return {s: 0.0 for s in ScenarioKind}


@dataclass
class CostModel:
    """Generation latency per scenario: ``base + per_byte * size`` microseconds."""

    base: Dict[ScenarioKind, int] = field(default_factory=_default_base)
    per_byte: Dict[ScenarioKind, float] = field(default_factory=_default_per_byte)
    cpu_cores_per_generation: float = 1.0

    def __post_init__(self):
        self.base = {ScenarioKind(k): v for k, v in {**_default_base(), **self.base}.items()}
        self.per_byte = {ScenarioKind(k): v for k, v in {**_default_per_byte(), **self.per_byte}.items()}
        if any(v < 0 for v in self.base.values()) or any(v < 0 for v in self.per_byte.values()):
            raise ValueError("latencies must be non-negative")
        if self.cpu_cores_per_generation < 0:
            raise ValueError("cpu_cores_per_generation must be non-negative")


def estimate_latency(model: CostModel, scenario: ScenarioKind, size: int) -> int:
    """Generation latency in microseconds, rounded to the nearest integer."""
    return int(round(model.base[scenario] + model.per_byte[scenario] * size))


def split_block(donor_payload: bytes, off: int, length: int) -> bytes:
    if length <= 0 or off < 0 or off + length > len(donor_payload):
        raise BlockRangeError(
            f"range [{off}, {off + length}) outside donor of {len(donor_payload)} bytes"
        )
    return bytes(donor_payload[off : off + length])


def merge_blocks(parts: Sequence[Tuple[int, bytes]]) -> bytes:
    """Concatenate ``(offset, data)`` parts after sorting them by offset.

    The parts must tile one contiguous range; a gap or overlap raises
    :class:`TilingError` carrying the first offending byte position.
    """
    if not parts:
        raise TilingError("nothing to merge", 0)
    ordered = sorted(parts, key=lambda p: p[0])
    expected = ordered[0][0]
    out = bytearray()
    for off, data in ordered:
        if off > expected:
            raise TilingError(f"gap in tiling at byte {expected}", expected)
        if off < expected:
            raise TilingError(f"overlap in tiling at byte {off}", off)
        out += data
        expected = off + len(data)
    return bytes(out)


class SyntheticPayloads:
    """Deterministic bytes for any block range.

    Bytes are a keyed hash stream over the key's content prefix, so every
    object sharing a prefix sees one consistent byte space and donors can
    be split and merged into exactly what the origin would have sent.
    """

    _block = 64

    def __init__(self, seed: int = 0):
        self._key = seed.to_bytes(8, "big", signed=False)

    def read(self, key: str, off: int, length: int) -> bytes:
        prefix = key_prefix(key).encode()
        first, last = off // self._block, (off + length - 1) // self._block
        chunks = [
            hashlib.blake2b(prefix + b"\0" + i.to_bytes(8, "big"), key=self._key, digest_size=64).digest()
            for i in range(first, last + 1)
        ]
        start = off - first * self._block
        return b"".join(chunks)[start : start + length]

    def get(self, entry) -> bytes:
        off, length = entry.byte_range
        return self.read(entry.key, off, length)


class MemoryPayloads:
    """Explicitly stored payloads keyed by ``(key, params)``."""

    def __init__(self, items: Optional[Dict] = None):
        self._data: Dict = dict(items or {})

    def put(self, ident, data: bytes) -> None:
        self._data[ident] = bytes(data)

    def get(self, entry) -> bytes:
        try:
            return self._data[entry.ident]
        except KeyError:
            raise PayloadMissingError(f"no payload stored for {entry.key!r} {entry.params}") from None


@dataclass(frozen=True)
class GenerationOutcome:
    scenario: ScenarioKind
    produced_size: int
    latency_us: int
    cpu_time: float
    payload: Optional[bytes] = None


def generate(req: RequestRecord, classification, model: CostModel, store=None) -> GenerationOutcome:
    """Produce the response for a generative hit.

    Block scenarios yield real bytes when a payload ``store`` is given;
    everything else is cost-modelled only. Nothing is written to the cache.
    """
    from .judgment import Outcome

    if classification.kind is not Outcome.PSEUDO_MISS:
        raise ValueError("generate() needs a pseudo-miss classification")
    scenario = classification.scenario
    latency = estimate_latency(model, scenario, req.size)
    payload = None
    if store is not None and req.modality is Modality.BLOCK:
        off, length = req.byte_range
        if scenario is S.DISASSEMBLE:
            donor = classification.donors[0]
            payload = split_block(store.get(donor), off - donor.byte_range[0], length)
        elif scenario is S.COMBINE:
            payload = merge_blocks([(d.byte_range[0], store.get(d)) for d in classification.donors])
    return GenerationOutcome(
        scenario=scenario,
        produced_size=req.size if payload is None else len(payload),
        latency_us=latency,
        cpu_time=latency * model.cpu_cores_per_generation,
        payload=payload,
    )
