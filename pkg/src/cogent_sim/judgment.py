"""Hit / miss / pseudo-miss judgment, donor search and shielding."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Sequence, Tuple

from .genhit import CostModel, estimate_latency
from .models import BLOCK_SCENARIOS, IMAGE_SCENARIOS, CpuModel, LatencyModel, ScenarioKind
from .policies import Cache, CacheEntry
from .simhash import hamming
from .trace import Modality, ParamSet, RequestRecord, key_prefix

S = ScenarioKind

__all__ = [
    "Classification",
    "Outcome",
    "ScenarioKind",
    "ShieldConfig",
    "ShieldReason",
    "classify",
    "match_block_prefix",
    "match_image_similarity",
]


class Outcome(enum.Enum):
    HIT = "hit"
    MISS = "miss"
    PSEUDO_MISS = "pseudo_miss"
    SHIELDED_MISS = "shielded_miss"


class ShieldReason(enum.Enum):
    TOO_SLOW = "too_slow"
    NO_CPU = "no_cpu"


@dataclass(frozen=True)
class ShieldConfig:
    hamming_threshold: int = 8
    scenarios: FrozenSet[ScenarioKind] = frozenset(ScenarioKind)
    cpu_check: bool = True
    time_check: bool = True

    def __post_init__(self):
        if not 0 <= self.hamming_threshold <= 128:
            raise ValueError("hamming_threshold must lie in [0, 128]")
        object.__setattr__(self, "scenarios", frozenset(ScenarioKind(s) for s in self.scenarios))

    @classmethod
    def disabled(cls, **kw) -> "ShieldConfig":
        """No shielding at all: every pseudo-miss is served by generation."""
        return cls(cpu_check=False, time_check=False, **kw)


@dataclass(frozen=True)
class Classification:
    kind: Outcome
    entry: Optional[CacheEntry] = None
    scenario: Optional[ScenarioKind] = None
    donors: Tuple[CacheEntry, ...] = ()
    reason: Optional[ShieldReason] = None
    generation_us: int = 0

    @property
    def is_pseudo_miss(self) -> bool:
        return self.kind is Outcome.PSEUDO_MISS


MISS = Classification(Outcome.MISS)


def _recent_first(e: CacheEntry):
    return (-e.last_access_time, e.key, str(e.params))


def _request_range(params: ParamSet, size: Optional[int]) -> Optional[Tuple[int, int]]:
    length = params.get("len", size)
    if length is None:
        return None
    return params.get("off", 0), length


def find_tiling(pieces: Sequence[Tuple[int, int, object]], start: int, end: int) -> Optional[list]:
    """Pieces ``(offset, length, item)`` that exactly tile ``[start, end)``.

    Depth-first from ``start``, trying longer pieces first and remembering
    dead-end offsets, so a tiling is found whenever one exists. At least
    two pieces are required.
    """
    by_start = {}
    for off, length, item in pieces:
        if off >= start and off + length <= end and length > 0:
            by_start.setdefault(off, []).append((off, length, item))
    for opts in by_start.values():
        opts.sort(key=lambda p: -p[1])
    dead = set()

    def walk(pos, depth):
        if pos == end:
            return [] if depth >= 2 else None
        if pos in dead:
            return None
        for off, length, item in by_start.get(pos, ()):
            if depth == 0 and off + length == end:
                continue
            rest = walk(off + length, depth + 1)
            if rest is not None:
                return [item] + rest
        dead.add(pos)
        return None

    return walk(start, 0)


def match_block_prefix(
    req_key: str,
    req_params: ParamSet,
    cache: Cache,
    req_size: Optional[int] = None,
    scenarios: FrozenSet[ScenarioKind] = BLOCK_SCENARIOS,
) -> Optional[Tuple[ScenarioKind, List[CacheEntry]]]:
    rng = _request_range(req_params, req_size)
    if rng is None:
        return None
    off, length = rng
    end = off + length
    ident = (req_key, req_params)

    if S.DISASSEMBLE in scenarios:
        covering = []
        for e in cache.by_key.get(req_key, {}).values():
            if e.modality is not Modality.BLOCK or e.ident == ident:
                continue
            d_off, d_len = e.byte_range
            if d_off <= off and end <= d_off + d_len:
                covering.append(e)
        if covering:
            donor = min(covering, key=lambda e: (e.size,) + _recent_first(e))
            return S.DISASSEMBLE, [donor]

    if S.COMBINE in scenarios:
        group = cache.by_prefix.get(key_prefix(req_key), {})
        pieces = [
            (*e.byte_range, e)
            for e in sorted(group.values(), key=_recent_first)
            if e.modality is Modality.BLOCK and e.ident != ident
        ]
        tiling = find_tiling(pieces, off, end)
        if tiling:
            return S.COMBINE, tiling
    return None


def _image_scenario(req: RequestRecord, donor: CacheEntry) -> ScenarioKind:
    req_fmt = req.params.get("fmt", req.format)
    donor_fmt = donor.params.get("fmt", donor.format)
    return S.REFORMAT if req_fmt != donor_fmt else S.RESHAPE


def match_image_similarity(
    req: RequestRecord,
    cache: Cache,
    threshold: int = 8,
    scenarios: FrozenSet[ScenarioKind] = IMAGE_SCENARIOS,
) -> Optional[Tuple[ScenarioKind, CacheEntry]]:
    """Same content id first (reshape / reformat), then nearest similarity code."""
    same = []
    for e in cache.by_content.get(req.content_id, {}).values():
        if e.modality is not Modality.IMAGE or e.ident == req.ident:
            continue
        scenario = _image_scenario(req, e)
        if scenario in scenarios:
            same.append((scenario, e))
    if same:
        scenario, donor = min(same, key=lambda p: (p[0] is S.REFORMAT,) + _recent_first(p[1]))
        return scenario, donor

    if S.REVISE not in scenarios or req.simhash is None:
        return None
    index = cache.simhash_index
    if index is not None and index.radius >= threshold:
        found = [(d, cache.peek(*ident)) for d, ident in index.query(req.simhash, threshold)]
    else:
        found = [(hamming(req.simhash, e.simhash), e) for e in cache if e.simhash is not None]
    found = [
        (d, e)
        for d, e in found
        if d <= threshold and e.modality is Modality.IMAGE and e.content_id != req.content_id
    ]
    if not found:
        return None
    _, donor = min(found, key=lambda p: (p[0],) + _recent_first(p[1]))
    return S.REVISE, donor


def find_donors(req: RequestRecord, cache: Cache, shield: ShieldConfig):
    if req.modality is Modality.BLOCK:
        return match_block_prefix(req.key, req.params, cache, req.size, shield.scenarios & BLOCK_SCENARIOS)
    if req.modality is Modality.IMAGE:
        found = match_image_similarity(req, cache, shield.hamming_threshold, shield.scenarios & IMAGE_SCENARIOS)
        if found is not None:
            return found[0], [found[1]]
    return None


def classify(
    req: RequestRecord,
    cache: Cache,
    cost: CostModel,
    cpu: Optional[CpuModel],
    now: int,
    shield: ShieldConfig = ShieldConfig(),
    latency: Optional[LatencyModel] = None,
) -> Classification:
    """Judge one request without touching recency state.

    ``latency`` supplies the fetch estimate used for the too-slow check
    (defaults to :class:`LatencyModel` defaults).
    """
    entry = cache.peek(req.key, req.params)
    if entry is not None:
        return Classification(Outcome.HIT, entry=entry)
    found = find_donors(req, cache, shield)
    if found is None:
        return MISS
    scenario, donors = found
    gen = estimate_latency(cost, scenario, req.size)
    if shield.time_check:
        fetch = (latency or LatencyModel()).expected_miss_latency()
        if gen > fetch:
            return Classification(
                Outcome.SHIELDED_MISS, scenario=scenario, donors=tuple(donors),
                reason=ShieldReason.TOO_SLOW, generation_us=gen,
            )
    if shield.cpu_check and cpu is not None:
        if not cpu.can_admit(now, gen, cost.cpu_cores_per_generation):
            return Classification(
                Outcome.SHIELDED_MISS, scenario=scenario, donors=tuple(donors),
                reason=ShieldReason.NO_CPU, generation_us=gen,
            )
    return Classification(Outcome.PSEUDO_MISS, scenario=scenario, donors=tuple(donors), generation_us=gen)
