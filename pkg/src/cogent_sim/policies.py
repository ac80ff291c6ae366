"""Byte-capacity caches with LRU, ARC, LHD and LRU-MAD replacement.

All policies share one index keyed on ``(key, params)`` plus secondary
indexes (by key, by key prefix, by content id and by similarity code) that
the judgment module searches for donors. Subclasses only decide victims.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

from .simhash import SimhashIndex
from .trace import Modality, ParamSet, RequestRecord, key_prefix

Ident = Tuple[str, ParamSet]


class CacheAdmissionError(ValueError):
    """Object is larger than the whole cache."""


@dataclass(eq=False)
class CacheEntry:
    key: str
    params: ParamSet
    content_id: str
    size: int
    modality: Modality = Modality.OTHER
    format: str = ""
    simhash: Optional[int] = None
    insert_time: int = 0
    last_access_time: int = 0
    access_count: int = 1
    last_fetch_latency: int = 0

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("entry size must be positive")
        self.ident: Ident = (self.key, self.params)
        self.prefix = key_prefix(self.key)

    @classmethod
    def from_record(cls, rec: RequestRecord, now: int, fetch_latency: int = 0) -> "CacheEntry":
        return cls(
            key=rec.key,
            params=rec.params,
            content_id=rec.content_id,
            size=rec.size,
            modality=rec.modality,
            format=rec.format,
            simhash=rec.simhash,
            insert_time=now,
            last_access_time=now,
            last_fetch_latency=fetch_latency,
        )

    @property
    def byte_range(self) -> Tuple[int, int]:
        return self.params.get("off", 0), self.params.get("len", self.size)


class Cache:
    """Shared bookkeeping; subclasses implement the replacement hooks."""

    name = "base"

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.used = 0
        self.ticks = 0
        self._index: Dict[Ident, CacheEntry] = {}
        self.by_key: Dict[str, Dict[Ident, CacheEntry]] = {}
        self.by_prefix: Dict[str, Dict[Ident, CacheEntry]] = {}
        self.by_content: Dict[str, Dict[Ident, CacheEntry]] = {}
        self.simhash_index: Optional[SimhashIndex] = None
        # bytes of the largest entry per content group, summed over groups
        self.content_bytes = 0
        self._group_max: Dict[str, int] = {}

    # --- read-only access -------------------------------------------------

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, ident) -> bool:
        return ident in self._index

    def __iter__(self) -> Iterator[CacheEntry]:
        return iter(self._index.values())

    def peek(self, key: str, params: ParamSet) -> Optional[CacheEntry]:
        return self._index.get((key, params))

    def attach_simhash_index(self, radius: int) -> SimhashIndex:
        index = SimhashIndex(radius)
        for e in self._index.values():
            if e.simhash is not None:
                index.add(e.ident, e.simhash)
        self.simhash_index = index
        return index

    # --- public operations --------------------------------------------------

    def lookup(self, key: str, params: ParamSet, now: int) -> Optional[CacheEntry]:
        entry = self._index.get((key, params))
        if entry is None:
            return None
        self.ticks += 1
        self._touch(entry, now)
        entry.last_access_time = now
        entry.access_count += 1
        return entry

    def admit(self, entry: CacheEntry, now: Optional[int] = None) -> List[CacheEntry]:
        """Insert ``entry``, evicting victims until it fits; returns victims."""
        if entry.size > self.capacity:
            raise CacheAdmissionError(
                f"object {entry.key!r} ({entry.size} B) exceeds capacity {self.capacity} B"
            )
        if now is None:
            now = entry.insert_time
        current = self._index.get(entry.ident)
        if current is not None:
            self.ticks += 1
            self._touch(current, now)
            current.last_access_time = now
            current.last_fetch_latency = entry.last_fetch_latency
            return []
        self.ticks += 1
        self._before_admit(entry)
        victims = []
        while self.used + entry.size > self.capacity:
            victim = self._victim(now, entry)
            self._remove(victim, evicted=True)
            victims.append(victim)
        self._insert(entry)
        self._added(entry)
        return victims

    def next_victim(self, now: int) -> Ident:
        if not self._index:
            raise LookupError("cache is empty")
        return self._victim(now, None).ident

    def remove(self, ident: Ident) -> CacheEntry:
        entry = self._index[ident]
        self._remove(entry, evicted=False)
        return entry

    # --- index maintenance ------------------------------------------------

    def _insert(self, entry: CacheEntry) -> None:
        ident = entry.ident
        self._index[ident] = entry
        self.used += entry.size
        self.by_key.setdefault(entry.key, {})[ident] = entry
        self.by_prefix.setdefault(entry.prefix, {})[ident] = entry
        self.by_content.setdefault(entry.content_id, {})[ident] = entry
        top = self._group_max.get(entry.content_id, 0)
        if entry.size > top:
            self._group_max[entry.content_id] = entry.size
            self.content_bytes += entry.size - top
        if self.simhash_index is not None and entry.simhash is not None:
            self.simhash_index.add(ident, entry.simhash)

    def _remove(self, entry: CacheEntry, evicted: bool) -> None:
        ident = entry.ident
        del self._index[ident]
        self.used -= entry.size
        for table, name in (
            (self.by_key, entry.key),
            (self.by_prefix, entry.prefix),
            (self.by_content, entry.content_id),
        ):
            group = table[name]
            del group[ident]
            if not group:
                del table[name]
        cid = entry.content_id
        top = self._group_max[cid]
        if entry.size == top:
            group = self.by_content.get(cid)
            new_top = max(e.size for e in group.values()) if group else 0
            self.content_bytes -= top - new_top
            if group:
                self._group_max[cid] = new_top
            else:
                del self._group_max[cid]
        if self.simhash_index is not None and entry.simhash is not None:
            self.simhash_index.remove(ident)
        self._removed(entry, evicted)

    # --- policy hooks -------------------------------------------------------

    def _before_admit(self, entry: CacheEntry) -> None:
        pass

    def _added(self, entry: CacheEntry) -> None:
        raise NotImplementedError

    def _touch(self, entry: CacheEntry, now: int) -> None:
        raise NotImplementedError

    def _removed(self, entry: CacheEntry, evicted: bool) -> None:
        raise NotImplementedError

    def _victim(self, now: int, incoming: Optional[CacheEntry]) -> CacheEntry:
        raise NotImplementedError


class LRUCache(Cache):
    name = "lru"

    def __init__(self, capacity: int):
        super().__init__(capacity)
        self._order: "OrderedDict[Ident, CacheEntry]" = OrderedDict()

    def _added(self, entry):
        self._order[entry.ident] = entry

    def _touch(self, entry, now):
        self._order.move_to_end(entry.ident)

    def _removed(self, entry, evicted):
        del self._order[entry.ident]

    def _victim(self, now, incoming):
        return next(iter(self._order.values()))

    def recency_order(self) -> List[Ident]:
        """Idents from least to most recently used."""
        return list(self._order)


class ARCCache(Cache):
    """Adaptive Replacement Cache with list budgets measured in bytes.

    ``t1``/``t2`` hold resident entries seen once / more than once, ``b1``/``b2``
    their ghosts. ``p`` is the adaptive byte target for ``t1``.
    """

    name = "arc"

    def __init__(self, capacity: int):
        super().__init__(capacity)
        self.t1: "OrderedDict[Ident, CacheEntry]" = OrderedDict()
        self.t2: "OrderedDict[Ident, CacheEntry]" = OrderedDict()
        self.b1: "OrderedDict[Ident, int]" = OrderedDict()
        self.b2: "OrderedDict[Ident, int]" = OrderedDict()
        self.t1_bytes = self.t2_bytes = self.b1_bytes = self.b2_bytes = 0
        self.p = 0.0
        self._target_t2 = False
        self._from_b2 = False

    def _before_admit(self, entry):
        ident, size = entry.ident, entry.size
        self._target_t2 = self._from_b2 = False
        if ident in self.b1:
            ratio = self.b2_bytes / self.b1_bytes if self.b1_bytes else 1.0
            self.p = min(float(self.capacity), self.p + max(ratio, 1.0) * size)
            self.b1_bytes -= self.b1.pop(ident)
            self._target_t2 = True
        elif ident in self.b2:
            ratio = self.b1_bytes / self.b2_bytes if self.b2_bytes else 1.0
            self.p = max(0.0, self.p - max(ratio, 1.0) * size)
            self.b2_bytes -= self.b2.pop(ident)
            self._target_t2 = self._from_b2 = True

    def _added(self, entry):
        if self._target_t2:
            self.t2[entry.ident] = entry
            self.t2_bytes += entry.size
        else:
            self.t1[entry.ident] = entry
            self.t1_bytes += entry.size
        self._trim_ghosts()

    def _trim_ghosts(self):
        c = self.capacity
        while self.b1 and self.t1_bytes + self.b1_bytes > c:
            self.b1_bytes -= self.b1.popitem(last=False)[1]
        while self.b2 and self.t1_bytes + self.t2_bytes + self.b1_bytes + self.b2_bytes > 2 * c:
            self.b2_bytes -= self.b2.popitem(last=False)[1]

    def _touch(self, entry, now):
        ident = entry.ident
        if ident in self.t1:
            del self.t1[ident]
            self.t1_bytes -= entry.size
            self.t2[ident] = entry
            self.t2_bytes += entry.size
        else:
            self.t2.move_to_end(ident)

    def _removed(self, entry, evicted):
        ident, size = entry.ident, entry.size
        if ident in self.t1:
            del self.t1[ident]
            self.t1_bytes -= size
            if evicted:
                self.b1[ident] = size
                self.b1_bytes += size
        else:
            del self.t2[ident]
            self.t2_bytes -= size
            if evicted:
                self.b2[ident] = size
                self.b2_bytes += size
        if evicted:
            self._trim_ghosts()

    def _victim(self, now, incoming):
        from_b2 = incoming is not None and self._from_b2
        if self.t1 and (self.t1_bytes > self.p or (from_b2 and self.t1_bytes >= self.p) or not self.t2):
            return next(iter(self.t1.values()))
        return next(iter(self.t2.values()))


class _SampledCache(Cache):
    """Keeps an indexable list of residents for cheap candidate sampling."""

    sample_size = 64

    def __init__(self, capacity: int):
        super().__init__(capacity)
        self._slots: List[CacheEntry] = []
        self._pos: Dict[Ident, int] = {}
        self._last_tick: Dict[Ident, int] = {}

    def _added(self, entry):
        self._pos[entry.ident] = len(self._slots)
        self._slots.append(entry)
        self._last_tick[entry.ident] = self.ticks

    def _touch(self, entry, now):
        self._last_tick[entry.ident] = self.ticks

    def _removed(self, entry, evicted):
        ident = entry.ident
        i = self._pos.pop(ident)
        last = self._slots.pop()
        if last is not entry:
            self._slots[i] = last
            self._pos[last.ident] = i
        del self._last_tick[ident]

    def age(self, entry: CacheEntry) -> int:
        """Requests (hits and admissions) since the entry was last touched."""
        return self.ticks - self._last_tick[entry.ident]

    def _candidates(self) -> List[CacheEntry]:
        n = len(self._slots)
        if n <= self.sample_size:
            return list(self._slots)
        # deterministic strided sample whose phase moves with the clock
        stride = n // self.sample_size
        start = (self.ticks * 2654435761) % n
        return [self._slots[(start + k * stride) % n] for k in range(self.sample_size)]


def _age_bin(age: int) -> int:
    return min(age.bit_length(), LHDCache.n_bins - 1)


class LHDCache(_SampledCache):
    """Least Hit Density.

    Hit and eviction events are counted per (class, age bin), where bins
    are powers of two of the age in requests and the class separates
    entries never hit from entries hit at least once. Every ``epoch``
    requests the density table is rebuilt and the counters decay.
    """

    name = "lhd"
    n_bins = 40
    n_classes = 2
    epoch = 10_000
    decay = 0.9

    def __init__(self, capacity: int):
        super().__init__(capacity)
        self._hits = [[0.0] * self.n_bins for _ in range(self.n_classes)]
        self._evictions = [[0.0] * self.n_bins for _ in range(self.n_classes)]
        self._density = [[0.0] * self.n_bins for _ in range(self.n_classes)]
        self._next_epoch = self.epoch

    @staticmethod
    def _class_of(entry: CacheEntry) -> int:
        return 0 if entry.access_count <= 1 else 1

    def _maybe_reconfigure(self):
        while self.ticks >= self._next_epoch:
            self._next_epoch += self.epoch
            self.reconfigure()

    def reconfigure(self) -> None:
        rep = [0] + [1 << (b - 1) for b in range(1, self.n_bins)]
        for c in range(self.n_classes):
            hits, evs = self._hits[c], self._evictions[c]
            dens = self._density[c]
            for a in range(self.n_bins):
                hit_sum = sum(hits[a:])
                life = sum((rep[x] - rep[a] + 1) * (hits[x] + evs[x]) for x in range(a, self.n_bins))
                dens[a] = hit_sum / life if life > 0 else 0.0
            for a in range(self.n_bins):
                hits[a] *= self.decay
                evs[a] *= self.decay

    def _added(self, entry):
        super()._added(entry)
        self._maybe_reconfigure()

    def _touch(self, entry, now):
        self._hits[self._class_of(entry)][_age_bin(self.age(entry))] += 1
        super()._touch(entry, now)
        self._maybe_reconfigure()

    def _removed(self, entry, evicted):
        if evicted:
            self._evictions[self._class_of(entry)][_age_bin(self.age(entry))] += 1
        super()._removed(entry, evicted)

    def hit_density(self, entry: CacheEntry) -> float:
        return self._density[self._class_of(entry)][_age_bin(self.age(entry))] / entry.size

    def _victim(self, now, incoming):
        ticks, last, dens = self.ticks, self._last_tick, self._density
        top = self.n_bins - 1
        best = best_d = best_t = None
        for e in self._candidates():
            t = last[e.ident]
            b = (ticks - t).bit_length()
            d = dens[0 if e.access_count <= 1 else 1][b if b < top else top] / e.size
            # last-touch ticks are unique, so (density, tick) is a total order
            if best is None or d < best_d or (d == best_d and t < best_t):
                best, best_d, best_t = e, d, t
        return best


class LRUMADCache(LRUCache):
    """Latency-aware LRU: among the least-recent residents, evict the one
    whose loss costs the least expected delay.

    expected delay saved = hit probability x last fetch latency, with the
    hit probability estimated as count / (count + requests since last use).
    """

    name = "lru-mad"
    window = 64

    def __init__(self, capacity: int):
        super().__init__(capacity)
        self._last_tick: Dict[Ident, int] = {}

    def _added(self, entry):
        super()._added(entry)
        self._last_tick[entry.ident] = self.ticks

    def _touch(self, entry, now):
        super()._touch(entry, now)
        self._last_tick[entry.ident] = self.ticks

    def _removed(self, entry, evicted):
        super()._removed(entry, evicted)
        del self._last_tick[entry.ident]

    def delay_saved(self, entry: CacheEntry) -> float:
        idle = self.ticks - self._last_tick[entry.ident]
        p_hit = entry.access_count / (entry.access_count + idle)
        return p_hit * entry.last_fetch_latency

    def _victim(self, now, incoming):
        best, best_score = None, None
        for i, entry in enumerate(self._order.values()):
            if i >= self.window:
                break
            score = self.delay_saved(entry)
            if best is None or score < best_score:
                best, best_score = entry, score
        return best


POLICIES = {
    "lru": LRUCache,
    "arc": ARCCache,
    "lhd": LHDCache,
    "lru-mad": LRUMADCache,
}


def make_cache(policy: str, capacity: int) -> Cache:
    name = policy.lower().replace("_", "-")
    if name == "lrumad":
        name = "lru-mad"
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {policy!r}; choose from {sorted(POLICIES)}") from None
    return cls(capacity)
