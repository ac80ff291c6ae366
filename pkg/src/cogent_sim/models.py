"""Latency and CPU capacity models shared by the judgment and the engine."""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np


class LatencyMode(str, enum.Enum):
    MEASURED = "measured"
    IDEALIZED_HIT_ZERO = "idealized"


@dataclass
class OriginHistogram:
    """Empirical origin latency distribution: bin upper edges and weights."""

    edges_us: Sequence[int]
    weights: Sequence[float]

    def __post_init__(self):
        if len(self.edges_us) != len(self.weights) or not self.edges_us:
            raise ValueError("histogram needs matching, non-empty edges and weights")
        if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
            raise ValueError("histogram weights must be non-negative with positive sum")
        if list(self.edges_us) != sorted(self.edges_us):
            raise ValueError("histogram edges must be sorted")
        total = float(sum(self.weights))
        self._cdf = np.cumsum(np.asarray(self.weights, dtype=float) / total)

    @classmethod
    def load(cls, path) -> "OriginHistogram":
        """Read ``upper_edge_us,weight`` lines (``#`` comments allowed)."""
        edges, weights = [], []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line or line.startswith("upper"):
                    continue
                a, b = line.split(",")
                edges.append(int(a))
                weights.append(float(b))
        return cls(edges, weights)

    def mean(self) -> float:
        w = np.asarray(self.weights, dtype=float)
        return float(np.dot(self.edges_us, w) / w.sum())

    def sample(self, rng: np.random.Generator) -> int:
        i = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        return int(self.edges_us[min(i, len(self.edges_us) - 1)])


@dataclass
class LatencyModel:
    """Component costs of the three request paths, in microseconds.

    A miss costs fetch + write + send; a generative hit costs
    judgment + generation + send, where generation comes from the cost model.
    """

    hit_latency: int = 1900
    origin_fetch: int = 231_070
    write: int = 0
    send: int = 0
    judgment: int = 0
    pseudo_send: int = 0
    mode: LatencyMode = LatencyMode.MEASURED
    origin_histogram: Optional[OriginHistogram] = None

    def __post_init__(self):
        self.mode = LatencyMode(self.mode)
        for name in ("hit_latency", "origin_fetch", "write", "send", "judgment", "pseudo_send"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def idealized(cls, **kw) -> "LatencyModel":
        return cls(mode=LatencyMode.IDEALIZED_HIT_ZERO, **kw)

    def hit(self) -> int:
        return 0 if self.mode is LatencyMode.IDEALIZED_HIT_ZERO else self.hit_latency

    def expected_fetch(self) -> float:
        if self.origin_histogram is not None:
            return self.origin_histogram.mean()
        return float(self.origin_fetch)

    def expected_miss_latency(self) -> float:
        return self.expected_fetch() + self.write + self.send

    def miss(self, fetch: int) -> int:
        return fetch + self.write + self.send

    def pseudo_miss(self, generation: int) -> int:
        return self.judgment + generation + self.pseudo_send


@dataclass
class CpuModel:
    """Generation CPU budget: reservations may never exceed cores x cap."""

    cores: float = 16.0
    utilization_cap: float = 0.60
    ledger: List[Tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.cores <= 0:
            raise ValueError("cores must be positive")
        if not 0.0 <= self.utilization_cap <= 1.0:
            raise ValueError("utilization_cap must lie in [0, 1]")

    @property
    def budget(self) -> float:
        return self.cores * self.utilization_cap

    def prune(self, now: int) -> None:
        while self.ledger and self.ledger[0][0] <= now:
            heapq.heappop(self.ledger)

    def committed(self, now: int) -> float:
        self.prune(now)
        return math.fsum(c for _, c in self.ledger)

    def can_admit(self, now: int, duration: int, cores_used: float) -> bool:
        """Side-effect-free admission test (expired entries are ignored)."""
        if duration <= 0:
            return True
        load = [c for end, c in self.ledger if end > now]
        load.append(cores_used)
        return math.fsum(load) <= self.budget

    def reserve(self, now: int, duration: int, cores_used: float) -> None:
        if duration > 0:
            heapq.heappush(self.ledger, (now + duration, cores_used))


def admit_cpu(cpu: CpuModel, now: int, duration: int, cores_used: float) -> bool:
    """Reserve ``cores_used`` over ``[now, now + duration)`` if it fits.

    Every reservation starts at or before ``now``, so committed load over the
    interval is highest at ``now``; checking that instant is sufficient.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    cpu.prune(now)
    if not cpu.can_admit(now, duration, cores_used):
        return False
    cpu.reserve(now, duration, cores_used)
    return True


class ScenarioKind(str, enum.Enum):
    """The five ways a request can be generated from cached content."""

    DISASSEMBLE = "S1"
    COMBINE = "S2"
    RESHAPE = "S3"
    REFORMAT = "S4"
    REVISE = "S5"

    def __str__(self) -> str:
        return self.value


BLOCK_SCENARIOS = frozenset({ScenarioKind.DISASSEMBLE, ScenarioKind.COMBINE})
IMAGE_SCENARIOS = frozenset({ScenarioKind.RESHAPE, ScenarioKind.REFORMAT, ScenarioKind.REVISE})
