"""Trace-driven discrete-event simulation of an edge cache.

Requests are replayed in timestamp order on a virtual clock; origin fetches
complete as future events that are interleaved with arrivals (a completion
at the same instant as an arrival is processed first).
"""

from __future__ import annotations

import csv
import enum
import heapq
import io
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .controller import AccessHistory, DecisionTree, TwoProngedController
from .genhit import CostModel, generate
from .judgment import Outcome, ShieldConfig, classify
from .models import CpuModel, LatencyMode, LatencyModel, OriginHistogram, admit_cpu
from .policies import Cache, CacheAdmissionError, CacheEntry
from .trace import RequestRecord

__all__ = [
    "Architecture",
    "CpuModel",
    "Event",
    "LatencyMode",
    "LatencyModel",
    "OriginHistogram",
    "SimConfig",
    "SimReport",
    "admit_cpu",
    "percentile",
    "redundancy_rate",
    "run",
]


class Architecture(str, enum.Enum):
    ORIGINAL = "original"
    COGENT = "cogent"


def percentile(values: Sequence[int], p: float) -> int:
    """Nearest-rank percentile: the ceil(p*n)-th smallest value (1-based)."""
    if not values:
        raise ValueError("percentile of an empty sample")
    if not 0 < p < 1:
        raise ValueError("p must lie strictly between 0 and 1")
    ordered = sorted(values)
    rank = math.ceil(Fraction(str(p)) * len(ordered))
    return ordered[max(rank, 1) - 1]


def _percentile_sorted(ordered: Sequence[int], p: float) -> int:
    rank = math.ceil(Fraction(str(p)) * len(ordered))
    return ordered[max(rank, 1) - 1]


def redundancy_rate(cache: Cache) -> float:
    """Fraction of cached bytes beyond the largest entry of each content group."""
    if cache.used == 0:
        return 0.0
    return (cache.used - cache.content_bytes) / cache.used


@dataclass
class SimConfig:
    latency: LatencyModel = field(default_factory=LatencyModel)
    cost: CostModel = field(default_factory=CostModel)
    cpu: CpuModel = field(default_factory=CpuModel)
    shield: ShieldConfig = field(default_factory=ShieldConfig)
    two_pronged: bool = True
    window_us: int = 1_000_000
    history_window: int = 10_000
    seed: int = 0


@dataclass(frozen=True)
class Event:
    """One replayed request as seen by the engine."""

    index: int
    timestamp: int
    outcome: str
    scenario: str
    reason: str
    latency_us: int
    origin_bytes: int
    fetch_issued: bool


@dataclass
class WindowStats:
    window_start_us: int
    mean_latency_us: float
    p99_us: int
    origin_bps: float
    redundancy_rate: float


@dataclass
class SimReport:
    architecture: str = "original"
    policy: str = ""
    capacity: int = 0
    n: int = 0
    hits: int = 0
    misses: int = 0
    pseudo_hits: int = 0
    shielded: int = 0
    shielded_too_slow: int = 0
    shielded_no_cpu: int = 0
    two_pronged_fetches: int = 0
    uncacheable: int = 0
    scenario_counts: Dict[str, int] = field(default_factory=dict)
    total_latency_us: int = 0
    mean_latency_us: float = 0.0
    p99_us: int = 0
    p999_us: int = 0
    miss_bytes: int = 0
    fetch_bytes: int = 0
    origin_bytes: int = 0
    duration_us: int = 0
    origin_bps: float = 0.0
    generation_cpu_time: float = 0.0
    redundancy_mean: float = 0.0
    redundancy_final: float = 0.0
    redundancy_samples: List[Tuple[int, float]] = field(default_factory=list)
    windows: List[WindowStats] = field(default_factory=list)
    events: Optional[List[Event]] = field(default=None, repr=False)

    @property
    def mean_latency_exact(self) -> Fraction:
        return Fraction(self.total_latency_us, self.n) if self.n else Fraction(0)

    @property
    def shielded_fraction(self) -> float:
        """Share of generation-eligible requests that fell back to a miss."""
        eligible = self.pseudo_hits + self.shielded
        return self.shielded / eligible if eligible else 0.0

    @property
    def fetch_rate(self) -> float:
        """Share of generative hits that also triggered a background fetch."""
        return self.two_pronged_fetches / self.pseudo_hits if self.pseudo_hits else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("events")
        d["redundancy_samples"] = [list(s) for s in self.redundancy_samples]
        d["shielded_fraction"] = self.shielded_fraction
        d["fetch_rate"] = self.fetch_rate
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json())

    def series_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["window_start_us", "mean_latency_us", "p99_us", "origin_bps", "redundancy_rate"])
        for s in self.windows:
            w.writerow([s.window_start_us, repr(s.mean_latency_us), s.p99_us, repr(s.origin_bps), repr(s.redundancy_rate)])
        return buf.getvalue()

    def write_series_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.series_csv())

    def write_events_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(Event.__dataclass_fields__.keys())
            for e in self.events or ():
                w.writerow([e.index, e.timestamp, e.outcome, e.scenario, e.reason, e.latency_us, e.origin_bytes, int(e.fetch_issued)])

    def summary(self) -> dict:
        return {
            "mean_ms": self.mean_latency_us / 1000.0,
            "p99_ms": self.p99_us / 1000.0,
            "p999_ms": self.p999_us / 1000.0,
            "origin_gbps": self.origin_bps / 1e9,
            "redundancy": self.redundancy_mean,
        }

    def summary_line(self) -> str:
        s = self.summary()
        return (
            f"{s['mean_ms']:.3f} {s['p99_ms']:.3f} {s['p999_ms']:.3f} "
            f"{s['origin_gbps']:.6f} {s['redundancy']:.4f}"
        )


_ADMIT_MISS = 0
_ADMIT_PREFETCH = 1


class _Windows:
    def __init__(self, width: int):
        self.width = width
        self.current: Optional[int] = None
        self.latencies: List[int] = []
        self.origin = 0
        self.out: List[WindowStats] = []

    def roll(self, now: int, cache: Cache, samples: list) -> None:
        w = now // self.width
        if self.current is None:
            self.current = w
        elif w != self.current:
            self.close(cache, samples)
            self.current = w

    def close(self, cache: Cache, samples: list) -> None:
        if self.current is None:
            return
        start = self.current * self.width
        rate = redundancy_rate(cache)
        samples.append((start + self.width, rate))
        lats = sorted(self.latencies)
        self.out.append(
            WindowStats(
                window_start_us=start,
                mean_latency_us=sum(lats) / len(lats) if lats else 0.0,
                p99_us=_percentile_sorted(lats, 0.99) if lats else 0,
                origin_bps=8.0 * self.origin / (self.width / 1e6),
                redundancy_rate=rate,
            )
        )
        self.latencies = []
        self.origin = 0


def run(
    trace: Sequence[RequestRecord],
    cache: Cache,
    architecture="cogent",
    config: Optional[SimConfig] = None,
    tree: Optional[DecisionTree] = None,
    preload: Iterable[RequestRecord] = (),
    record_events: bool = False,
    payloads=None,
) -> SimReport:
    """Replay ``trace`` through ``cache`` and return the run's metrics.

    ``preload`` records are admitted before the clock starts and are not
    counted. With ``payloads`` (a payload store) block generative hits
    produce real bytes; otherwise they are cost-modelled only.
    """
    arch = Architecture(architecture)
    cfg = config or SimConfig()
    lat, cost, shield = cfg.latency, cfg.cost, cfg.shield
    cpu = CpuModel(cfg.cpu.cores, cfg.cpu.utilization_cap)
    cogent = arch is Architecture.COGENT
    controller = None
    if cogent and cfg.two_pronged:
        if tree is None:
            raise ValueError("the two-pronged controller needs a trained tree")
        controller = TwoProngedController(tree, AccessHistory(cfg.history_window))
    if cogent and (cache.simhash_index is None or cache.simhash_index.radius < shield.hamming_threshold):
        cache.attach_simhash_index(shield.hamming_threshold)
    rng = np.random.default_rng(cfg.seed)

    for rec in preload:
        if rec.ident not in cache:
            cache.admit(CacheEntry.from_record(rec, 0, lat.origin_fetch), 0)

    report = SimReport(architecture=arch.value, policy=cache.name, capacity=cache.capacity)
    events: Optional[List[Event]] = [] if record_events else None
    latencies: List[int] = []
    samples: List[Tuple[int, float]] = []
    windows = _Windows(cfg.window_us)
    scenarios: Counter = Counter()
    pending: Counter = Counter()
    queue: list = []
    seq = 0

    hit_latency = lat.hit()
    write = lat.write

    def complete(item):
        _, _, kind, rec, fetch = item
        ident = rec.ident
        pending[ident] -= 1
        if not pending[ident]:
            del pending[ident]
        if kind == _ADMIT_PREFETCH:
            controller.fetch_done(ident)
        if ident in cache:
            return
        try:
            cache.admit(CacheEntry.from_record(rec, item[0], fetch), item[0])
        except CacheAdmissionError:
            report.uncacheable += 1

    def origin_fetch(rec):
        if rec.origin_latency_override is not None:
            return rec.origin_latency_override
        if lat.origin_histogram is not None:
            return lat.origin_histogram.sample(rng)
        return lat.origin_fetch

    for i, rec in enumerate(trace):
        now = rec.timestamp
        while queue and queue[0][0] <= now:
            complete(heapq.heappop(queue))
        windows.roll(now, cache, samples)

        scenario = reason = ""
        fetched = 0
        issued = False
        if cache.lookup(rec.key, rec.params, now) is not None:
            report.hits += 1
            latency = hit_latency
            outcome = Outcome.HIT
        else:
            cls = classify(rec, cache, cost, cpu, now, shield, lat) if cogent else None
            if cls is not None and cls.kind is Outcome.PSEUDO_MISS:
                outcome = Outcome.PSEUDO_MISS
                scenario = cls.scenario.value
                report.pseudo_hits += 1
                scenarios[scenario] += 1
                gen = cls.generation_us
                cores = cost.cpu_cores_per_generation
                if shield.cpu_check:
                    admit_cpu(cpu, now, gen, cores)
                else:
                    cpu.reserve(now, gen, cores)
                report.generation_cpu_time += gen * cores
                if payloads is not None:
                    out = generate(rec, cls, cost, payloads)
                    if out.payload is not None and len(out.payload) != out.produced_size:
                        raise RuntimeError("generated payload has the wrong length")
                latency = lat.pseudo_miss(gen)
                if controller is not None:
                    fetch = origin_fetch(rec)
                    for action in controller.on_pseudo_miss(rec, cls, now, fetch + write, pending):
                        if action.kind == "fetch":
                            seq += 1
                            heapq.heappush(queue, (action.done_at, seq, _ADMIT_PREFETCH, rec, fetch))
                            pending[rec.ident] += 1
                            fetched = rec.size
                            issued = True
                            report.two_pronged_fetches += 1
                            report.fetch_bytes += rec.size
                if rec.ident in cache:
                    raise RuntimeError("generated data entered the cache")
            else:
                if cls is not None and cls.kind is Outcome.SHIELDED_MISS:
                    outcome = Outcome.SHIELDED_MISS
                    scenario = cls.scenario.value
                    reason = cls.reason.value
                    report.shielded += 1
                    if reason == "too_slow":
                        report.shielded_too_slow += 1
                    else:
                        report.shielded_no_cpu += 1
                else:
                    outcome = Outcome.MISS
                    report.misses += 1
                fetch = origin_fetch(rec)
                latency = lat.miss(fetch)
                seq += 1
                heapq.heappush(queue, (now + fetch + write, seq, _ADMIT_MISS, rec, fetch))
                pending[rec.ident] += 1
                fetched = rec.size
                report.miss_bytes += rec.size

        if controller is not None:
            controller.observe(rec, now)
        latencies.append(latency)
        windows.latencies.append(latency)
        windows.origin += fetched
        if events is not None:
            events.append(Event(i, now, outcome.value, scenario, reason, latency, fetched, issued))

    windows.close(cache, samples)
    while queue:
        complete(heapq.heappop(queue))

    n = len(latencies)
    report.n = n
    report.scenario_counts = dict(sorted(scenarios.items()))
    report.total_latency_us = sum(latencies)
    report.origin_bytes = report.miss_bytes + report.fetch_bytes
    if n:
        ordered = sorted(latencies)
        report.mean_latency_us = report.total_latency_us / n
        report.p99_us = _percentile_sorted(ordered, 0.99)
        report.p999_us = _percentile_sorted(ordered, 0.999)
        report.duration_us = trace[-1].timestamp - trace[0].timestamp
    if report.duration_us > 0:
        report.origin_bps = 8.0 * report.origin_bytes / (report.duration_us / 1e6)
    report.redundancy_samples = samples
    report.redundancy_mean = sum(r for _, r in samples) / len(samples) if samples else 0.0
    report.redundancy_final = redundancy_rate(cache)
    report.windows = windows.out
    report.events = events
    return report
