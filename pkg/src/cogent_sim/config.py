"""Flat run configuration and the glue that turns it into a simulation.

A config file is ``key = value`` lines; ``#`` starts a comment. Every key
has a default, so an empty file is a valid config.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import Dict, List, Optional, Sequence, Tuple

from .controller import DecisionTree, build_samples, train
from .engine import SimConfig, SimReport, run
from .genhit import CostModel
from .judgment import ShieldConfig
from .models import CpuModel, LatencyMode, LatencyModel, OriginHistogram, ScenarioKind
from .policies import make_cache
from .trace import RequestRecord, footprint_bytes, parse_trace

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # inputs and outputs
    trace: str = ""
    arch: str = "cogent"
    policy: str = "lru"
    capacity: int = 0  # bytes; 0 means capacity_fraction of the trace footprint
    capacity_fraction: float = 0.1
    seed: int = 0
    out_dir: str = "out"
    events: bool = False
    window_us: int = 1_000_000
    # latency model
    latency_mode: str = "measured"
    hit_latency_us: int = 1900
    origin_fetch_us: int = 231_070
    origin_histogram: str = ""
    write_us: int = 0
    send_us: int = 0
    judgment_us: int = 0
    pm_send_us: int = 0
    # generation cost model
    gen_base_s1_us: int = 1000
    gen_base_s2_us: int = 1000
    gen_base_s3_us: int = 40_000
    gen_base_s4_us: int = 40_000
    gen_base_s5_us: int = 120_000
    gen_per_byte_s1: float = 0.0
    gen_per_byte_s2: float = 0.0
    gen_per_byte_s3: float = 0.0
    gen_per_byte_s4: float = 0.0
    gen_per_byte_s5: float = 0.0
    cpu_cores_per_generation: float = 1.0
    cpu_cores: float = 16.0
    cpu_cap: float = 0.6
    # shielding
    hamming_threshold: int = 8
    scenarios: str = "S1,S2,S3,S4,S5"
    cpu_check: bool = True
    time_check: bool = True
    # two-pronged controller
    two_pronged: bool = True
    tree: str = ""  # serialized tree; empty means train on the trace prefix
    train_fraction: float = 0.2
    horizon_us: int = 100_000
    horizon_requests: int = 1000
    freq_window: int = 10_000
    max_depth: int = 6
    min_leaf: int = 20

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.arch not in ("original", "cogent"):
            raise ConfigError(f"arch must be original or cogent, not {self.arch!r}")
        try:
            make_cache(self.policy, 1)
            LatencyMode(self.latency_mode)
            self.scenario_set()
            self.cost_model()
            CpuModel(self.cpu_cores, self.cpu_cap)
            ShieldConfig(hamming_threshold=self.hamming_threshold)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.capacity < 0 or not 0 < self.capacity_fraction:
            raise ConfigError("capacity must be >= 0 and capacity_fraction > 0")
        if self.window_us <= 0:
            raise ConfigError("window_us must be positive")
        if not 0 < self.train_fraction <= 1:
            raise ConfigError("train_fraction must lie in (0, 1]")
        if self.max_depth < 0 or self.min_leaf < 1 or self.freq_window < 1:
            raise ConfigError("bad controller settings")
        for name in ("hit_latency_us", "origin_fetch_us", "write_us", "send_us", "judgment_us", "pm_send_us"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")

    # --- parsing and echo

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def coerce(cls, key: str, text: str):
        field_types = {f.name: type(f.default) for f in fields(cls)}
        if key not in field_types:
            raise ConfigError(f"unknown config key {key!r}")
        kind = field_types[key]
        text = text.strip()
        try:
            if kind is bool:
                low = text.lower()
                if low in _TRUE:
                    return True
                if low in _FALSE:
                    return False
                raise ValueError
            if kind is int:
                return int(text)
            if kind is float:
                return float(text)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {text!r}") from None
        return text

    @classmethod
    def parse_text(cls, text: str) -> Dict[str, object]:
        values = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = cls.coerce(key, value)
        return values

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[Dict[str, str]] = None) -> "RunConfig":
        values: Dict[str, object] = {}
        if path:
            with open(path, encoding="utf-8") as fh:
                values.update(cls.parse_text(fh.read()))
        for key, text in (overrides or {}).items():
            values[key] = cls.coerce(key, text)
        return cls(**values)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "on" if v else "off"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    # --- model construction

    def scenario_set(self) -> frozenset:
        names = [s.strip() for s in self.scenarios.split(",") if s.strip()]
        return frozenset(ScenarioKind(s.upper()) for s in names)

    def cost_model(self) -> CostModel:
        base, per_byte = {}, {}
        for kind in ScenarioKind:
            tag = kind.value.lower()
            base[kind] = getattr(self, f"gen_base_{tag}_us")
            per_byte[kind] = getattr(self, f"gen_per_byte_{tag}")
        return CostModel(base, per_byte, self.cpu_cores_per_generation)

    def sim_config(self) -> SimConfig:
        hist = OriginHistogram.load(self.origin_histogram) if self.origin_histogram else None
        latency = LatencyModel(
            hit_latency=self.hit_latency_us,
            origin_fetch=self.origin_fetch_us,
            write=self.write_us,
            send=self.send_us,
            judgment=self.judgment_us,
            pseudo_send=self.pm_send_us,
            mode=LatencyMode(self.latency_mode),
            origin_histogram=hist,
        )
        shield = ShieldConfig(
            hamming_threshold=self.hamming_threshold,
            scenarios=self.scenario_set(),
            cpu_check=self.cpu_check,
            time_check=self.time_check,
        )
        return SimConfig(
            latency=latency,
            cost=self.cost_model(),
            cpu=CpuModel(self.cpu_cores, self.cpu_cap),
            shield=shield,
            two_pronged=self.two_pronged,
            window_us=self.window_us,
            history_window=self.freq_window,
            seed=self.seed,
        )

    def resolve_capacity(self, records: Sequence[RequestRecord]) -> int:
        if self.capacity:
            return self.capacity
        return max(1, int(footprint_bytes(records) * self.capacity_fraction))

    def needs_tree(self) -> bool:
        return self.arch == "cogent" and self.two_pronged

    def train_tree(self, records: Sequence[RequestRecord]) -> Tuple[DecisionTree, list]:
        samples = build_samples(
            records, self.train_fraction, self.horizon_us, self.horizon_requests, self.freq_window
        )
        return train(samples, self.max_depth, self.min_leaf), samples


def simulate(cfg: RunConfig, records: Optional[Sequence[RequestRecord]] = None, tree: Optional[DecisionTree] = None) -> SimReport:
    """Run one configuration end to end."""
    if records is None:
        records = parse_trace(cfg.trace)
    if tree is None and cfg.needs_tree():
        tree = DecisionTree.load(cfg.tree) if cfg.tree else cfg.train_tree(records)[0]
    cache = make_cache(cfg.policy, cfg.resolve_capacity(records))
    return run(records, cache, cfg.arch, cfg.sim_config(), tree=tree, record_events=cfg.events)
