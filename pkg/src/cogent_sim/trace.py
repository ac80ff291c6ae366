"""Request traces: records, CSV I/O and a synthetic generator."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .simhash import SimhashIndex, format_code, parse_code

HEADER = (
    "ts_us",
    "key",
    "params",
    "size",
    "content_id",
    "modality",
    "format",
    "simhash",
    "origin_lat_us",
)

NUMERIC_PARAMS = frozenset({"off", "len", "w", "h", "q"})
_ILLEGAL = frozenset("=;,")


class TraceError(ValueError):
    """A trace file or record violates the trace format."""


class Modality(str, enum.Enum):
    BLOCK = "Block"
    IMAGE = "Image"
    OTHER = "Other"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ParamSet:
    """Canonical, hashable set of request parameters.

    Pairs are kept sorted by key so that two sets built in a different
    order compare and hash equal.
    """

    pairs: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        pairs = tuple(sorted((str(k), str(v)) for k, v in self.pairs))
        keys = [k for k, _ in pairs]
        if len(set(keys)) != len(keys):
            raise TraceError(f"duplicate parameter key in {pairs}")
        for k, v in pairs:
            if not k or _ILLEGAL.intersection(k) or _ILLEGAL.intersection(v):
                raise TraceError(f"illegal parameter {k}={v}")
            if k in NUMERIC_PARAMS:
                if not v.isdigit():
                    raise TraceError(f"parameter {k} must be a non-negative integer, got {v!r}")
                if k == "len" and int(v) == 0:
                    raise TraceError("parameter len must be positive")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "_hash", hash(pairs))

    def __hash__(self) -> int:
        return self._hash

    @classmethod
    def of(cls, **values) -> "ParamSet":
        return cls(tuple((k, str(v)) for k, v in values.items()))

    @classmethod
    def parse(cls, text: str) -> "ParamSet":
        """Parse ``k=v`` pairs separated by ``;`` (or ``,``)."""
        text = text.strip()
        if not text:
            return cls()
        pairs = []
        for item in text.replace(",", ";").split(";"):
            if not item:
                continue
            k, sep, v = item.partition("=")
            if not sep:
                raise TraceError(f"parameter {item!r} is not key=value")
            pairs.append((k.strip(), v.strip()))
        return cls(tuple(pairs))

    def __str__(self) -> str:
        return ";".join(f"{k}={v}" for k, v in self.pairs)

    def __bool__(self) -> bool:
        return bool(self.pairs)

    def get(self, key: str, default=None):
        for k, v in self.pairs:
            if k == key:
                return int(v) if k in NUMERIC_PARAMS else v
        return default

    def as_dict(self) -> Dict[str, str]:
        return dict(self.pairs)

    def without(self, *keys: str) -> "ParamSet":
        return ParamSet(tuple(p for p in self.pairs if p[0] not in keys))


@dataclass(frozen=True)
class RequestRecord:
    timestamp: int
    key: str
    params: ParamSet
    size: int
    content_id: str
    modality: Modality = Modality.OTHER
    format: str = ""
    simhash: Optional[int] = None
    origin_latency_override: Optional[int] = None
    ident: Tuple[str, ParamSet] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "ident", (self.key, self.params))

    @property
    def byte_range(self) -> Tuple[int, int]:
        """``(offset, length)``; absent parameters mean the whole object."""
        return self.params.get("off", 0), self.params.get("len", self.size)


def key_prefix(key: str) -> str:
    """Content part of a ``<content_id>/<object_name>`` key."""
    head, sep, _ = key.partition("/")
    return head if sep else key


@dataclass(frozen=True)
class TraceStats:
    records: int = 0
    unique_keys: int = 0
    unique_content_ids: int = 0
    byte_volume: int = 0
    duration_us: int = 0


def trace_stats(records: Sequence[RequestRecord]) -> TraceStats:
    if not records:
        return TraceStats()
    return TraceStats(
        records=len(records),
        unique_keys=len({r.key for r in records}),
        unique_content_ids=len({r.content_id for r in records}),
        byte_volume=sum(r.size for r in records),
        duration_us=records[-1].timestamp - records[0].timestamp,
    )


def unique_objects(records: Iterable[RequestRecord]) -> Dict[tuple, RequestRecord]:
    """First record seen for every distinct ``(key, params)``."""
    out: Dict[tuple, RequestRecord] = {}
    for r in records:
        out.setdefault(r.ident, r)
    return out


def footprint_bytes(records: Iterable[RequestRecord]) -> int:
    return sum(r.size for r in unique_objects(records).values())


def variant_redundancy(records: Iterable[RequestRecord]) -> float:
    """Share of the trace footprint that repeats content of a larger variant.

    Uses the same grouping as the cache redundancy rate: per content group,
    every byte beyond the largest variant counts as redundant.
    """
    groups: Dict[str, List[int]] = {}
    for r in unique_objects(records).values():
        groups.setdefault(r.content_id, []).append(r.size)
    total = sum(sum(g) for g in groups.values())
    if total == 0:
        return 0.0
    return (total - sum(max(g) for g in groups.values())) / total


# --- CSV ------------------------------------------------------------------


def _row(r: RequestRecord) -> List[str]:
    return [
        str(r.timestamp),
        r.key,
        str(r.params),
        str(r.size),
        r.content_id,
        r.modality.value,
        r.format,
        "" if r.simhash is None else format_code(r.simhash),
        "" if r.origin_latency_override is None else str(r.origin_latency_override),
    ]


def dumps_trace(records: Iterable[RequestRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for r in records:
        writer.writerow(_row(r))
    return buf.getvalue()


def write_trace(records: Iterable[RequestRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for r in records:
            writer.writerow(_row(r))


def _int_field(value: str, name: str, lineno: int, minimum: int = 0) -> int:
    try:
        out = int(value)
    except ValueError:
        raise TraceError(f"line {lineno}: field {name}: not an integer: {value!r}") from None
    if out < minimum:
        raise TraceError(f"line {lineno}: field {name}: must be >= {minimum}, got {out}")
    return out


def _parse_row(row: List[str], lineno: int) -> RequestRecord:
    if len(row) < len(HEADER):
        raise TraceError(f"line {lineno}: expected {len(HEADER)} fields, got {len(row)}")
    if len(row) > len(HEADER):
        # params written with bare commas spill over several columns
        extra = len(row) - len(HEADER)
        row = row[:2] + [",".join(row[2 : 3 + extra])] + row[3 + extra :]
    ts, key, params, size, content_id, modality, fmt, simhash, origin = row
    if not key:
        raise TraceError(f"line {lineno}: field key: empty")
    try:
        pset = ParamSet.parse(params)
    except TraceError as exc:
        raise TraceError(f"line {lineno}: field params: {exc}") from None
    try:
        mod = Modality(modality)
    except ValueError:
        raise TraceError(f"line {lineno}: field modality: unknown value {modality!r}") from None
    code = None
    if simhash:
        try:
            code = parse_code(simhash)
        except ValueError as exc:
            raise TraceError(f"line {lineno}: field simhash: {exc}") from None
    return RequestRecord(
        timestamp=_int_field(ts, "ts_us", lineno),
        key=key,
        params=pset,
        size=_int_field(size, "size", lineno, minimum=1),
        content_id=content_id,
        modality=mod,
        format=fmt,
        simhash=code,
        origin_latency_override=_int_field(origin, "origin_lat_us", lineno) if origin else None,
    )


def read_trace(lines: Iterable[str]) -> List[RequestRecord]:
    records: List[RequestRecord] = []
    last_ts = 0
    for lineno, row in enumerate(csv.reader(lines), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if lineno == 1 and tuple(row) == HEADER:
            continue
        rec = _parse_row(row, lineno)
        if rec.timestamp < last_ts:
            raise TraceError(
                f"line {lineno}: timestamp {rec.timestamp} precedes previous {last_ts}"
            )
        last_ts = rec.timestamp
        records.append(rec)
    return records


def parse_trace(path) -> List[RequestRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return read_trace(fh)


# --- synthetic generator ---------------------------------------------------

_IMAGE_VARIANTS = [
    (1920, 1080, "jpeg", 90),
    (1280, 720, "jpeg", 85),
    (1920, 1080, "webp", 90),
    (640, 360, "jpeg", 80),
    (1280, 720, "webp", 85),
    (1920, 1080, "png", 100),
    (320, 180, "jpeg", 75),
    (640, 360, "webp", 80),
]
_FORMAT_FACTOR = {"jpeg": 1.0, "webp": 0.7, "png": 2.5}


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic trace.

    ``n_objects`` distinct variants are spread evenly over ``n_groups``
    content groups; group popularity is Zipf(``zipf_alpha``) and the variant
    within a group is picked with Zipf(``variant_alpha``) weights.
    """

    n_objects: int = 400
    n_groups: int = 100
    zipf_alpha: float = 1.0
    variant_alpha: float = 1.0
    mean_interarrival_us: float = 1000.0
    n_requests: int = 10_000
    seed: int = 0
    image_fraction: float = 0.5
    block_size_range: Tuple[int, int] = (256 * 1024, 4 * 1024 * 1024)
    image_size_range: Tuple[int, int] = (64 * 1024, 1024 * 1024)
    intra_group_distance: int = 4
    hamming_threshold: int = 8
    origin_latency_us: Optional[int] = None
    origin_latency_sigma: float = 0.0

    def validate(self) -> None:
        if self.n_groups < 1 or self.n_objects < 1:
            raise ValueError("n_objects and n_groups must be positive")
        if self.n_groups > self.n_objects:
            raise ValueError("n_groups must not exceed n_objects")
        if not self.mean_interarrival_us > 0:
            raise ValueError("mean_interarrival_us must be positive")
        if self.zipf_alpha < 0 or self.variant_alpha < 0:
            raise ValueError("Zipf exponents must be non-negative")
        if self.n_requests < 0:
            raise ValueError("n_requests must be non-negative")
        if not 0.0 <= self.image_fraction <= 1.0:
            raise ValueError("image_fraction must lie in [0, 1]")
        if self.intra_group_distance < 0 or not 0 <= self.hamming_threshold < 128:
            raise ValueError("bad Hamming distance settings")
        if self.origin_latency_sigma < 0:
            raise ValueError("origin_latency_sigma must be non-negative")
        lo, hi = self.block_size_range
        if not 0 < lo <= hi:
            raise ValueError("bad block_size_range")
        lo, hi = self.image_size_range
        if not 0 < lo <= hi:
            raise ValueError("bad image_size_range")


@dataclass(frozen=True)
class _Variant:
    key: str
    params: ParamSet
    size: int
    format: str
    simhash: Optional[int]


def zipf_weights(n: int, alpha: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1, dtype=float) ** alpha
    return w / w.sum()


def _block_ranges(k: int) -> Tuple[int, List[Tuple[int, int]]]:
    """First ``k`` ranges of the dyadic split (whole, halves, quarters...).

    Returns the number of halvings needed and ranges in units of the
    finest piece.
    """
    levels = 0
    while (1 << (levels + 1)) - 1 < k:
        levels += 1
    unit = 1 << levels
    ranges = []
    for level in range(levels + 1):
        pieces = 1 << level
        width = unit // pieces
        for i in range(pieces):
            ranges.append((i * width, width))
    return levels, ranges[:k]


def _random_code(rng: np.random.Generator) -> int:
    return int.from_bytes(rng.bytes(16), "big")


def _perturb(code: int, bits: int, rng: np.random.Generator) -> int:
    for b in rng.choice(128, size=bits, replace=False):
        code ^= 1 << int(b)
    return code


def _build_groups(spec: SyntheticSpec, rng: np.random.Generator) -> List[List[_Variant]]:
    base, rem = divmod(spec.n_objects, spec.n_groups)
    is_image = rng.random(spec.n_groups) < spec.image_fraction
    index = SimhashIndex(spec.hamming_threshold)
    flip = spec.intra_group_distance // 2
    groups = []
    for g in range(spec.n_groups):
        k = base + (1 if g < rem else 0)
        cid = f"c{g}"
        variants: List[_Variant] = []
        if is_image[g]:
            lo, hi = spec.image_size_range
            full = int(rng.integers(lo, hi + 1))
            while True:
                root = _random_code(rng)
                codes = [root] + [_perturb(root, flip, rng) for _ in range(k - 1)]
                if not any(index.query(c) for c in codes):
                    break
            for j in range(k):
                w, h, fmt, q = _IMAGE_VARIANTS[j % len(_IMAGE_VARIANTS)]
                q = q - 5 * (j // len(_IMAGE_VARIANTS))
                area = (w * h) / (1920 * 1080)
                size = max(1024, int(full * area * _FORMAT_FACTOR[fmt] * q / 90))
                params = ParamSet.of(w=w, h=h, fmt=fmt, q=max(q, 1))
                variants.append(_Variant(f"{cid}/img", params, size, fmt, codes[j]))
            for j, c in enumerate(codes):
                index.add((g, j), c)
        else:
            levels, ranges = _block_ranges(k)
            unit = 4096 << levels
            lo, hi = spec.block_size_range
            n_units = int(rng.integers(max(1, lo // unit), max(1, hi // unit) + 1))
            piece = n_units * 4096
            for off, width in ranges:
                params = ParamSet.of(off=off * piece, len=width * piece)
                variants.append(_Variant(f"{cid}/obj", params, width * piece, "raw", None))
        groups.append(variants)
    return groups


def generate_synthetic_trace(spec: SyntheticSpec) -> List[RequestRecord]:
    """Generate a reproducible trace; the same spec yields the same records."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    groups = _build_groups(spec, rng)
    G, R = spec.n_groups, spec.n_requests
    if R == 0:
        return []

    rank = rng.permutation(G)
    popularity = zipf_weights(G, spec.zipf_alpha)[rank]
    group_of = rng.choice(G, size=R, p=popularity)

    u = rng.random(R)
    counts = np.array([len(v) for v in groups])
    variant_of = np.empty(R, dtype=np.int64)
    for k in np.unique(counts):
        cum = np.cumsum(zipf_weights(int(k), spec.variant_alpha))
        sel = counts[group_of] == k
        variant_of[sel] = np.minimum(np.searchsorted(cum, u[sel], side="right"), k - 1)

    gaps = rng.exponential(spec.mean_interarrival_us, size=R)
    ts = np.floor(np.concatenate(([0.0], np.cumsum(gaps[1:])))).astype(np.int64)

    origin = None
    if spec.origin_latency_us is not None:
        sigma = spec.origin_latency_sigma
        factor = rng.lognormal(-sigma * sigma / 2, sigma, size=R) if sigma > 0 else np.ones(R)
        origin = np.rint(spec.origin_latency_us * factor).astype(np.int64)

    records = []
    for i in range(R):
        g = int(group_of[i])
        v = groups[g][int(variant_of[i])]
        records.append(
            RequestRecord(
                timestamp=int(ts[i]),
                key=v.key,
                params=v.params,
                size=v.size,
                content_id=f"c{g}",
                modality=Modality.IMAGE if v.simhash is not None else Modality.BLOCK,
                format=v.format,
                simhash=v.simhash,
                origin_latency_override=None if origin is None else int(origin[i]),
            )
        )
    return records
