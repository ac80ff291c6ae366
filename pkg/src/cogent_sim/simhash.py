"""128-bit similarity codes and a multi-index Hamming search structure."""

from __future__ import annotations

from collections import defaultdict
from typing import Dict, Hashable, List, Set, Tuple

CODE_BITS = 128
_MASK = (1 << CODE_BITS) - 1


def parse_code(text: str) -> int:
    """Decode a 32-digit hex string into a 128-bit integer."""
    text = text.strip()
    if len(text) != 32:
        raise ValueError(f"similarity code must be 32 hex digits, got {len(text)}")
    try:
        return int(text, 16)
    except ValueError:
        raise ValueError(f"similarity code is not hex: {text!r}") from None


def format_code(code: int) -> str:
    if not 0 <= code <= _MASK:
        raise ValueError("similarity code out of 128-bit range")
    return f"{code:032x}"


def hamming(a: int, b: int) -> int:
    return (a ^ b).bit_count()


def _chunk_bounds(n_chunks: int) -> List[Tuple[int, int]]:
    base, extra = divmod(CODE_BITS, n_chunks)
    bounds = []
    lo = 0
    for i in range(n_chunks):
        width = base + (1 if i < extra else 0)
        bounds.append((lo, width))
        lo += width
    return bounds


class SimhashIndex:
    """Exact radius search over 128-bit codes.

    Codes are cut into ``radius + 1`` disjoint chunks. Two codes within
    ``radius`` bits must agree exactly on at least one chunk (pigeonhole),
    so candidates come from per-chunk hash tables and are then verified.
    Queries with a radius above the build radius fall back to a full scan.
    """

    def __init__(self, radius: int = 8):
        if not 0 <= radius <= CODE_BITS:
            raise ValueError("radius must lie in [0, 128]")
        self.radius = radius
        self._bounds = _chunk_bounds(min(radius + 1, CODE_BITS))
        self._masks = [(lo, (1 << width) - 1) for lo, width in self._bounds]
        self._tables: List[Dict[int, Set[Hashable]]] = [
            defaultdict(set) for _ in self._bounds
        ]
        self._codes: Dict[Hashable, int] = {}

    def __len__(self) -> int:
        return len(self._codes)

    def __contains__(self, item: Hashable) -> bool:
        return item in self._codes

    def _chunks(self, code: int) -> List[Tuple[int, int]]:
        return [(i, (code >> lo) & mask) for i, (lo, mask) in enumerate(self._masks)]

    def add(self, item: Hashable, code: int) -> None:
        if item in self._codes:
            self.remove(item)
        self._codes[item] = code
        for i, part in self._chunks(code):
            self._tables[i][part].add(item)

    def remove(self, item: Hashable) -> None:
        code = self._codes.pop(item)
        for i, part in self._chunks(code):
            bucket = self._tables[i][part]
            bucket.discard(item)
            if not bucket:
                del self._tables[i][part]

    def query(self, code: int, radius: int | None = None) -> List[Tuple[int, Hashable]]:
        """Return ``(distance, item)`` for every stored code within ``radius``."""
        if radius is None:
            radius = self.radius
        if radius > self.radius:
            found = [(hamming(code, c), item) for item, c in self._codes.items()]
            return [hit for hit in found if hit[0] <= radius]
        seen: Set[Hashable] = set()
        hits = []
        for i, part in self._chunks(code):
            bucket = self._tables[i].get(part)
            if not bucket:
                continue
            for item in bucket:
                if item in seen:
                    continue
                seen.add(item)
                d = hamming(code, self._codes[item])
                if d <= radius:
                    hits.append((d, item))
        return hits
