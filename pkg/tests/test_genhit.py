import random

import pytest

from cogent_sim.genhit import (
    BlockRangeError,
    CostModel,
    MemoryPayloads,
    PayloadMissingError,
    SyntheticPayloads,
    TilingError,
    estimate_latency,
    generate,
    merge_blocks,
    split_block,
)
from cogent_sim.judgment import Classification, Outcome, classify
from cogent_sim.models import CpuModel, ScenarioKind as S
from cogent_sim.policies import LRUCache

from helpers import block, entry, image


def test_split_examples():
    assert split_block(b"abcdefgh", 0, 8) == b"abcdefgh"
    assert split_block(b"abcdefgh", 2, 3) == b"cde"
    for off, n in ((7, 2), (-1, 1), (0, 0)):
        with pytest.raises(BlockRangeError):
            split_block(b"abcdefgh", off, n)


def test_merge_examples():
    assert merge_blocks([(0, b"ab"), (2, b"cd")]) == b"abcd"
    assert merge_blocks([(2, b"cd"), (0, b"ab")]) == b"abcd"
    with pytest.raises(TilingError) as gap:
        merge_blocks([(0, b"ab"), (3, b"d")])
    assert gap.value.boundary == 2
    with pytest.raises(TilingError) as overlap:
        merge_blocks([(0, b"abc"), (2, b"cd")])
    assert overlap.value.boundary == 2
    with pytest.raises(TilingError):
        merge_blocks([])


def test_random_split_merge_round_trips():
    rng = random.Random(5)
    for _ in range(500):
        payload = rng.randbytes(rng.randint(1, 4096))
        off = rng.randrange(len(payload))
        length = rng.randint(1, len(payload) - off)
        cuts = sorted(rng.sample(range(off + 1, off + length), min(length - 1, rng.randint(0, 6))))
        bounds = [off] + cuts + [off + length]
        parts = [(a, split_block(payload, a, b - a)) for a, b in zip(bounds, bounds[1:])]
        rng.shuffle(parts)
        assert merge_blocks(parts) == payload[off:off + length]


def test_estimate_latency():
    m = CostModel()
    assert estimate_latency(m, S.DISASSEMBLE, 4096) == 1000
    for size in (1, 4096, 10**9):
        assert estimate_latency(m, S.REFORMAT, size) == 40_000
    per_kb = CostModel(per_byte={S.DISASSEMBLE: 1 / 1024})
    assert estimate_latency(per_kb, S.DISASSEMBLE, 1 << 20) == 1000 + 1024
    with pytest.raises(ValueError):
        CostModel(base={S.REVISE: -1})


def test_synthetic_payloads_share_byte_space():
    store = SyntheticPayloads(seed=1)
    whole = store.read("c1/a", 0, 10_000)
    assert len(whole) == 10_000
    assert store.read("c1/b", 300, 5000) == whole[300:5300]
    assert store.read("c2/a", 0, 100) != whole[:100]


def test_generate_combine_produces_donor_concatenation():
    cache = LRUCache(1 << 20)
    for off in (0, 4096):
        cache.admit(entry(block(0, "c5/obj", off, 4096)))
    req = block(1, "c5/obj", 0, 8192)
    cls = classify(req, cache, CostModel(), CpuModel(), 1)
    assert cls.kind is Outcome.PSEUDO_MISS and cls.scenario is S.COMBINE
    store = SyntheticPayloads()
    out = generate(req, cls, CostModel(), store)
    assert out.payload == b"".join(store.get(d) for d in cls.donors)
    assert out.payload == store.read("c5/obj", 0, 8192)
    assert out.latency_us == 1000 and out.produced_size == 8192
    assert req.ident not in cache


def test_generate_disassemble_slices_the_donor():
    cache = LRUCache(1 << 22)
    cache.admit(entry(block(0, "c9/f", 0, 1 << 20)))
    req = block(1, "c9/f", 4096, 4096)
    cls = classify(req, cache, CostModel(), None, 1)
    out = generate(req, cls, CostModel(), SyntheticPayloads())
    assert out.payload == SyntheticPayloads().read("c9/f", 4096, 4096)


def test_generate_reshape_is_cost_only():
    cache = LRUCache(1 << 20)
    cache.admit(entry(image(0, "c3", w=1920, h=1080)))
    req = image(1, "c3", w=640, h=360)
    cls = classify(req, cache, CostModel(), None, 1)
    assert cls.scenario is S.RESHAPE
    out = generate(req, cls, CostModel(), SyntheticPayloads())
    assert out.payload is None
    assert out.latency_us == 40_000 and out.cpu_time == 40_000
    assert req.ident not in cache


def test_generate_rejects_non_pseudo_miss_and_missing_payload():
    with pytest.raises(ValueError):
        generate(block(0, "a/b", 0, 10), Classification(Outcome.MISS), CostModel())
    with pytest.raises(PayloadMissingError):
        MemoryPayloads().get(entry(block(0, "a/b", 0, 10)))
