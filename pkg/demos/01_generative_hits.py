# %% [markdown]
# Generative hits on a toy cache
#
# A request whose exact (key, params) is missing can often be produced from
# something already cached. This walks through each kind of donor.

# %%
from cogent_sim import CostModel, CpuModel, ParamSet, RequestRecord, classify, generate, make_cache
from cogent_sim.genhit import SyntheticPayloads
from cogent_sim.policies import CacheEntry
from cogent_sim.trace import Modality

cache = make_cache("lru", 64 << 20)
cost, cpu = CostModel(), CpuModel()
store = SyntheticPayloads(seed=0)


def blk(key, off, length, ts=0):
    return RequestRecord(ts, key, ParamSet.of(off=off, len=length), length, key.split("/")[0], Modality.BLOCK, "raw")


def img(cid, fmt, w, h, code, ts=0):
    return RequestRecord(ts, f"{cid}/img", ParamSet.of(w=w, h=h, fmt=fmt), w * h // 8, cid, Modality.IMAGE, fmt, code)


for rec in (
    blk("c9/f", 0, 1 << 20),
    blk("c4/obj", 0, 4096),
    blk("c4/obj", 4096, 4096),
    img("c2", "png", 1920, 1080, 0xABCDEF << 64),
):
    cache.admit(CacheEntry.from_record(rec, 0))

# %%
requests = {
    "slice of a cached block": blk("c9/f", 4096, 4096, 1),
    "two chunks glued together": blk("c4/obj", 0, 8192, 1),
    "same picture, smaller": img("c2", "png", 640, 360, 0xABCDEF << 64, 1),
    "same picture, other format": img("c2", "webp", 1920, 1080, 0xABCDEF << 64, 1),
    "near-duplicate picture": img("c7", "png", 1920, 1080, (0xABCDEF << 64) ^ 0b1011, 1),
    "unrelated": blk("c1/x", 0, 4096, 1),
}
for label, req in requests.items():
    cls = classify(req, cache, cost, cpu, 1)
    scen = cls.scenario.value if cls.scenario else "-"
    print(f"{label:28s} {cls.kind.value:12s} {scen:3s} donors={len(cls.donors)} gen={cls.generation_us}us")

# %% block payloads are real bytes: the merge equals what the origin would send
req = requests["two chunks glued together"]
out = generate(req, classify(req, cache, cost, cpu, 1), cost, store)
print(out.produced_size, out.payload == store.read("c4/obj", 0, 8192))

# nothing generated was written back
print(all(r.ident not in cache for r in requests.values()))
