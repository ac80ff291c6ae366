# %% [markdown]
# Why fetching in the background helps
#
# n requests for one object. A miss costs T, a generative hit T*. With
# hits free (idealized), the mean latency is T/n for a plain cache, T* when
# every request is generated, and (q-1)/n * T* when a background fetch
# lands between requests q-1 and q.

# %%
from fractions import Fraction

from cogent_sim import DecisionTree, LatencyModel, ParamSet, RequestRecord, SimConfig, make_cache, run
from cogent_sim.trace import Modality

lat = LatencyModel.idealized(origin_fetch=231_070, write=400, send=300, judgment=50, pseudo_send=200)
T = lat.origin_fetch + lat.write + lat.send
T_STAR = lat.judgment + 1000 + lat.pseudo_send  # 1 ms to slice a cached block


def slice_at(ts):
    return RequestRecord(ts, "c1/obj", ParamSet.of(off=4096, len=4096), 4096, "c1", Modality.BLOCK, "raw")


donor = RequestRecord(0, "c1/obj", ParamSet.of(off=0, len=1 << 20), 1 << 20, "c1", Modality.BLOCK, "raw")
n = 10

# %% plain cache
spaced = [slice_at(i * (T + 1000)) for i in range(n)]
rep = run(spaced, make_cache("lru", 1 << 30), "original", SimConfig(latency=lat))
print("original      ", rep.mean_latency_exact, "=", Fraction(T, n))

# %% generation only
rep = run(spaced, make_cache("lru", 1 << 30), "cogent", SimConfig(latency=lat, two_pronged=False), preload=[donor])
print("generate only ", rep.mean_latency_exact, "=", T_STAR)

# %% generation plus a background fetch that lands before request q
done = lat.origin_fetch + lat.write
for q in (2, 5, 10):
    step = done // (q - 1) if q > 2 else done
    ts = [i * step for i in range(q - 1)] + [done + 1 + i for i in range(n - q + 1)]
    trace = [slice_at(t) for t in ts]
    rep = run(trace, make_cache("lru", 1 << 30), "cogent", SimConfig(latency=lat), DecisionTree.constant(True), preload=[donor])
    print(f"two-pronged q={q:2d}", rep.mean_latency_exact, "=", Fraction((q - 1) * T_STAR, n))
