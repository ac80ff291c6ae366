import math
import random
from fractions import Fraction

import pytest

from cogent_sim.controller import DecisionTree
from cogent_sim.engine import SimConfig, percentile, redundancy_rate, run
from cogent_sim.genhit import CostModel
from cogent_sim.judgment import ShieldConfig
from cogent_sim.models import CpuModel, LatencyModel, admit_cpu
from cogent_sim.policies import CacheEntry, LRUCache, make_cache
from cogent_sim.trace import ParamSet, SyntheticSpec, footprint_bytes, generate_synthetic_trace

from helpers import block

FETCH, WRITE, SEND = 231_070, 400, 300
T = FETCH + WRITE + SEND
JUDGE, PM_SEND, GEN = 50, 200, 1000
T_STAR = JUDGE + GEN + PM_SEND


def ideal():
    return LatencyModel.idealized(origin_fetch=FETCH, write=WRITE, send=SEND, judgment=JUDGE, pseudo_send=PM_SEND)


def donor():
    return block(0, "c1/obj", 0, 1 << 20)


def target(ts):
    return block(ts, "c1/obj", 4096, 4096)


# --- cpu admission


def test_admit_cpu_examples():
    cpu = CpuModel(cores=1, utilization_cap=0.6)
    assert admit_cpu(cpu, 0, 1000, 0.5)
    assert not admit_cpu(cpu, 10, 1000, 0.5)
    assert admit_cpu(cpu, 1000, 1000, 0.5)  # first reservation ended
    assert admit_cpu(cpu, 1000, 0, 5.0)  # zero duration needs no cores
    with pytest.raises(ValueError):
        admit_cpu(cpu, 0, -1, 0.1)


def test_admit_cpu_matches_interval_oracle():
    rng = random.Random(1)
    cores, cap = 4, 0.6
    sizes = [0.25, 0.5, 1.0, 2.0]
    mean_dur, mean_c = 10_000, sum(sizes) / len(sizes)
    rate = 0.9 * cores / (mean_dur * mean_c)  # offered utilization 0.9
    for trial in range(5):
        cpu = CpuModel(cores, cap)
        accepted = []  # (start, end, cores)
        t = 0.0
        rejected = total = 0
        for _ in range(2000):
            t += rng.expovariate(rate)
            now = int(t)
            dur = max(1, int(rng.expovariate(1 / mean_dur)))
            c = rng.choice(sizes)
            load = sum(Fraction(k) for s, e, k in accepted if s <= now < e) + Fraction(c)
            want = load <= Fraction(cores * cap)
            got = admit_cpu(cpu, now, dur, c)
            assert got == want
            if want:
                accepted.append((now, now + dur, c))
            rejected += not got
            total += 1
        assert 0 < rejected < total


# --- redundancy and percentiles


def test_redundancy_examples():
    c = LRUCache(1 << 20)
    assert redundancy_rate(c) == 0.0
    for i in range(3):
        c.admit(CacheEntry(f"k{i}", ParamSet(), f"c{i}", 4096))
    assert redundancy_rate(c) == 0.0
    c = LRUCache(1 << 20)
    c.admit(CacheEntry("a", ParamSet(), "c1", 4096))
    c.admit(CacheEntry("b", ParamSet(), "c1", 4096))
    assert redundancy_rate(c) == 0.5


def grouping_oracle(entries):
    """Union entries pairwise by content id, then keep one largest per group."""
    entries = list(entries)
    parent = list(range(len(entries)))

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for i in range(len(entries)):
        for j in range(i + 1, len(entries)):
            if entries[i].content_id == entries[j].content_id:
                parent[find(j)] = find(i)
    best = {}
    for i, e in enumerate(entries):
        r = find(i)
        best[r] = max(best.get(r, 0), e.size)
    used = sum(e.size for e in entries)
    return 0.0 if used == 0 else (used - sum(best.values())) / used


def test_redundancy_matches_grouping_oracle():
    rng = random.Random(2)
    for trial in range(1000):
        c = make_cache(rng.choice(["lru", "arc", "lhd", "lru-mad"]), rng.randint(100, 2000))
        for t in range(rng.randint(0, 40)):
            name = f"k{rng.randrange(30)}"
            params = ParamSet.of(v=rng.randrange(3))
            if (name, params) in c and rng.random() < 0.3:
                c.remove((name, params))
            elif (name, params) not in c:
                size = rng.randint(1, 100)
                c.admit(CacheEntry(name, params, f"g{rng.randrange(6)}", size), t)
        assert redundancy_rate(c) == grouping_oracle(c)


def test_percentile_examples():
    assert percentile([5], 0.99) == 5
    assert percentile(list(range(1, 101)), 0.99) == 99
    assert percentile(list(range(1, 1001)), 0.999) == 999
    with pytest.raises(ValueError):
        percentile([], 0.5)
    with pytest.raises(ValueError):
        percentile([1], 1.0)


def test_percentile_matches_sort_oracle():
    rng = random.Random(3)
    for _ in range(1000):
        values = [rng.randint(0, 50) for _ in range(rng.randint(1, 300))]
        permille = rng.randint(1, 999)
        # smallest x with at least p*n values <= x
        want = min(x for x in values if 1000 * sum(v <= x for v in values) >= permille * len(values))
        assert percentile(values, permille / 1000) == want


# --- analytic latency identities


def test_original_mean_is_t_over_n():
    n = 10
    trace = [target(i * (T + 1000)) for i in range(n)]
    rep = run(trace, LRUCache(1 << 30), "original", SimConfig(latency=ideal()))
    assert rep.mean_latency_exact == Fraction(T, n)
    assert rep.misses == 1 and rep.hits == n - 1


def test_cogent_without_prefetch_mean_is_t_star():
    n = 10
    trace = [target(i * (T + 1000)) for i in range(n)]
    cfg = SimConfig(latency=ideal(), two_pronged=False)
    rep = run(trace, LRUCache(1 << 30), "cogent", cfg, preload=[donor()])
    assert rep.mean_latency_exact == T_STAR
    assert rep.pseudo_hits == n and rep.scenario_counts == {"S1": n}


def crafted(q, n=10):
    """Fetch from request 1 lands strictly between requests q-1 and q."""
    done = FETCH + WRITE
    step = done // (q - 1) if q > 2 else done
    ts = [i * step for i in range(q - 1)]
    ts += [done + 1 + i for i in range(n - q + 1)]
    assert ts[q - 2] < done < ts[q - 1]
    return [target(t) for t in ts]


@pytest.mark.parametrize("q", [2, 5, 10])
def test_two_pronged_mean(q):
    n = 10
    cfg = SimConfig(latency=ideal())
    rep = run(crafted(q, n), LRUCache(1 << 30), "cogent", cfg, DecisionTree.constant(True), preload=[donor()], record_events=True)
    assert rep.mean_latency_exact == Fraction((q - 1) * T_STAR, n)
    assert rep.two_pronged_fetches == 1
    assert [e.outcome for e in rep.events] == ["pseudo_miss"] * (q - 1) + ["hit"] * (n - q + 1)
    off = run(crafted(q, n), LRUCache(1 << 30), "cogent", SimConfig(latency=ideal(), two_pronged=False), preload=[donor()])
    assert off.mean_latency_exact == T_STAR


def test_completion_wins_ties_with_arrivals():
    done = FETCH + WRITE
    trace = [target(0), target(done)]
    rep = run(trace, LRUCache(1 << 30), "original", SimConfig(latency=ideal()), record_events=True)
    assert [e.outcome for e in rep.events] == ["miss", "hit"]
    trace = [target(0), target(done - 1)]
    rep = run(trace, LRUCache(1 << 30), "original", SimConfig(latency=ideal()))
    assert rep.misses == 2


def test_no_prefetch_when_predictor_says_no():
    trace = crafted(5)
    rep = run(trace, LRUCache(1 << 30), "cogent", SimConfig(latency=ideal()), DecisionTree.constant(False), preload=[donor()])
    assert rep.two_pronged_fetches == 0 and rep.origin_bytes == 0


def test_cogent_needs_a_tree():
    with pytest.raises(ValueError):
        run([target(0)], LRUCache(1 << 30), "cogent")


# --- whole-run properties


def test_empty_trace():
    rep = run([], LRUCache(10), "original")
    assert rep.n == rep.hits == rep.misses == rep.origin_bytes == 0
    assert rep.origin_bps == 0.0 and rep.mean_latency_us == 0.0 and rep.p99_us == 0


@pytest.fixture(scope="module")
def small_trace():
    return generate_synthetic_trace(SyntheticSpec(n_objects=600, n_groups=100, n_requests=20_000, seed=3, origin_latency_us=200_000, origin_latency_sigma=0.3))


@pytest.mark.parametrize("policy", ["lru", "arc", "lhd", "lru-mad"])
def test_conservation_and_event_log(small_trace, policy):
    cap = footprint_bytes(small_trace) // 10
    cfg = SimConfig(cpu=CpuModel(cores=2, utilization_cap=0.5))
    rep = run(small_trace, make_cache(policy, cap), "cogent", cfg, DecisionTree.constant(True), record_events=True)
    ev = rep.events
    assert rep.n == len(ev) == rep.hits + rep.misses + rep.pseudo_hits + rep.shielded
    assert rep.shielded == sum(e.outcome == "shielded_miss" for e in ev) == rep.shielded_too_slow + rep.shielded_no_cpu
    assert rep.origin_bytes == sum(e.origin_bytes for e in ev) == rep.miss_bytes + rep.fetch_bytes
    assert rep.total_latency_us == sum(e.latency_us for e in ev)
    assert rep.two_pronged_fetches == sum(e.fetch_issued for e in ev)
    assert sum(rep.scenario_counts.values()) == rep.pseudo_hits
    assert rep.p99_us == percentile([e.latency_us for e in ev], 0.99)
    assert rep.shielded_no_cpu > 0
    duration = small_trace[-1].timestamp - small_trace[0].timestamp
    assert rep.origin_bps == 8.0 * rep.origin_bytes / (duration / 1e6)
    assert len(rep.windows) == len(rep.redundancy_samples) == small_trace[-1].timestamp // 1_000_000 + 1


def test_runs_are_deterministic(small_trace):
    cap = footprint_bytes(small_trace) // 10

    def once():
        tree = DecisionTree.constant(True)
        return run(small_trace, make_cache("lhd", cap), "cogent", SimConfig(), tree).to_json()

    assert once() == once()


def test_generous_cost_model_never_shields(small_trace):
    cheap = CostModel(base={k: 1 for k in "S1 S2 S3 S4 S5".split()})
    cfg = SimConfig(cost=cheap, cpu=CpuModel(cores=16, utilization_cap=1.0))
    rep = run(small_trace, LRUCache(footprint_bytes(small_trace) // 10), "cogent", cfg, DecisionTree.constant(False))
    assert rep.shielded == 0 and rep.pseudo_hits > 0


def test_shielding_disabled(small_trace):
    cfg = SimConfig(cpu=CpuModel(cores=1, utilization_cap=0.1), shield=ShieldConfig.disabled())
    rep = run(small_trace, LRUCache(footprint_bytes(small_trace) // 10), "cogent", cfg, DecisionTree.constant(False))
    assert rep.shielded == 0


def test_cogent_lowers_latency(small_trace):
    cap = footprint_bytes(small_trace) // 10
    orig = run(small_trace, LRUCache(cap), "original")
    cog = run(small_trace, LRUCache(cap), "cogent", SimConfig(), DecisionTree.constant(True))
    assert cog.mean_latency_us < orig.mean_latency_us
    assert math.isclose(orig.mean_latency_us, orig.total_latency_us / orig.n)
