# %% [markdown]
# Four replacement policies, with and without generative hits
#
# A synthetic trace where each content group has six variants. The cache
# holds 10% of the footprint. Results go to demo_out/ as CSV.

# %%
import csv
import sys
from pathlib import Path

from cogent_sim import SimConfig, SyntheticSpec, build_samples, generate_synthetic_trace, make_cache, run, train
from cogent_sim.trace import footprint_bytes, variant_redundancy

n_requests = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
spec = SyntheticSpec(
    n_objects=6 * 4000, n_groups=4000, variant_alpha=0.5, n_requests=n_requests, seed=1,
    origin_latency_us=231_070, origin_latency_sigma=0.3,
)
recs = generate_synthetic_trace(spec)
fp = footprint_bytes(recs)
print(f"{len(recs)} requests, footprint {fp / 1e9:.1f} GB, variant redundancy {variant_redundancy(recs):.2f}")

tree = train(build_samples(recs))
print(f"reuse tree: depth {tree.depth}, {tree.n_leaves} leaves")

# %% latency and origin traffic per policy
out = Path("demo_out")
out.mkdir(exist_ok=True)
rows = []
for policy in ("lru", "arc", "lhd", "lru-mad"):
    for arch in ("original", "cogent"):
        rep = run(recs, make_cache(policy, fp // 10), arch, SimConfig(), tree)
        s = rep.summary()
        rows.append({"policy": policy, "arch": arch, **s, "shielded": rep.shielded_fraction, "fetch_rate": rep.fetch_rate})
        print(f"{policy:8s} {arch:8s} mean {s['mean_ms']:7.2f} ms  p99 {s['p99_ms']:7.2f} ms  "
              f"origin {s['origin_gbps']:.3f} Gbps  redundancy {s['redundancy']:.3f}")

with open(out / "policies.csv", "w", newline="") as fh:
    w = csv.DictWriter(fh, list(rows[0]))
    w.writeheader()
    w.writerows(rows)

# %% redundancy as the cache grows (LRU)
with open(out / "redundancy_vs_capacity.csv", "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["capacity_fraction", "original", "cogent"])
    for frac in (0.025, 0.05, 0.1, 0.2, 0.4):
        red = [run(recs, make_cache("lru", int(fp * frac)), a, SimConfig(), tree).redundancy_mean for a in ("original", "cogent")]
        w.writerow([frac, *red])
        print(f"capacity {frac:5.3f}: redundancy {red[0]:.3f} -> {red[1]:.3f}")
