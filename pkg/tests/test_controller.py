import random

import numpy as np
import pytest

from cogent_sim.controller import (
    RECENCY_NEVER,
    AccessHistory,
    DecisionTree,
    Leaf,
    ReuseFeatures,
    SchemaError,
    Split,
    TrainingError,
    TrainingSample,
    TwoProngedController,
    build_samples,
    decide,
    reuse_labels,
    train,
)
from cogent_sim.genhit import CostModel
from cogent_sim.judgment import classify
from cogent_sim.models import CpuModel
from cogent_sim.policies import LRUCache
from cogent_sim.trace import SyntheticSpec, generate_synthetic_trace

from helpers import block, entry, image


def test_cold_start_features():
    h = AccessHistory()
    f = h.features(image(10, "c1"), 10)
    assert (f.age, f.recency, f.frequency) == (0, RECENCY_NEVER, 0)
    assert f.file_type == "Image:jpeg"


def test_second_request_features():
    h = AccessHistory()
    r = block(1000, "c1/obj", 0, 4096)
    h.observe(r, 1000)
    f = h.features(block(1500, "c1/obj", 0, 4096), 1500)
    assert (f.recency, f.frequency, f.age) == (500, 1, 500)
    # a sibling variant shares age and frequency but has its own recency
    g = h.features(block(1500, "c1/obj", 0, 2048), 1500)
    assert (g.recency, g.frequency, g.age) == (RECENCY_NEVER, 1, 500)


def rescan(records, i, window):
    """Quadratic oracle: recompute position i's features from scratch."""
    r = records[i]
    same_group = [p for p in records[:i] if p.content_id == r.content_id]
    same_obj = [p for p in records[:i] if p.ident == r.ident]
    recent = records[max(0, i - window):i]
    return ReuseFeatures(
        file_type=f"{r.modality.value}:{r.format}",
        file_size=r.size,
        age=r.timestamp - same_group[0].timestamp if same_group else 0,
        recency=r.timestamp - same_obj[-1].timestamp if same_obj else RECENCY_NEVER,
        frequency=sum(p.content_id == r.content_id for p in recent),
    )


def test_features_match_rescan_oracle():
    recs = generate_synthetic_trace(SyntheticSpec(n_objects=120, n_groups=30, n_requests=1000, seed=5))
    h = AccessHistory(window=50)
    for i, r in enumerate(recs):
        assert h.features(r, r.timestamp) == rescan(recs, i, 50), i
        h.observe(r, r.timestamp)


def test_reuse_labels_match_scan():
    recs = generate_synthetic_trace(SyntheticSpec(n_objects=200, n_groups=50, n_requests=1500, seed=6))
    got = reuse_labels(recs, horizon_us=20_000, horizon_requests=30)
    for i, r in enumerate(recs):
        nxt = next((j for j in range(i + 1, len(recs)) if recs[j].ident == r.ident), None)
        want = nxt is not None and nxt - i <= 30 and recs[nxt].timestamp - r.timestamp <= 20_000
        assert got[i] == want


def test_build_samples_uses_prefix():
    recs = generate_synthetic_trace(SyntheticSpec(n_requests=1000, seed=1))
    samples = build_samples(recs, fraction=0.2)
    assert len(samples) == 200
    with pytest.raises(ValueError):
        build_samples(recs, fraction=0)


def sample(freq, label, ft="Block:raw", size=100, age=0, rec=RECENCY_NEVER):
    return TrainingSample(ReuseFeatures(ft, size, age, rec, freq), label)


def test_all_true_gives_single_leaf():
    tree = train([sample(i, True) for i in range(50)])
    assert tree.n_leaves == 1 and tree.depth == 0
    assert decide(tree, ReuseFeatures("x", 1, 2, 3, 4)).fetch


def test_separable_by_frequency():
    data = [sample(f, f >= 2, size=1000 + (7 * i) % 13) for i, f in enumerate([0, 1, 2, 3, 4, 5] * 20)]
    tree = train(data, max_depth=6, min_leaf=1)
    assert tree.depth == 1
    assert tree.accuracy(data) == 1.0
    root = tree.nodes[0]
    assert root.feature == 4 and root.threshold == 1.5
    assert not decide(tree, ReuseFeatures("Block:raw", 1, 0, 0, 0)).fetch
    assert decide(tree, ReuseFeatures("Block:raw", 1, 0, 0, 2)).fetch


def test_categorical_split():
    data = [sample(1, ft == "Image:png", ft=ft) for ft in ["Image:png", "Image:jpeg", "Block:raw"] * 30]
    tree = train(data, min_leaf=1)
    assert tree.accuracy(data) == 1.0
    assert tree.nodes[0].categories is not None


def test_training_is_deterministic_and_rejects_empty():
    recs = generate_synthetic_trace(SyntheticSpec(n_requests=5000, seed=2))
    s = build_samples(recs, 0.5)
    assert train(s).dumps() == train(s).dumps()
    assert train(s).structure() == train(list(s)).structure()
    with pytest.raises(TrainingError):
        train([])


def paths(tree):
    """Every root-to-leaf path as (predicates, leaf)."""
    out = []

    def walk(i, preds):
        node = tree.nodes[i]
        if isinstance(node, Leaf):
            out.append((preds, node))
            return
        out_left = (node.feature, node.threshold, node.categories, True)
        out_right = (node.feature, node.threshold, node.categories, False)
        walk(node.left, preds + [out_left])
        walk(node.right, preds + [out_right])

    walk(0, [])
    return out


def holds(pred, v):
    feat, thr, cats, left = pred
    inside = v[feat] in cats if cats is not None else v[feat] <= thr
    return inside == left


def test_decide_matches_path_predicates():
    recs = generate_synthetic_trace(SyntheticSpec(n_requests=20_000, n_objects=600, n_groups=150, seed=8))
    tree = train(build_samples(recs, 0.5), max_depth=6, min_leaf=5)
    assert tree.n_leaves > 4
    all_paths = paths(tree)
    rng = random.Random(0)
    types = ["Block:raw", "Image:jpeg", "Image:png", "Image:webp", "Other:"]
    for _ in range(1000):
        v = (
            rng.choice(types),
            rng.randint(1, 5 << 20),
            rng.randint(0, 10**7),
            rng.choice([rng.randint(0, 10**7), RECENCY_NEVER]),
            rng.randint(0, 300),
        )
        matching = [leaf for preds, leaf in all_paths if all(holds(p, v) for p in preds)]
        assert len(matching) == 1
        assert decide(tree, v).fetch == matching[0].predict_reuse


def test_serialization_round_trip(tmp_path):
    recs = generate_synthetic_trace(SyntheticSpec(n_requests=8000, seed=4))
    s = build_samples(recs, 0.5)
    tree = train(s)
    text = tree.dumps()
    assert text.startswith("schema file_type,file_size,age,recency,frequency\n")
    again = DecisionTree.loads(text)
    assert again.dumps() == text
    path = tmp_path / "tree.txt"
    tree.save(path)
    loaded = DecisionTree.load(path)
    assert all(loaded.predict(x.features.vector()) == tree.predict(x.features.vector()) for x in s)
    with pytest.raises(ValueError, match="line 2"):
        DecisionTree.loads("schema a\nnode 0 feat x\n")
    with pytest.raises(ValueError):
        DecisionTree.loads("leaf 3 pred 1 frac 1.0\n")


def test_schema_mismatch():
    with pytest.raises(SchemaError):
        decide(DecisionTree.constant(True), (1, 2))


def test_controller_actions():
    cache = LRUCache(1 << 24)
    cache.admit(entry(image(0, "c2", fmt="png")))
    req = image(1, "c2", fmt="webp")
    cls = classify(req, cache, CostModel(), CpuModel(), 1)

    no = TwoProngedController(DecisionTree.constant(False))
    acts = no.on_pseudo_miss(req, cls, 1, 5000)
    assert [a.kind for a in acts] == ["generate"] and acts[0].done_at == 1 + 40_000

    yes = TwoProngedController(DecisionTree.constant(True))
    acts = yes.on_pseudo_miss(req, cls, 1, 5000)
    assert [a.kind for a in acts] == ["generate", "fetch"] and acts[1].done_at == 5001
    # a second pseudo-miss while the fetch is in flight issues no new fetch
    assert [a.kind for a in yes.on_pseudo_miss(req, cls, 2, 5000)] == ["generate"]
    yes.fetch_done(req.ident)
    assert [a.kind for a in yes.on_pseudo_miss(req, cls, 3, 5000)] == ["generate", "fetch"]
    # a miss fetch already pending for the object also suppresses it
    other = TwoProngedController(DecisionTree.constant(True))
    assert len(other.on_pseudo_miss(req, cls, 1, 5000, busy={req.ident})) == 1


def test_split_node_semantics():
    s = Split(0, 4, 1.5, None, 1, 2)
    assert s.goes_left(1) and not s.goes_left(2)
    c = Split(0, 0, None, frozenset({"a"}), 1, 2)
    assert c.goes_left("a") and not c.goes_left("b")
    assert np.isfinite(float(RECENCY_NEVER))
