"""Two-pronged controller: reuse features, a CART reuse predictor, and the
pseudo-miss action planner (generate now, optionally fetch in background).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Container, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .trace import RequestRecord

FEATURE_NAMES = ("file_type", "file_size", "age", "recency", "frequency")
RECENCY_NEVER = 1 << 62


class TrainingError(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class ReuseFeatures:
    file_type: str
    file_size: int
    age: int
    recency: int
    frequency: int

    def vector(self) -> tuple:
        return (self.file_type, self.file_size, self.age, self.recency, self.frequency)


def file_type(req: RequestRecord) -> str:
    return f"{req.modality.value}:{req.format}"


class AccessHistory:
    """Everything the features need about requests seen so far.

    Recency is tracked per ``(key, params)``; age and frequency per content
    group, frequency counting only the last ``window`` requests.
    """

    def __init__(self, window: int = 10_000):
        if window < 1:
            raise ValueError("window must be positive")
        self.window = window
        self.first_seen: Dict[str, int] = {}
        self.last_seen: Dict[tuple, int] = {}
        self._recent: deque = deque()
        self._counts: Dict[str, int] = {}

    def features(self, req: RequestRecord, now: int) -> ReuseFeatures:
        first = self.first_seen.get(req.content_id)
        last = self.last_seen.get(req.ident)
        return ReuseFeatures(
            file_type=file_type(req),
            file_size=req.size,
            age=0 if first is None else now - first,
            recency=RECENCY_NEVER if last is None else now - last,
            frequency=self._counts.get(req.content_id, 0),
        )

    def observe(self, req: RequestRecord, now: int) -> None:
        cid = req.content_id
        counts = self._counts
        if cid not in self.first_seen:
            self.first_seen[cid] = now
        self.last_seen[req.ident] = now
        self._recent.append(cid)
        counts[cid] = counts.get(cid, 0) + 1
        if len(self._recent) > self.window:
            old = self._recent.popleft()
            left = counts[old] - 1
            if left:
                counts[old] = left
            else:
                del counts[old]


def extract_features(req: RequestRecord, history: AccessHistory, now: int) -> ReuseFeatures:
    return history.features(req, now)


@dataclass(frozen=True)
class TrainingSample:
    features: ReuseFeatures
    label: bool


def reuse_labels(records: Sequence[RequestRecord], horizon_us: int = 100_000, horizon_requests: int = 1000) -> List[bool]:
    """True where the same ``(key, params)`` recurs within both horizons."""
    labels = [False] * len(records)
    next_at: Dict[tuple, int] = {}
    for i in range(len(records) - 1, -1, -1):
        r = records[i]
        j = next_at.get(r.ident)
        if j is not None and j - i <= horizon_requests and records[j].timestamp - r.timestamp <= horizon_us:
            labels[i] = True
        next_at[r.ident] = i
    return labels


def build_samples(
    records: Sequence[RequestRecord],
    fraction: float = 0.2,
    horizon_us: int = 100_000,
    horizon_requests: int = 1000,
    window: int = 10_000,
) -> List[TrainingSample]:
    """Samples for the first ``fraction`` of the trace.

    Features at position i use only positions before i; labels look only
    at positions after i (possibly past the prefix).
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    n = int(len(records) * fraction)
    labels = reuse_labels(records[: min(len(records), n + horizon_requests)], horizon_us, horizon_requests)
    history = AccessHistory(window)
    samples = []
    for i in range(n):
        r = records[i]
        samples.append(TrainingSample(history.features(r, r.timestamp), labels[i]))
        history.observe(r, r.timestamp)
    return samples


# --- decision tree ---------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    id: int
    predict_reuse: bool
    frac: float


@dataclass(frozen=True)
class Split:
    id: int
    feature: int
    threshold: Optional[float]
    categories: Optional[frozenset]
    left: int
    right: int

    def goes_left(self, value) -> bool:
        if self.categories is not None:
            return value in self.categories
        return value <= self.threshold


@dataclass(frozen=True)
class FetchDecision:
    fetch: bool


class DecisionTree:
    def __init__(self, nodes: Dict[int, Union[Leaf, Split]], schema: Tuple[str, ...] = FEATURE_NAMES):
        self.nodes = nodes
        self.schema = tuple(schema)

    @classmethod
    def constant(cls, predict_reuse: bool) -> "DecisionTree":
        return cls({0: Leaf(0, bool(predict_reuse), 1.0 if predict_reuse else 0.0)})

    def predict(self, vector: Sequence) -> bool:
        node = self.nodes[0]
        while isinstance(node, Split):
            node = self.nodes[node.left if node.goes_left(vector[node.feature]) else node.right]
        return node.predict_reuse

    def leaf_for(self, vector: Sequence) -> Leaf:
        node = self.nodes[0]
        while isinstance(node, Split):
            node = self.nodes[node.left if node.goes_left(vector[node.feature]) else node.right]
        return node

    @property
    def depth(self) -> int:
        def d(i):
            n = self.nodes[i]
            return 0 if isinstance(n, Leaf) else 1 + max(d(n.left), d(n.right))

        return d(0)

    @property
    def n_leaves(self) -> int:
        return sum(isinstance(n, Leaf) for n in self.nodes.values())

    def accuracy(self, samples: Sequence[TrainingSample]) -> float:
        if not samples:
            return 0.0
        ok = sum(self.predict(s.features.vector()) == s.label for s in samples)
        return ok / len(samples)

    def structure(self) -> list:
        return [self.nodes[i] for i in sorted(self.nodes)]

    # serialization

    def dumps(self) -> str:
        lines = ["schema " + ",".join(self.schema)]
        for node in self.structure():
            if isinstance(node, Leaf):
                lines.append(f"leaf {node.id} pred {int(node.predict_reuse)} frac {node.frac!r}")
            elif node.categories is not None:
                cats = "|".join(sorted(node.categories))
                lines.append(f"node {node.id} feat {node.feature} cats {cats} left {node.left} right {node.right}")
            else:
                lines.append(
                    f"node {node.id} feat {node.feature} thr {node.threshold!r} left {node.left} right {node.right}"
                )
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "DecisionTree":
        nodes: Dict[int, Union[Leaf, Split]] = {}
        schema = FEATURE_NAMES
        for lineno, line in enumerate(text.splitlines(), start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "schema":
                    schema = tuple(parts[1].split(","))
                elif parts[0] == "leaf":
                    nodes[int(parts[1])] = Leaf(int(parts[1]), parts[3] == "1", float(parts[5]))
                elif parts[0] == "node":
                    nid, feat = int(parts[1]), int(parts[3])
                    if parts[4] == "thr":
                        thr, cats = float(parts[5]), None
                    elif parts[4] == "cats":
                        thr, cats = None, frozenset(parts[5].split("|"))
                    else:
                        raise ValueError(parts[4])
                    nodes[nid] = Split(nid, feat, thr, cats, int(parts[7]), int(parts[9]))
                else:
                    raise ValueError(parts[0])
            except (IndexError, ValueError) as exc:
                raise ValueError(f"tree line {lineno}: cannot parse {line!r} ({exc})") from None
        if 0 not in nodes:
            raise ValueError("tree has no root node 0")
        return cls(nodes, schema)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "DecisionTree":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def decide(tree: DecisionTree, features) -> FetchDecision:
    vector = features.vector() if isinstance(features, ReuseFeatures) else tuple(features)
    if len(vector) != len(tree.schema):
        raise SchemaError(f"tree expects {len(tree.schema)} features {tree.schema}, got {len(vector)}")
    return FetchDecision(tree.predict(vector))


def _weighted_gini(pos_l, n_l, pos_r, n_r, n):
    gl = 2.0 * pos_l * (n_l - pos_l) / n_l
    gr = 2.0 * pos_r * (n_r - pos_r) / n_r
    return (gl + gr) / n


def train(
    samples: Sequence[TrainingSample],
    max_depth: int = 6,
    min_leaf: int = 20,
) -> DecisionTree:
    """Grow a CART tree on Gini impurity.

    Numeric thresholds are midpoints between consecutive distinct values;
    the categorical file type is split by ordering categories on their
    positive fraction. Ties go to the lowest feature index, then the lowest
    threshold. Leaves predict the majority label, ties predicting reuse.
    """
    if not samples:
        raise TrainingError("no training samples")
    if max_depth < 0 or min_leaf < 1:
        raise ValueError("max_depth must be >= 0 and min_leaf >= 1")
    cats = np.array([s.features.file_type for s in samples], dtype=object)
    num = np.array([s.features.vector()[1:] for s in samples], dtype=float)
    y = np.array([s.label for s in samples], dtype=bool)
    nodes: Dict[int, Union[Leaf, Split]] = {}
    counter = [0]

    def new_id():
        counter[0] += 1
        return counter[0] - 1

    def best_split(idx):
        n = len(idx)
        yi = y[idx]
        pos = int(yi.sum())
        p = pos / n
        parent = 2.0 * p * (1 - p)
        best = (0.0, None, None, None)

        # categorical feature 0
        c = cats[idx]
        names = sorted(set(c))
        if len(names) > 1:
            stats = []
            for name in names:
                mask = c == name
                k = int(mask.sum())
                stats.append((int(yi[mask].sum()) / k, name, k, int(yi[mask].sum())))
            stats.sort()
            n_l = pos_l = 0
            for i in range(len(stats) - 1):
                n_l += stats[i][2]
                pos_l += stats[i][3]
                n_r = n - n_l
                if n_l < min_leaf or n_r < min_leaf:
                    continue
                gain = parent - _weighted_gini(pos_l, n_l, pos - pos_l, n_r, n)
                if gain > best[0]:
                    best = (gain, 0, None, frozenset(s[1] for s in stats[: i + 1]))

        for f in range(num.shape[1]):
            v = num[idx, f]
            order = np.argsort(v, kind="stable")
            vs = v[order]
            cum = np.cumsum(yi[order])
            n_l = np.arange(1, n)
            ok = (vs[:-1] != vs[1:]) & (n_l >= min_leaf) & (n - n_l >= min_leaf)
            if not ok.any():
                continue
            n_l = n_l[ok]
            pos_l = cum[:-1][ok]
            n_r = n - n_l
            pos_r = pos - pos_l
            w = (2.0 * pos_l * (n_l - pos_l) / n_l + 2.0 * pos_r * (n_r - pos_r) / n_r) / n
            gains = parent - w
            k = int(np.argmax(gains))
            if gains[k] > best[0]:
                i = np.flatnonzero(ok)[k]
                best = (float(gains[k]), f + 1, (vs[i] + vs[i + 1]) / 2.0, None)
        return best

    def grow(idx, depth):
        nid = new_id()
        n = len(idx)
        pos = int(y[idx].sum())
        leaf = Leaf(nid, 2 * pos >= n, pos / n)
        if depth >= max_depth or pos == 0 or pos == n or n < 2 * min_leaf:
            nodes[nid] = leaf
            return nid
        gain, feat, thr, subset = best_split(idx)
        if feat is None or gain <= 1e-12:
            nodes[nid] = leaf
            return nid
        if subset is not None:
            mask = np.isin(cats[idx], list(subset))
        else:
            mask = num[idx, feat - 1] <= thr
        left = grow(idx[mask], depth + 1)
        right = grow(idx[~mask], depth + 1)
        nodes[nid] = Split(nid, feat, None if thr is None else float(thr), subset, left, right)
        return nid

    grow(np.arange(len(samples)), 0)
    return DecisionTree(nodes)


# --- pseudo-miss planning --------------------------------------------------


@dataclass(frozen=True)
class Action:
    kind: str  # "generate" or "fetch"
    ident: tuple
    done_at: int


class TwoProngedController:
    """Serves every pseudo-miss by generation and, when reuse is predicted,
    also fetches the exact object in the background (one fetch per object
    at a time)."""

    def __init__(self, tree: DecisionTree, history: Optional[AccessHistory] = None):
        self.tree = tree
        self.history = history or AccessHistory()
        self.in_flight: set = set()
        self.decisions = 0
        self.fetches = 0

    def observe(self, req: RequestRecord, now: int) -> None:
        self.history.observe(req, now)

    def on_pseudo_miss(
        self,
        req: RequestRecord,
        classification,
        now: int,
        fetch_duration: int,
        busy: Container = (),
    ) -> List[Action]:
        actions = [Action("generate", req.ident, now + classification.generation_us)]
        self.decisions += 1
        if req.ident in self.in_flight or req.ident in busy:
            return actions
        if decide(self.tree, self.history.features(req, now)).fetch:
            self.in_flight.add(req.ident)
            self.fetches += 1
            actions.append(Action("fetch", req.ident, now + fetch_duration))
        return actions

    def fetch_done(self, ident) -> None:
        self.in_flight.discard(ident)
