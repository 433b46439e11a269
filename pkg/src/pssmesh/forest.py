"""Extremely randomized trees for face planarity and segment classification.

Each node draws k candidate features, one uniform random threshold per
candidate inside the node's value range, and keeps the candidate with the
best weighted information gain. Trees see the full sample (no bootstrap).
Per-tree randomness derives from ``seed ^ tree_index``, so training is
reproducible bit for bit.

Predicted probabilities aggregate as an epsilon-floored geometric mean over
trees: g = exp(mean_t log max(p_t, 1e-6)), optionally renormalized.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

PROB_EPS = 1e-6
MODEL_MAGIC = b"PSSF"
MODEL_VERSION = 1


@dataclass
class ForestParams:
    trees: int = 100
    k_features: int | None = None      # None -> ceil(sqrt(d))
    min_leaf: int = 5
    max_depth: int = 40


@dataclass
class Tree:
    feature: np.ndarray        # (n,) int32, -1 for leaves
    threshold: np.ndarray      # (n,) float64
    left: np.ndarray           # (n,) int32
    right: np.ndarray          # (n,) int32
    proba: np.ndarray          # (n, C) float64, zeros on internal nodes

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int32)
        while True:
            feat = self.feature[node]
            act = np.flatnonzero(feat >= 0)
            if len(act) == 0:
                break
            cur = node[act]
            x = X[act, feat[act]]
            go_left = x <= self.threshold[cur]
            node[act] = np.where(go_left, self.left[cur], self.right[cur])
        return self.proba[node]


@dataclass
class ForestModel:
    trees: list
    classes: np.ndarray            # (C,) int32 original class ids
    n_features: int
    layout_version: str
    seed: int

    @property
    def n_classes(self):
        return len(self.classes)


@dataclass
class ForestPrediction:
    proba: np.ndarray              # (N, C) renormalized geometric mean
    geometric: np.ndarray          # (N, C) before renormalization, in [0,1]
    log_average: np.ndarray        # (N, C) mean of log(max(p_t, eps))
    per_tree: np.ndarray | None    # (T, N, C) when requested


@dataclass
class ProbabilityMap:
    """Per-face planarity prediction; index 1 is the non-planar class."""

    g_log: np.ndarray              # (F,) log-average non-planar probability
    g_hat: np.ndarray              # (F,) exp(g_log), in [0,1]
    label: np.ndarray              # (F,) 0 planar / 1 non-planar
    planar_prob: np.ndarray        # (F,) renormalized planar probability

    def __len__(self):
        return len(self.g_log)


def class_weights(labels: np.ndarray) -> np.ndarray:
    """w_c = sqrt(N / n_c) per class, ordered like np.unique(labels)."""
    _, counts = np.unique(labels, return_counts=True)
    return np.sqrt(len(labels) / counts)


def _entropy(wcounts: np.ndarray) -> float:
    total = wcounts.sum()
    if total <= 0:
        return 0.0
    p = wcounts[wcounts > 0] / total
    return float(-(p * np.log(p)).sum())


def _build_tree(X, y, sw, n_classes, params: ForestParams, rng) -> Tree:
    k = params.k_features or int(np.ceil(np.sqrt(X.shape[1])))
    k = min(k, X.shape[1])
    feature, threshold, left, right, proba = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        proba.append(None)
        return len(feature) - 1

    def make_leaf(node, idx):
        w = np.bincount(y[idx], weights=sw[idx], minlength=n_classes)
        proba[node] = w / w.sum()

    root = new_node()
    stack = [(np.arange(len(X)), 0, root)]
    while stack:
        idx, depth, node = stack.pop()
        classes_here = np.unique(y[idx])
        if (depth >= params.max_depth or len(idx) < 2 * params.min_leaf
                or len(classes_here) == 1):
            make_leaf(node, idx)
            continue

        Xn = X[idx]
        cand = rng.choice(X.shape[1], size=k, replace=False)
        parent_w = np.bincount(y[idx], weights=sw[idx], minlength=n_classes)
        parent_h = _entropy(parent_w)
        parent_sum = parent_w.sum()
        best = None
        for f in cand:
            col = Xn[:, f]
            lo, hi = col.min(), col.max()
            if hi <= lo:
                continue
            t = rng.uniform(lo, hi)
            go_left = col <= t
            nl = int(go_left.sum())
            if nl < params.min_leaf or len(idx) - nl < params.min_leaf:
                continue
            wl = np.bincount(y[idx[go_left]], weights=sw[idx[go_left]],
                             minlength=n_classes)
            wr = parent_w - wl
            gain = parent_h - (wl.sum() * _entropy(wl)
                               + wr.sum() * _entropy(wr)) / parent_sum
            if best is None or gain > best[0]:
                best = (gain, int(f), float(t), go_left)
        if best is None:
            make_leaf(node, idx)
            continue

        _, f, t, go_left = best
        feature[node] = f
        threshold[node] = t
        lnode, rnode = new_node(), new_node()
        left[node] = lnode
        right[node] = rnode
        stack.append((idx[~go_left], depth + 1, rnode))
        stack.append((idx[go_left], depth + 1, lnode))

    pr = np.zeros((len(feature), n_classes))
    for i, p in enumerate(proba):
        if p is not None:
            pr[i] = p
    return Tree(np.asarray(feature, dtype=np.int32),
                np.asarray(threshold, dtype=np.float64),
                np.asarray(left, dtype=np.int32),
                np.asarray(right, dtype=np.int32), pr)


def train_forest(samples: np.ndarray, labels: np.ndarray,
                 params: ForestParams | None = None,
                 weights: np.ndarray | None = None,
                 seed: int = 0,
                 layout_version: str = "",
                 n_jobs: int = 1) -> ForestModel:
    """Train an extremely randomized forest; see module docstring.

    ``weights`` are per-class (ordered like np.unique(labels)) and default to
    sqrt(N/n_c). Raises on single-class input and on NaN features.
    ``n_jobs`` > 1 builds trees in a thread pool; each tree seeds its own
    generator and results are combined in tree order, so the model is
    identical at any thread count.
    """
    X = np.asarray(samples, dtype=np.float64)
    y_raw = np.asarray(labels).reshape(-1)
    if X.ndim != 2 or len(X) != len(y_raw):
        raise ValueError("samples must be (N, d) with one label per row")
    nan_rows = np.isnan(X).any(axis=1)
    if nan_rows.any():
        raise ValueError(f"sample {int(np.argmax(nan_rows))} has NaN features")
    classes, y = np.unique(y_raw, return_inverse=True)
    if len(classes) < 2:
        raise ValueError("training data contains a single class")
    if weights is None:
        weights = class_weights(y_raw)
    weights = np.asarray(weights, dtype=np.float64)
    if len(weights) != len(classes):
        raise ValueError("one weight per class required")
    sw = weights[y]

    params = params or ForestParams()

    def build(t):
        rng = np.random.default_rng(seed ^ t)
        return _build_tree(X, y, sw, len(classes), params, rng)

    if n_jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(build, range(params.trees)))
    else:
        trees = [build(t) for t in range(params.trees)]
    return ForestModel(trees, classes.astype(np.int32), X.shape[1],
                       layout_version, seed)


def predict_proba(model: ForestModel, samples: np.ndarray,
                  per_tree: bool = False) -> ForestPrediction:
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    T = len(model.trees)
    logsum = np.zeros((len(X), model.n_classes))
    raw = np.zeros((T, len(X), model.n_classes)) if per_tree else None
    for t, tree in enumerate(model.trees):
        p = tree.predict(X)
        if per_tree:
            raw[t] = p
        logsum += np.log(np.maximum(p, PROB_EPS))
    log_avg = logsum / T
    geo = np.exp(log_avg)
    proba = geo / geo.sum(axis=1, keepdims=True)
    return ForestPrediction(proba, geo, log_avg, raw)


def planarity_map(model: ForestModel, face_features) -> ProbabilityMap:
    """Per-face planar(0)/non-planar(1) probabilities for region growing."""
    if model.n_classes != 2:
        raise ValueError("planarity model must be binary (planar/non-planar)")
    if model.layout_version and model.layout_version != face_features.layout_version:
        raise ValueError(
            f"feature layout {face_features.layout_version!r} does not match "
            f"model layout {model.layout_version!r}")
    pred = predict_proba(model, face_features.values)
    label = np.argmax(pred.geometric, axis=1).astype(np.int32)
    return ProbabilityMap(g_log=pred.log_average[:, 1],
                          g_hat=pred.geometric[:, 1],
                          label=label,
                          planar_prob=pred.proba[:, 0])


def classify_segments(model: ForestModel, segment_features) -> tuple:
    """(class id per segment, renormalized probabilities). Ties -> lower id."""
    if model.layout_version and model.layout_version != segment_features.layout_version:
        raise ValueError(
            f"feature layout {segment_features.layout_version!r} does not match "
            f"model layout {model.layout_version!r}")
    pred = predict_proba(model, segment_features.values)
    cls = model.classes[np.argmax(pred.proba, axis=1)]
    return cls, pred.proba


def save_model(model: ForestModel, path):
    """Little-endian versioned binary; round-trips exactly."""
    out = bytearray()
    out += MODEL_MAGIC
    out += struct.pack("<I", MODEL_VERSION)
    layout = model.layout_version.encode("utf-8")
    out += struct.pack("<I", len(layout)) + layout
    out += struct.pack("<q", int(model.seed))
    out += struct.pack("<I", model.n_classes)
    out += model.classes.astype("<i4").tobytes()
    out += struct.pack("<I", int(model.n_features))
    out += struct.pack("<I", len(model.trees))
    for tree in model.trees:
        out += struct.pack("<I", len(tree.feature))
        out += tree.feature.astype("<i4").tobytes()
        out += tree.threshold.astype("<f8").tobytes()
        out += tree.left.astype("<i4").tobytes()
        out += tree.right.astype("<i4").tobytes()
        out += tree.proba.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_model(path) -> ForestModel:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MODEL_MAGIC:
        raise ValueError("not a forest model file (bad magic)")
    pos = 4
    (version,) = struct.unpack_from("<I", buf, pos); pos += 4
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model file version {version}")
    (nlay,) = struct.unpack_from("<I", buf, pos); pos += 4
    layout = buf[pos:pos + nlay].decode("utf-8"); pos += nlay
    (seed,) = struct.unpack_from("<q", buf, pos); pos += 8
    (ncls,) = struct.unpack_from("<I", buf, pos); pos += 4
    classes = np.frombuffer(buf, dtype="<i4", count=ncls, offset=pos).copy(); pos += 4 * ncls
    (nfeat,) = struct.unpack_from("<I", buf, pos); pos += 4
    (ntrees,) = struct.unpack_from("<I", buf, pos); pos += 4
    trees = []
    for _ in range(ntrees):
        (n,) = struct.unpack_from("<I", buf, pos); pos += 4
        feature = np.frombuffer(buf, dtype="<i4", count=n, offset=pos).copy(); pos += 4 * n
        thresh = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).copy(); pos += 8 * n
        left = np.frombuffer(buf, dtype="<i4", count=n, offset=pos).copy(); pos += 4 * n
        right = np.frombuffer(buf, dtype="<i4", count=n, offset=pos).copy(); pos += 4 * n
        proba = np.frombuffer(buf, dtype="<f8", count=n * ncls,
                              offset=pos).copy().reshape(n, ncls); pos += 8 * n * ncls
        trees.append(Tree(feature.astype(np.int32), thresh,
                          left.astype(np.int32), right.astype(np.int32), proba))
    if pos != len(buf):
        raise ValueError(f"trailing bytes in model file at offset {pos}")
    return ForestModel(trees, classes.astype(np.int32), int(nfeat), layout, int(seed))
