"""Gradient-boosted regression trees for binary classification.

Second-order (Newton) boosting on the weighted logistic loss with an L2
penalty ``lambda`` on leaf weights and a per-split penalty ``gamma``.
Trees grow level by level with an exact greedy search over every midpoint
between consecutive distinct feature values.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, fields
from typing import Any

import numpy as np
from numba import njit

from .errors import ConfigError, FormatError, PreconditionError

FORMAT_NAME = "burstfd.tree_ensemble"
FORMAT_VERSION = 1

# Gains within this relative distance count as ties (lowest feature, then
# lowest threshold wins).
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class BoostConfig:
    n_trees: int = 100
    learning_rate: float = 0.3
    max_depth: int = 6
    gamma: float = 10.0
    reg_lambda: float = 1.0
    subsample: float = 1.0
    positive_class_weight: float = 2.0
    base_score: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise ConfigError(f"n_trees must be >= 0, got {self.n_trees}")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.max_depth < 0:
            raise ConfigError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.gamma < 0 or self.reg_lambda < 0:
            raise ConfigError("gamma and reg_lambda must be non-negative")
        if not 0 < self.subsample <= 1:
            raise ConfigError(f"subsample must be in (0, 1], got {self.subsample}")
        if not self.positive_class_weight > 0:
            raise ConfigError("positive_class_weight must be positive")
        if not 0 < self.base_score < 1:
            raise ConfigError(f"base_score must be in (0, 1), got {self.base_score}")


@dataclass(frozen=True)
class Tree:
    """Flat node arrays; node 0 is the root and ``feature == -1`` marks a leaf.

    Samples go left when ``x[feature] < threshold``. ``value`` holds leaf
    outputs already multiplied by the learning rate.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_splits(self) -> int:
        return int(np.count_nonzero(self.feature >= 0))

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)


@dataclass(frozen=True)
class TreeEnsemble:
    trees: tuple[Tree, ...]
    config: BoostConfig
    feature_count: int

    @property
    def base_margin(self) -> float:
        b = self.config.base_score
        return math.log(b / (1.0 - b))

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = _check_features(X, self.feature_count)
        margin = np.full(X.shape[0], self.base_margin)
        for tree in self.trees:
            margin += tree.predict(X)
        return margin


# --------------------------------------------------------------------------
# numba kernels


@njit(cache=True, nogil=True)
def _predict_tree(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True, nogil=True)
def _scan_candidate(s, gls, hls, x, prev, g_tot, h_tot, parent, lam, gamma, tie_rtol,
                    crit, b_gain, b_feat, b_thr, f):
    gr = g_tot[s] - gls
    hr = h_tot[s] - hls
    a = hls + lam
    b = hr + lam
    # multiply out the two divisions; near-misses fall through to the exact test
    num = gls * gls * b + gr * gr * a
    bound = crit[s] * a * b
    if a > 0.0 and b > 0.0 and num < bound - 1e-9 * abs(bound):
        return
    gn = 0.5 * (gls * gls / a + gr * gr / b - parent[s]) - gamma
    best = b_gain[s]
    if b_feat[s] < 0 or gn > best + tie_rtol * max(abs(best), abs(gn)):
        b_gain[s] = gn
        b_feat[s] = f
        t = 0.5 * (prev + x)
        if not t > prev:
            t = x
        b_thr[s] = t
        crit[s] = 2.0 * (gn + gamma) + parent[s]


_BLOCK = 256


@njit(cache=True, nogil=True)
def _scan_segment(f, s, order, xs, j_start, j_end, gh, g_tot, h_tot, parent, lam, gamma,
                  tie_rtol, crit, b_gain, b_feat, b_thr):
    # Rows j_start..j_end-1 of order[f] are exactly the samples of node slot
    # s, sorted by feature f. They are walked in blocks: a first pass only
    # accumulates the left sums and records their range, which bounds every
    # candidate's gain in the block (squares peak at the range ends,
    # denominators are smallest at the block's first left cover and last
    # right cover). Blocks whose bound cannot beat the best so far are
    # skipped; the others are walked again from the saved start sums with
    # the exact test, so all sums are bitwise those of a plain scan.
    G = g_tot[s]
    H = h_tot[s]
    gls = 0.0
    hls = 0.0
    prev = xs[f, j_start]  # the first sample opens no candidate
    for j0 in range(j_start, j_end, _BLOCK):
        j1 = min(j_end, j0 + _BLOCK)
        g0 = gls
        h0 = hls
        lo = gls
        hi = gls
        h_last = hls
        for j in range(j0, j1):
            lo = min(lo, gls)
            hi = max(hi, gls)
            h_last = hls
            i = order[f, j]
            gls += gh[i, 0]
            hls += gh[i, 1]
        if b_feat[s] >= 0:
            a = h0 + lam
            b = (H - h_last) + lam
            if a > 0.0 and b > 0.0:
                r_lo = G - hi
                r_hi = G - lo
                bound = 0.5 * (max(lo * lo, hi * hi) / a + max(r_lo * r_lo, r_hi * r_hi) / b
                               - parent[s]) - gamma
                if bound <= b_gain[s]:
                    prev = xs[f, j1 - 1]
                    continue
        gls = g0
        hls = h0
        for j in range(j0, j1):
            i = order[f, j]
            x = xs[f, j]
            if x > prev:
                _scan_candidate(s, gls, hls, x, prev, g_tot, h_tot, parent, lam, gamma,
                                tie_rtol, crit, b_gain, b_feat, b_thr, f)
            gls += gh[i, 0]
            hls += gh[i, 1]
            prev = x


@njit(cache=True, nogil=True)
def _partition(src_order, src_xs, m, slot_of, seg_start, dst_order, dst_xs):
    # Stable partition of the first m columns of every feature's sorted
    # order by node slot; samples with slot -1 are dropped.
    n_feat = src_order.shape[0]
    cursor = np.empty(seg_start.size, np.int64)
    for f in range(n_feat):
        cursor[:] = seg_start
        for j in range(m):
            i = src_order[f, j]
            s = slot_of[i]
            if s < 0:
                continue
            p = cursor[s]
            dst_order[f, p] = i
            dst_xs[f, p] = src_xs[f, j]
            cursor[s] = p + 1


@njit(cache=True, nogil=True)
def _grow_tree(X, order, xs, gh, in_bag, max_depth, lam, gamma, tie_rtol, buf_order, buf_xs):
    # order[f] lists sample indices sorted by feature f and xs[f] the matching
    # values. Before each level the sorted orders are stably partitioned by
    # open node (into the two scratch buffers, alternately), so each node's
    # samples form one contiguous, still sorted segment per feature. A node's
    # candidates are visited feature by feature in increasing threshold order.
    # slot_of[i] is the position of sample i's open node in the current
    # level, or -1 once the sample sits in a finished leaf.
    n_feat, n = order.shape
    max_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full(max_nodes, -1, np.int32)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    value = np.zeros(max_nodes)
    gain = np.zeros(max_nodes)
    G = np.zeros(max_nodes)
    H = np.zeros(max_nodes)

    slot_of = np.full(n, -1, np.int32)
    m = 0
    for i in range(n):
        if in_bag[i]:
            slot_of[i] = 0
            G[0] += gh[i, 0]
            H[0] += gh[i, 1]
            m += 1
    seg_start = np.zeros(1, np.int64)
    seg_end = np.full(1, m, np.int64)
    cur_order = order
    cur_xs = xs
    n_cur = n
    nxt = 0
    if m < n:
        _partition(order, xs, n, slot_of, seg_start, buf_order[nxt], buf_xs[nxt])
        cur_order = buf_order[nxt]
        cur_xs = buf_xs[nxt]
        n_cur = m
        nxt = 1

    open_nodes = np.zeros(1, np.int32)
    n_nodes = 1
    for depth in range(max_depth + 1):
        k = open_nodes.size
        if depth == max_depth:
            for s in range(k):
                nd = open_nodes[s]
                value[nd] = -G[nd] / (H[nd] + lam)
            break
        b_gain = np.zeros(k)
        b_feat = np.full(k, -1, np.int32)
        b_thr = np.zeros(k)
        # crit[s]: score a candidate must reach to beat the node's best so far
        crit = np.full(k, -np.inf)
        g_tot = np.empty(k)
        h_tot = np.empty(k)
        parent = np.empty(k)
        for s in range(k):
            nd = open_nodes[s]
            g_tot[s] = G[nd]
            h_tot[s] = H[nd]
            parent[s] = G[nd] * G[nd] / (H[nd] + lam)
        for f in range(n_feat):
            for s in range(k):
                if seg_end[s] > seg_start[s]:
                    _scan_segment(f, s, cur_order, cur_xs, seg_start[s], seg_end[s], gh,
                                  g_tot, h_tot, parent, lam, gamma, tie_rtol, crit,
                                  b_gain, b_feat, b_thr)

        n_split = 0
        child = np.full(k, -1, np.int32)  # slot of the left child; right is +1
        for s in range(k):
            nd = open_nodes[s]
            if b_feat[s] >= 0 and b_gain[s] > 0.0:
                feature[nd] = b_feat[s]
                threshold[nd] = b_thr[s]
                gain[nd] = b_gain[s]
                left[nd] = n_nodes
                right[nd] = n_nodes + 1
                child[s] = 2 * n_split
                n_nodes += 2
                n_split += 1
            else:
                value[nd] = -G[nd] / (H[nd] + lam)
        if n_split == 0:
            break
        new_nodes = np.empty(2 * n_split, np.int32)
        for s in range(k):
            if child[s] >= 0:
                nd = open_nodes[s]
                new_nodes[child[s]] = left[nd]
                new_nodes[child[s] + 1] = right[nd]
        count = np.zeros(2 * n_split, np.int64)
        for i in range(n):
            s = slot_of[i]
            if s < 0:
                continue
            c = child[s]
            if c < 0:
                slot_of[i] = -1
                continue
            nd = open_nodes[s]
            if not X[i, feature[nd]] < threshold[nd]:
                c += 1
            slot_of[i] = c
            count[c] += 1
            G[new_nodes[c]] += gh[i, 0]
            H[new_nodes[c]] += gh[i, 1]
        open_nodes = new_nodes
        if depth + 1 == max_depth:
            continue  # the next level only assigns leaf values
        seg_start = np.empty(2 * n_split, np.int64)
        seg_end = np.empty(2 * n_split, np.int64)
        total = 0
        for c in range(2 * n_split):
            seg_start[c] = total
            total += count[c]
            seg_end[c] = total
        _partition(cur_order, cur_xs, n_cur, slot_of, seg_start, buf_order[nxt], buf_xs[nxt])
        cur_order = buf_order[nxt]
        cur_xs = buf_xs[nxt]
        n_cur = total
        nxt = 1 - nxt
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], gain[:n_nodes], H[:n_nodes].copy())


# --------------------------------------------------------------------------


def _check_features(X: Any, feature_count: int | None = None) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise PreconditionError(f"features must be a 2-D matrix, got shape {X.shape}")
    if feature_count is not None and X.shape[1] != feature_count:
        raise PreconditionError(
            f"model expects {feature_count} features, got {X.shape[1]}"
        )
    if np.isnan(X).any():
        raise PreconditionError("features contain NaN; missing values are not supported")
    return X


def _sigmoid(margin: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * margin))


def gradients(y: np.ndarray, weights: np.ndarray, margin: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives of the weighted logistic loss."""
    p = _sigmoid(margin)
    return weights * (p - y), weights * p * (1.0 - p)


def effective_weights(labels: np.ndarray, weights: np.ndarray | None,
                      config: BoostConfig) -> np.ndarray:
    w = np.ones(labels.size) if weights is None else np.asarray(weights, dtype=float).copy()
    w[labels == 1] *= config.positive_class_weight
    return w


def log_loss(ensemble: TreeEnsemble, X: np.ndarray, y: np.ndarray,
             weights: np.ndarray | None = None, n_trees: int | None = None) -> float:
    """Weighted mean logistic loss of the first ``n_trees`` trees."""
    X = _check_features(X, ensemble.feature_count)
    margin = np.full(X.shape[0], ensemble.base_margin)
    for tree in ensemble.trees[:n_trees]:
        margin += tree.predict(X)
    w = np.ones(y.size) if weights is None else np.asarray(weights, dtype=float)
    # log(1 + e^m) - y m, written to stay finite for large |m|
    loss = np.logaddexp(0.0, margin) - y * margin
    return float(np.sum(w * loss) / np.sum(w))


@dataclass(frozen=True)
class SortedColumns:
    """Stable per-feature sort of a feature matrix.

    ``order[f]`` lists row indices by increasing feature ``f`` (ties keep row
    order) and ``values[f]`` holds the matching feature values. Sorting once
    and taking row subsets gives the same result as sorting every subset.
    """

    order: np.ndarray
    values: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.order.shape[1]

    def subset(self, mask: np.ndarray) -> "SortedColumns":
        """Sort of the rows where ``mask`` is true, renumbered from 0."""
        mask = np.asarray(mask, dtype=bool)
        if mask.size != self.n_rows:
            raise PreconditionError(f"mask has {mask.size} entries for {self.n_rows} rows")
        n_feat, k = self.order.shape[0], int(mask.sum())
        new_index = np.cumsum(mask, dtype=np.int64) - 1
        keep = mask[self.order]
        order = new_index[self.order[keep]].astype(np.int32).reshape(n_feat, k)
        return SortedColumns(order, self.values[keep].reshape(n_feat, k))


def sort_columns(features: Any) -> SortedColumns:
    """Stable sort of every feature column; see :class:`SortedColumns`."""
    X = _check_features(features)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int32))
    values = np.ascontiguousarray(np.take_along_axis(X, order.T, axis=0).T)
    return SortedColumns(order, values)


def train(features: Any, labels: Any, weights: Any = None,
          config: BoostConfig = BoostConfig(),
          presorted: SortedColumns | None = None) -> TreeEnsemble:
    """Fit a boosted ensemble.

    ``weights`` are per-sample; samples labelled 1 are further multiplied by
    ``config.positive_class_weight``. A single-class label vector yields a
    bias-only model (every tree is one leaf) and a warning. ``presorted``
    may supply :func:`sort_columns` of ``features`` computed elsewhere.
    """
    X = _check_features(features)
    y = np.asarray(labels, dtype=float).ravel()
    n = X.shape[0]
    if n < 2:
        raise PreconditionError("need at least 2 training samples")
    if y.size != n:
        raise PreconditionError(f"{y.size} labels for {n} samples")
    if not np.all((y == 0) | (y == 1)):
        raise PreconditionError("labels must be 0 or 1")
    if weights is not None:
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.size != n or not np.all(weights > 0):
            raise PreconditionError("weights must be positive, one per sample")
    w = effective_weights(y, weights, config)

    max_depth = config.max_depth
    if y.min() == y.max():
        warnings.warn("training labels contain a single class; fitting a bias-only model",
                      stacklevel=2)
        max_depth = 0

    if presorted is None:
        presorted = sort_columns(X)
    elif presorted.order.shape != (X.shape[1], n):
        raise PreconditionError(
            f"presorted columns have shape {presorted.order.shape}, expected {(X.shape[1], n)}"
        )
    order = np.ascontiguousarray(presorted.order)
    xs = np.ascontiguousarray(presorted.values)
    rng = np.random.default_rng(config.seed)
    buf_order = np.empty((2,) + order.shape, order.dtype)
    buf_xs = np.empty((2,) + xs.shape)
    margin = np.full(n, math.log(config.base_score / (1 - config.base_score)))
    trees = []
    for _ in range(config.n_trees):
        g, h = gradients(y, w, margin)
        if config.subsample < 1.0:
            in_bag = rng.random(n) < config.subsample
        else:
            in_bag = np.ones(n, dtype=np.bool_)
        feat, thr, lft, rgt, val, gain, cover = _grow_tree(
            X, order, xs, np.column_stack((g, h)), in_bag, max_depth, float(config.reg_lambda),
            float(config.gamma), _TIE_RTOL, buf_order, buf_xs)
        tree = Tree(feat, thr, lft, rgt, val * config.learning_rate, gain, cover)
        margin += tree.predict(X)
        trees.append(tree)
    return TreeEnsemble(tuple(trees), config, X.shape[1])


def predict_proba(ensemble: TreeEnsemble, features: Any) -> np.ndarray:
    """Probability of class 1: sigmoid(logit(base_score) + sum of tree outputs)."""
    return _sigmoid(ensemble.decision_function(features))


# --------------------------------------------------------------------------
# model documents

_CONFIG_KEYS = {f.name: ("lambda" if f.name == "reg_lambda" else f.name) for f in fields(BoostConfig)}


def _tree_to_doc(tree: Tree) -> dict:
    nodes = []
    for i in range(tree.n_nodes):
        if tree.feature[i] >= 0:
            nodes.append({
                "id": i,
                "feature": int(tree.feature[i]),
                "threshold": float(tree.threshold[i]),
                "left": int(tree.left[i]),
                "right": int(tree.right[i]),
                "gain": float(tree.gain[i]),
                "cover": float(tree.cover[i]),
            })
        else:
            nodes.append({"id": i, "leaf": float(tree.value[i]), "cover": float(tree.cover[i])})
    return {"nodes": nodes}


def serialize(ensemble: TreeEnsemble) -> str:
    """JSON model document; floats are written with round-trip precision."""
    config = {_CONFIG_KEYS[k]: v for k, v in asdict(ensemble.config).items()}
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "feature_count": ensemble.feature_count,
        "config": config,
        "trees": [_tree_to_doc(t) for t in ensemble.trees],
    }
    return json.dumps(doc, indent=1, allow_nan=False)


def _require(obj: dict, key: str, kind, path: str):
    if not isinstance(obj, dict) or key not in obj:
        raise FormatError(f"missing field {key!r}", path)
    value = obj[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise FormatError(f"field {key!r} has wrong type {type(value).__name__}", f"{path}.{key}")
    return value


def _tree_from_doc(doc: Any, path: str, feature_count: int) -> Tree:
    nodes = _require(doc, "nodes", list, path)
    n = len(nodes)
    if n == 0:
        raise FormatError("tree has no nodes", path)
    feature = np.full(n, -1, np.int32)
    threshold = np.zeros(n)
    left = np.full(n, -1, np.int32)
    right = np.full(n, -1, np.int32)
    value = np.zeros(n)
    gain = np.zeros(n)
    cover = np.zeros(n)
    for pos, node in enumerate(nodes):
        npath = f"{path}.nodes[{pos}]"
        if _require(node, "id", int, npath) != pos:
            raise FormatError("node ids must be consecutive from 0", npath)
        cover[pos] = node.get("cover", 0.0)
        if "leaf" in node:
            value[pos] = _require(node, "leaf", float, npath)
            continue
        f = _require(node, "feature", int, npath)
        if not 0 <= f < feature_count:
            raise FormatError(f"feature index {f} out of range", npath)
        lch = _require(node, "left", int, npath)
        rch = _require(node, "right", int, npath)
        if not (pos < lch < n and pos < rch < n):
            raise FormatError("child index out of range", npath)
        feature[pos], left[pos], right[pos] = f, lch, rch
        threshold[pos] = _require(node, "threshold", float, npath)
        gain[pos] = node.get("gain", 0.0)
    return Tree(feature, threshold, left, right, value, gain, cover)


def deserialize(document: str) -> TreeEnsemble:
    """Parse a model document written by :func:`serialize`."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed model document: {exc.msg}",
                          f"line {exc.lineno} column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise FormatError("model document must be a JSON object", "$")
    if doc.get("format") != FORMAT_NAME:
        raise FormatError(f"unknown format {doc.get('format')!r}", "$.format")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported model version {version!r}", "$.version")
    feature_count = _require(doc, "feature_count", int, "$")
    raw_config = _require(doc, "config", dict, "$")
    inverse = {v: k for k, v in _CONFIG_KEYS.items()}
    unknown = set(raw_config) - set(inverse)
    if unknown:
        raise FormatError(f"unknown config keys {sorted(unknown)}", "$.config")
    try:
        config = BoostConfig(**{inverse[k]: v for k, v in raw_config.items()})
    except (ConfigError, TypeError) as exc:
        raise FormatError(str(exc), "$.config") from None
    trees = _require(doc, "trees", list, "$")
    parsed = tuple(_tree_from_doc(t, f"$.trees[{i}]", feature_count) for i, t in enumerate(trees))
    return TreeEnsemble(parsed, config, feature_count)
