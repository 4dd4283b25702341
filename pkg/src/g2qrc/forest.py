"""Native CART regression forests: Random-Forest and Extra-Trees variants.

Trees minimize the weighted sum of squared deviations of the targets.  The
Random-Forest variant scans all midpoints between consecutive distinct sorted
feature values; the Extra-Trees variant draws one uniform-random threshold per
candidate feature inside the node's value range.  Each tree consumes an
independent PRNG stream derived from (seed, tree index), so training order
never affects results.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .seeding import derive_rng

RANDOM_FOREST = "random_forest"
EXTRA_TREES = "extra_trees"

_FORMAT = "g2qrc-forest"
_VERSION = 1


@dataclass
class TreeNode:
    """Internal node (feature/threshold/children) or leaf (value only)."""

    value: float = 0.0
    feature: int = -1
    threshold: float = math.nan
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    variant: str = RANDOM_FOREST
    max_features: int | str = "third"
    max_depth: int | None = None
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    bootstrap: bool | None = None   # None -> on for RF, off for ET
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.variant not in (RANDOM_FOREST, EXTRA_TREES):
            raise ValueError(f"unknown variant {self.variant!r}")
        if isinstance(self.max_features, str):
            if self.max_features not in ("all", "third", "sqrt"):
                raise ValueError(f"unknown max_features {self.max_features!r}")
        elif self.max_features < 1:
            raise ValueError("max_features must be positive")
        if self.min_samples_leaf < 1 or self.min_samples_split < 2:
            raise ValueError("leaf/split bounds must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive")

    @property
    def bootstrap_effective(self) -> bool:
        if self.bootstrap is None:
            return self.variant == RANDOM_FOREST
        return self.bootstrap

    def resolve_max_features(self, n_features: int) -> int:
        if self.max_features == "all":
            return n_features
        if self.max_features == "third":
            return max(1, math.ceil(n_features / 3))
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(n_features)))
        return min(int(self.max_features), n_features)


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[TreeNode, ...]
    config: ForestConfig
    n_features: int


def _ssd(sum1: float, sum2: float, count: int) -> float:
    """Sum of squared deviations from the mean, given plain sums."""
    return sum2 - sum1 * sum1 / count


def _best_split_rf(x: np.ndarray, y: np.ndarray, features: np.ndarray,
                   min_leaf: int):
    """Best (score, feature, threshold) over all midpoint splits."""
    n = y.size
    best = None
    for f in features:
        order = np.argsort(x[:, f], kind="stable")
        v = x[order, f]
        ys = y[order]
        if v[0] == v[-1]:
            continue
        c1 = np.cumsum(ys)
        c2 = np.cumsum(ys * ys)
        total1, total2 = c1[-1], c2[-1]
        # split after position i (left has i+1 rows); only between distinct values
        i = np.arange(min_leaf - 1, n - min_leaf)
        i = i[v[i] < v[i + 1]]
        if i.size == 0:
            continue
        nl = i + 1.0
        score = (_ssd(c1[i], c2[i], nl)
                 + _ssd(total1 - c1[i], total2 - c2[i], n - nl))
        k = int(np.argmin(score))
        thr = 0.5 * (v[i[k]] + v[i[k] + 1])
        cand = (float(score[k]), int(f), float(thr))
        if best is None or cand < best:
            best = cand
    return best


def _best_split_et(x: np.ndarray, y: np.ndarray, features: np.ndarray,
                   min_leaf: int, rng: np.random.Generator):
    """Best (score, feature, threshold) over one random threshold per feature."""
    n = y.size
    best = None
    for f in features:
        col = x[:, f]
        lo, hi = float(col.min()), float(col.max())
        if lo == hi:
            continue
        thr = float(rng.uniform(lo, hi))
        mask = col <= thr
        nl = int(mask.sum())
        if nl < min_leaf or n - nl < min_leaf:
            continue
        yl = y[mask]
        yr = y[~mask]
        score = (_ssd(yl.sum(), (yl * yl).sum(), nl)
                 + _ssd(yr.sum(), (yr * yr).sum(), n - nl))
        cand = (float(score), int(f), thr)
        if best is None or cand < best:
            best = cand
    return best


def _grow_tree(x: np.ndarray, y: np.ndarray, cfg: ForestConfig,
               rng: np.random.Generator) -> TreeNode:
    n, d = x.shape
    mf = cfg.resolve_max_features(d)
    root = TreeNode()
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        node.value = float(yn.mean())
        if (idx.size < cfg.min_samples_split
                or (cfg.max_depth is not None and depth >= cfg.max_depth)):
            continue
        if _ssd(yn.sum(), (yn * yn).sum(), idx.size) <= 1e-12 * idx.size:
            continue
        features = rng.choice(d, size=mf, replace=False)
        xn = x[idx]
        if cfg.variant == RANDOM_FOREST:
            best = _best_split_rf(xn, yn, features, cfg.min_samples_leaf)
        else:
            best = _best_split_et(xn, yn, features, cfg.min_samples_leaf, rng)
        if best is None:
            continue
        _, f, thr = best
        mask = xn[:, f] <= thr
        node.feature = f
        node.threshold = thr
        node.left = TreeNode()
        node.right = TreeNode()
        stack.append((node.right, idx[~mask], depth + 1))
        stack.append((node.left, idx[mask], depth + 1))
    return root


def fit(x: np.ndarray, y: np.ndarray, config: ForestConfig) -> ForestModel:
    """Train a forest; deterministic given (x, y, config.seed)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("x must be a matrix with at least 2 rows")
    if y.shape != (x.shape[0],):
        raise ValueError("y length must match the number of rows")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("features and targets must be finite")
    n = x.shape[0]
    trees = []
    for t in range(config.n_trees):
        rng = derive_rng(config.seed, "forest:tree", t)
        if config.bootstrap_effective:
            rows = rng.integers(0, n, size=n)
            trees.append(_grow_tree(x[rows], y[rows], config, rng))
        else:
            trees.append(_grow_tree(x, y, config, rng))
    return ForestModel(trees=tuple(trees), config=config, n_features=x.shape[1])


def _tree_predict(root: TreeNode, x: np.ndarray) -> np.ndarray:
    out = np.empty(x.shape[0])
    stack = [(root, np.arange(x.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf:
            out[idx] = node.value
            continue
        mask = x[idx, node.feature] <= node.threshold
        stack.append((node.left, idx[mask]))
        stack.append((node.right, idx[~mask]))
    return out


def predict(model: ForestModel, x: np.ndarray) -> np.ndarray:
    """Per-row mean of the tree outputs."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {x.shape}")
    total = np.zeros(x.shape[0])
    for tree in model.trees:
        total += _tree_predict(tree, x)
    return total / len(model.trees)


def mse_metric(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Normalized squared-error ratio: sum(p - t)^2 / sum(p + t)^2.

    Note this is a single ratio of sums over the whole test set, not the
    conventional mean of squared errors.
    """
    p = np.asarray(predicted, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape or p.ndim != 1 or p.size == 0:
        raise ValueError("predicted and truth must be equal-length vectors")
    denom = float(np.sum((p + t) ** 2))
    if denom == 0.0:
        raise ZeroDivisionError("metric denominator sum(p + t)^2 is zero")
    return float(np.sum((p - t) ** 2)) / denom


# ---------------------------------------------------------------------------
# JSON serialization

def _flatten(root: TreeNode) -> list[dict]:
    nodes = []
    stack = [root]
    index = {}
    order = []
    while stack:
        node = stack.pop()
        index[id(node)] = len(order)
        order.append(node)
        if not node.is_leaf:
            stack.append(node.right)
            stack.append(node.left)
    for node in order:
        if node.is_leaf:
            nodes.append({"value": node.value})
        else:
            nodes.append({
                "feature": node.feature,
                "threshold": node.threshold,
                "left": index[id(node.left)],
                "right": index[id(node.right)],
                "value": node.value,
            })
    return nodes


def _unflatten(records: list[dict]) -> TreeNode:
    nodes = [TreeNode(value=float(r["value"])) for r in records]
    for node, r in zip(nodes, records):
        if "feature" in r:
            node.feature = int(r["feature"])
            node.threshold = float(r["threshold"])
            node.left = nodes[int(r["left"])]
            node.right = nodes[int(r["right"])]
    return nodes[0]


def to_json(model: ForestModel) -> str:
    cfg = model.config
    doc = {
        "format": _FORMAT,
        "version": _VERSION,
        "config": {
            "n_trees": cfg.n_trees,
            "variant": cfg.variant,
            "max_features": cfg.max_features,
            "max_depth": cfg.max_depth,
            "min_samples_leaf": cfg.min_samples_leaf,
            "min_samples_split": cfg.min_samples_split,
            "bootstrap": cfg.bootstrap,
            "seed": cfg.seed,
        },
        "n_features": model.n_features,
        "trees": [_flatten(t) for t in model.trees],
    }
    return json.dumps(doc)


def from_json(text: str) -> ForestModel:
    doc = json.loads(text)
    if doc.get("format") != _FORMAT:
        raise ValueError("not a forest model document")
    if doc.get("version") != _VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    cfg = ForestConfig(**doc["config"])
    trees = tuple(_unflatten(t) for t in doc["trees"])
    return ForestModel(trees=trees, config=cfg, n_features=int(doc["n_features"]))
