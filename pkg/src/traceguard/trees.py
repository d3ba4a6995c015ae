"""Tree-family learners: CART, bagged forest, gradient-boosted ensemble.

All split search runs in the shared kernels (numba fast path or numpy
fallback, selected at import time by TRACEGUARD_NO_NUMBA) with fixed
semantics: weighted-Gini or squared-error criterion, midpoint thresholds,
<= routes left, ties to the lowest column then lowest threshold, splits only
on strict improvement.  Every stochastic choice (bootstrap rows, per-node
column subsets) derives from an explicit seed, so identical inputs yield
byte-identical serialized models.

Serialized trees reference columns by name, never by index; loading resolves
names against the caller's schema and verifies the stored schema hash.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EmptyMatrix, ModelFormatError, SchemaMismatch
from .features import schema_hash

_UNBOUNDED_DEPTH = 1 << 30


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def balanced_class_weights(y: np.ndarray) -> dict[int, float]:
    """Weight n/(2*n_class) per class; absent class weighs 0."""
    n = y.size
    out = {}
    for cls in (0, 1):
        nc = int((y == cls).sum())
        out[cls] = n / (2.0 * nc) if nc else 0.0
    return out


def _row_weights(y: np.ndarray, class_weights: dict[int, float] | None) -> np.ndarray:
    cw = class_weights if class_weights is not None else balanced_class_weights(y)
    w = np.empty(y.size, np.float64)
    w[y == 0] = cw.get(0, 1.0)
    w[y == 1] = cw.get(1, 1.0)
    return w


# ---------------------------------------------------------------------------
# flat trees
# ---------------------------------------------------------------------------

@dataclass
class FlatTree:
    feature: np.ndarray            # int32; -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    w0: np.ndarray | None = None   # classification leaf class-weight masses
    w1: np.ndarray | None = None
    value: np.ndarray | None = None  # regression leaf means

    def apply(self, X: np.ndarray) -> np.ndarray:
        return _kernels.tree_apply(self.feature, self.threshold,
                                   self.left, self.right,
                                   np.ascontiguousarray(X, np.float64))

    def leaf_p1(self, leaves: np.ndarray) -> np.ndarray:
        """Encrypted-class probability stored at the given node indices."""
        tot = self.w0[leaves] + self.w1[leaves]
        return np.where(tot > 0,
                        self.w1[leaves] / np.where(tot > 0, tot, 1.0), 0.5)

    def p1(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_p1(self.apply(X))

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def used_columns(self) -> np.ndarray:
        return np.unique(self.feature[self.feature >= 0])

    def max_depth(self) -> int:
        depth = np.zeros(self.feature.size, np.int64)
        best = 0
        for i in range(self.feature.size):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
            else:
                best = max(best, int(depth[i]))
        return best


def _grow_classification(X, y, w, rows, max_depth, mtry, seed) -> FlatTree:
    res = _kernels.grow_cls(
        np.ascontiguousarray(X, np.float64), y.astype(np.int8),
        np.ascontiguousarray(w, np.float64), rows.astype(np.int64),
        max_depth, 2, mtry, np.uint64(seed))
    feature, threshold, left, right, w0, w1, counts = res
    return FlatTree(feature, threshold, left, right, counts, w0=w0, w1=w1)


def _grow_regression(X, r, rows, max_depth) -> FlatTree:
    res = _kernels.grow_reg(
        np.ascontiguousarray(X, np.float64),
        np.ascontiguousarray(r, np.float64),
        rows.astype(np.int64), max_depth, 2)
    feature, threshold, left, right, value, counts = res
    return FlatTree(feature, threshold, left, right, counts, value=value)


# ---------------------------------------------------------------------------
# tree JSON (column names, not indices)
# ---------------------------------------------------------------------------

def _tree_to_obj(t: FlatTree, schema, i: int = 0) -> dict:
    if t.feature[i] < 0:
        if t.value is not None:
            return {"value": float(t.value[i]), "n": int(t.counts[i])}
        tot = float(t.w0[i] + t.w1[i])
        p1 = float(t.w1[i] / tot) if tot > 0 else 0.5
        return {"p": [1.0 - p1, p1], "n": int(t.counts[i])}
    return {
        "column": schema[int(t.feature[i])],
        "threshold": float(t.threshold[i]),
        "left": _tree_to_obj(t, schema, int(t.left[i])),
        "right": _tree_to_obj(t, schema, int(t.right[i])),
    }


def _obj_to_tree(obj: dict, schema) -> FlatTree:
    index = {c: j for j, c in enumerate(schema)}
    feature, threshold, left, right = [], [], [], []
    counts, w0, w1, value = [], [], [], []
    is_reg = False

    def walk(node: dict) -> int:
        nonlocal is_reg
        i = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(int(node.get("n", 0)))
        w0.append(0.0)
        w1.append(0.0)
        value.append(0.0)
        if "column" in node:
            col = node["column"]
            if col not in index:
                raise SchemaMismatch(f"model references unknown column {col!r}")
            feature[i] = index[col]
            threshold[i] = float(node["threshold"])
            left[i] = walk(node["left"])
            right[i] = walk(node["right"])
        elif "value" in node:
            is_reg = True
            value[i] = float(node["value"])
        elif "p" in node:
            p = node["p"]
            n = max(1, counts[i])
            w0[i] = float(p[0]) * n
            w1[i] = float(p[1]) * n
        else:
            raise ModelFormatError("tree node lacks column/value/p")
        return i

    walk(obj)
    t = FlatTree(np.array(feature, np.int32), np.array(threshold, np.float64),
                 np.array(left, np.int32), np.array(right, np.int32),
                 np.array(counts, np.int32))
    if is_reg:
        t.value = np.array(value, np.float64)
    else:
        t.w0 = np.array(w0, np.float64)
        t.w1 = np.array(w1, np.float64)
    return t


# ---------------------------------------------------------------------------
# CART
# ---------------------------------------------------------------------------

@dataclass
class CartModel:
    tree: FlatTree
    schema: tuple[str, ...]
    depth_cap: int | None
    seed: int

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.tree.p1(X)


def train_cart(X: np.ndarray, y: np.ndarray, schema,
               depth_cap: int | None = None,
               class_weights: dict[int, float] | None = None,
               seed: int = 0) -> CartModel:
    if X.size == 0:
        raise EmptyMatrix("cannot train on an empty matrix")
    w = _row_weights(y, class_weights)
    cap = depth_cap if depth_cap is not None else _UNBOUNDED_DEPTH
    rows = np.arange(X.shape[0], dtype=np.int64)
    tree = _grow_classification(X, y, w, rows, cap, X.shape[1], seed or 1)
    return CartModel(tree, tuple(schema), depth_cap, seed)


# ---------------------------------------------------------------------------
# bagged forest with out-of-bag bookkeeping
# ---------------------------------------------------------------------------

@dataclass
class ForestModel:
    trees: list[FlatTree]
    schema: tuple[str, ...]
    seed: int
    n_train_rows: int
    bootstrap: list[np.ndarray] = field(repr=False, default_factory=list)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if not self.trees:
            raise ModelFormatError("forest holds no trees")
        acc = np.zeros(X.shape[0], np.float64)
        for t in self.trees:
            acc += t.p1(X)
        return acc / len(self.trees)

    def oob_mask(self) -> np.ndarray:
        """(n_trees, n_train_rows) bool: True where the row is out-of-bag."""
        m = np.ones((len(self.trees), self.n_train_rows), bool)
        for ti, boot in enumerate(self.bootstrap):
            m[ti, boot] = False
        return m


def train_forest(X: np.ndarray, y: np.ndarray, schema,
                 n_trees: int = 400,
                 class_weights: dict[int, float] | None = None,
                 seed: int = 42) -> ForestModel:
    if X.size == 0:
        raise EmptyMatrix("cannot train on an empty matrix")
    n, d = X.shape
    w = _row_weights(y, class_weights)
    mtry = max(1, int(math.ceil(math.sqrt(d))))
    master = np.random.default_rng(seed)
    boot_seeds = master.integers(1, 2**63 - 1, size=n_trees)
    kern_seeds = master.integers(1, 2**63 - 1, size=n_trees)
    trees = []
    boots = []
    Xc = np.ascontiguousarray(X, np.float64)
    for t in range(n_trees):
        boot = np.sort(np.random.default_rng(int(boot_seeds[t]))
                       .integers(0, n, size=n)).astype(np.int64)
        tree = _grow_classification(Xc, y, w, boot, _UNBOUNDED_DEPTH, mtry,
                                    int(kern_seeds[t]))
        trees.append(tree)
        boots.append(boot)
    return ForestModel(trees, tuple(schema), seed, n, boots)


# ---------------------------------------------------------------------------
# gradient-boosted trees, logistic loss
# ---------------------------------------------------------------------------

@dataclass
class GBDTModel:
    stages: list[FlatTree]
    schema: tuple[str, ...]
    learning_rate: float
    f0: float
    max_depth: int
    seed: int

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        f = np.full(X.shape[0], self.f0, np.float64)
        for t in self.stages:
            f += self.learning_rate * t.predict_value(X)
        return f

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.decision_function(X))


def train_gbdt(X: np.ndarray, y: np.ndarray, schema,
               n_stages: int = 200, learning_rate: float = 0.1,
               max_depth: int = 3, seed: int = 0) -> GBDTModel:
    if X.size == 0:
        raise EmptyMatrix("cannot train on an empty matrix")
    n = X.shape[0]
    p = min(max(float(np.mean(y)), 1e-12), 1.0 - 1e-12)
    f0 = math.log(p / (1.0 - p))
    F = np.full(n, f0, np.float64)
    rows = np.arange(n, dtype=np.int64)
    Xc = np.ascontiguousarray(X, np.float64)
    yf = y.astype(np.float64)
    stages = []
    for _ in range(n_stages):
        resid = yf - sigmoid(F)
        tree = _grow_regression(Xc, resid, rows, max_depth)
        stages.append(tree)
        F = F + learning_rate * tree.predict_value(Xc)
    return GBDTModel(stages, tuple(schema), learning_rate, f0, max_depth, seed)


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

def model_to_json(model) -> str:
    if isinstance(model, CartModel):
        body = {
            "type": "cart",
            "schema_hash": schema_hash(model.schema),
            "seed": model.seed,
            "hyperparameters": {"depth_cap": model.depth_cap},
            "trees": [_tree_to_obj(model.tree, model.schema)],
        }
    elif isinstance(model, ForestModel):
        body = {
            "type": "forest",
            "schema_hash": schema_hash(model.schema),
            "seed": model.seed,
            "hyperparameters": {"n_trees": model.n_trees,
                                "n_train_rows": model.n_train_rows},
            "trees": [_tree_to_obj(t, model.schema) for t in model.trees],
        }
    elif isinstance(model, GBDTModel):
        body = {
            "type": "gbdt",
            "schema_hash": schema_hash(model.schema),
            "seed": model.seed,
            "hyperparameters": {
                "learning_rate": model.learning_rate,
                "f0": model.f0,
                "max_depth": model.max_depth,
                "n_stages": model.n_stages,
            },
            "trees": [_tree_to_obj(t, model.schema) for t in model.stages],
        }
    else:
        raise ModelFormatError(f"unknown model object {type(model).__name__}")
    return json.dumps(body, sort_keys=True, indent=1)


def model_from_json(text: str, schema) -> CartModel | ForestModel | GBDTModel:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid json: {exc}") from exc
    if obj.get("schema_hash") != schema_hash(schema):
        raise SchemaMismatch("model schema hash does not match runtime schema")
    kind = obj.get("type")
    hp = obj.get("hyperparameters", {})
    trees = [_obj_to_tree(t, schema) for t in obj.get("trees", [])]
    if kind == "cart":
        if len(trees) != 1:
            raise ModelFormatError("cart model must hold exactly one tree")
        return CartModel(trees[0], tuple(schema), hp.get("depth_cap"),
                         int(obj.get("seed", 0)))
    if kind == "forest":
        return ForestModel(trees, tuple(schema), int(obj.get("seed", 0)),
                           int(hp.get("n_train_rows", 0)), [])
    if kind == "gbdt":
        return GBDTModel(trees, tuple(schema), float(hp["learning_rate"]),
                         float(hp["f0"]), int(hp.get("max_depth", 0)),
                         int(obj.get("seed", 0)))
    raise ModelFormatError(f"unknown model type {kind!r}")
