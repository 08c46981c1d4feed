"""Binary regression-tree ensembles and a squared-loss gradient boosting trainer."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .coredata import FeatureTable, Instance
from .errors import DimensionError, StructureError


@dataclass(frozen=True, eq=False)
class Tree:
    """Array-of-nodes tree; ``feature[n] == -1`` marks a leaf. Node 0 is the root."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    default_left: np.ndarray
    value: np.ndarray

    @classmethod
    def from_nodes(cls, nodes: Sequence[dict]) -> "Tree":
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        default_left = np.zeros(n, dtype=bool)
        value = np.zeros(n)
        for k, node in enumerate(nodes):
            if "leaf" in node:
                value[k] = float(node["leaf"])
            else:
                feature[k] = int(node["feature"])
                threshold[k] = float(node["threshold"])
                left[k] = int(node["left"])
                right[k] = int(node["right"])
                default_left[k] = bool(node["default_left"])
        tree = cls(feature, threshold, left, right, default_left, value)
        tree.check()
        return tree

    @classmethod
    def leaf(cls, value: float) -> "Tree":
        return cls.from_nodes([{"leaf": value}])

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, k: int) -> bool:
        return self.feature[k] < 0

    def check(self, num_features: int | None = None) -> None:
        """Reject cycles, shared children, unreachable nodes and bad feature ids."""
        n = self.n_nodes
        if n == 0:
            raise StructureError("tree has no nodes")
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        while stack:
            k = stack.pop()
            if seen[k]:
                raise StructureError(f"node {k} reached twice (cycle or shared child)")
            seen[k] = True
            if self.is_leaf(k):
                continue
            if num_features is not None and self.feature[k] >= num_features:
                raise StructureError(f"node {k} splits on feature {self.feature[k]} >= K={num_features}")
            for child in (self.left[k], self.right[k]):
                if not 0 <= child < n:
                    raise StructureError(f"node {k} has child id {child} outside [0, {n})")
                stack.append(int(child))
        if not seen.all():
            raise StructureError(f"unreachable nodes: {np.flatnonzero(~seen).tolist()}")

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            k, d = stack.pop()
            if self.is_leaf(k):
                best = max(best, d)
            else:
                stack.append((int(self.left[k]), d + 1))
                stack.append((int(self.right[k]), d + 1))
        return best

    def leaf_index(self, values: np.ndarray, missing: np.ndarray) -> np.ndarray:
        node = np.zeros(values.shape[0], dtype=np.int64)
        rows = np.arange(values.shape[0])
        for _ in range(self.depth()):
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                break
            fa = f[active]
            ra = rows[active]
            na = node[active]
            go_left = np.where(
                missing[ra, fa], self.default_left[na], values[ra, fa] <= self.threshold[na]
            )
            node[active] = np.where(go_left, self.left[na], self.right[na])
        return node

    def predict_matrix(self, values: np.ndarray, missing: np.ndarray) -> np.ndarray:
        return self.value[self.leaf_index(values, missing)]

    def leaf_paths(self) -> list[tuple[int, list[tuple[int, float, bool, bool]]]]:
        """Each leaf with its root path as ``(feature, threshold, went_left, default_left)``."""
        out = []
        stack: list[tuple[int, list]] = [(0, [])]
        while stack:
            k, path = stack.pop()
            if self.is_leaf(k):
                out.append((k, path))
                continue
            f, t, d = int(self.feature[k]), float(self.threshold[k]), bool(self.default_left[k])
            stack.append((int(self.right[k]), path + [(f, t, False, d)]))
            stack.append((int(self.left[k]), path + [(f, t, True, d)]))
        return out

    def to_nodes(self) -> list[dict]:
        nodes = []
        for k in range(self.n_nodes):
            if self.is_leaf(k):
                nodes.append({"leaf": float(self.value[k])})
            else:
                nodes.append({
                    "feature": int(self.feature[k]),
                    "threshold": float(self.threshold[k]),
                    "left": int(self.left[k]),
                    "right": int(self.right[k]),
                    "default_left": bool(self.default_left[k]),
                })
        return nodes

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature if f >= 0}


@dataclass(frozen=True, eq=False)
class TreeEnsemble:
    base_score: float
    trees: tuple[Tree, ...]
    feature_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        for t in self.trees:
            t.check(self.num_features)

    @property
    def num_features(self) -> int:
        return len(self.feature_names)

    def predict_matrix(self, values: np.ndarray, missing: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        missing = np.asarray(missing, dtype=bool)
        if values.ndim != 2 or values.shape[1] != self.num_features:
            raise DimensionError(f"expected {self.num_features} features, got shape {values.shape}")
        out = np.full(values.shape[0], float(self.base_score))
        for t in self.trees:
            out += t.predict_matrix(values, missing)
        return out

    def predict_table(self, table: FeatureTable) -> np.ndarray:
        return self.predict_matrix(table.values, table.missing)

    def __add__(self, other: "TreeEnsemble") -> "TreeEnsemble":
        if other.feature_names != self.feature_names:
            raise DimensionError("cannot add ensembles with different schemas")
        return TreeEnsemble(self.base_score + other.base_score, self.trees + other.trees, self.feature_names)

    def used_features(self) -> set[int]:
        out: set[int] = set()
        for t in self.trees:
            out |= t.used_features()
        return out


def predict(model, instance: Instance) -> float:
    if len(instance.values) != model.num_features:
        raise DimensionError(f"instance has {len(instance.values)} cells, model expects {model.num_features}")
    return float(model.predict_matrix(instance.values[None, :], instance.missing[None, :])[0])


# --- serialization ---------------------------------------------------------

_TOP_KEYS = {"base_score", "feature_names", "trees"}
_SPLIT_KEYS = {"feature", "threshold", "left", "right", "default_left"}


def to_document(model: TreeEnsemble) -> dict:
    return {
        "base_score": float(model.base_score),
        "feature_names": list(model.feature_names),
        "trees": [{"nodes": t.to_nodes()} for t in model.trees],
    }


def save_model(model: TreeEnsemble, path=None) -> str:
    text = json.dumps(to_document(model), indent=1) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _number(v, what) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise StructureError(f"{what} must be a number")
    return float(v)


def _integer(v, what) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise StructureError(f"{what} must be an integer")
    return v


def from_document(doc) -> TreeEnsemble:
    if not isinstance(doc, dict):
        raise StructureError("model document must be a JSON object")
    keys = set(doc)
    if keys != _TOP_KEYS:
        extra, absent = sorted(keys - _TOP_KEYS), sorted(_TOP_KEYS - keys)
        raise StructureError(f"bad top-level keys (unknown: {extra}, missing: {absent})")
    base = _number(doc["base_score"], "base_score")
    names = doc["feature_names"]
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise StructureError("feature_names must be a list of strings")
    if len(set(names)) != len(names) or not names or not all(names):
        raise StructureError("feature_names must be unique and non-empty")
    if not isinstance(doc["trees"], list):
        raise StructureError("trees must be a list")
    trees = []
    for ti, tdoc in enumerate(doc["trees"]):
        if not isinstance(tdoc, dict) or set(tdoc) != {"nodes"}:
            raise StructureError(f"tree {ti}: expected exactly the key 'nodes'")
        nodes = tdoc["nodes"]
        if not isinstance(nodes, list) or not nodes:
            raise StructureError(f"tree {ti}: nodes must be a non-empty list")
        clean = []
        for ni, node in enumerate(nodes):
            where = f"tree {ti} node {ni}"
            if not isinstance(node, dict):
                raise StructureError(f"{where}: not an object")
            if set(node) == {"leaf"}:
                clean.append({"leaf": _number(node["leaf"], f"{where} leaf")})
            elif set(node) == _SPLIT_KEYS:
                if not isinstance(node["default_left"], bool):
                    raise StructureError(f"{where}: default_left must be a boolean")
                feat = _integer(node["feature"], f"{where} feature")
                if not 0 <= feat < len(names):
                    raise StructureError(f"{where}: feature {feat} outside [0, {len(names)})")
                clean.append({
                    "feature": feat,
                    "threshold": _number(node["threshold"], f"{where} threshold"),
                    "left": _integer(node["left"], f"{where} left"),
                    "right": _integer(node["right"], f"{where} right"),
                    "default_left": node["default_left"],
                })
            else:
                raise StructureError(f"{where}: unknown or missing fields {sorted(node)}")
        trees.append(Tree.from_nodes(clean))
    return TreeEnsemble(base, tuple(trees), tuple(names))


def load_model(source) -> TreeEnsemble:
    """Load from a path, a JSON string, or an already-parsed document."""
    if isinstance(source, dict):
        return from_document(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StructureError(f"invalid JSON: {exc}") from None
    return from_document(doc)


# --- training ----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    num_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 0:
            raise ValueError("num_trees must be non-negative")
        if self.max_depth < 1:
            raise ValueError("max_depth must be positive")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be positive")


@dataclass
class _Split:
    gain: float
    feature: int
    threshold: float
    default_left: bool
    left_rows: np.ndarray = field(repr=False)
    right_rows: np.ndarray = field(repr=False)


def _best_split_on_feature(x, miss, r, rows, f, min_leaf) -> _Split | None:
    present = ~miss
    xp, rp = x[present], r[present]
    order = np.argsort(xp, kind="stable")
    xs, rs = xp[order], rp[order]
    n_present = xs.size
    if n_present < 2:
        return None
    cut = np.flatnonzero(xs[:-1] < xs[1:])  # split after position cut
    if cut.size == 0:
        return None
    cs = np.cumsum(rs)
    s_miss = float(r[miss].sum())
    n_miss = int(miss.sum())
    n = r.size
    total = cs[-1] + s_miss
    best = None
    for default_left in (True, False):
        n_left = cut + 1 + (n_miss if default_left else 0)
        s_left = cs[cut] + (s_miss if default_left else 0.0)
        n_right = n - n_left
        s_right = total - s_left
        ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not ok.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = s_left**2 / n_left + s_right**2 / n_right - total**2 / n
        gain = np.where(ok, gain, -np.inf)
        k = int(np.argmax(gain))
        if best is None or gain[k] > best[0]:
            best = (float(gain[k]), k, default_left)
        if n_miss == 0:
            break
    if best is None or not best[0] > 0.0:
        return None
    gain, k, default_left = best
    lo, hi = xs[cut[k]], xs[cut[k] + 1]
    thr = (lo + hi) / 2.0
    if not lo <= thr < hi:
        thr = lo
    go_left = np.where(miss, default_left, x <= thr)
    return _Split(gain, f, float(thr), default_left, rows[go_left], rows[~go_left])


def _fit_tree(values, missing, resid, config: TrainConfig) -> Tree:
    nodes: list[dict] = []

    def build(rows: np.ndarray, depth: int) -> int:
        k = len(nodes)
        nodes.append({})
        r = resid[rows]
        split = None
        if depth < config.max_depth and rows.size >= 2 * config.min_samples_leaf:
            # features scanned in index order; strict '>' keeps the lowest index on ties
            for f in range(values.shape[1]):
                cand = _best_split_on_feature(
                    values[rows, f], missing[rows, f], r, rows, f, config.min_samples_leaf
                )
                if cand is not None and (split is None or cand.gain > split.gain):
                    split = cand
        if split is None:
            nodes[k] = {"leaf": config.learning_rate * float(np.mean(r))}
            return k
        left = build(split.left_rows, depth + 1)
        right = build(split.right_rows, depth + 1)
        nodes[k] = {
            "feature": split.feature,
            "threshold": split.threshold,
            "left": left,
            "right": right,
            "default_left": split.default_left,
        }
        return k

    build(np.arange(values.shape[0]), 0)
    return Tree.from_nodes(nodes)


def train_gbdt(table: FeatureTable, targets, config: TrainConfig, history: list | None = None) -> TreeEnsemble:
    """Fit a squared-loss boosted ensemble with exact greedy splits.

    The procedure has no stochastic step, so ``config.seed`` never changes the
    result. When ``history`` is a list, the training MSE after every stage
    (starting with the base score alone) is appended to it.
    """
    y = np.asarray(targets, dtype=float)
    if y.ndim != 1 or y.size != table.n_rows:
        raise DimensionError(f"targets length {y.size} does not match N={table.n_rows}")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    if table.n_rows < 2 * config.min_samples_leaf:
        raise ValueError("need N >= 2 * min_samples_leaf")
    base = float(y[0]) if np.all(y == y[0]) else float(np.mean(y))
    pred = np.full(y.size, base)
    if history is not None:
        history.append(float(np.mean((y - pred) ** 2)))
    trees = []
    for _ in range(config.num_trees):
        tree = _fit_tree(table.values, table.missing, y - pred, config)
        pred += tree.predict_matrix(table.values, table.missing)
        trees.append(tree)
        if history is not None:
            history.append(float(np.mean((y - pred) ** 2)))
    return TreeEnsemble(base, tuple(trees), table.names)
