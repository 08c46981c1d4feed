"""Coalition value function over a background table.

``f_x(S)`` is the interventional expectation: features in ``S`` keep the
explained instance's cells, all others are filled from each background row,
and the model outputs are averaged with the background weights (uniform by
default).

Two evaluators compute the same quantity:

* :class:`HybridRowGame` works for any model with ``predict_matrix`` by
  materialising the hybrid rows.
* :class:`TreeGame` exploits the fact that a tree leaf is reached iff, for
  every feature on its path, the cell used for that feature satisfies that
  feature's path constraints. The reach probability therefore factorises per
  feature, and ``f_x(S)`` only depends on ``S`` through the (few) features on
  each leaf path. This is still plain enumeration of ``2^K`` coalitions, just
  without materialising ``2^K * B`` rows.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .coredata import FeatureTable, Instance
from .errors import DimensionError, ExactCapError, SchemaError
from .treemodel import TreeEnsemble

DEFAULT_EXACT_CAP = 20
MAX_MASK_FEATURES = 63


def exact_cap() -> int:
    """Largest K allowed for exact enumeration (``STAYLOR_EXACT_CAP`` overrides)."""
    raw = os.environ.get("STAYLOR_EXACT_CAP")
    if raw is None or raw.strip() == "":
        return DEFAULT_EXACT_CAP
    try:
        cap = int(raw)
    except ValueError:
        raise ExactCapError(f"STAYLOR_EXACT_CAP={raw!r} is not an integer") from None
    return max(1, min(cap, MAX_MASK_FEATURES))


def check_exact(k: int) -> None:
    # 21! no longer fits a signed 64-bit integer, hence the default of 20
    cap = exact_cap()
    if k > cap:
        raise ExactCapError(
            f"exact enumeration is limited to K <= {cap} features (got K={k}); "
            "use the sampled estimators (--sampled N) instead"
        )


def weight_shapley(sz: int, k: int) -> float:
    """``|S|! (K-|S|-1)! / K!``"""
    if not 0 <= sz <= k - 1:
        raise ValueError(f"coalition size {sz} invalid for K={k}")
    check_exact(k)
    num = math.factorial(sz) * math.factorial(k - sz - 1)
    return num / math.factorial(k)


def weight_taylor(sz: int, k: int) -> float:
    """``2 |S|! (K-|S|-1)! / K!`` (order-2 Shapley-Taylor weight)."""
    if not 0 <= sz <= k - 2:
        raise ValueError(f"coalition size {sz} invalid for K={k}")
    check_exact(k)
    num = 2 * math.factorial(sz) * math.factorial(k - sz - 1)
    return num / math.factorial(k)


def weight_siv(sz: int, k: int) -> float:
    """Shapley interaction value weight ``|S|! (K-|S|-2)! / (2 (K-1)!)``."""
    if not 0 <= sz <= k - 2:
        raise ValueError(f"coalition size {sz} invalid for K={k}")
    check_exact(k)
    num = math.factorial(sz) * math.factorial(k - sz - 2)
    return num / (2 * math.factorial(k - 1))


def popcount(masks: np.ndarray) -> np.ndarray:
    return np.bitwise_count(np.asarray(masks, dtype=np.uint64)).astype(np.int64)


def all_masks(k: int) -> np.ndarray:
    return np.arange(1 << k, dtype=np.int64)


def _normalized_weights(weights, n: int) -> np.ndarray | None:
    if weights is None:
        return None
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or not np.isfinite(w).all() or w.sum() <= 0:
        raise ValueError("background weights must be n non-negative finite numbers with positive sum")
    return w / w.sum()


class HybridRowGame:
    """Coalition values for any model exposing ``predict_matrix(values, missing)``."""

    def __init__(self, model, background: FeatureTable, weights=None, max_rows: int = 1 << 18):
        if background.n_rows == 0:
            raise SchemaError("empty background")
        self.model = model
        self.k = background.n_features
        self.bg_values = background.values
        self.bg_missing = background.missing
        self.weights = _normalized_weights(weights, background.n_rows)
        self.max_rows = max_rows

    def values(self, xv: np.ndarray, xm: np.ndarray, masks: np.ndarray) -> np.ndarray:
        xv = np.atleast_2d(xv)
        xm = np.atleast_2d(xm)
        masks = np.asarray(masks, dtype=np.int64)
        n_inst, k = xv.shape
        b = self.bg_values.shape[0]
        full = (1 << k) - 1
        bits = (1 << np.arange(k, dtype=np.int64))
        out = np.empty((n_inst, masks.size))
        chunk = max(1, self.max_rows // b)
        for n in range(n_inst):
            for start in range(0, masks.size, chunk):
                m = masks[start:start + chunk]
                take = (m[:, None] & bits[None, :]) != 0  # (M, K)
                zv = np.where(take[:, None, :], xv[n][None, None, :], self.bg_values[None, :, :])
                zm = np.where(take[:, None, :], xm[n][None, None, :], self.bg_missing[None, :, :])
                preds = self.model.predict_matrix(zv.reshape(-1, k), zm.reshape(-1, k)).reshape(m.size, b)
                if self.weights is None:
                    vals = preds.sum(axis=1) / b
                else:
                    vals = (preds * self.weights[None, :]).sum(axis=1)
                out[n, start:start + m.size] = vals
            # the full coalition needs no background at all
            is_full = masks == full
            if is_full.any():
                out[n, is_full] = self.model.predict_matrix(xv[n][None, :], xm[n][None, :])[0]
        return out


class _LeafFactor:
    __slots__ = ("value", "bits", "bg_prob", "path")

    def __init__(self, value, bits, bg_prob, path):
        self.value = value
        self.bits = bits          # (r,) int64 single-bit masks of the path features
        self.bg_prob = bg_prob    # (2^r,) probability background passes the features in u
        self.path = path          # per path feature: list of (threshold, went_left, default_left)


def _passes(values: np.ndarray, missing: np.ndarray, conds) -> np.ndarray:
    ok = np.ones(values.shape, dtype=bool)
    for thr, went_left, default_left in conds:
        go_left = np.where(missing, default_left, values <= thr)
        ok &= go_left == went_left
    return ok


def _subset_products(passes: np.ndarray) -> np.ndarray:
    """``out[..., u] = prod_{k in u} passes[..., k]`` for every local subset ``u``."""
    r = passes.shape[-1]
    out = np.ones(passes.shape[:-1] + (1 << r,), dtype=bool)
    for u in range(1, 1 << r):
        low = u & -u
        k = low.bit_length() - 1
        out[..., u] = out[..., u ^ low] & passes[..., k]
    return out


class TreeGame:
    """Coalition values of a :class:`TreeEnsemble`, factorised per leaf."""

    def __init__(self, model: TreeEnsemble, background: FeatureTable, weights=None, mask_chunk: int = 1 << 14):
        if background.n_rows == 0:
            raise SchemaError("empty background")
        self.model = model
        self.k = model.num_features
        self.mask_chunk = mask_chunk
        w = _normalized_weights(weights, background.n_rows)
        bv, bm = background.values, background.missing
        nb = background.n_rows
        self.trees: list[list[_LeafFactor]] = []
        for tree in model.trees:
            leaves = []
            for leaf, path in tree.leaf_paths():
                feats: dict[int, list] = {}
                for f, thr, went_left, default_left in path:
                    feats.setdefault(f, []).append((thr, went_left, default_left))
                order = sorted(feats)
                conds = [feats[f] for f in order]
                if order:
                    bg_pass = np.stack([_passes(bv[:, f], bm[:, f], c) for f, c in zip(order, conds)], axis=1)
                else:
                    bg_pass = np.ones((nb, 0), dtype=bool)
                prods = _subset_products(bg_pass)  # (B, 2^r)
                if w is None:
                    prob = prods.sum(axis=0) / nb  # integer counts: order independent
                else:
                    prob = np.array([math.fsum(w[prods[:, u]]) for u in range(prods.shape[1])])
                bits = np.array([1 << f for f in order], dtype=np.int64)
                leaves.append(_LeafFactor(float(tree.value[leaf]), bits, prob, conds))
            self.trees.append(leaves)

    def _instance_tables(self, xv, xm, leaf: _LeafFactor, order_features):
        r = leaf.bits.size
        if r == 0:
            return np.full((xv.shape[0], 1), leaf.value * leaf.bg_prob[0])
        x_pass = np.stack(
            [_passes(xv[:, f], xm[:, f], c) for f, c in zip(order_features, leaf.path)], axis=1
        )
        x_prods = _subset_products(x_pass)  # (n, 2^r) instance passes the features in u
        full = (1 << r) - 1
        comp = full ^ np.arange(1 << r)
        return leaf.value * (x_prods * leaf.bg_prob[comp][None, :])

    def values(self, xv: np.ndarray, xm: np.ndarray, masks: np.ndarray) -> np.ndarray:
        xv = np.atleast_2d(np.asarray(xv, dtype=float))
        xm = np.atleast_2d(np.asarray(xm, dtype=bool))
        if xv.shape[1] != self.k:
            raise DimensionError(f"instance has {xv.shape[1]} cells, model expects {self.k}")
        masks = np.asarray(masks, dtype=np.int64)
        n = xv.shape[0]
        out = np.full((n, masks.size), float(self.model.base_score))
        tables = []
        for leaves in self.trees:
            row = []
            for leaf in leaves:
                feats = [int(b).bit_length() - 1 for b in leaf.bits]
                row.append(self._instance_tables(xv, xm, leaf, feats))
            tables.append(row)
        for start in range(0, masks.size, self.mask_chunk):
            m = masks[start:start + self.mask_chunk]
            block = out[:, start:start + m.size]
            for leaves, ltabs in zip(self.trees, tables):
                contrib = np.zeros((n, m.size))
                for leaf, g in zip(leaves, ltabs):
                    local = np.zeros(m.size, dtype=np.int64)
                    for pos, bit in enumerate(leaf.bits):
                        local |= ((m & bit) != 0).astype(np.int64) << pos
                    contrib += g[:, local]
                block += contrib
        return out


def make_game(model, background: FeatureTable, weights=None):
    if tuple(getattr(model, "feature_names", background.names)) != background.names:
        raise SchemaError("background schema does not match the model's feature names")
    if model.num_features != background.n_features:
        raise DimensionError(f"background has K={background.n_features}, model has K={model.num_features}")
    if isinstance(model, TreeEnsemble):
        return TreeGame(model, background, weights)
    return HybridRowGame(model, background, weights)


class ValueContext:
    """Memoized ``f_x(S)`` for one explained instance.

    Cache entries are written once and never change. ``use_cache=False``
    recomputes on every call (used to check memoization transparency).
    """

    def __init__(self, model, instance: Instance, background: FeatureTable, weights=None,
                 game=None, use_cache: bool = True):
        k = model.num_features
        if len(instance.values) != k:
            raise DimensionError(f"instance has {len(instance.values)} cells, model expects {k}")
        if k > MAX_MASK_FEATURES:
            raise ExactCapError(f"coalition masks support at most {MAX_MASK_FEATURES} features")
        self.model = model
        self.instance = instance
        self.k = k
        self.game = game if game is not None else make_game(model, background, weights)
        self.use_cache = use_cache
        self.cache: dict[int, float] = {}
        self.evaluations = 0

    @property
    def full_mask(self) -> int:
        return (1 << self.k) - 1

    def values(self, masks) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.int64).ravel()
        if masks.size and (masks.min() < 0 or masks.max() > self.full_mask):
            raise ValueError(f"coalition mask outside [0, 2^{self.k})")
        if not self.use_cache:
            self.evaluations += masks.size
            return self.game.values(self.instance.values, self.instance.missing, masks)[0]
        uniq = np.unique(masks)
        todo = np.array([m for m in uniq.tolist() if m not in self.cache], dtype=np.int64)
        if todo.size:
            vals = self.game.values(self.instance.values, self.instance.missing, todo)[0]
            self.evaluations += todo.size
            for m, v in zip(todo.tolist(), vals.tolist()):
                self.cache.setdefault(m, v)
        return np.array([self.cache[m] for m in masks.tolist()], dtype=float)

    def value(self, s: int) -> float:
        return float(self.values([s])[0])

    def table(self) -> np.ndarray:
        """All ``2^K`` coalition values, indexed by mask."""
        check_exact(self.k)
        return self.values(all_masks(self.k))


def coalition_value(ctx: ValueContext, s: int) -> float:
    return ctx.value(s)


def value_tables(model, table: FeatureTable, background: FeatureTable, weights=None,
                 game=None, chunk: int | None = None) -> np.ndarray:
    """``(N, 2^K)`` coalition-value tables for every row of ``table``."""
    k = model.num_features
    if table.n_features != k:
        raise DimensionError(f"data has K={table.n_features}, model has K={k}")
    check_exact(k)
    game = game if game is not None else make_game(model, background, weights)
    masks = all_masks(k)
    if chunk is None:
        chunk = max(1, (1 << 21) // masks.size)
    out = np.empty((table.n_rows, masks.size))
    for start in range(0, table.n_rows, chunk):
        stop = min(start + chunk, table.n_rows)
        out[start:stop] = game.values(table.values[start:stop], table.missing[start:stop], masks)
    return out
