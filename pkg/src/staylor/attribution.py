"""Shapley values of single instances and cohort-centered SHAP values."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coredata import FeatureTable
from .rng import MASK64, XorShift64Star
from .treemodel import predict
from .valuefn import ValueContext, all_masks, check_exact, make_game, popcount, value_tables, weight_shapley


def shapley_weights(k: int) -> np.ndarray:
    return np.array([weight_shapley(s, k) for s in range(k)])


def shapley_from_tables(tables: np.ndarray, k: int) -> np.ndarray:
    """Raw Shapley values from ``(N, 2^K)`` coalition tables, one pass per feature."""
    tables = np.atleast_2d(tables)
    masks = all_masks(k)
    pop = popcount(masks)
    w = shapley_weights(k)
    phi = np.empty((tables.shape[0], k))
    for i in range(k):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        diff = tables[:, without | bit] - tables[:, without]
        phi[:, i] = (diff * w[pop[without]][None, :]).sum(axis=1)
    return phi


def shapley_exact(ctx: ValueContext) -> np.ndarray:
    """Exact Shapley values of every feature for ``ctx.instance``."""
    check_exact(ctx.k)
    return shapley_from_tables(ctx.table()[None, :], ctx.k)[0]


def shapley_sampled(ctx: ValueContext, samples: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Permutation estimator: per-feature mean marginal contribution and its standard error.

    Orderings come from :class:`~staylor.rng.XorShift64Star` seeded with
    ``seed``; all orderings are drawn first, then the distinct prefix
    coalitions are evaluated in one batch.
    """
    if samples < 2:
        raise ValueError("samples must be at least 2")
    k = ctx.k
    rng = XorShift64Star(seed)
    perms = np.array([rng.permutation(k) for _ in range(samples)], dtype=np.int64)
    prefix = np.zeros((samples, k + 1), dtype=np.int64)
    for pos in range(k):
        prefix[:, pos + 1] = prefix[:, pos] | (np.int64(1) << perms[:, pos])
    uniq, inverse = np.unique(prefix, return_inverse=True)
    vals = ctx.values(uniq)[inverse.reshape(prefix.shape)]
    steps = np.diff(vals, axis=1)  # steps[s, pos] = contribution of perms[s, pos]
    contrib = np.empty((samples, k))
    np.put_along_axis(contrib, perms, steps, axis=1)
    mean = contrib.mean(axis=0)
    se = contrib.std(axis=0, ddof=1) / math.sqrt(samples)
    return mean, se


@dataclass(frozen=True)
class AttributionResult:
    raw: np.ndarray
    centered: np.ndarray
    baseline: float
    prediction: float
    method: str = "exact"
    samples: int | None = None
    seed: int | None = None


@dataclass(eq=False)
class CohortAttributions:
    feature_names: tuple[str, ...]
    raw: np.ndarray            # (N, K) Shapley values
    centered: np.ndarray       # (N, K) raw minus column means
    raw_means: np.ndarray      # (K,)
    baseline: float            # mean prediction over the cohort
    predictions: np.ndarray    # (N,)
    empty_values: np.ndarray   # (N,) f_x(empty set)
    method: str = "exact"
    stderr: np.ndarray | None = None
    samples: int | None = None
    seed: int | None = None
    tables: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_rows(self) -> int:
        return self.raw.shape[0]

    def __getitem__(self, j: int) -> AttributionResult:
        return AttributionResult(self.raw[j], self.centered[j], self.baseline, float(self.predictions[j]),
                                 self.method, self.samples, self.seed)


def center_columns(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Subtract cohort column means (exactly rounded sums, so row order is irrelevant)."""
    flat = raw.reshape(raw.shape[0], -1)
    means = np.array([math.fsum(flat[:, c].tolist()) / flat.shape[0] for c in range(flat.shape[1])])
    means = means.reshape(raw.shape[1:])
    return raw - means[None, ...], means


def instance_seed(seed: int, j: int) -> int:
    """Seed used for the j-th cohort row when sampling."""
    return (int(seed) + j) & MASK64


def shap_for_cohort(model, table: FeatureTable, background: FeatureTable | None = None, weights=None,
                    samples: int | None = None, seed: int = 0, keep_tables: bool = False) -> CohortAttributions:
    """Shapley values for every row, centered against the cohort mean.

    ``background`` defaults to ``table`` itself. With ``samples`` set, the
    permutation estimator replaces exact enumeration (row ``j`` is seeded
    with :func:`instance_seed`).
    """
    if background is None:
        background = table
    game = make_game(model, background, weights)
    k = model.num_features
    predictions = model.predict_matrix(table.values, table.missing)
    stderr = None
    tables = None
    if samples is None:
        tables = value_tables(model, table, background, game=game)
        raw = shapley_from_tables(tables, k)
        empty = tables[:, 0].copy()
        method = "exact"
    else:
        raw = np.empty((table.n_rows, k))
        stderr = np.empty((table.n_rows, k))
        empty = np.empty(table.n_rows)
        for j in range(table.n_rows):
            ctx = ValueContext(model, table.row(j), background, game=game)
            raw[j], stderr[j] = shapley_sampled(ctx, samples, instance_seed(seed, j))
            empty[j] = ctx.value(0)
        method = "sampled"
    centered, means = center_columns(raw)
    baseline = math.fsum(predictions.tolist()) / table.n_rows
    return CohortAttributions(
        feature_names=table.names, raw=raw, centered=centered, raw_means=means, baseline=baseline,
        predictions=predictions, empty_values=empty, method=method, stderr=stderr,
        samples=samples, seed=seed if samples is not None else None,
        tables=tables if keep_tables else None,
    )


def explain_instance(model, instance, background: FeatureTable) -> AttributionResult:
    """Exact attribution of a single instance; centered values equal raw ones (N=1)."""
    ctx = ValueContext(model, instance, background)
    raw = shapley_exact(ctx)
    pred = predict(model, instance)
    return AttributionResult(raw, np.zeros_like(raw), pred, pred)
