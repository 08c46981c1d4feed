"""Order-2 Shapley-Taylor decomposition and the Shapley interaction value baseline.

Off-diagonal entries are pairwise interaction terms built from second
differences ``f(S+i+j) - f(S+i) - f(S+j) + f(S)``; diagonal entries are
main effects obtained by subtracting the pair terms from the Shapley value:

* ``taylor``: ``main_i = phi_i - 1/2 * sum_j pair_ij``
* ``siv``:    ``main_i = phi_i - sum_j pair_ij``
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial, sqrt

import numpy as np

from .attribution import center_columns, instance_seed, shapley_from_tables, shapley_sampled
from .coredata import FeatureTable
from .errors import DomainError
from .rng import XorShift64Star
from .valuefn import (
    ValueContext,
    all_masks,
    check_exact,
    make_game,
    popcount,
    value_tables,
    weight_siv,
    weight_taylor,
)

METHODS = ("taylor", "siv")
_PAIR_WEIGHT = {"taylor": weight_taylor, "siv": weight_siv}
_MAIN_SHARE = {"taylor": 0.5, "siv": 1.0}


def _check_method(method: str) -> None:
    if method not in METHODS:
        raise DomainError(f"unknown interaction method {method!r}; expected one of {METHODS}")


def _check_pair(i: int, j: int, k: int) -> None:
    if i == j:
        raise DomainError("pair terms need i != j; the diagonal comes from the main-effect operation")
    if not (0 <= i < k and 0 <= j < k):
        raise DomainError(f"feature index out of range for K={k}")


def pair_from_tables(tables: np.ndarray, k: int, i: int, j: int, method: str = "taylor") -> np.ndarray:
    _check_method(method)
    _check_pair(i, j, k)
    masks = all_masks(k)
    bi, bj = 1 << i, 1 << j
    rest = masks[(masks & (bi | bj)) == 0]
    weight = _PAIR_WEIGHT[method]
    w = np.array([weight(s, k) for s in range(k - 1)])
    second = ((tables[:, rest | bi | bj] - tables[:, rest | bi]) - tables[:, rest | bj]) + tables[:, rest]
    return (second * w[popcount(rest)][None, :]).sum(axis=1)


def matrices_from_tables(tables: np.ndarray, k: int, method: str = "taylor",
                         shapley: np.ndarray | None = None) -> np.ndarray:
    """``(N, K, K)`` matrices: pair terms off the diagonal, main effects on it."""
    _check_method(method)
    tables = np.atleast_2d(tables)
    if shapley is None:
        shapley = shapley_from_tables(tables, k)
    n = tables.shape[0]
    out = np.zeros((n, k, k))
    for i in range(k):
        for j in range(i + 1, k):
            p = pair_from_tables(tables, k, i, j, method)
            out[:, i, j] = p
            out[:, j, i] = p
    share = _MAIN_SHARE[method]
    for i in range(k):
        others = [j for j in range(k) if j != i]
        out[:, i, i] = shapley[:, i] - share * out[:, i, others].sum(axis=1)
    return out


def taylor_pair(ctx: ValueContext, i: int, j: int) -> float:
    check_exact(ctx.k)
    return float(pair_from_tables(ctx.table()[None, :], ctx.k, i, j, "taylor")[0])


def siv_pair(ctx: ValueContext, i: int, j: int) -> float:
    check_exact(ctx.k)
    return float(pair_from_tables(ctx.table()[None, :], ctx.k, i, j, "siv")[0])


def _main(ctx: ValueContext, i: int, shapley_raw, method: str) -> float:
    pairs = [pair_from_tables(ctx.table()[None, :], ctx.k, i, j, method)[0] for j in range(ctx.k) if j != i]
    return float(shapley_raw[i] - _MAIN_SHARE[method] * np.sum(pairs))


def taylor_main(ctx: ValueContext, i: int, shapley_raw) -> float:
    return _main(ctx, i, shapley_raw, "taylor")


def siv_main(ctx: ValueContext, i: int, shapley_raw) -> float:
    return _main(ctx, i, shapley_raw, "siv")


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    values: np.ndarray
    method: str
    feature_names: tuple[str, ...]
    centered: np.ndarray | None = None
    stderr: np.ndarray | None = None

    def main(self, i: int) -> float:
        return float(self.values[i, i])

    def pair(self, i: int, j: int) -> float:
        _check_pair(i, j, self.values.shape[0])
        return float(self.values[i, j])


def interaction_matrix(ctx: ValueContext, method: str = "taylor") -> InteractionMatrix:
    check_exact(ctx.k)
    names = tuple(getattr(ctx.model, "feature_names", ctx.instance.names))
    mat = matrices_from_tables(ctx.table()[None, :], ctx.k, method)[0]
    return InteractionMatrix(mat, method, names)


# --- sampling for K beyond the exact cap --------------------------------------


def _stratum_masses(k: int, method: str) -> list[float]:
    """Total weight of each coalition size ``s`` (exact rationals, no factorial cap)."""
    masses = []
    for s in range(k - 1):
        if method == "taylor":
            w = Fraction(2 * factorial(s) * factorial(k - s - 1), factorial(k))
        else:
            w = Fraction(factorial(s) * factorial(k - s - 2), 2 * factorial(k - 1))
        masses.append(float(w * comb(k - 2, s)))
    return masses


def pair_sampled(ctx: ValueContext, i: int, j: int, samples: int, rng: XorShift64Star,
                 method: str = "taylor") -> tuple[float, float]:
    """Stratified estimate of a pair term: ``samples`` subsets spread over the sizes.

    Each size ``s`` gets ``max(2, samples // (K-1))`` uniform ``s``-subsets of
    the other features (sizes with a single possible subset are evaluated
    once, exactly). Returns ``(estimate, standard error)``.
    """
    _check_method(method)
    k = ctx.k
    _check_pair(i, j, k)
    others = [f for f in range(k) if f not in (i, j)]
    per_size = max(2, samples // max(1, k - 1))
    bi, bj = 1 << i, 1 << j
    est, var = 0.0, 0.0
    for s, mass in enumerate(_stratum_masses(k, method)):
        if comb(k - 2, s) == 1:
            subsets = [sum(1 << f for f in others[:s])]
        else:
            subsets = [sum(1 << f for f in rng.sample(others, s)) for _ in range(per_size)]
        base = np.array(subsets, dtype=np.int64)
        v = ctx.values(np.concatenate([base | bi | bj, base | bi, base | bj, base])).reshape(4, -1)
        second = ((v[0] - v[1]) - v[2]) + v[3]
        est += mass * float(second.mean())
        if second.size > 1:
            var += mass**2 * float(second.var(ddof=1)) / second.size
    return est, sqrt(var)


def interaction_matrix_sampled(ctx: ValueContext, samples: int, seed: int = 0,
                               method: str = "taylor") -> InteractionMatrix:
    """Sampled matrix. Seed stream: permutation Shapley with ``seed``, then pairs
    ``(i, j), i < j`` in lexicographic order from one generator seeded with ``seed + 1``."""
    _check_method(method)
    k = ctx.k
    phi, phi_se = shapley_sampled(ctx, samples, seed)
    rng = XorShift64Star(seed + 1)
    mat = np.zeros((k, k))
    se = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            mat[i, j], se[i, j] = pair_sampled(ctx, i, j, samples, rng, method)
            mat[j, i], se[j, i] = mat[i, j], se[i, j]
    share = _MAIN_SHARE[method]
    for i in range(k):
        others = [j for j in range(k) if j != i]
        mat[i, i] = phi[i] - share * mat[i, others].sum()
        se[i, i] = sqrt(phi_se[i] ** 2 + share**2 * float(np.sum(se[i, others] ** 2)))
    names = tuple(getattr(ctx.model, "feature_names", ctx.instance.names))
    return InteractionMatrix(mat, method, names, stderr=se)


@dataclass(eq=False)
class CohortInteractions:
    feature_names: tuple[str, ...]
    method: str
    raw: np.ndarray        # (N, K, K)
    centered: np.ndarray   # (N, K, K)
    shapley: np.ndarray    # (N, K) raw Shapley values
    predictions: np.ndarray
    empty_values: np.ndarray
    sampled: int | None = None
    seed: int | None = None

    @property
    def n_rows(self) -> int:
        return self.raw.shape[0]

    def __getitem__(self, j: int) -> InteractionMatrix:
        return InteractionMatrix(self.raw[j], self.method, self.feature_names, self.centered[j])


def matrices_for_cohort(model, table: FeatureTable, background: FeatureTable | None = None,
                        method: str = "taylor", weights=None, samples: int | None = None,
                        seed: int = 0) -> CohortInteractions:
    """Per-row matrices plus a copy centered entry-wise against the cohort mean."""
    _check_method(method)
    if background is None:
        background = table
    game = make_game(model, background, weights)
    k = model.num_features
    predictions = model.predict_matrix(table.values, table.missing)
    if samples is None:
        tables = value_tables(model, table, background, game=game)
        shap = shapley_from_tables(tables, k)
        raw = matrices_from_tables(tables, k, method, shap)
        empty = tables[:, 0].copy()
    else:
        raw = np.empty((table.n_rows, k, k))
        shap = np.empty((table.n_rows, k))
        empty = np.empty(table.n_rows)
        for j in range(table.n_rows):
            ctx = ValueContext(model, table.row(j), background, game=game)
            m = interaction_matrix_sampled(ctx, samples, instance_seed(seed, j), method)
            raw[j] = m.values
            share = _MAIN_SHARE[method]
            shap[j] = np.diag(m.values) + share * (m.values.sum(axis=1) - np.diag(m.values))
            empty[j] = ctx.value(0)
    centered, _ = center_columns(raw)
    return CohortInteractions(table.names, method, raw, centered, shap, predictions, empty,
                              samples, seed if samples is not None else None)
