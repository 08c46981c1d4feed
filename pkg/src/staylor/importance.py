"""Standard-deviation importance of SHAP columns and of main/interaction terms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coredata import population_std


@dataclass(frozen=True)
class ImportanceEntry:
    rank: int
    feature1: str
    feature2: str
    importance: float
    index1: int
    index2: int


def _rank(items: list[tuple[float, int, int]], names) -> list[ImportanceEntry]:
    # descending importance, ties by (index1, index2) ascending
    items = sorted(items, key=lambda t: (-t[0], t[1], t[2]))
    return [ImportanceEntry(r, names[i], names[j], imp, i, j) for r, (imp, i, j) in enumerate(items, start=1)]


def feature_importance(cohort) -> list[ImportanceEntry]:
    """Rank features by the population std of their centered SHAP values."""
    centered = np.asarray(cohort.centered)
    items = [(population_std(centered[:, i].tolist()), i, i) for i in range(centered.shape[1])]
    return _rank(items, cohort.feature_names)


def term_importance(matrices, scale: float = 1.0) -> list[ImportanceEntry]:
    """Rank all ``i <= j`` terms of the centered interaction matrices in one list.

    ``scale`` multiplies off-diagonal terms only (0.5 gives the half-weighted
    variant used in the recomposition identity).
    """
    centered = np.asarray(matrices.centered)
    if centered.ndim != 3 or centered.shape[0] < 1:
        raise ValueError("need at least one interaction matrix")
    k = centered.shape[1]
    items = []
    for i in range(k):
        for j in range(i, k):
            col = centered[:, i, j] if i == j else scale * centered[:, i, j]
            items.append((population_std(col.tolist()), i, j))
    return _rank(items, matrices.feature_names)
