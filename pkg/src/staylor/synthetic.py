"""Synthetic models and cohorts with known main/interaction structure.

A :class:`SeparableSpec` is ``intercept + sum_i f_i(x_i) + sum_{i<j} g_ij(x_i, x_j)``
with every component tabulated on the finite support of its feature
marginal(s). Construction applies the functional-ANOVA projection under the
product background: each ``g_ij`` is doubly centered and each ``f_i`` centered,
with the removed marginal means moved into lower-order terms so that the
evaluated function is unchanged.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coredata import FeatureTable
from .errors import DomainError
from .rng import XorShift64Star
from .treemodel import Tree, TreeEnsemble


@dataclass(frozen=True)
class Marginal:
    support: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.support) != len(self.probs) or not self.support:
            raise ValueError("support and probs must be non-empty and of equal length")
        if list(self.support) != sorted(set(self.support)):
            raise ValueError("support must be strictly increasing")
        if any(p <= 0 for p in self.probs) or abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probabilities must be positive and sum to 1")

    @classmethod
    def uniform(cls, values: Sequence[float]) -> "Marginal":
        values = tuple(float(v) for v in values)
        return cls(values, tuple([1.0 / len(values)] * len(values)))

    @classmethod
    def bernoulli(cls, p: float) -> "Marginal":
        return cls((0.0, 1.0), (1.0 - p, p))

    def to_dict(self) -> dict:
        return {"support": list(self.support), "probs": list(self.probs)}

    def draw_index(self, rng: XorShift64Star) -> int:
        u = rng.random()
        acc = 0.0
        for idx, p in enumerate(self.probs):
            acc += p
            if u < acc:
                return idx
        return len(self.probs) - 1


@dataclass(frozen=True, eq=False)
class SeparableSpec:
    names: tuple[str, ...]
    marginals: tuple[Marginal, ...]
    intercept: float
    mains: tuple[np.ndarray, ...]
    pairs: dict = field(repr=False)   # (i, j) with i < j -> (|support_i|, |support_j|) table
    noise_std: float = 0.0
    seed: int = 0
    equation: str = ""
    preset: str = "custom"

    @classmethod
    def build(cls, names, marginals, mains=None, pairs=None, intercept: float = 0.0, **kw) -> "SeparableSpec":
        names = tuple(names)
        marginals = tuple(marginals)
        k = len(names)
        if len(marginals) != k:
            raise ValueError("one marginal per feature")
        probs = [np.array(m.probs) for m in marginals]
        main_tabs = [np.zeros(len(m.support)) for m in marginals]
        for i, tab in (mains or {}).items():
            main_tabs[i] = main_tabs[i] + np.asarray(tab, dtype=float)
        pair_tabs = {}
        for (i, j), tab in sorted((pairs or {}).items()):
            if not i < j < k:
                raise ValueError("pair keys must satisfy i < j < K")
            g = np.asarray(tab, dtype=float)
            if g.shape != (len(marginals[i].support), len(marginals[j].support)):
                raise ValueError(f"pair ({i}, {j}) table has the wrong shape")
            row_mean = g @ probs[j]           # function of x_i
            col_mean = probs[i] @ g           # function of x_j
            grand = float(probs[i] @ g @ probs[j])
            pair_tabs[(i, j)] = g - row_mean[:, None] - col_mean[None, :] + grand
            main_tabs[i] = main_tabs[i] + (row_mean - grand)
            main_tabs[j] = main_tabs[j] + (col_mean - grand)
            intercept += grand
        for i in range(k):
            mean = float(main_tabs[i] @ probs[i])
            main_tabs[i] = main_tabs[i] - mean
            intercept += mean
        return cls(names, marginals, float(intercept), tuple(main_tabs), pair_tabs, **kw)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.names

    @property
    def num_features(self) -> int:
        return len(self.names)

    def _indices(self, i: int, column: np.ndarray) -> np.ndarray:
        support = np.array(self.marginals[i].support)
        idx = np.clip(np.searchsorted(support, column), 0, support.size - 1)
        if not np.array_equal(support[idx], column):
            bad = column[support[idx] != column][0]
            raise DomainError(f"value {bad!r} of feature {self.names[i]!r} is outside the tabulated grid")
        return idx

    def main_effect(self, i: int, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.mains[i][self._indices(i, x)]

    def pair_effect(self, i: int, j: int, xi, xj) -> np.ndarray:
        if i > j:
            i, j, xi, xj = j, i, xj, xi
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        xj = np.atleast_1d(np.asarray(xj, dtype=float))
        tab = self.pairs.get((i, j))
        if tab is None:
            return np.zeros(np.broadcast(xi, xj).shape)
        return tab[self._indices(i, xi), self._indices(j, xj)]

    def predict_matrix(self, values: np.ndarray, missing: np.ndarray | None = None) -> np.ndarray:
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[1] != self.num_features:
            raise DomainError(f"expected {self.num_features} features")
        if missing is not None and np.any(missing):
            raise DomainError("synthetic functions are undefined on missing cells")
        idx = [self._indices(i, values[:, i]) for i in range(self.num_features)]
        out = np.full(values.shape[0], self.intercept)
        for i in range(self.num_features):
            out += self.mains[i][idx[i]]
        for (i, j), tab in sorted(self.pairs.items()):
            out += tab[idx[i], idx[j]]
        return out

    def background(self) -> tuple[FeatureTable, np.ndarray]:
        """Every grid point of the product background with its probability."""
        supports = [m.support for m in self.marginals]
        probs = [m.probs for m in self.marginals]
        rows = list(itertools.product(*supports))
        weights = np.array([math.prod(p) for p in itertools.product(*probs)])
        return FeatureTable.from_rows(self.names, rows), weights

    def is_uniform(self) -> bool:
        return all(len(set(m.probs)) == 1 for m in self.marginals)

    def to_manifest(self) -> dict:
        return {
            "preset": self.preset,
            "equation": self.equation,
            "feature_names": list(self.names),
            "marginals": [m.to_dict() for m in self.marginals],
            "intercept": self.intercept,
            "mains": [list(map(float, t)) for t in self.mains],
            "pairs": [
                {"i": i, "j": j, "table": [list(map(float, r)) for r in tab]}
                for (i, j), tab in sorted(self.pairs.items())
            ],
            "noise_std": self.noise_std,
            "seed": self.seed,
        }

    @classmethod
    def from_manifest(cls, doc: dict) -> "SeparableSpec":
        marginals = [Marginal(tuple(m["support"]), tuple(m["probs"])) for m in doc["marginals"]]
        mains = {i: t for i, t in enumerate(doc["mains"])}
        pairs = {(p["i"], p["j"]): p["table"] for p in doc["pairs"]}
        kw = dict(noise_std=doc.get("noise_std", 0.0), seed=doc.get("seed", 0),
                  equation=doc.get("equation", ""), preset=doc.get("preset", "custom"))
        spec = cls(tuple(doc["feature_names"]), tuple(marginals), float(doc["intercept"]),
                   tuple(np.asarray(t, dtype=float) for t in doc["mains"]),
                   {k: np.asarray(t, dtype=float) for k, t in sorted(pairs.items())}, **kw)
        if spec.max_centering_error() <= 1e-12:
            # keep already-centered tables bit for bit; re-centering would perturb the last ulp
            return spec
        return cls.build(doc["feature_names"], marginals, mains, pairs, doc["intercept"], **kw)

    def max_centering_error(self) -> float:
        """Largest marginal mean of any component under the background marginals."""
        probs = [np.array(m.probs) for m in self.marginals]
        worst = 0.0
        for i, tab in enumerate(self.mains):
            worst = max(worst, abs(float(tab @ probs[i])))
        for (i, j), tab in self.pairs.items():
            worst = max(worst, float(np.abs(tab @ probs[j]).max()), float(np.abs(probs[i] @ tab).max()))
        return worst


def evaluate(spec: SeparableSpec, instance) -> float:
    values = instance.values if hasattr(instance, "values") else np.asarray(instance, dtype=float)
    missing = getattr(instance, "missing", None)
    return float(spec.predict_matrix(np.asarray(values)[None, :],
                                     None if missing is None else np.asarray(missing)[None, :])[0])


EQ5_EQUATION = "F(x,y,z) = a*x + b*y + c*z + d*x*y + e*x*z, x,y,z uniform on {-1,1}"


def make_eq5_function(a: float, b: float, c: float, d: float, e: float) -> SeparableSpec:
    pm = Marginal.uniform((-1.0, 1.0))
    s = np.array([-1.0, 1.0])
    mains = {0: a * s, 1: b * s, 2: c * s}
    pairs = {(0, 1): d * np.outer(s, s), (0, 2): e * np.outer(s, s)}
    eq = EQ5_EQUATION + f"; a={a!r} b={b!r} c={c!r} d={d!r} e={e!r}"
    return SeparableSpec.build(("x", "y", "z"), (pm, pm, pm), mains, pairs, equation=eq, preset="eq5")


THRESHOLD = 1.2
THRESHOLD_EQUATION = (
    "y = -0.3*[b > 1.2] + 0.3*[b > 1.2]*(70 - age)/50 + noise; "
    "b uniform on {0.2, 0.3, ..., 2.0}, age uniform on {20, ..., 69}, bmi uniform on {18, 20, ..., 30}, "
    "smoking ~ Bernoulli(0.3), dm ~ Bernoulli(0.2); bmi, smoking, dm are inert; "
    "noise ~ Normal(0, noise_std)"
)


def threshold_spec(noise_std: float = 0.1, seed: int = 0) -> SeparableSpec:
    b = Marginal.uniform([round(0.2 + 0.1 * t, 1) for t in range(19)])
    age = Marginal.uniform(range(20, 70))
    bmi = Marginal.uniform(range(18, 31, 2))
    marginals = (b, age, bmi, Marginal.bernoulli(0.3), Marginal.bernoulli(0.2))
    high = (np.array(b.support) > THRESHOLD).astype(float)
    slope = (70.0 - np.array(age.support)) / 50.0
    mains = {0: -0.3 * high}
    pairs = {(0, 1): 0.3 * np.outer(high, slope)}
    return SeparableSpec.build(("b", "age", "bmi", "smoking", "dm"), marginals, mains, pairs,
                               noise_std=noise_std, seed=seed, equation=THRESHOLD_EQUATION,
                               preset="threshold")


def sample_cohort(spec: SeparableSpec, n: int, seed: int) -> tuple[FeatureTable, np.ndarray]:
    """Draw ``n`` rows (features in column order, then the noise draw) and targets."""
    rng = XorShift64Star(seed)
    rows, noise = [], []
    for _ in range(n):
        rows.append([m.support[m.draw_index(rng)] for m in spec.marginals])
        noise.append(spec.noise_std * rng.normal() if spec.noise_std > 0 else 0.0)
    table = FeatureTable.from_rows(spec.names, rows)
    targets = spec.predict_matrix(table.values) + np.array(noise)
    return table, targets


def make_threshold_cohort(n: int, seed: int, noise_std: float = 0.1) -> tuple[FeatureTable, np.ndarray]:
    if n < 100:
        raise ValueError("threshold cohort needs N >= 100")
    return sample_cohort(threshold_spec(noise_std, seed), n, seed)


class FunctionModel:
    """Wrap a vectorised ``fn(values) -> outputs`` as a model (no missing cells)."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], names: Sequence[str]):
        self.fn = fn
        self.feature_names = tuple(names)

    @property
    def num_features(self) -> int:
        return len(self.feature_names)

    def predict_matrix(self, values, missing=None):
        if missing is not None and np.any(missing):
            raise DomainError("function model is undefined on missing cells")
        return np.asarray(self.fn(np.atleast_2d(values)), dtype=float)


def linear_model(coefs: Sequence[float], names: Sequence[str] | None = None) -> FunctionModel:
    coefs = np.asarray(coefs, dtype=float)
    names = names or [f"x{i}" for i in range(coefs.size)]
    return FunctionModel(lambda v: v @ coefs, names)


def random_tree(k: int, rng: np.random.Generator, max_depth: int, features: Sequence[int] | None = None,
                split_prob: float = 0.8) -> Tree:
    features = list(range(k)) if features is None else list(features)
    nodes: list[dict] = []

    def build(depth: int) -> int:
        idx = len(nodes)
        nodes.append({})
        if features and depth < max_depth and (depth == 0 or rng.random() < split_prob):
            f = int(rng.choice(features))
            left = build(depth + 1)
            right = build(depth + 1)
            nodes[idx] = {"feature": f, "threshold": float(np.round(rng.normal(), 3)), "left": left,
                          "right": right, "default_left": bool(rng.random() < 0.5)}
        else:
            nodes[idx] = {"leaf": float(np.round(rng.normal(), 4))}
        return idx

    build(0)
    return Tree.from_nodes(nodes)


def random_ensemble(k: int, seed: int, n_trees: int | None = None, max_depth: int = 4,
                    features: Sequence[int] | None = None, names: Sequence[str] | None = None) -> TreeEnsemble:
    rng = np.random.default_rng(seed)
    if n_trees is None:
        n_trees = int(rng.integers(1, 8))
    names = tuple(names or [f"f{i}" for i in range(k)])
    trees = tuple(random_tree(k, rng, max_depth, features) for _ in range(n_trees))
    return TreeEnsemble(float(np.round(rng.normal(), 3)), trees, names)


def random_table(n: int, k: int, seed: int, missing_rate: float = 0.0,
                 names: Sequence[str] | None = None) -> FeatureTable:
    rng = np.random.default_rng(seed)
    values = np.round(rng.normal(size=(n, k)), 3)
    missing = rng.random((n, k)) < missing_rate
    names = names or [f"f{i}" for i in range(k)]
    return FeatureTable.from_arrays(names, np.where(missing, np.nan, values), missing)
