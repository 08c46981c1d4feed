"""Ground-truth checks for a directory written by ``staylor synth``."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .attribution import shapley_from_tables
from .coredata import load_csv
from .interaction import matrices_from_tables
from .synthetic import SeparableSpec
from .valuefn import make_game, value_tables

SEPARATION_TOL = 1e-9
CENTERING_TOL = 1e-12


def _line(ok: bool, name: str, detail: str) -> str:
    return f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"


def verify_spec(spec: SeparableSpec, rows) -> tuple[list[str], bool]:
    """Run the separation checks on the rows of ``rows`` (a FeatureTable)."""
    lines = []
    results = []
    worst = spec.max_centering_error()
    results.append(worst <= CENTERING_TOL)
    lines.append(_line(results[-1], "double centering", f"max marginal mean {worst:.3e} (tol {CENTERING_TOL:g})"))

    background, weights = spec.background()
    game = make_game(spec, background, weights)
    k = spec.num_features
    tables = value_tables(spec, rows, background, game=game)
    shap = shapley_from_tables(tables, k)
    taylor = matrices_from_tables(tables, k, "taylor", shap)
    siv = matrices_from_tables(tables, k, "siv", shap)

    x = rows.values
    main_err = pair_err = siv_main_gap = 0.0
    for i in range(k):
        truth = spec.main_effect(i, x[:, i])
        main_err = max(main_err, float(np.abs(taylor[:, i, i] - truth).max()))
        siv_main_gap = max(siv_main_gap, float(np.abs(siv[:, i, i] - truth).max()))
        for j in range(i + 1, k):
            truth = spec.pair_effect(i, j, x[:, i], x[:, j])
            pair_err = max(pair_err, float(np.abs(taylor[:, i, j] - truth).max()))
    results.append(main_err <= SEPARATION_TOL)
    lines.append(_line(results[-1], "main effects", f"max |diag - f_i(x_i)| = {main_err:.3e} (tol {SEPARATION_TOL:g})"))
    results.append(pair_err <= SEPARATION_TOL)
    lines.append(_line(results[-1], "interaction terms",
                       f"max |offdiag - g_ij(x_i,x_j)| = {pair_err:.3e} (tol {SEPARATION_TOL:g})"))

    off = taylor.sum(axis=2) - np.einsum("nii->ni", taylor)
    decomp = float(np.abs(shap - np.einsum("nii->ni", taylor) - 0.5 * off).max())
    results.append(decomp <= SEPARATION_TOL)
    lines.append(_line(results[-1], "decomposition", f"max |phi_i - main_i - sum_j pair_ij / 2| = {decomp:.3e}"))

    upper = np.triu_indices(k, 1)
    total = np.einsum("nii->n", taylor) + taylor[:, upper[0], upper[1]].sum(axis=1)
    compl = float(np.abs(total - (tables[:, -1] - tables[:, 0])).max())
    results.append(compl <= SEPARATION_TOL)
    lines.append(_line(results[-1], "completeness", f"max |sum of terms - (f(x) - f(empty))| = {compl:.3e}"))

    lines.append(f"INFO  shapley interaction values: max |diag - f_i(x_i)| = {siv_main_gap:.3e}")
    return lines, all(results)


def verify_directory(directory, max_rows: int = 16) -> tuple[str, bool]:
    directory = Path(directory)
    doc = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    spec = SeparableSpec.from_manifest(doc)
    data = load_csv(directory / "data.csv")
    rows = data.take(range(min(max_rows, data.n_rows)))
    lines, ok = verify_spec(spec, rows)
    header = [f"preset: {spec.preset}", f"equation: {spec.equation}", f"rows checked: {rows.n_rows}"]
    summary = "verification passed" if ok else "verification FAILED"
    return "\n".join(header + lines + [summary]) + "\n", ok
