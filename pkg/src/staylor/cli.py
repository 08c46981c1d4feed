"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/schema error, 3 exact-enumeration
cap exceeded (rerun with ``--sampled N``), 4 ``verify`` found a failed check.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import export
from .attribution import center_columns, shap_for_cohort
from .coredata import FeatureTable, format_real, load_csv, write_csv
from .errors import DataError, DomainError, ExactCapError, StaylorError
from .importance import feature_importance, term_importance
from .interaction import matrices_for_cohort
from .synthetic import make_eq5_function, sample_cohort, threshold_spec
from .treemodel import TrainConfig, load_model, save_model, train_gbdt
from .verify import verify_directory

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CAP, EXIT_VERIFY = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n\n{self.format_help()}")


def _pair(text: str) -> tuple[str, str]:
    parts = text.split(",")
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError("expected two feature names separated by a comma")
    return parts[0], parts[1]


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--background", type=Path, help="background CSV (default: the data itself)")
    common.add_argument("--sampled", type=int, metavar="N", help="use sampled estimators with N samples")
    common.add_argument("--seed", type=_u64, default=0)
    common.add_argument("--format", choices=export.FORMATS, default="csv")
    common.add_argument("--out", type=Path, help="output path (stdout when omitted)")
    common.add_argument("--scale", choices=sorted(export.SCALES), help="weight applied to interaction terms")

    parser = _Parser(prog="staylor", description="Shapley and Shapley-Taylor attributions for tree ensembles.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    parser.subcommands = sub.choices

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    p.add_argument("--preset", choices=("eq5", "threshold"), required=True)
    p.add_argument("--n", type=_positive, default=2000, help="rows (threshold preset)")
    p.add_argument("--noise", type=float, default=0.1, help="noise std (threshold preset)")
    p.add_argument("--coef", default="1,0.5,-0.75,1.5,-1", help="a,b,c,d,e (eq5 preset)")

    p = sub.add_parser("train", parents=[common], help="fit a gradient-boosted tree ensemble")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--targets", type=Path, required=True, help="single-column CSV of targets")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--depth", type=_positive, default=3)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--min-leaf", type=_positive, default=1)

    p = sub.add_parser("explain", parents=[common], help="per-instance centered SHAP values")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--raw", action="store_true", help="emit uncentered Shapley values")

    p = sub.add_parser("interact", parents=[common], help="Shapley-Taylor matrices or one pair's dependence rows")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--method", choices=("taylor", "siv"), default="taylor")
    p.add_argument("--pair", type=_pair, help="FEATURE,PARTNER: emit interaction dependence rows")

    p = sub.add_parser("importance", parents=[common], help="standard-deviation importance ranking")
    p.add_argument("--matrices", type=Path, help="output of 'interact' (instead of --model/--data)")
    p.add_argument("--model", type=Path)
    p.add_argument("--data", type=Path)
    p.add_argument("--method", choices=("taylor", "siv"), default="taylor")
    p.add_argument("--level", choices=("term", "feature"), default="term")

    p = sub.add_parser("dependence", parents=[common], help="dependence-plot data")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--matrices", type=Path)
    p.add_argument("--model", type=Path)
    p.add_argument("--method", choices=("taylor", "siv"), default="taylor")
    p.add_argument("--feature", required=True)
    p.add_argument("--variant", choices=export.VARIANTS, default="shap")
    p.add_argument("--partner")

    p = sub.add_parser("summary", parents=[common], help="summary-plot data ordered by importance")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)

    p = sub.add_parser("verify", parents=[common], help="check ground-truth recovery on a synth directory")
    p.add_argument("--dir", type=Path, required=True)
    p.add_argument("--rows", type=_positive, default=16, help="rows checked (threshold preset)")
    return parser


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")


def _background(args, data: FeatureTable) -> FeatureTable:
    return load_csv(args.background) if args.background else data


def _check_sampled(args) -> None:
    if args.sampled is not None and args.sampled < 2:
        raise UsageError("--sampled needs at least 2 samples")


def _matrices(args, data: FeatureTable):
    if getattr(args, "matrices", None):
        cohort = export.load_matrices(args.matrices)
        if tuple(cohort.feature_names) != data.names or cohort.n_rows != data.n_rows:
            raise DataError("matrices do not match the data table")
        return cohort
    if not args.model:
        raise UsageError("give either --matrices or --model")
    model = load_model(args.model)
    return matrices_for_cohort(model, data, _background(args, data), args.method,
                               samples=args.sampled, seed=args.seed)


def cmd_synth(args) -> int:
    out = args.out
    if out is None:
        raise UsageError("synth needs --out DIR")
    if args.preset == "eq5":
        try:
            coefs = [float(c) for c in args.coef.split(",")]
        except ValueError:
            raise UsageError("--coef expects five numbers") from None
        if len(coefs) != 5:
            raise UsageError("--coef expects five numbers")
        spec = make_eq5_function(*coefs)
        data, _ = spec.background()
        targets = spec.predict_matrix(data.values)
    else:
        if args.n < 100:
            raise UsageError("the threshold preset needs --n >= 100")
        spec = threshold_spec(args.noise, args.seed)
        data, targets = sample_cohort(spec, args.n, args.seed)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(data, out / "data.csv")
    write_csv(FeatureTable.from_arrays(["target"], targets), out / "targets.csv")
    manifest = spec.to_manifest()
    manifest["n"] = data.n_rows
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_train(args) -> int:
    data = load_csv(args.data)
    targets = load_csv(args.targets)
    if targets.n_features != 1 or targets.missing.any():
        raise DataError("targets file must have exactly one column without missing cells")
    try:
        config = TrainConfig(args.trees, args.depth, args.learning_rate, args.min_leaf, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    model = train_gbdt(data, targets.values[:, 0], config)
    _emit(save_model(model), args.out)
    return EXIT_OK


def cmd_explain(args) -> int:
    _check_sampled(args)
    model = load_model(args.model)
    data = load_csv(args.data)
    cohort = shap_for_cohort(model, data, _background(args, data), samples=args.sampled, seed=args.seed)
    values = cohort.raw if args.raw else cohort.centered
    if args.format == "json":
        doc = {
            "feature_names": list(data.names),
            "method": cohort.method,
            "values": "raw" if args.raw else "centered",
            "baseline": cohort.baseline,
            "predictions": cohort.predictions.tolist(),
            "attributions": values.tolist(),
        }
        if cohort.stderr is not None:
            doc["stderr"] = cohort.stderr.tolist()
        _emit(json.dumps(doc, indent=1) + "\n", args.out)
        return EXIT_OK
    if args.format == "svg":
        raise UsageError("explain supports csv and json")
    cols = ["id", "prediction", "baseline"] + list(data.names)
    if cohort.stderr is not None:
        cols += [f"se[{n}]" for n in data.names]
    lines = [",".join(cols)]
    for j in range(data.n_rows):
        cells = [str(j), format_real(cohort.predictions[j]), format_real(cohort.baseline)]
        cells += [format_real(v) for v in values[j]]
        if cohort.stderr is not None:
            cells += [format_real(v) for v in cohort.stderr[j]]
        lines.append(",".join(cells))
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_interact(args) -> int:
    _check_sampled(args)
    data = load_csv(args.data)
    cohort = _matrices(args, data)
    if args.pair:
        feature, partner = args.pair
        dep = export.dependence_data(cohort, data, feature, "interaction", partner, args.scale)
        _emit(export.emit_dependence(dep, args.format), args.out)
        return EXIT_OK
    if args.format != "json" and args.format != "csv":
        raise UsageError("matrices are emitted as json")
    _emit(export.matrices_json(cohort), args.out)
    return EXIT_OK


def _half_path(path: Path) -> Path:
    return path.with_name(f"{path.stem}.half{path.suffix}")


def cmd_importance(args) -> int:
    _check_sampled(args)
    if args.matrices is None and not (args.model and args.data):
        raise UsageError("give --matrices or both --model and --data")
    if args.level == "feature":
        if args.matrices is not None:
            cohort = export.load_matrices(args.matrices)
            cohort.centered = center_columns(cohort.shapley)[0]
        else:
            model = load_model(args.model)
            data = load_csv(args.data)
            cohort = shap_for_cohort(model, data, _background(args, data), samples=args.sampled, seed=args.seed)
        _emit(export.emit_importance(feature_importance(cohort), args.format), args.out)
        return EXIT_OK
    if args.matrices is not None:
        cohort = export.load_matrices(args.matrices)
    else:
        data = load_csv(args.data)
        cohort = _matrices(args, data)
    scale = export.SCALES[args.scale or "full"]
    _emit(export.emit_importance(term_importance(cohort, scale), args.format), args.out)
    if args.out is not None and args.scale is None:
        # side-by-side variant with half-weighted interaction terms
        _emit(export.emit_importance(term_importance(cohort, 0.5), args.format), _half_path(args.out))
    return EXIT_OK


def cmd_dependence(args) -> int:
    _check_sampled(args)
    data = load_csv(args.data)
    cohort = _matrices(args, data)
    dep = export.dependence_data(cohort, data, args.feature, args.variant, args.partner, args.scale)
    _emit(export.emit_dependence(dep, args.format), args.out)
    return EXIT_OK


def cmd_summary(args) -> int:
    _check_sampled(args)
    model = load_model(args.model)
    data = load_csv(args.data)
    cohort = shap_for_cohort(model, data, _background(args, data), samples=args.sampled, seed=args.seed)
    rows = export.summary_rows(cohort, feature_importance(cohort), data)
    _emit(export.emit_summary(rows, args.format), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    report, ok = verify_directory(args.dir, max_rows=args.rows)
    _emit(report, args.out)
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "explain": cmd_explain,
    "interact": cmd_interact,
    "importance": cmd_importance,
    "dependence": cmd_dependence,
    "summary": cmd_summary,
    "verify": cmd_verify,
}


def cli_main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, extras = parser.parse_known_args(argv)
        if extras:
            parser.subcommands[args.command].error(f"unrecognized arguments: {' '.join(extras)}")
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except ExactCapError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CAP
    except (DataError, DomainError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA
    except StaylorError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA


def main() -> None:
    sys.exit(cli_main())

