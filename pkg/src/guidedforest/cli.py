"""Command-line front end: ``fit``, ``score``, ``bench``, ``synth`` and ``grid``.

Failures print one line to stderr, ``error[<category>]: <message>``, and
exit with the category's code.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ContractError
from .forest import PRESETS, ForestConfig, NothingToSplit, fit_forest, load_model, preset, save_model, score_matrix
from .io import DataFormatError, SyntheticSpec, gen_synthetic, load_csv, score_grid, write_csv, write_grid_csv
from .metrics import SingleClassError, aupr, auroc

EXIT_CODES = {
    "io": 3,
    "data-format": 4,
    "validation": 5,
    "nothing-to-split": 6,
    "single-class": 7,
    "internal": 70,
}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


# ------------------------------------------------------------------ config


_OVERRIDE_FLAGS = {
    "criterion": "criterion",
    "col_select": "col_select",
    "weight_scope": "weight_scope",
    "trees": "n_trees",
    "sample_size": "sample_size",
    "ndim": "ndim",
    "ntry": "trials",
    "max_depth": "max_depth",
    "gain_threshold": "gain_threshold",
    "depth_formula": "depth_formula",
}


def config_from_args(args: argparse.Namespace) -> ForestConfig:
    """Expand the preset, then apply every flag that was given explicitly."""
    overrides = {
        key: getattr(args, flag) for flag, key in _OVERRIDE_FLAGS.items() if getattr(args, flag, None) is not None
    }
    if getattr(args, "replacement", False):
        overrides["replacement"] = True
    if getattr(args, "full_isolation", False):
        if args.max_depth is not None or args.gain_threshold is not None:
            raise CliError("validation", "--full-isolation conflicts with --max-depth/--gain-threshold")
        overrides["max_depth"] = None
        overrides["gain_threshold"] = None
    return preset(args.preset, **overrides)


def _label_column(text: str | None):
    if text is None or text.lower() == "none":
        return None
    return text


def _load(path: str, label_col: str | None):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ds = load_csv(path, _label_column(label_col))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return ds


def _fit(matrix, config: ForestConfig, seed: int, threads: int | None):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = fit_forest(matrix, config, base_seed=seed, threads=threads)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return model


# ---------------------------------------------------------------- commands


def cmd_fit(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    ds = _load(args.data, args.label_col)
    t0 = time.perf_counter()
    model = _fit(ds.matrix, config, args.seed, args.threads)
    elapsed = time.perf_counter() - t0
    save_model(model, args.model)
    print(
        f"trees={model.n_trees} nodes={model.node_count} q={model.normalizer_q:.6f} "
        f"sample_size={model.sample_size} seconds={elapsed:.3f}"
    )
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    ds = _load(args.data, args.label_col)
    if ds.matrix.cols != model.n_cols:
        raise CliError("validation", f"model expects {model.n_cols} columns, data has {ds.matrix.cols}")
    scores = score_matrix(ds.matrix, model, args.threads)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_index", "score"])
        for i, s in enumerate(scores):
            w.writerow([i, repr(float(s))])
    return 0


@dataclass
class BenchResult:
    dataset: str
    model: str
    seeds: list[int]
    config: dict
    per_seed: list[dict] = field(default_factory=list)

    @property
    def mean_auroc(self) -> float:
        return float(np.mean([r["auroc"] for r in self.per_seed]))

    @property
    def mean_aupr(self) -> float:
        return float(np.mean([r["aupr"] for r in self.per_seed]))

    @property
    def mean_seconds(self) -> float:
        return float(np.mean([r["seconds"] for r in self.per_seed]))

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "model": self.model,
            "seeds": self.seeds,
            "config": self.config,
            "per_seed": self.per_seed,
            "mean": {
                "auroc": round(self.mean_auroc, 4),
                "aupr": round(self.mean_aupr, 4),
                "seconds": round(self.mean_seconds, 4),
            },
        }

    def table(self) -> str:
        lines = [f"{self.dataset} / {self.model}", f"{'seed':>6} {'ROC':>8} {'PR':>8} {'Time':>8}"]
        for r in self.per_seed:
            lines.append(f"{r['seed']:>6} {r['auroc']:>8.4f} {r['aupr']:>8.4f} {r['seconds']:>8.4f}")
        lines.append(f"{'mean':>6} {self.mean_auroc:>8.4f} {self.mean_aupr:>8.4f} {self.mean_seconds:>8.4f}")
        return "\n".join(lines)


def run_bench(dataset, config: ForestConfig, seeds, threads: int | None = None, label: str = "custom") -> BenchResult:
    """Fit and score on the same data once per seed; timing covers both."""
    if dataset.labels is None:
        raise CliError("validation", "bench needs a labeled dataset")
    if not dataset.has_both_classes:
        raise SingleClassError("bench needs both classes in the labels")
    result = BenchResult(dataset.name, label, list(seeds), config.to_dict())
    for seed in seeds:
        t0 = time.perf_counter()
        model = fit_forest(dataset.matrix, config, base_seed=seed, threads=threads)
        scores = score_matrix(dataset.matrix, model, threads)
        elapsed = time.perf_counter() - t0
        result.per_seed.append({
            "seed": int(seed),
            "auroc": round(auroc(scores, dataset.labels), 4),
            "aupr": round(aupr(scores, dataset.labels), 4),
            "seconds": round(elapsed, 4),
            "nodes": model.node_count,
        })
    return result


def cmd_bench(args: argparse.Namespace) -> int:
    if args.runs < 1:
        raise CliError("validation", "--runs must be >= 1")
    config = config_from_args(args)
    ds = _load(args.data, args.label_col if args.label_col is not None else "last")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = run_bench(ds, config, range(args.seed, args.seed + args.runs), args.threads, args.preset)
    print(result.table())
    text = json.dumps(result.to_dict(), indent=2)
    if args.json_out:
        Path(args.json_out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def _point(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_synth(args: argparse.Namespace) -> int:
    if args.kind == "bimodal":
        centers = args.center or [(0.0, 0.0), (10.0, 10.0)]
        spec = SyntheticSpec.bimodal(args.n // len(centers), centers, args.sdev, args.seed)
    else:
        center = args.center[0] if args.center else (0.0, 0.0)
        outliers = args.outlier if args.outlier is not None else [(10.0 * args.sdev, -10.0 * args.sdev)]
        spec = SyntheticSpec.blob(args.n, center, args.sdev, outliers, args.seed)
    write_csv(gen_synthetic(spec), args.out)
    return 0


def cmd_grid(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    x0, x1, y0, y1 = args.bounds
    grid = score_grid(model, ((x0, x1), (y0, y1)), args.resolution, args.threads)
    write_grid_csv(grid, args.out)
    return 0


# ------------------------------------------------------------------ parser


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--preset", choices=sorted(PRESETS), default="fcf")
    g.add_argument("--criterion", choices=["uniform", "pooled", "averaged"])
    g.add_argument("--col-select", choices=["uniform", "kurtosis", "range"])
    g.add_argument("--weight-scope", choices=["node", "global"])
    g.add_argument("--trees", type=int)
    g.add_argument("--sample-size", type=int)
    g.add_argument("--ndim", type=int)
    g.add_argument("--ntry", type=int)
    g.add_argument("--max-depth", type=int)
    g.add_argument("--gain-threshold", type=float)
    g.add_argument("--full-isolation", action="store_true")
    g.add_argument("--depth-formula", choices=["harmonic", "averaged", "pooled"])
    g.add_argument("--replacement", action="store_true", help="sub-sample rows with replacement")


def _add_run_flags(p: argparse.ArgumentParser, label_default: str | None = "last") -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--label-col", default=label_default, help="header name, 'last', or 'none'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guidedforest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a forest and save it as JSON")
    p.add_argument("data")
    p.add_argument("model")
    _add_model_flags(p)
    _add_run_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="score rows with a saved forest")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("out")
    _add_run_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("bench", help="fit+score on labeled data over several seeds")
    p.add_argument("data")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--json-out")
    _add_model_flags(p)
    _add_run_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="write a synthetic Gaussian dataset")
    p.add_argument("kind", choices=["bimodal", "blob"])
    p.add_argument("out")
    p.add_argument("--n", type=int, default=1000, help="inlier rows in total")
    p.add_argument("--sdev", type=float, default=1.0)
    p.add_argument("--center", type=_point, action="append", help="x,y (repeatable)")
    p.add_argument("--outlier", type=_point, action="append", help="planted point x,y (repeatable, blob only)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("grid", help="score a 2-d lattice with a saved forest")
    p.add_argument("model")
    p.add_argument("out")
    p.add_argument("--bounds", type=float, nargs=4, metavar=("X0", "X1", "Y0", "Y1"), default=(-5.0, 15.0, -5.0, 15.0))
    p.add_argument("--resolution", type=int, default=100)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_grid)
    return parser


def _categorize(exc: BaseException) -> str:
    if isinstance(exc, CliError):
        return exc.category
    if isinstance(exc, NothingToSplit):
        return "nothing-to-split"
    if isinstance(exc, SingleClassError):
        return "single-class"
    if isinstance(exc, (DataFormatError, json.JSONDecodeError)):
        return "data-format"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, (ContractError, ValueError, KeyError, TypeError)):
        return "validation"
    return "internal"


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure maps to one category line
        category = _categorize(exc)
        message = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error[{category}]: {message}", file=sys.stderr)
        return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
