"""Command-line entry point: ``voidsurrogate {generate,fit,evaluate,study}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Relative ``--out`` paths resolve against ``$VOIDSURROGATE_OUTPUT_ROOT`` when
it is set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datastore import DataError, build_dataset, load_bundle, load_dataset, make_split, save_bundle, save_dataset
from .fieldgen import Case, GenerationError, GridSpec
from .gp import GpConfig, GpNumericalError
from .metrics import error_report, write_cross_sections, write_study_csv
from .nn import ACTIVATIONS, TrainingError
from .search import DEFAULT_FRACTIONS, DEFAULT_TRIALS, SearchError, SearchSpace, write_records_csv, write_summary_json
from .study import DEFAULT_SIZES, FRAMEWORKS, N_TEST, FitOptions, fit_framework, size_study

log = logging.getLogger("voidsurrogate")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
OUTPUT_ROOT_ENV = "VOIDSURROGATE_OUTPUT_ROOT"


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _add_fit_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="dataset directory written by 'generate'")
    p.add_argument("--test", type=int, default=N_TEST, help="test-set size (default %(default)s)")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0, help="search / training seed")
    p.add_argument("--workers", type=int, default=1, help="worker processes for the NN search")
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS, help="NN search trials")
    p.add_argument("--fractions", type=_floats, default=list(DEFAULT_FRACTIONS),
                   help="comma-separated variance fractions for the GP grid search")
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=40)
    p.add_argument("--max-epochs", type=int, default=2000)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--activations", type=lambda s: s.split(","), default=list(ACTIVATIONS))
    p.add_argument("--gp-restarts", type=int, default=5)
    p.add_argument("--gp-mcmc", type=int, default=0, help="hyperparameter samples per GP output (0 = MLE)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voidsurrogate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic void/stress dataset")
    g.add_argument("--case", choices=[c.value for c in Case], default=Case.NON_ROTATED.value)
    g.add_argument("--n", type=int, default=250)
    g.add_argument("--grid", type=int, default=64, help="pixels per side")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1)

    f = sub.add_parser("fit", help="train a surrogate with hyperparameter search")
    f.add_argument("--framework", choices=FRAMEWORKS, default="f1-gp")
    f.add_argument("--trainval", type=int, default=100, help="train + validation samples")
    _add_fit_options(f)

    e = sub.add_parser("evaluate", help="percentile error report for a fitted bundle")
    e.add_argument("--bundle", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--split", choices=["test", "train", "val", "trainval"], default="test",
                   help="which stored split to evaluate on")
    e.add_argument("--indices", type=_ints, default=None, help="explicit sample indices (overrides --split)")

    s = sub.add_parser("study", help="training-set size study")
    s.add_argument("--framework", choices=[*FRAMEWORKS, "both"], default="both")
    s.add_argument("--sizes", type=_ints, default=list(DEFAULT_SIZES))
    _add_fit_options(s)

    for p in (g, f, e, s):
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--config", default=None, help="JSON file of defaults; flags override it")
    return parser


def _parse(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read --config {args.config}: {exc}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = set(cfg) - known
    if unknown:
        parser.error(f"unknown keys in --config: {sorted(unknown)}")
    # Config values act as defaults: for required flags they satisfy argparse,
    # and anything given on the command line still wins.
    for a in sub._actions:
        if a.dest in cfg:
            a.required = False
    sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
    return parser.parse_args(argv)


def _out_dir(args, default_name: str) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    out = Path(args.out) if args.out else Path(default_name)
    return out if out.is_absolute() else root / out


def _write_run(out: Path, args) -> None:
    cfg = {k: v for k, v in vars(args).items()}
    cfg["package_version"] = __version__
    cfg["output_dir"] = str(out)
    (out / "run.json").write_text(json.dumps(cfg, indent=1, sort_keys=True, default=str))


def _require_dir(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} {path!r} does not exist")
    return p


def _fit_opts(args) -> FitOptions:
    if args.workers < 1 or args.trials < 1:
        raise UsageError("--workers and --trials must be >= 1")
    try:
        space = SearchSpace(
            fractions=tuple(args.fractions), k_bounds=(args.k_min, args.k_max),
            activations=tuple(args.activations), max_epochs=args.max_epochs, patience=args.patience,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    gp = GpConfig(restarts=args.gp_restarts, seed=args.seed, n_mcmc=args.gp_mcmc)
    return FitOptions(space, gp, args.trials, args.workers, args.seed)


def cmd_generate(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if args.grid < 8:
        raise UsageError("--grid must be >= 8")
    out = _out_dir(args, f"dataset-{args.case}-{args.seed}")
    ds = build_dataset(Case(args.case), args.n, GridSpec(args.grid, args.grid), seed=args.seed,
                       workers=max(args.workers, 1))
    save_dataset(ds, out)
    _write_run(out, args)
    print(f"wrote {len(ds)} samples to {out}")
    return EXIT_OK


def _split_feasible(n_total, trainval, test):
    if trainval < 3 or test < 1 or trainval + test > n_total:
        raise UsageError(f"cannot split {n_total} samples into {trainval} train+val and {test} test")


def cmd_fit(args) -> int:
    dpath = _require_dir(args.dataset, "dataset")
    opts = _fit_opts(args)
    ds = load_dataset(dpath)
    _split_feasible(len(ds), args.trainval, args.test)
    split = make_split(len(ds), args.trainval, args.test, args.split_seed)

    fit = fit_framework(ds, split, args.framework, opts)
    out = _out_dir(args, f"fit-{args.framework}")
    out.mkdir(parents=True, exist_ok=True)
    fit.bundle.metadata["dataset"] = str(dpath.resolve())
    save_bundle(fit.bundle, out / "bundle")
    for i, member in enumerate(fit.ensemble[1:], start=1):
        save_bundle(member, out / "ensemble" / f"member_{i}")
    write_records_csv(fit.records, out / "trials.csv")
    write_summary_json(fit.summary, out / "summary.json")
    (out / "split.json").write_text(json.dumps(split.as_dict()))
    _write_run(out, args)
    failed = [r for r in fit.records if r.status != "done"]
    if failed:
        print(f"{len(failed)} of {len(fit.records)} trials failed; see trials.csv", file=sys.stderr)
    print(f"best objective {fit.summary['best_objective']:.6g} ({fit.summary['best_config']}); bundle in {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    bpath = _require_dir(args.bundle, "bundle")
    dpath = _require_dir(args.dataset, "dataset")
    bundle = load_bundle(bpath)
    ds = load_dataset(dpath)
    if bundle.pipeline.grid != ds.grid:
        raise DataError(f"bundle grid {bundle.pipeline.grid} does not match dataset grid {ds.grid}")
    if args.indices is not None:
        idx = args.indices
    else:
        split = bundle.metadata.get("split", {})
        idx = sorted(split.get("train", []) + split.get("val", [])) if args.split == "trainval" \
            else split.get(args.split, [])
    if not idx:
        raise UsageError("empty evaluation selection")
    if min(idx) < 0 or max(idx) >= len(ds):
        raise UsageError(f"sample index out of range for {len(ds)} samples")

    out = _out_dir(args, "evaluate")
    out.mkdir(parents=True, exist_ok=True)
    samples = [ds.samples[i] for i in idx]
    report = error_report(bundle.pipeline, samples, idx)
    report.to_csv(out / "metrics.csv", label=args.split if args.indices is None else "selection")
    report.per_sample_csv(out / "per_sample.csv")
    for tag, sid in (("best", report.best), ("worst", report.worst)):
        s = ds.samples[sid]
        write_cross_sections(out / f"cross_section_{tag}.csv", s.stress,
                             bundle.pipeline.predict_field(s.mask), ds.grid)
    (out / "report.json").write_text(json.dumps({
        "errors_percent": report.errors,
        "metric_definition": report.definition,
        "best_sample": report.best,
        "worst_sample": report.worst,
        "n_samples": len(idx),
    }, indent=1))
    _write_run(out, args)
    print("  ".join(f"{k}={v:.4g}%" for k, v in report.errors.items()))
    return EXIT_OK


def cmd_study(args) -> int:
    dpath = _require_dir(args.dataset, "dataset")
    opts = _fit_opts(args)
    if not args.sizes or min(args.sizes) < 3:
        raise UsageError("--sizes must be a list of integers >= 3")
    ds = load_dataset(dpath)
    _split_feasible(len(ds), max(args.sizes), args.test)
    frameworks = FRAMEWORKS if args.framework == "both" else (args.framework,)
    out = _out_dir(args, "study")
    out.mkdir(parents=True, exist_ok=True)
    any_failed = False
    for fw in frameworks:
        rows = size_study(ds, args.sizes, fw, args.split_seed, opts, args.test)
        write_study_csv(rows, out / f"study_{fw}.csv")
        any_failed |= any(r.report is None for r in rows)
        for r in rows:
            msg = f"{r.report.errors['average']:.4g}%" if r.report else f"FAILED {r.error}"
            print(f"{fw} n={r.size}: average {msg}")
    _write_run(out, args)
    return EXIT_NUMERIC if any_failed else EXIT_OK


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "evaluate": cmd_evaluate, "study": cmd_study}


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    np.seterr(over="ignore", under="ignore")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, GenerationError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SearchError, GpNumericalError, TrainingError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
