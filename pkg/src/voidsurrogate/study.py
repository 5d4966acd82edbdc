"""Training-set size study and the shared fit entry point used by the CLI."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .datastore import Dataset, ModelBundle, SplitPlan, make_split
from .gp import GpConfig
from .metrics import ErrorReport, error_report
from .search import (
    DEFAULT_TRIALS,
    SearchError,
    SearchSpace,
    TrialRecord,
    f1_summary,
    grid_search_f1,
    random_search_f2,
)

log = logging.getLogger(__name__)

FRAMEWORKS = ("f1-gp", "f2-nn")
DEFAULT_SIZES = (100, 80, 60, 40, 20)
N_TEST = 150


@dataclass
class FitOptions:
    space: SearchSpace = field(default_factory=SearchSpace)
    gp: GpConfig = field(default_factory=GpConfig)
    n_trials: int = DEFAULT_TRIALS
    workers: int = 1
    seed: int = 0


@dataclass
class FitResult:
    bundle: ModelBundle
    records: list[TrialRecord]
    summary: dict
    ensemble: list[ModelBundle] = field(default_factory=list)


def fit_framework(dataset: Dataset, split: SplitPlan, framework: str, opts: FitOptions) -> FitResult:
    if framework == "f1-gp":
        bundle, records = grid_search_f1(dataset, split, opts.space.fractions, opts.gp)
        return FitResult(bundle, records, f1_summary(bundle, records), [bundle])
    if framework == "f2-nn":
        res = random_search_f2(dataset, split, opts.space, opts.n_trials, opts.workers, opts.seed)
        return FitResult(res.best, res.records, res.summary, res.top)
    raise ValueError(f"unknown framework {framework!r}; expected one of {FRAMEWORKS}")


@dataclass
class StudyRow:
    size: int
    framework: str
    report: ErrorReport | None
    split: SplitPlan | None = None
    error: str = ""
    bundle: ModelBundle | None = None


def size_study(
    dataset: Dataset,
    sizes=DEFAULT_SIZES,
    framework: str = "f1-gp",
    split_seed: int = 0,
    opts: FitOptions | None = None,
    n_test: int = N_TEST,
) -> list[StudyRow]:
    """Fit and test one surrogate per training-pool size.

    Every size shares one test set and the training pools are nested.
    Failures are recorded in the row instead of aborting the study.
    """
    opts = opts or FitOptions()
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValueError("no sizes given")
    if max(sizes) + n_test > len(dataset):
        raise ValueError(f"largest size {max(sizes)} + {n_test} test samples exceeds {len(dataset)}")
    rows = []
    for size in sizes:
        split = make_split(len(dataset), size, n_test, split_seed)
        try:
            fit = fit_framework(dataset, split, framework, opts)
            report = error_report(fit.bundle.pipeline, [dataset.samples[i] for i in split.test_idx],
                                  split.test_idx)
            rows.append(StudyRow(size, framework, report, split, bundle=fit.bundle))
            log.info("size %d %s average error %.4g%%", size, framework, report.errors["average"])
        except (SearchError, ValueError, ArithmeticError, RuntimeError) as exc:
            log.error("size %d %s failed: %s", size, framework, exc)
            rows.append(StudyRow(size, framework, None, split, str(exc)))
    return rows
