"""Hyperparameter search for the GP and NN surrogates.

``grid_search_f1`` sweeps a shared explained-variance fraction for both
codecs and fits a GP at each point.  ``random_search_f2`` draws NN
configurations (codec widths included) from a seeded generator and
evaluates them on a process pool.  Both select on the mean squared error of
masked, reconstructed validation fields.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field

import numpy as np

from . import pca
from .datastore import Dataset, ModelBundle, SplitPlan
from .gp import GpConfig, gp_fit
from .nn import ACTIVATIONS, NnArch, TrainConfig, nn_init, nn_train
from .pipeline import SurrogatePipeline, masked_mse

log = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.90, 0.93, 0.95, 0.97, 0.99)
DEFAULT_TRIALS = 200
TOP_M = 5


class SearchError(RuntimeError):
    """Raised when every trial of a search failed."""


@dataclass(frozen=True)
class SearchSpace:
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    k_bounds: tuple[int, int] = (2, 40)
    lr_bounds: tuple[float, float] = (1e-4, 1e-2)
    decay_bounds: tuple[float, float] = (0.95, 1.0)
    batch_sizes: tuple[int, ...] = (8, 16, 32)
    widths: tuple[int, ...] = (32, 64, 128)
    depths: tuple[int, ...] = (2, 3, 4)
    activations: tuple[str, ...] = ACTIVATIONS
    max_epochs: int = 2000
    patience: int = 50

    def __post_init__(self):
        for name in ("fractions", "batch_sizes", "widths", "depths", "activations"):
            if not getattr(self, name):
                raise ValueError(f"search space field {name!r} is empty")
        if any(not 0 < f <= 1 for f in self.fractions):
            raise ValueError("variance fractions must lie in (0, 1]")
        lo, hi = self.k_bounds
        if not 1 <= lo <= hi:
            raise ValueError(f"bad k bounds {self.k_bounds}")
        if not 0 < self.lr_bounds[0] <= self.lr_bounds[1]:
            raise ValueError(f"bad learning-rate bounds {self.lr_bounds}")
        if not 0 < self.decay_bounds[0] <= self.decay_bounds[1] <= 1:
            raise ValueError(f"bad decay bounds {self.decay_bounds}")
        if any(a not in ACTIVATIONS for a in self.activations):
            raise ValueError(f"unknown activation in {self.activations}")

    def k_range(self, n_train: int) -> tuple[int, int]:
        """Latent-width bounds capped at ``n_train - 1``."""
        hi = min(self.k_bounds[1], n_train - 1)
        lo = min(self.k_bounds[0], hi)
        if hi < 1:
            raise ValueError(f"{n_train} training samples cannot support any latent width")
        return lo, hi

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class TrialRecord:
    trial_id: int
    config: dict
    objective: float
    wall_time: float
    status: str
    seed: int
    error: str = ""

    def key(self) -> tuple:
        """Everything except wall time, for comparing runs."""
        return (self.trial_id, json.dumps(self.config, sort_keys=True), self.objective,
                self.status, self.seed, self.error)


def _rows(ds: Dataset, idx) -> tuple[np.ndarray, np.ndarray]:
    n = len(idx)
    return ds.masks(idx).reshape(n, -1), ds.stresses(idx).reshape(n, -1)


def _full_codecs(Xm: np.ndarray, Xs: np.ndarray) -> tuple[pca.PcaCodec, pca.PcaCodec]:
    # Keep every component, including null directions of rank-deficient masks,
    # so any trial width up to n_train - 1 can be cut from one fit.
    k = min(Xm.shape[0] - 1, Xm.shape[1])
    return (pca.fit(Xm, pca.POLICY_NONE, pca.Components(k)),
            pca.fit(Xs, pca.POLICY_CENTER_SCALE, pca.Components(k)))


def _objective(pipe: SurrogatePipeline, masks: np.ndarray, stresses: np.ndarray) -> float:
    grid = pipe.grid
    pred = pipe.predict_fields(masks.reshape(-1, *grid.shape))
    return masked_mse(pred, stresses.reshape(-1, *grid.shape))


def _pick(records: list[TrialRecord], tie_key) -> TrialRecord:
    done = [r for r in records if r.status == "done"]
    if not done:
        raise SearchError(f"all {len(records)} trials failed: " + "; ".join(r.error for r in records[:3]))
    best = min(done, key=lambda r: (r.objective, tie_key(r)))
    assert all(best.objective <= r.objective for r in done)
    return best


def grid_search_f1(
    dataset: Dataset,
    split: SplitPlan,
    fractions=DEFAULT_FRACTIONS,
    gp_config: GpConfig | None = None,
) -> tuple[ModelBundle, list[TrialRecord]]:
    """PCA -> GP -> PCA with one variance fraction shared by both codecs.

    Ties on the validation objective go to the smaller fraction.
    """
    fractions = [float(f) for f in fractions]
    if not fractions:
        raise ValueError("variance-fraction grid is empty")
    cfg = gp_config or GpConfig()
    Xm, Xs = _rows(dataset, split.train_idx)
    Vm, Vs = _rows(dataset, split.val_idx)
    full_in, full_out = _full_codecs(Xm, Xs)
    rank_in = pca.numerical_rank(full_in.eigenvalues, Xm.shape)
    rank_out = pca.numerical_rank(full_out.eigenvalues, Xs.shape)

    records, pipes = [], {}
    for tid, f in enumerate(fractions):
        t0 = time.perf_counter()
        k1 = k2 = None
        try:
            k1 = pca.k_for_fraction(full_in.eigenvalues, f, rank_in)
            k2 = pca.k_for_fraction(full_out.eigenvalues, f, rank_out)
            cin, cout = full_in.truncate(k1), full_out.truncate(k2)
            gp = gp_fit(cin.encode(Xm), cout.encode(Xs), cfg)
            pipe = SurrogatePipeline(cin, gp, cout, dataset.grid)
            obj = _objective(pipe, Vm, Vs) if len(split.val_idx) else math.nan
            if not np.isfinite(obj):
                raise FloatingPointError("non-finite validation objective")
            pipes[tid] = pipe
            rec = TrialRecord(tid, {"fraction": f, "k_in": k1, "k_out": k2}, obj,
                              time.perf_counter() - t0, "done", cfg.seed)
        except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
            log.warning("fraction %.4g failed: %s", f, exc)
            rec = TrialRecord(tid, {"fraction": f, "k_in": k1, "k_out": k2}, math.nan,
                              time.perf_counter() - t0, "failed", cfg.seed, str(exc))
        log.info("f1 trial %d fraction=%.3f objective=%.6g", tid, f, rec.objective)
        records.append(rec)

    best = _pick(records, lambda r: (r.config["fraction"], r.trial_id))
    meta = {
        "framework": "f1-gp",
        "split": split.as_dict(),
        "config": best.config,
        "objective": best.objective,
        "gp_config": asdict(cfg),
    }
    return ModelBundle(pipes[best.trial_id], meta), records


def draw_configs(
    space: SearchSpace, n_trials: int, n_train: int, seed: int,
    rank_in: int | None = None, rank_out: int | None = None,
) -> list[dict]:
    """The full list of trial configurations; depends only on the arguments.

    ``rank_in``/``rank_out`` further cap the codec widths: components past
    the numerical rank of the training data carry no variance.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    k_lo, k_hi = space.k_range(n_train)
    hi_in = max(1, min(k_hi, rank_in or k_hi))
    hi_out = max(1, min(k_hi, rank_out or k_hi))
    lo, hi = np.log10(space.lr_bounds)
    out = []
    for _ in range(n_trials):
        out.append({
            "k_in": int(rng.integers(min(k_lo, hi_in), hi_in + 1)),
            "k_out": int(rng.integers(min(k_lo, hi_out), hi_out + 1)),
            "learning_rate": float(10.0 ** rng.uniform(lo, hi)),
            "decay": float(rng.uniform(*space.decay_bounds)),
            "batch_size": int(rng.choice(space.batch_sizes)),
            "n_width": int(rng.choice(space.widths)),
            "n_depth": int(rng.choice(space.depths)),
            "activation": str(rng.choice(space.activations)),
            "seed": int(rng.integers(2**31 - 1)),
        })
    return out


# Per-process state for trial workers, set once by _init_worker.
_SHARED: dict = {}


def _init_worker(shared: dict) -> None:
    _SHARED.clear()
    _SHARED.update(shared)


def _train_trial(tid: int, cfg: dict, shared: dict):
    full_in, full_out = shared["codecs"]
    Xm, Xs, Vm, Vs = shared["train_val"]
    cin, cout = full_in.truncate(cfg["k_in"]), full_out.truncate(cfg["k_out"])
    arch = NnArch(cfg["k_in"], cfg["k_out"], cfg["n_depth"], cfg["n_width"], cfg["activation"])
    tcfg = TrainConfig(
        learning_rate=cfg["learning_rate"], decay=cfg["decay"], batch_size=cfg["batch_size"],
        max_epochs=shared["max_epochs"], patience=shared["patience"], seed=cfg["seed"],
    )
    val = (cin.encode(Vm), cout.encode(Vs)) if len(Vm) else None
    model = nn_train(nn_init(arch, cfg["seed"]), (cin.encode(Xm), cout.encode(Xs)), val, tcfg)
    pipe = SurrogatePipeline(cin, model, cout, shared["grid"])
    obj = _objective(pipe, Vm, Vs) if len(Vm) else _objective(pipe, Xm, Xs)
    if not np.isfinite(obj):
        raise FloatingPointError("non-finite validation objective")
    return model, obj


def _run_trial(tid: int, cfg: dict, shared: dict | None = None):
    shared = shared if shared is not None else _SHARED
    t0 = time.perf_counter()
    try:
        model, obj = _train_trial(tid, cfg, shared)
    except Exception as exc:  # a failed trial is recorded, never fatal
        return TrialRecord(tid, cfg, math.nan, time.perf_counter() - t0, "failed", cfg["seed"],
                           f"{type(exc).__name__}: {exc}"), None
    return TrialRecord(tid, cfg, obj, time.perf_counter() - t0, "done", cfg["seed"]), model


@dataclass
class SearchResult:
    best: ModelBundle
    top: list[ModelBundle]
    records: list[TrialRecord]
    summary: dict = field(default_factory=dict)


def random_search_f2(
    dataset: Dataset,
    split: SplitPlan,
    space: SearchSpace | None = None,
    n_trials: int = DEFAULT_TRIALS,
    n_workers: int = 1,
    seed: int = 0,
    top_m: int = TOP_M,
) -> SearchResult:
    """Seeded random search over codec widths and NN hyperparameters.

    Configurations are drawn up front from ``seed``, so the records (sorted
    by trial id) do not depend on ``n_workers`` or completion order.
    """
    space = space or SearchSpace()
    if n_workers < 1:
        raise ValueError("n_workers must be >= 1")
    Xm, Xs = _rows(dataset, split.train_idx)
    Vm, Vs = _rows(dataset, split.val_idx)
    full_in, full_out = _full_codecs(Xm, Xs)
    configs = draw_configs(space, n_trials, len(split.train_idx), seed,
                           pca.numerical_rank(full_in.eigenvalues, Xm.shape),
                           pca.numerical_rank(full_out.eigenvalues, Xs.shape))
    shared = {
        "codecs": (full_in, full_out),
        "train_val": (Xm, Xs, Vm, Vs),
        "grid": dataset.grid,
        "max_epochs": space.max_epochs,
        "patience": space.patience,
    }

    t_start = time.perf_counter()
    results: dict[int, tuple] = {}
    if n_workers == 1:
        for tid, cfg in enumerate(configs):
            results[tid] = _run_trial(tid, cfg, shared)
            log.info("f2 trial %d objective=%.6g", tid, results[tid][0].objective)
    else:
        with ProcessPoolExecutor(n_workers, initializer=_init_worker, initargs=(shared,)) as pool:
            futures = {pool.submit(_run_trial, tid, cfg): tid for tid, cfg in enumerate(configs)}
            for fut in as_completed(futures):
                tid = futures[fut]
                try:
                    results[tid] = fut.result()
                except Exception as exc:  # worker process died
                    results[tid] = (TrialRecord(tid, configs[tid], math.nan, 0.0, "failed",
                                                configs[tid]["seed"], f"worker crash: {exc}"), None)
                log.info("f2 trial %d objective=%.6g", tid, results[tid][0].objective)

    records = [results[t][0] for t in range(len(configs))]
    best = _pick(records, lambda r: r.trial_id)
    ranked = sorted((r for r in records if r.status == "done"), key=lambda r: (r.objective, r.trial_id))
    bundles = []
    for r in ranked[:max(top_m, 1)]:
        cfg = r.config
        pipe = SurrogatePipeline(full_in.truncate(cfg["k_in"]), results[r.trial_id][1],
                                 full_out.truncate(cfg["k_out"]), dataset.grid)
        bundles.append(ModelBundle(pipe, {
            "framework": "f2-nn",
            "split": split.as_dict(),
            "config": cfg,
            "objective": r.objective,
            "trial_id": r.trial_id,
            "search_seed": seed,
        }))
    summary = {
        "framework": "f2-nn",
        "seed": seed,
        "n_trials": n_trials,
        "n_workers": n_workers,
        "n_done": len(ranked),
        "n_failed": len(records) - len(ranked),
        "best_trial": best.trial_id,
        "best_objective": best.objective,
        "best_config": best.config,
        "top_trials": [r.trial_id for r in ranked[:top_m]],
        "wall_time": time.perf_counter() - t_start,
        "space": space.as_dict(),
    }
    return SearchResult(bundles[0], bundles, records, summary)


def ensemble_predict(members, mask) -> tuple[np.ndarray, np.ndarray]:
    """Pixelwise mean and standard deviation over member pipelines (or bundles).

    The mask is applied after averaging, so void pixels are 0 in both outputs.
    """
    pipes = [m.pipeline if isinstance(m, ModelBundle) else m for m in members]
    if not pipes:
        raise ValueError("ensemble needs at least one member")
    grid = pipes[0].grid
    if any(p.grid != grid for p in pipes):
        raise ValueError("ensemble members use different grids")
    mask = np.asarray(mask)
    if mask.shape != grid.shape:
        raise ValueError(f"mask shape {mask.shape} does not match grid {grid.shape}")
    preds = np.stack([p.predict_raw(mask[None])[0] for p in pipes])
    # deviations from the first member keep identical members at exactly zero spread
    dev = preds - preds[0]
    solid = mask != 0
    return np.where(solid, preds[0] + dev.mean(0), 0.0), np.where(solid, dev.std(0), 0.0)


def write_records_csv(records: list[TrialRecord], path) -> None:
    keys = sorted({k for r in records for k in r.config} - {"seed"})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial_id", "status", "objective", "wall_time", "seed", *keys, "error"])
        for r in records:
            w.writerow([r.trial_id, r.status, repr(float(r.objective)), f"{r.wall_time:.3f}", r.seed,
                        *(r.config.get(k, "") for k in keys), r.error])


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=1, default=str)


def f1_summary(bundle: ModelBundle, records: list[TrialRecord]) -> dict:
    done = [r for r in records if r.status == "done"]
    return {
        "framework": "f1-gp",
        "n_trials": len(records),
        "n_done": len(done),
        "n_failed": len(records) - len(done),
        "best_config": bundle.metadata["config"],
        "best_objective": bundle.metadata["objective"],
        "wall_time": sum(r.wall_time for r in records),
    }
