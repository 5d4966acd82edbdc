"""Dataset containers, train/val/test splits and on-disk formats.

Dataset directory::

    manifest.json   grid, case, material, seed, per-sample geometry (decimal strings)
    masks.f64       little-endian float64, row-major, sample-major
    stress.f64      same layout as masks.f64

Model bundle directory::

    model.json      descriptor, array table (name/shape/offset), SHA-256 of params.f64
    params.f64      concatenated little-endian float64 arrays
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .fieldgen import Case, EllipsoidParams, FieldSample, GridSpec, MaterialLoad, generate_dataset
from .gp import GpModel
from .nn import NnModel
from .pca import PcaCodec

DATASET_FORMAT = 1
BUNDLE_FORMAT = 1
_F64 = np.dtype("<f8")


class DataError(RuntimeError):
    """Malformed, inconsistent or corrupted stored data."""


class ChecksumError(DataError):
    pass


class DimensionError(DataError):
    pass


@dataclass
class Dataset:
    samples: list[FieldSample]
    case: Case
    seed: int
    grid: GridSpec
    material: MaterialLoad
    generator_version: str = __version__

    def __post_init__(self):
        if not self.samples:
            raise DataError("dataset is empty")
        if any(s.grid != self.grid for s in self.samples):
            raise DataError("all samples must share one grid")

    def __len__(self) -> int:
        return len(self.samples)

    def masks(self, idx=None) -> np.ndarray:
        """Masks as an ``(n, ny, nx)`` array."""
        sel = self.samples if idx is None else [self.samples[i] for i in idx]
        return np.stack([s.mask for s in sel])

    def stresses(self, idx=None) -> np.ndarray:
        sel = self.samples if idx is None else [self.samples[i] for i in idx]
        return np.stack([s.stress for s in sel])


def build_dataset(case, n, grid=None, mat=None, seed=0, workers=1) -> Dataset:
    grid = grid or GridSpec()
    mat = mat or MaterialLoad()
    samples = generate_dataset(case, n, grid, mat, seed, workers)
    return Dataset(samples, Case(case), seed, grid, mat)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_dataset(ds: Dataset, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    ds.masks().astype(_F64).tofile(path / "masks.f64")
    ds.stresses().astype(_F64).tofile(path / "stress.f64")
    manifest = {
        "format_version": DATASET_FORMAT,
        "generator_version": ds.generator_version,
        "case": ds.case.value,
        "seed": ds.seed,
        "n_samples": len(ds),
        "grid": {"nx": ds.grid.nx, "ny": ds.grid.ny, "lx": repr(ds.grid.lx), "ly": repr(ds.grid.ly)},
        "material": {
            "youngs_modulus": repr(ds.material.youngs_modulus),
            "nominal_stress": repr(ds.material.nominal_stress),
            "poisson_ratio": repr(ds.material.poisson_ratio),
        },
        "sha256": {"masks.f64": _sha256(path / "masks.f64"), "stress.f64": _sha256(path / "stress.f64")},
        "samples": [{k: repr(v) for k, v in s.params.as_dict().items()} for s in ds.samples],
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return path


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read dataset manifest in {path}: {exc}") from exc
    if manifest.get("format_version") != DATASET_FORMAT:
        raise DataError(f"unsupported dataset format {manifest.get('format_version')}")
    g = manifest["grid"]
    grid = GridSpec(int(g["nx"]), int(g["ny"]), float(g["lx"]), float(g["ly"]))
    mat = MaterialLoad(**{k: float(v) for k, v in manifest["material"].items()})
    n = int(manifest["n_samples"])
    arrays = {}
    for name in ("masks.f64", "stress.f64"):
        f = path / name
        if not f.exists():
            raise DataError(f"missing {f}")
        if _sha256(f) != manifest["sha256"][name]:
            raise ChecksumError(f"checksum mismatch for {f}")
        a = np.fromfile(f, dtype=_F64)
        if a.size != n * grid.n_pixels:
            raise DataError(f"{f} holds {a.size} values, expected {n * grid.n_pixels}")
        arrays[name] = a.astype(float).reshape(n, grid.ny, grid.nx)
    samples = [
        FieldSample(
            EllipsoidParams(**{k: float(v) for k, v in p.items()}),
            arrays["masks.f64"][i], arrays["stress.f64"][i], grid,
        )
        for i, p in enumerate(manifest["samples"])
    ]
    return Dataset(samples, Case(manifest["case"]), int(manifest["seed"]), grid, mat,
                   manifest.get("generator_version", "unknown"))


@dataclass(frozen=True)
class SplitPlan:
    train_idx: list[int]
    val_idx: list[int]
    test_idx: list[int]
    seed: int

    def __post_init__(self):
        a, b, c = set(self.train_idx), set(self.val_idx), set(self.test_idx)
        if a & b or a & c or b & c:
            raise ValueError("split index sets overlap")

    @property
    def trainval_idx(self) -> list[int]:
        return sorted(self.train_idx + self.val_idx)

    def as_dict(self) -> dict:
        return {"train": self.train_idx, "val": self.val_idx, "test": self.test_idx, "seed": self.seed}


def n_val_for(n_trainval: int) -> int:
    return int(math.floor(0.1 * n_trainval + 0.5))


def make_split(n_total: int, n_trainval: int, n_test: int, seed: int = 0) -> SplitPlan:
    """Fixed test set first, then a 90/10 train/validation split of the rest.

    Every remaining index is assigned once (every tenth to the validation
    queue, the others to the training queue) independently of
    ``n_trainval``, so smaller plans under the same seed are nested prefixes
    of larger ones and always share the test set.
    """
    if min(n_total, n_trainval, n_test) < 0 or n_trainval + n_test > n_total:
        raise ValueError(f"cannot draw {n_trainval} + {n_test} samples from {n_total}")
    perm = np.random.default_rng(seed).permutation(n_total)
    test = perm[:n_test]
    pool = perm[n_test:]
    val_queue = pool[::10]
    train_queue = np.delete(pool, np.arange(0, pool.size, 10))
    n_val = n_val_for(n_trainval)
    n_train = n_trainval - n_val
    if n_val > val_queue.size or n_train > train_queue.size:
        raise ValueError(f"pool of {pool.size} cannot supply {n_train} train + {n_val} val samples")
    return SplitPlan(
        train_idx=[int(i) for i in train_queue[:n_train]],
        val_idx=[int(i) for i in val_queue[:n_val]],
        test_idx=[int(i) for i in test],
        seed=seed,
    )


@dataclass
class ModelBundle:
    """A trained surrogate plus the metadata needed to reproduce it."""

    pipeline: "SurrogatePipeline"  # noqa: F821
    metadata: dict = field(default_factory=dict)


def _put(arrays: list, prefix: str, named: dict):
    for k, v in named.items():
        arrays.append((f"{prefix}.{k}", np.ascontiguousarray(v, dtype=float)))


def save_bundle(bundle: ModelBundle, path) -> Path:
    from .pipeline import regressor_kind

    pipe = bundle.pipeline
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    arrays: list[tuple[str, np.ndarray]] = []
    in_desc, in_arr = pipe.input_codec.state()
    out_desc, out_arr = pipe.output_codec.state()
    reg_desc, reg_arr = pipe.regressor.state()
    _put(arrays, "input_codec", in_arr)
    _put(arrays, "output_codec", out_arr)
    _put(arrays, "regressor", reg_arr)

    table, offset = [], 0
    tmp = path / "params.f64.tmp"
    with open(tmp, "wb") as fh:
        for name, a in arrays:
            fh.write(a.astype(_F64).tobytes())
            table.append({"name": name, "shape": list(a.shape), "offset": offset})
            offset += a.size
    os.replace(tmp, path / "params.f64")

    model = {
        "format_version": BUNDLE_FORMAT,
        "package_version": __version__,
        "regressor_kind": regressor_kind(pipe.regressor),
        "grid": {"nx": pipe.grid.nx, "ny": pipe.grid.ny, "lx": repr(pipe.grid.lx), "ly": repr(pipe.grid.ly)},
        "mask_output": pipe.mask_output,
        "input_codec": in_desc,
        "output_codec": out_desc,
        "regressor": reg_desc,
        "arrays": table,
        "n_values": offset,
        "sha256": _sha256(path / "params.f64"),
        "metadata": bundle.metadata,
    }
    (path / "model.json").write_text(json.dumps(model, indent=1, default=_json_default))
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def load_bundle(path) -> ModelBundle:
    from .pipeline import SurrogatePipeline

    path = Path(path)
    try:
        model = json.loads((path / "model.json").read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read bundle descriptor in {path}: {exc}") from exc
    if model.get("format_version") != BUNDLE_FORMAT:
        raise DataError(f"unsupported bundle format {model.get('format_version')}")
    pfile = path / "params.f64"
    if not pfile.exists() or _sha256(pfile) != model["sha256"]:
        raise ChecksumError(f"checksum mismatch or missing parameters in {path}")
    flat = np.fromfile(pfile, dtype=_F64).astype(float)
    if flat.size != model["n_values"]:
        raise ChecksumError("parameter file size does not match descriptor")

    groups: dict[str, dict] = {"input_codec": {}, "output_codec": {}, "regressor": {}}
    for entry in model["arrays"]:
        prefix, name = entry["name"].split(".", 1)
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        groups[prefix][name] = flat[entry["offset"]:entry["offset"] + size].reshape(shape).copy()

    in_codec = PcaCodec.from_state(model["input_codec"], groups["input_codec"])
    out_codec = PcaCodec.from_state(model["output_codec"], groups["output_codec"])
    kind = model["regressor_kind"]
    if kind == "gp":
        reg = GpModel.from_state(model["regressor"], groups["regressor"])
    elif kind == "nn":
        reg = NnModel.from_state(model["regressor"], groups["regressor"])
    else:
        raise DataError(f"unknown regressor kind {kind!r}")
    g = model["grid"]
    grid = GridSpec(int(g["nx"]), int(g["ny"]), float(g["lx"]), float(g["ly"]))
    try:
        pipe = SurrogatePipeline(in_codec, reg, out_codec, grid, bool(model["mask_output"]))
    except ValueError as exc:
        raise DimensionError(str(exc)) from exc
    return ModelBundle(pipe, model.get("metadata", {}))
