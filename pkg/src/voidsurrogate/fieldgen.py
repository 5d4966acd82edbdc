"""Synthetic void-in-plate dataset: geometry sampling, slicing, rasterizing, stress."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .elasticity import hole_stresses, von_mises

DOMAIN_EDGE = 0.1
RADIUS_BOUNDS = (0.05 * DOMAIN_EDGE, 0.1 * DOMAIN_EDGE)
TILT_BOUNDS = (math.pi / 36.0, 17.0 * math.pi / 36.0)


class Case(str, enum.Enum):
    NON_ROTATED = "non-rotated"
    ROTATED = "rotated"


class GenerationError(RuntimeError):
    """Raised when a sample cannot be rasterized or solved."""


@dataclass(frozen=True)
class EllipsoidParams:
    rx: float
    ry: float
    rz: float
    theta_x: float = 0.0
    theta_y: float = 0.0
    theta_z: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ("rx", "ry", "rz", "theta_x", "theta_y", "theta_z")}


@dataclass(frozen=True)
class Ellipse2D:
    """Centred ellipse; ``a`` lies along the direction at angle ``phi`` from +x."""

    a: float
    b: float
    phi: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError(f"semi-axes must be positive and finite, got a={self.a}, b={self.b}")
        phi = math.fmod(self.phi, math.pi)
        if phi < 0:
            phi += math.pi
        if phi >= math.pi:
            phi = 0.0
        object.__setattr__(self, "phi", phi)

    def half_extents(self) -> tuple[float, float]:
        c, s = math.cos(self.phi), math.sin(self.phi)
        hx = math.sqrt((self.a * c) ** 2 + (self.b * s) ** 2)
        hz = math.sqrt((self.a * s) ** 2 + (self.b * c) ** 2)
        return hx, hz


@dataclass(frozen=True)
class GridSpec:
    nx: int = 64
    ny: int = 64
    lx: float = DOMAIN_EDGE
    ly: float = DOMAIN_EDGE

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"grid must be at least 8x8, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("grid extents must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def n_pixels(self) -> int:
        return self.nx * self.ny

    def centered_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel-centre coordinates relative to the domain centre, shape ``(ny, nx)``.

        Columns run along x (horizontal), rows along z (vertical, the load axis).
        """
        x = (np.arange(self.nx) + 0.5) * (self.lx / self.nx) - 0.5 * self.lx
        z = (np.arange(self.ny) + 0.5) * (self.ly / self.ny) - 0.5 * self.ly
        return np.meshgrid(x, z)


@dataclass(frozen=True)
class MaterialLoad:
    youngs_modulus: float = 200e9
    # 5e7 N spread over the 0.1 m x 0.1 m loaded face
    nominal_stress: float = 5e9
    poisson_ratio: float = 0.3

    def __post_init__(self):
        if not (self.youngs_modulus > 0 and self.nominal_stress > 0):
            raise ValueError("Young's modulus and nominal stress must be positive")


@dataclass(frozen=True)
class FieldSample:
    params: EllipsoidParams
    mask: np.ndarray
    stress: np.ndarray
    grid: GridSpec


def _draw_params(case: Case, rng: np.random.Generator) -> EllipsoidParams:
    lo, hi = RADIUS_BOUNDS
    rx, ry, rz = rng.uniform(lo, hi, size=3)
    theta_y = float(rng.uniform(*TILT_BOUNDS)) if Case(case) is Case.ROTATED else 0.0
    return EllipsoidParams(float(rx), float(ry), float(rz), 0.0, theta_y, 0.0)


def sample_params(case: Case | str, seed) -> EllipsoidParams:
    """Draw ellipsoid semi-axes (and tilt about y for the rotated case)."""
    return _draw_params(Case(case), np.random.default_rng(seed))


def _rotation(tx: float, ty: float, tz: float) -> np.ndarray:
    cx, sx = math.cos(tx), math.sin(tx)
    cy, sy = math.cos(ty), math.sin(ty)
    cz, sz = math.cos(tz), math.sin(tz)
    rot_x = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    rot_y = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rot_z = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rot_z @ rot_y @ rot_x


def slice_to_ellipse(params: EllipsoidParams) -> Ellipse2D:
    """Intersect the rotated ellipsoid with the plane y = 0."""
    if params.theta_x == params.theta_y == params.theta_z == 0.0:
        return Ellipse2D(params.rx, params.rz, 0.0)

    rot = _rotation(params.theta_x, params.theta_y, params.theta_z)
    q = rot @ np.diag([params.rx**-2, params.ry**-2, params.rz**-2]) @ rot.T
    q_xz = q[np.ix_([0, 2], [0, 2])]
    w, v = np.linalg.eigh(q_xz)
    if not np.all(np.isfinite(w)) or w[0] <= 1e-12 * w[1]:
        raise GenerationError(f"slice conic is not an ellipse for {params}")

    horiz = np.abs(v[0])
    if abs(horiz[0] - horiz[1]) < 1e-12:
        i = int(np.argmax(v[0] * v[1] > 0))
    else:
        i = int(np.argmax(horiz))
    phi = math.atan2(v[1, i], v[0, i])
    return Ellipse2D(1.0 / math.sqrt(w[i]), 1.0 / math.sqrt(w[1 - i]), phi)


def _local_coords(ellipse: Ellipse2D, grid: GridSpec):
    x, z = grid.centered_coords()
    c, s = math.cos(ellipse.phi), math.sin(ellipse.phi)
    return c * x + s * z, -s * x + c * z


def _check_inside(ellipse: Ellipse2D, grid: GridSpec):
    hx, hz = ellipse.half_extents()
    if hx >= 0.5 * grid.lx or hz >= 0.5 * grid.ly:
        raise GenerationError(f"{ellipse} touches the domain boundary of {grid}")


def rasterize_mask(ellipse: Ellipse2D, grid: GridSpec) -> np.ndarray:
    """Binary image, 0 where the pixel centre is inside the void and 1 elsewhere."""
    _check_inside(ellipse, grid)
    u, v = _local_coords(ellipse, grid)
    inside = (u / ellipse.a) ** 2 + (v / ellipse.b) ** 2 < 1.0
    return np.where(inside, 0.0, 1.0)


def solve_stress(ellipse: Ellipse2D, mat: MaterialLoad, grid: GridSpec) -> np.ndarray:
    """Von Mises stress (Pa) on the grid, exactly zero on void pixels.

    The load acts along the grid's vertical axis; in the hole frame it sits at
    ``pi/2 - phi`` from the ``a`` axis.  Von Mises is frame-invariant, so the
    local tensor is never rotated back.
    """
    mask = rasterize_mask(ellipse, grid)
    u, v = _local_coords(ellipse, grid)
    solid = mask > 0
    out = np.zeros(grid.shape)
    sxx, syy, sxy = hole_stresses(
        u[solid], v[solid], ellipse.a, ellipse.b, 0.5 * math.pi - ellipse.phi, mat.nominal_stress
    )
    out[solid] = von_mises(sxx, syy, sxy)
    if not np.all(np.isfinite(out)):
        raise GenerationError(f"non-finite stress for {ellipse}")
    return out


def make_sample(params: EllipsoidParams, mat: MaterialLoad, grid: GridSpec) -> FieldSample:
    ellipse = slice_to_ellipse(params)
    mask = rasterize_mask(ellipse, grid)
    stress = solve_stress(ellipse, mat, grid)
    return FieldSample(params=params, mask=mask, stress=stress, grid=grid)


def generate_dataset(
    case: Case | str,
    n: int,
    grid: GridSpec | None = None,
    mat: MaterialLoad | None = None,
    seed: int = 0,
    workers: int = 1,
) -> list[FieldSample]:
    """Generate ``n`` independent samples; sample ``i`` is seeded by ``(seed, i)``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    grid = grid or GridSpec()
    mat = mat or MaterialLoad()
    case = Case(case)
    out: list[FieldSample | None] = [None] * n

    def work(i: int):
        params = _draw_params(case, np.random.default_rng([seed, i]))
        try:
            out[i] = make_sample(params, mat, grid)
        except (GenerationError, ValueError) as exc:
            raise GenerationError(f"sample {i}: {exc}") from exc

    if workers <= 1:
        for i in range(n):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(n)))
    return out  # type: ignore[return-value]
