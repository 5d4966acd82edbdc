"""Truncated PCA codec for flattened field images."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

POLICY_NONE = "none"
POLICY_CENTER_SCALE = "center-scale"
POLICIES = (POLICY_NONE, POLICY_CENTER_SCALE)


@dataclass(frozen=True)
class Components:
    k: int


@dataclass(frozen=True)
class VarianceFraction:
    fraction: float


@dataclass(frozen=True)
class PcaCodec:
    """Fitted truncated PCA.

    Data are centred per pixel and (for ``center-scale``) divided by one global
    scale; ``eigenvalues`` is the full spectrum of the population covariance of
    the normalized training matrix, and ``components`` keeps the leading ``k``
    eigenvectors as columns.
    """

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    scale: float
    policy: str
    n_samples: int

    @property
    def k(self) -> int:
        return self.components.shape[1]

    @property
    def n_pixels(self) -> int:
        return self.mean.shape[0]

    @property
    def explained_fraction(self) -> float:
        total = self.eigenvalues.sum()
        return float(self.eigenvalues[: self.k].sum() / total) if total > 0 else 1.0

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale

    def encode(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_pixels:
            raise ValueError(f"expected {self.n_pixels} pixels, got {x.shape[-1]}")
        return self.normalize(x) @ self.components

    def decode(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.k:
            raise ValueError(f"expected latent width {self.k}, got {z.shape[-1]}")
        return (z @ self.components.T) * self.scale + self.mean

    def truncate(self, k: int) -> "PcaCodec":
        if not 1 <= k <= self.k:
            raise ValueError(f"cannot truncate {self.k} components to {k}")
        return replace(self, components=self.components[:, :k].copy())

    def state(self):
        desc = {"scale": self.scale, "policy": self.policy, "n_samples": self.n_samples}
        arrays = {"mean": self.mean, "components": self.components, "eigenvalues": self.eigenvalues}
        return desc, arrays

    @classmethod
    def from_state(cls, desc, arrays) -> "PcaCodec":
        return cls(
            mean=arrays["mean"],
            components=arrays["components"],
            eigenvalues=arrays["eigenvalues"],
            scale=float(desc["scale"]),
            policy=desc["policy"],
            n_samples=int(desc["n_samples"]),
        )


def numerical_rank(eigenvalues: np.ndarray, shape: tuple[int, int]) -> int:
    if eigenvalues.size == 0 or eigenvalues[0] <= 0:
        return 0
    tol = eigenvalues[0] * (max(shape) * np.finfo(float).eps) ** 2
    return int(np.count_nonzero(eigenvalues > tol))


def k_for_fraction(eigenvalues: np.ndarray, fraction: float, rank: int | None = None) -> int:
    """Smallest ``k`` whose cumulative eigenvalue share reaches ``fraction``."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"variance fraction must lie in (0, 1], got {fraction}")
    total = eigenvalues.sum()
    if total <= 0:
        raise ValueError("data have zero total variance")
    share = np.cumsum(eigenvalues) / total
    k = int(np.searchsorted(share, fraction - 1e-12) + 1)
    if rank is not None:
        k = min(k, rank)
    return max(1, min(k, eigenvalues.size))


def fit(X, policy: str = POLICY_NONE, truncation=None) -> PcaCodec:
    """Fit a PCA codec on rows of ``X`` (samples x pixels).

    ``truncation`` is :class:`Components` or :class:`VarianceFraction`; the
    default keeps every component of non-zero variance.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError(f"need a 2-D matrix with at least 2 rows, got shape {X.shape}")
    if policy not in POLICIES:
        raise ValueError(f"unknown normalization policy {policy!r}")
    n, p = X.shape

    mean = X.mean(axis=0)
    scale = 1.0
    if policy == POLICY_CENTER_SCALE:
        scale = float(X.std())
        if scale == 0.0:
            scale = 1.0
    U = (X - mean) / scale

    _, s, vt = np.linalg.svd(U, full_matrices=False)
    eig = s**2 / n
    rank = numerical_rank(eig, (n, p))
    k_max = min(n - 1, p)

    if truncation is None:
        truncation = VarianceFraction(1.0)
    if isinstance(truncation, VarianceFraction):
        k = k_for_fraction(eig, truncation.fraction, rank)
    elif isinstance(truncation, Components):
        k = int(truncation.k)
        if not 1 <= k <= k_max:
            raise ValueError(f"k must lie in [1, {k_max}], got {k}")
    else:
        raise TypeError(f"unsupported truncation {truncation!r}")
    k = min(k, k_max)

    comps = vt[:k].T.copy()
    # largest-magnitude entry of each component is made positive
    idx = np.argmax(np.abs(comps), axis=0)
    signs = np.sign(comps[idx, np.arange(k)])
    signs[signs == 0] = 1.0
    comps *= signs

    return PcaCodec(mean=mean, components=comps, eigenvalues=eig, scale=scale, policy=policy, n_samples=n)
