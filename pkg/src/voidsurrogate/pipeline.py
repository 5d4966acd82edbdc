"""End-to-end surrogate: mask codec -> latent regressor -> stress codec -> mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fieldgen import GridSpec
from .gp import GpModel, gp_predict
from .nn import NnModel, nn_forward
from .pca import POLICY_CENTER_SCALE, POLICY_NONE, PcaCodec


def regressor_kind(reg) -> str:
    if isinstance(reg, GpModel):
        return "gp"
    if isinstance(reg, NnModel):
        return "nn"
    raise TypeError(f"unsupported latent regressor {type(reg).__name__}")


def regressor_widths(reg) -> tuple[int, int]:
    if isinstance(reg, GpModel):
        return reg.k_in, reg.k_out
    return reg.arch.k_in, reg.arch.k_out


def apply_mask(stress: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero the field wherever the mask is 0; solid pixels pass through untouched."""
    stress = np.asarray(stress, dtype=float)
    mask = np.asarray(mask)
    if stress.shape != mask.shape:
        raise ValueError(f"stress {stress.shape} and mask {mask.shape} differ in shape")
    return np.where(mask != 0, stress, 0.0)


@dataclass(frozen=True)
class SurrogatePipeline:
    input_codec: PcaCodec
    regressor: object
    output_codec: PcaCodec
    grid: GridSpec
    mask_output: bool = True

    def __post_init__(self):
        k_in, k_out = regressor_widths(self.regressor)
        if k_in != self.input_codec.k or k_out != self.output_codec.k:
            raise ValueError(
                f"codec widths ({self.input_codec.k}, {self.output_codec.k}) do not match "
                f"regressor widths ({k_in}, {k_out})"
            )
        for codec in (self.input_codec, self.output_codec):
            if codec.n_pixels != self.grid.n_pixels:
                raise ValueError(f"codec has {codec.n_pixels} pixels, grid has {self.grid.n_pixels}")
        if self.input_codec.policy != POLICY_NONE or self.output_codec.policy != POLICY_CENTER_SCALE:
            raise ValueError("input codec must be unnormalized and output codec centre-scaled")

    @property
    def kind(self) -> str:
        return regressor_kind(self.regressor)

    def _latent(self, Z: np.ndarray) -> np.ndarray:
        if isinstance(self.regressor, GpModel):
            return gp_predict(self.regressor, Z)[0]
        return nn_forward(self.regressor, Z)

    def _check_masks(self, masks) -> np.ndarray:
        masks = np.asarray(masks, dtype=float)
        if masks.shape[-2:] != self.grid.shape:
            raise ValueError(f"mask shape {masks.shape[-2:]} does not match grid {self.grid.shape}")
        if not np.all((masks == 0) | (masks == 1)):
            raise ValueError("mask must contain only 0 and 1")
        return masks

    def predict_raw(self, masks) -> np.ndarray:
        """Reconstructed fields before masking, shape ``(m, ny, nx)``."""
        masks = self._check_masks(masks)
        flat = masks.reshape(-1, self.grid.n_pixels)
        fields = self.output_codec.decode(self._latent(self.input_codec.encode(flat)))
        return fields.reshape(masks.shape)

    def predict_fields(self, masks) -> np.ndarray:
        masks = self._check_masks(masks)
        raw = self.predict_raw(masks)
        return apply_mask(raw, masks) if self.mask_output else raw

    def predict_field(self, mask) -> np.ndarray:
        mask = np.asarray(mask)
        if mask.shape != self.grid.shape:
            raise ValueError(f"mask shape {mask.shape} does not match grid {self.grid.shape}")
        return self.predict_fields(mask[None])[0]


def predict_field(pipeline: SurrogatePipeline, mask) -> np.ndarray:
    return pipeline.predict_field(mask)


def masked_mse(pred: np.ndarray, true: np.ndarray) -> float:
    """Mean squared error over every pixel of every field (Pa^2)."""
    return float(np.mean((np.asarray(pred) - np.asarray(true)) ** 2))
