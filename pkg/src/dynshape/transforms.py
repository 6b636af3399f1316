"""Orthonormal separable DCT-II / DCT-III with low-pass truncation.

Volumes are frame-major, ``(T, nx, ny)``, but nothing here depends on the
axis order: every axis is transformed and truncated the same way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import GeometryError
from .levelset import heaviside
from .metrics import ssim

__all__ = [
    "DctDims",
    "TruncationMask",
    "DctCoeffs",
    "dct_analyze",
    "dct_synthesize",
    "analyze_truncated",
    "make_mask",
    "compression_error",
]


@dataclass(frozen=True)
class DctDims:
    shape: tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if not shape or any(n < 1 for n in shape):
            raise GeometryError(f"transform dimensions must be >= 1, got {self.shape}")
        object.__setattr__(self, "shape", shape)

    @property
    def size(self) -> int:
        return math.prod(self.shape)


@dataclass(frozen=True)
class TruncationMask:
    """Lowest ``kept[i]`` frequencies along every axis (a low-pass box)."""

    dims: DctDims
    kept: tuple[int, ...]

    def __post_init__(self):
        kept = tuple(int(k) for k in self.kept)
        if len(kept) != len(self.dims.shape):
            raise GeometryError(f"mask rank {len(kept)} does not match dims {self.dims.shape}")
        if any(k < 1 or k > n for k, n in zip(kept, self.dims.shape)):
            raise GeometryError(f"kept counts {kept} must lie in [1, dims] = {self.dims.shape}")
        object.__setattr__(self, "kept", kept)

    @property
    def size(self) -> int:
        return math.prod(self.kept)

    @property
    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(0, k) for k in self.kept)

    @classmethod
    def full(cls, dims: DctDims) -> "TruncationMask":
        return cls(dims, dims.shape)


@dataclass
class DctCoeffs:
    mask: TruncationMask
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size != self.mask.size:
            raise GeometryError(f"{self.values.size} coefficients for a mask of size {self.mask.size}")
        if not np.all(np.isfinite(self.values)):
            raise GeometryError("coefficients contain non-finite values")

    @property
    def dims(self) -> DctDims:
        return self.mask.dims

    def padded(self) -> np.ndarray:
        """Full coefficient array with the truncated entries set to zero."""
        full = np.zeros(self.dims.shape)
        full[self.mask.slices] = self.values.reshape(self.mask.kept)
        return full


def dct_analyze(volume) -> np.ndarray:
    """Orthonormal DCT-II along every axis."""
    volume = np.asarray(volume, dtype=np.float64)
    if volume.size == 0:
        raise GeometryError("cannot transform an empty array")
    return scipy.fft.dctn(volume, type=2, norm="ortho")


def analyze_truncated(volume, mask: TruncationMask) -> DctCoeffs:
    """Adjoint of truncated synthesis: full analysis restricted to ``mask``."""
    volume = np.asarray(volume, dtype=np.float64)
    if volume.shape != mask.dims.shape:
        raise GeometryError(f"volume shape {volume.shape} does not match mask dims {mask.dims.shape}")
    return DctCoeffs(mask, dct_analyze(volume)[mask.slices])


def dct_synthesize(coeffs) -> np.ndarray:
    """Inverse orthonormal transform (DCT-III on every axis).

    Accepts a full coefficient array or :class:`DctCoeffs`; truncated
    coefficients are zero-filled first, so a masked synthesis is identical to
    synthesising the padded array.
    """
    if isinstance(coeffs, DctCoeffs):
        coeffs = coeffs.padded()
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.size == 0:
        raise GeometryError("cannot transform an empty array")
    return scipy.fft.idctn(coeffs, type=2, norm="ortho")


def make_mask(dims: DctDims, fraction: float) -> TruncationMask:
    """Keep ``ceil(fraction * W_i)`` lowest frequencies along every axis."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    # guard against 0.07 * 100 = 7.000000000000001
    kept = tuple(max(1, min(n, math.ceil(fraction * n - 1e-9))) for n in dims.shape)
    return TruncationMask(dims, kept)


def compression_error(volume, fraction: float, use_levelset: bool, heaviside_width: float = 0.1):
    """MSE and mean per-frame SSIM of a low-pass DCT approximation of ``volume``.

    In level-set mode the binary volume is mapped to the signed field
    ``2 v - 1``, truncated, synthesised and passed through the smooth
    Heaviside of width ``heaviside_width``.  In direct mode the volume itself
    is truncated and the synthesis clamped to [0, 1]; with nothing truncated
    it returns the volume exactly.
    """
    volume = np.asarray(volume, dtype=np.float64)
    mask = make_mask(DctDims(volume.shape), fraction)
    if mask.kept == mask.dims.shape and not use_levelset:
        # nothing is truncated: the round trip is the identity
        approx = np.clip(volume, 0.0, 1.0)
    elif use_levelset:
        field = dct_synthesize(analyze_truncated(2.0 * volume - 1.0, mask))
        approx = heaviside(field, heaviside_width)
    else:
        approx = np.clip(dct_synthesize(analyze_truncated(volume, mask)), 0.0, 1.0)
    mse = float(np.mean((approx - volume) ** 2))
    frames = volume if volume.ndim == 3 else volume[None]
    approx_frames = approx if approx.ndim == 3 else approx[None]
    score = float(np.mean([ssim(a, b) for a, b in zip(frames, approx_frames)]))
    return mse, score
