"""Image quality metrics: PSNR, SSIM, Otsu binarisation and Dice overlap."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import GeometryError, NumericalError

__all__ = ["psnr", "ssim", "otsu_threshold", "otsu_mask", "dice", "MetricReport", "report", "PSNR_CAP"]

PSNR_CAP = 100.0

_SSIM_SIGMA = 1.5
_SSIM_WIN = 11
_K1, _K2 = 0.01, 0.03
_OTSU_BINS = 256


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise GeometryError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(ref, test) -> float:
    """PSNR in dB for peak value 1; exact matches return :data:`PSNR_CAP`."""
    ref, test = _same_shape(ref, test)
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def ssim(ref, test, data_range: float = 1.0) -> float:
    """Mean structural similarity of two 2-D images.

    11x11 Gaussian window with sigma 1.5, ``C1 = (0.01 L)^2``,
    ``C2 = (0.03 L)^2``, symmetric padding at the border.  The mean runs
    over every pixel (no border cropping).
    """
    ref, test = _same_shape(ref, test)
    if ref.ndim != 2:
        raise GeometryError(f"ssim expects 2-D images, got shape {ref.shape}")
    if min(ref.shape) < _SSIM_WIN:
        raise GeometryError(f"image {ref.shape} is smaller than the {_SSIM_WIN}x{_SSIM_WIN} window")
    c1 = (_K1 * data_range) ** 2
    c2 = (_K2 * data_range) ** 2
    radius = _SSIM_WIN // 2

    def blur(x):
        return ndimage.gaussian_filter(x, _SSIM_SIGMA, mode="reflect", truncate=radius / _SSIM_SIGMA)

    mx, my = blur(ref), blur(test)
    sxx = blur(ref * ref) - mx * mx
    syy = blur(test * test) - my * my
    sxy = blur(ref * test) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def _otsu_split(image):
    lo, hi = float(image.min()), float(image.max())
    if not hi > lo:
        raise NumericalError("Otsu threshold undefined for a constant image")
    width = (hi - lo) / _OTSU_BINS
    idx = np.minimum(((image - lo) / (hi - lo) * _OTSU_BINS).astype(np.int64), _OTSU_BINS - 1)
    counts = np.bincount(idx.ravel(), minlength=_OTSU_BINS).astype(np.float64)
    centres = lo + (np.arange(_OTSU_BINS) + 0.5) * width

    w0 = np.cumsum(counts)[:-1]
    s0 = np.cumsum(counts * centres)[:-1]
    total, stotal = counts.sum(), (counts * centres).sum()
    w1 = total - w0
    with np.errstate(invalid="ignore", divide="ignore"):
        mu0 = s0 / w0
        mu1 = (stotal - s0) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between = np.where((w0 > 0) & (w1 > 0), between, -np.inf)
    k = int(np.argmax(between))  # first maximum = lowest threshold
    return k, idx


def otsu_threshold(image) -> float:
    """Otsu threshold on a 256-bin histogram spanning ``[min, max]``.

    Pixels strictly above the returned value form the foreground.  The value
    is the midpoint between the brightest background pixel and the darkest
    foreground pixel, so it always lies inside ``[min, max]``.
    """
    image = np.asarray(image, dtype=np.float64)
    k, idx = _otsu_split(image)
    below = image[idx <= k]
    above = image[idx > k]
    return 0.5 * (float(below.max()) + float(above.min()))


def otsu_mask(image) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    return image > otsu_threshold(image)


def dice(mask_a, mask_b) -> float:
    """Dice overlap ``2|A & B| / (|A| + |B|)``; two empty masks score 1."""
    a = np.asarray(mask_a).astype(bool)
    b = np.asarray(mask_b).astype(bool)
    if a.shape != b.shape:
        raise GeometryError(f"shape mismatch: {a.shape} vs {b.shape}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


@dataclass
class MetricReport:
    psnr: np.ndarray
    ssim: np.ndarray
    dice: np.ndarray
    diagnostics: list[str] = field(default_factory=list)

    @property
    def T(self) -> int:
        return len(self.psnr)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim))

    @property
    def mean_dice(self) -> float:
        return float(np.mean(self.dice))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["frame", "psnr_db", "ssim", "dice"])
        for t in range(self.T):
            writer.writerow([t, repr(float(self.psnr[t])), repr(float(self.ssim[t])), repr(float(self.dice[t]))])
        writer.writerow(["mean", repr(self.mean_psnr), repr(self.mean_ssim), repr(self.mean_dice)])
        return buf.getvalue()


def report(gt, recon) -> MetricReport:
    """Per-frame PSNR/SSIM on grey values and Dice on the Otsu-binarised reconstruction.

    ``gt`` and ``recon`` are frame-major ``(T, nx, ny)`` sequences.  A
    constant reconstruction frame has no Otsu threshold; it is binarised at
    half the peak value instead and the frame is listed in ``diagnostics``.
    """
    gt, recon = _same_shape(gt, recon)
    if gt.ndim == 2:
        gt, recon = gt[None], recon[None]
    if gt.ndim != 3:
        raise GeometryError(f"expected (T, nx, ny) sequences, got {gt.shape}")
    p, s, d, notes = [], [], [], []
    for t, (g, r) in enumerate(zip(gt, recon)):
        p.append(psnr(g, r))
        s.append(ssim(g, r))
        try:
            mask = otsu_mask(r)
        except NumericalError as exc:
            notes.append(f"frame {t}: {exc}")
            mask = r > 0.5
        d.append(dice(g > 0.5, mask))
    return MetricReport(np.array(p), np.array(s), np.array(d), notes)
