"""Parallel-beam Radon transform with exact ray-pixel intersection lengths.

Images are indexed ``image[i, j]`` with shape ``(nx, ny)``; the grid is
centred on the origin with square pixels of side ``pixel_size``.  Axis 0
carries the coordinate ``u`` and axis 1 the coordinate ``v``.  At angle
``theta`` the detector coordinate of a point is ``s = u sin(theta) + v cos(theta)``,
so at 0 degrees every detector bin integrates one column ``image[:, j]``.

Every projection is a sparse matrix built once per (grid, detector, angle);
the adjoint is its literal transpose.  Dynamic sequences are handled by a
block operator where measurement ``m`` images frame ``frames[m]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError

__all__ = [
    "ImageGrid",
    "DetectorArray",
    "AngleSchedule",
    "Sinogram",
    "ProjectionOperator",
    "projection_matrix",
    "sequence_operator",
    "radon_forward",
    "radon_adjoint",
    "forward_sequence",
    "adjoint_sequence",
    "bin_ranges",
]

# trig values below this are snapped to zero so axis-aligned rays are exact
_TRIG_SNAP = 1e-14


@dataclass(frozen=True)
class ImageGrid:
    nx: int
    ny: int
    pixel_size: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 1 or self.ny < 1:
            raise GeometryError(f"grid dimensions must be positive integers, got ({self.nx}, {self.ny})")
        if not self.pixel_size > 0:
            raise GeometryError(f"pixel_size must be > 0, got {self.pixel_size}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "pixel_size", float(self.pixel_size))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @classmethod
    def like(cls, image: np.ndarray, pixel_size: float = 1.0) -> "ImageGrid":
        image = np.asarray(image)
        if image.ndim != 2:
            raise GeometryError(f"expected a 2-D image, got shape {image.shape}")
        return cls(image.shape[0], image.shape[1], pixel_size)


@dataclass(frozen=True)
class DetectorArray:
    n_det: int
    det_spacing: float = 1.0

    def __post_init__(self):
        if int(self.n_det) != self.n_det or self.n_det < 1:
            raise GeometryError(f"n_det must be a positive integer, got {self.n_det}")
        if not self.det_spacing > 0:
            raise GeometryError(f"det_spacing must be > 0, got {self.det_spacing}")
        object.__setattr__(self, "n_det", int(self.n_det))
        object.__setattr__(self, "det_spacing", float(self.det_spacing))

    @classmethod
    def default_for(cls, grid: ImageGrid) -> "DetectorArray":
        """``max(nx, ny)`` bins of one pixel width, centred on the origin."""
        return cls(max(grid.nx, grid.ny), grid.pixel_size)

    @classmethod
    def covering(cls, grid: ImageGrid) -> "DetectorArray":
        """Smallest detector of pixel-size bins that sees the whole grid at every angle."""
        diag = np.hypot(grid.nx, grid.ny)
        n = int(np.ceil(diag)) + 1
        return cls(n, grid.pixel_size)

    def positions(self) -> np.ndarray:
        return (np.arange(self.n_det) - (self.n_det - 1) / 2.0) * self.det_spacing


@dataclass(frozen=True)
class AngleSchedule:
    """One projection angle per frame: ``theta1 + t * delta_theta`` for t = 0..T-1 (degrees)."""

    theta1: float = 0.0
    delta_theta: float = 5.0
    T: int = 1

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise GeometryError(f"T must be a positive integer, got {self.T}")
        object.__setattr__(self, "T", int(self.T))
        object.__setattr__(self, "theta1", float(self.theta1))
        object.__setattr__(self, "delta_theta", float(self.delta_theta))

    def angles(self) -> np.ndarray:
        return self.theta1 + np.arange(self.T) * self.delta_theta

    def subset(self, start: int, stop: int) -> "AngleSchedule":
        """Schedule of frames ``start..stop-1``."""
        if not 0 <= start < stop <= self.T:
            raise GeometryError(f"invalid frame range [{start}, {stop}) for T={self.T}")
        return AngleSchedule(self.theta1 + start * self.delta_theta, self.delta_theta, stop - start)


@dataclass
class Sinogram:
    """Per-frame projection data, ``data[t]`` measured at ``schedule.angles()[t]``."""

    schedule: AngleSchedule
    detector: DetectorArray
    data: np.ndarray
    grid: ImageGrid | None = field(default=None)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        expected = (self.schedule.T, self.detector.n_det)
        if self.data.shape != expected:
            raise GeometryError(f"sinogram data has shape {self.data.shape}, geometry implies {expected}")
        if not np.all(np.isfinite(self.data)):
            raise GeometryError("sinogram contains non-finite values")

    @property
    def T(self) -> int:
        return self.schedule.T

    def angles(self) -> np.ndarray:
        return self.schedule.angles()

    def frames(self, start: int, stop: int) -> "Sinogram":
        return Sinogram(self.schedule.subset(start, stop), self.detector, self.data[start:stop], self.grid)

    def with_data(self, data: np.ndarray) -> "Sinogram":
        return Sinogram(self.schedule, self.detector, data, self.grid)


def _ray_geometry(angle: float):
    theta = np.deg2rad(np.mod(angle, 360.0))
    c, s = np.cos(theta), np.sin(theta)
    if abs(c) < _TRIG_SNAP:
        c = 0.0
    if abs(s) < _TRIG_SNAP:
        s = 0.0
    normal = np.array([s, c])
    direction = np.array([c, -s])
    return normal, direction


def _plane_crossings(origin, direction, n_pix, pixel_size):
    """Ray parameters at every grid plane along one axis, plus the slab interval."""
    half = n_pix * pixel_size / 2.0
    n_rays = origin.shape[0]
    if direction == 0.0:
        inside = (origin > -half) & (origin < half)
        lo = np.where(inside, -np.inf, np.inf)
        hi = np.where(inside, np.inf, -np.inf)
        return np.empty((n_rays, 0)), lo, hi
    planes = -half + np.arange(n_pix + 1) * pixel_size
    lam = (planes[None, :] - origin[:, None]) / direction
    return lam, np.minimum(lam[:, 0], lam[:, -1]), np.maximum(lam[:, 0], lam[:, -1])


def _build_matrix(grid: ImageGrid, detector: DetectorArray, angle: float) -> sp.csr_matrix:
    normal, direction = _ray_geometry(angle)
    s = detector.positions()
    ou, ov = s * normal[0], s * normal[1]
    lam_u, lo_u, hi_u = _plane_crossings(ou, direction[0], grid.nx, grid.pixel_size)
    lam_v, lo_v, hi_v = _plane_crossings(ov, direction[1], grid.ny, grid.pixel_size)
    lmin = np.maximum(lo_u, lo_v)
    lmax = np.minimum(hi_u, hi_v)
    hit = lmax > lmin

    rows = np.nonzero(hit)[0]
    if rows.size == 0:
        return sp.csr_matrix((detector.n_det, grid.size))
    lam = np.concatenate([lam_u[rows], lam_v[rows]], axis=1)
    lam = np.clip(lam, lmin[rows, None], lmax[rows, None])
    lam.sort(axis=1)
    seg = np.diff(lam, axis=1)
    mid = 0.5 * (lam[:, 1:] + lam[:, :-1])

    p = grid.pixel_size
    pu = ou[rows, None] + mid * direction[0]
    pv = ov[rows, None] + mid * direction[1]
    iu = np.clip(np.floor((pu + grid.nx * p / 2.0) / p).astype(np.int64), 0, grid.nx - 1)
    iv = np.clip(np.floor((pv + grid.ny * p / 2.0) / p).astype(np.int64), 0, grid.ny - 1)

    keep = seg > 0
    r = np.broadcast_to(rows[:, None], seg.shape)[keep]
    c = (iu * grid.ny + iv)[keep]
    mat = sp.coo_matrix((seg[keep], (r, c)), shape=(detector.n_det, grid.size))
    return mat.tocsr()


@lru_cache(maxsize=4096)
def _cached_matrix(grid: ImageGrid, detector: DetectorArray, angle: float) -> sp.csr_matrix:
    return _build_matrix(grid, detector, angle)


def projection_matrix(grid: ImageGrid, detector: DetectorArray, angle: float) -> sp.csr_matrix:
    """System matrix of shape ``(n_det, nx*ny)`` for one angle in degrees.

    Entry ``(j, i*ny + k)`` is the length of the ray through bin ``j`` inside
    pixel ``(i, k)``.  Rays that miss the grid give empty rows.
    """
    return _cached_matrix(grid, detector, float(np.mod(angle, 360.0)))


def _check_image(image, grid):
    image = np.asarray(image, dtype=np.float64)
    if grid is None:
        grid = ImageGrid.like(image)
    if image.shape != grid.shape:
        raise GeometryError(f"image shape {image.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(image)):
        raise GeometryError("image contains non-finite values")
    return image, grid


def radon_forward(image, angle: float, detector: DetectorArray | None = None,
                  grid: ImageGrid | None = None) -> np.ndarray:
    """Project a single image at one angle (degrees)."""
    image, grid = _check_image(image, grid)
    if detector is None:
        detector = DetectorArray.default_for(grid)
    return projection_matrix(grid, detector, angle) @ image.ravel()


def radon_adjoint(projection, angle: float, grid: ImageGrid,
                  detector: DetectorArray | None = None) -> np.ndarray:
    """Back-project one projection; the exact transpose of :func:`radon_forward`."""
    projection = np.asarray(projection, dtype=np.float64)
    if detector is None:
        detector = DetectorArray.default_for(grid)
    if projection.shape != (detector.n_det,):
        raise GeometryError(f"projection has shape {projection.shape}, detector has {detector.n_det} bins")
    if not np.all(np.isfinite(projection)):
        raise GeometryError("projection contains non-finite values")
    return (projection_matrix(grid, detector, angle).T @ projection).reshape(grid.shape)


class ProjectionOperator:
    """Block-sparse map from a frame-major volume to stacked projections.

    Parameters
    ----------
    grid, detector
        Image and detector geometry shared by every measurement.
    angles
        Projection angle (degrees) of each measurement row.
    frames
        Index of the volume frame each measurement sees.  Defaults to
        ``range(len(angles))`` (single-shot: one angle per frame).
    n_frames
        Number of frames in the volume; defaults to ``max(frames) + 1``.
    """

    def __init__(self, grid: ImageGrid, detector: DetectorArray, angles: Sequence[float],
                 frames: Sequence[int] | None = None, n_frames: int | None = None):
        angles = np.asarray(angles, dtype=np.float64).ravel()
        frames = np.arange(angles.size) if frames is None else np.asarray(frames, dtype=np.int64).ravel()
        if frames.size != angles.size:
            raise GeometryError("angles and frames must have equal length")
        if n_frames is None:
            n_frames = int(frames.max()) + 1 if frames.size else 0
        if frames.size and (frames.min() < 0 or frames.max() >= n_frames):
            raise GeometryError("frame index out of range")
        self.grid = grid
        self.detector = detector
        self.angles = angles
        self.frames = frames
        self.n_frames = int(n_frames)

        npix = grid.size
        blocks_r, blocks_c, blocks_v = [], [], []
        for m, (a, f) in enumerate(zip(angles, frames)):
            coo = projection_matrix(grid, detector, a).tocoo()
            blocks_r.append(coo.row + m * detector.n_det)
            blocks_c.append(coo.col + f * npix)
            blocks_v.append(coo.data)
        shape = (angles.size * detector.n_det, self.n_frames * npix)
        if blocks_r:
            mat = sp.coo_matrix(
                (np.concatenate(blocks_v), (np.concatenate(blocks_r), np.concatenate(blocks_c))), shape=shape
            )
        else:
            mat = sp.coo_matrix(shape)
        self.matrix = mat.tocsr()
        self.matrix_t = self.matrix.T.tocsr()

    @property
    def volume_shape(self) -> tuple[int, int, int]:
        return (self.n_frames, self.grid.nx, self.grid.ny)

    @property
    def data_shape(self) -> tuple[int, int]:
        return (self.angles.size, self.detector.n_det)

    def forward(self, volume: np.ndarray) -> np.ndarray:
        volume = np.asarray(volume, dtype=np.float64)
        if volume.shape != self.volume_shape:
            raise GeometryError(f"volume shape {volume.shape} does not match operator {self.volume_shape}")
        return (self.matrix @ volume.ravel()).reshape(self.data_shape)

    def adjoint(self, data: np.ndarray) -> np.ndarray:
        data = np.asarray(data, dtype=np.float64)
        if data.shape != self.data_shape:
            raise GeometryError(f"data shape {data.shape} does not match operator {self.data_shape}")
        return (self.matrix_t @ data.ravel()).reshape(self.volume_shape)


@lru_cache(maxsize=64)
def _cached_operator(grid, detector, angles, frames, n_frames):
    return ProjectionOperator(grid, detector, angles, frames, n_frames)


def sequence_operator(grid: ImageGrid, detector: DetectorArray, angles, frames=None,
                      n_frames: int | None = None) -> ProjectionOperator:
    """Cached :class:`ProjectionOperator`; identical geometry returns the same object."""
    angles = tuple(float(a) for a in np.asarray(angles, dtype=np.float64).ravel())
    frames = None if frames is None else tuple(int(f) for f in np.asarray(frames).ravel())
    return _cached_operator(grid, detector, angles, frames, n_frames)


def forward_sequence(seq: np.ndarray, schedule: AngleSchedule, detector: DetectorArray | None = None,
                     grid: ImageGrid | None = None) -> Sinogram:
    """Single-shot acquisition: frame ``t`` of ``seq`` (shape ``(T, nx, ny)``) seen at angle ``t``."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 3:
        raise GeometryError(f"expected a (T, nx, ny) sequence, got shape {seq.shape}")
    if seq.shape[0] != schedule.T:
        raise GeometryError(f"sequence has {seq.shape[0]} frames, schedule has {schedule.T}")
    if grid is None:
        grid = ImageGrid(seq.shape[1], seq.shape[2])
    if seq.shape[1:] != grid.shape:
        raise GeometryError(f"frame shape {seq.shape[1:]} does not match grid {grid.shape}")
    if not np.all(np.isfinite(seq)):
        raise GeometryError("sequence contains non-finite values")
    if detector is None:
        detector = DetectorArray.default_for(grid)
    op = sequence_operator(grid, detector, schedule.angles())
    return Sinogram(schedule, detector, op.forward(seq), grid)


def adjoint_sequence(sino: Sinogram, grid: ImageGrid | None = None) -> np.ndarray:
    """Per-frame back-projection; the exact transpose of :func:`forward_sequence`."""
    grid = grid or sino.grid
    if grid is None:
        raise GeometryError("adjoint_sequence needs an image grid")
    if sino.grid is not None and sino.grid != grid:
        raise GeometryError(f"sinogram was recorded on {sino.grid}, not {grid}")
    op = sequence_operator(grid, sino.detector, sino.angles())
    return op.adjoint(sino.data)


def bin_ranges(T: int, B: int) -> list[tuple[int, int]]:
    """Contiguous ``[start, stop)`` frame groups of length ``B``; the last may be shorter."""
    if int(B) != B or not 1 <= B <= T:
        raise GeometryError(f"bin size must lie in [1, {T}], got {B}")
    return [(s, min(s + B, T)) for s in range(0, T, B)]
