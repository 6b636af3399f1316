"""Raw volume and sinogram files with JSON sidecar headers, plus frame export.

A dataset ``name`` is stored as ``name.raw`` (little-endian values in
row-major order) and ``name.json`` (geometry header).  Headers are written
with sorted keys so equal inputs give byte-identical files.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import GeometryError
from .projector import AngleSchedule, DetectorArray, ImageGrid, Sinogram
from .transforms import DctCoeffs, DctDims, TruncationMask

__all__ = [
    "write_volume",
    "read_volume",
    "write_sinogram",
    "read_sinogram",
    "write_coeffs",
    "read_coeffs",
    "read_header",
    "to_uint8",
    "write_pgm",
    "write_png",
    "export_frames",
]

_F32 = np.dtype("<f4")
_F64 = np.dtype("<f8")


def _paths(stem) -> tuple[Path, Path]:
    stem = Path(stem)
    if stem.suffix in (".raw", ".json"):
        stem = stem.with_suffix("")
    return stem.with_suffix(".raw"), stem.with_suffix(".json")


def _write_pair(stem, array: np.ndarray, dtype: np.dtype, header: dict) -> Path:
    raw, meta = _paths(stem)
    raw.parent.mkdir(parents=True, exist_ok=True)
    header = dict(header, dtype=dtype.str, shape=list(array.shape))
    # write to temporaries first so a failure never leaves a half-written pair
    tmp_raw, tmp_meta = raw.with_name(raw.name + ".tmp"), meta.with_name(meta.name + ".tmp")
    tmp_raw.write_bytes(np.ascontiguousarray(array, dtype=dtype).tobytes())
    tmp_meta.write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")
    os.replace(tmp_raw, raw)
    os.replace(tmp_meta, meta)
    return raw


def read_header(stem) -> dict:
    _, meta = _paths(stem)
    try:
        return json.loads(meta.read_text())
    except json.JSONDecodeError as exc:
        raise GeometryError(f"{meta}: malformed header ({exc})") from exc


def _read_pair(stem, kind: str) -> tuple[np.ndarray, dict]:
    raw, _ = _paths(stem)
    header = read_header(stem)
    if header.get("kind") != kind:
        raise GeometryError(f"{raw}: expected a {kind} file, header says {header.get('kind')!r}")
    dtype = np.dtype(header.get("dtype", _F32.str))
    shape = tuple(int(s) for s in header["shape"])
    data = np.fromfile(raw, dtype=dtype)
    if data.size != int(np.prod(shape)):
        raise GeometryError(f"{raw}: {data.size} values, header expects {shape}")
    return data.reshape(shape).astype(np.float64), header


def write_volume(stem, volume: np.ndarray, pixel_size: float = 1.0) -> Path:
    """Store a frame-major ``(T, nx, ny)`` sequence as float32."""
    volume = np.asarray(volume, dtype=np.float64)
    if volume.ndim != 3:
        raise GeometryError(f"expected a (T, nx, ny) volume, got shape {volume.shape}")
    T, nx, ny = volume.shape
    header = {"kind": "volume", "T": T, "nx": nx, "ny": ny, "pixel_size": float(pixel_size)}
    return _write_pair(stem, volume, _F32, header)


def read_volume(stem) -> tuple[np.ndarray, ImageGrid]:
    data, h = _read_pair(stem, "volume")
    if data.shape != (h["T"], h["nx"], h["ny"]):
        raise GeometryError(f"volume header is inconsistent: shape {data.shape}")
    return data, ImageGrid(h["nx"], h["ny"], h["pixel_size"])


def write_sinogram(stem, sino: Sinogram, grid: ImageGrid | None = None) -> Path:
    grid = grid or sino.grid
    if grid is None:
        raise GeometryError("a sinogram file records its image grid")
    header = {
        "kind": "sinogram",
        "T": sino.T,
        "n_det": sino.detector.n_det,
        "det_spacing": sino.detector.det_spacing,
        "theta1": sino.schedule.theta1,
        "delta_theta": sino.schedule.delta_theta,
        "pixel_size": grid.pixel_size,
        "nx": grid.nx,
        "ny": grid.ny,
    }
    return _write_pair(stem, sino.data, _F32, header)


def read_sinogram(stem) -> Sinogram:
    data, h = _read_pair(stem, "sinogram")
    if data.shape != (h["T"], h["n_det"]):
        raise GeometryError(f"sinogram header is inconsistent: shape {data.shape}")
    schedule = AngleSchedule(h["theta1"], h["delta_theta"], h["T"])
    detector = DetectorArray(h["n_det"], h["det_spacing"])
    grid = ImageGrid(h["nx"], h["ny"], h["pixel_size"])
    return Sinogram(schedule, detector, data, grid)


def write_coeffs(stem, coeffs: list[DctCoeffs], bins=None) -> Path:
    """Dump one or more coefficient vectors sharing a mask (float64, one row each)."""
    if not coeffs:
        raise ValueError("nothing to write")
    mask = coeffs[0].mask
    if any(c.mask != mask for c in coeffs):
        raise GeometryError("all coefficient vectors must share one mask")
    header = {"kind": "coeffs", "dims": list(mask.dims.shape), "kept": list(mask.kept)}
    if bins is not None:
        header["bins"] = [list(b) for b in bins]
    return _write_pair(stem, np.stack([c.values for c in coeffs]), _F64, header)


def read_coeffs(stem) -> list[DctCoeffs]:
    data, h = _read_pair(stem, "coeffs")
    mask = TruncationMask(DctDims(tuple(h["dims"])), tuple(h["kept"]))
    return [DctCoeffs(mask, row.reshape(mask.kept)) for row in data]


def to_uint8(frame: np.ndarray) -> np.ndarray:
    """``clip(rint(255 x), 0, 255)`` as 8-bit grey values."""
    return np.clip(np.rint(255.0 * np.asarray(frame, dtype=np.float64)), 0, 255).astype(np.uint8)


def write_pgm(path, frame: np.ndarray) -> Path:
    img = to_uint8(frame)
    path = Path(path)
    path.write_bytes(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]) + img.tobytes())
    return path


def write_png(path, frame: np.ndarray) -> Path:
    from PIL import Image

    path = Path(path)
    Image.fromarray(to_uint8(frame), mode="L").save(path, format="PNG", optimize=False)
    return path


def export_frames(volume: np.ndarray, out_dir, fmt: str = "pgm", stride: int = 1, prefix: str = "frame") -> list[Path]:
    """Write every ``stride``-th frame as an 8-bit image; returns the paths written."""
    if fmt not in ("pgm", "png"):
        raise ValueError(f"unknown image format {fmt!r}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = write_pgm if fmt == "pgm" else write_png
    width = max(4, len(str(len(volume) - 1)))
    return [writer(out_dir / f"{prefix}_{t:0{width}d}.{fmt}", volume[t]) for t in range(0, len(volume), stride)]
