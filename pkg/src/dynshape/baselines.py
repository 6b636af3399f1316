"""Comparison reconstructors: binned static TV, binned compressed shape sensing and Box-l2.

Binned methods treat ``B`` consecutive frames as one static object and
reconstruct it from all their projections; the result is replicated across
the frames of the bin.  Box-l2 reconstructs every frame jointly with a
quadratic penalty on consecutive-frame differences.  All variational solves
use projected gradient descent with Barzilai-Borwein steps and Armijo
backtracking on the box ``[0, 1]``.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .dss import ReconConfig, ShapeProblem, TraceRow, anneal, backprojection_init
from .errors import GeometryError
from .levelset import step
from .optim import bb_step, clamp01, projected_armijo
from .projector import ImageGrid, ProjectionOperator, Sinogram, bin_ranges, sequence_operator
from .transforms import DctCoeffs, DctDims, analyze_truncated, dct_synthesize, make_mask

log = logging.getLogger(__name__)

__all__ = [
    "BaselineConfig",
    "BaselineResult",
    "bin_measurements",
    "tv_smooth",
    "static_objective",
    "boxl2_objective",
    "static_tv_reconstruct",
    "css_reconstruct",
    "boxl2_reconstruct",
    "binned_reconstruct",
]


@dataclass
class BaselineConfig:
    """Settings shared by the baseline reconstructors.

    ``alpha_tv`` weights the smoothed TV term, ``beta_temporal`` the squared
    frame differences of Box-l2.  ``tol`` stops a projected-gradient run
    once the relative objective decrease of a step drops below it.  CSS uses
    a purely spatial DCT mask with ``css_fraction`` kept per axis and l1
    radius ``css_tau`` (``None`` ties it to the initial coefficients).
    """

    bin_size: int = 36
    alpha_tv: float = 0.05
    beta_temporal: float = 100.0
    tv_smoothing: float = 1e-6
    max_iters: int = 1000
    tol: float = 1e-9
    css_tau: float | None = None
    css_fraction: float = 0.2

    def __post_init__(self):
        if self.bin_size < 1:
            raise ValueError("bin_size must be >= 1")
        if self.alpha_tv < 0 or self.beta_temporal < 0:
            raise ValueError("alpha_tv and beta_temporal must be >= 0")
        if not self.tv_smoothing > 0:
            raise ValueError("tv_smoothing must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.css_tau is not None and not self.css_tau > 0:
            raise ValueError("css_tau must be > 0")
        if not 0 < self.css_fraction <= 1:
            raise ValueError("css_fraction must lie in (0, 1]")


@dataclass
class BaselineResult:
    sequence: np.ndarray
    trace: list[TraceRow] = field(default_factory=list)
    bins: list[tuple[int, int]] = field(default_factory=list)
    coeffs: list[DctCoeffs] = field(default_factory=list)


def bin_measurements(sino: Sinogram, B: int) -> list[Sinogram]:
    """Split ``sino`` into contiguous groups of ``B`` frames (the last may be short)."""
    return [sino.frames(s, e) for s, e in bin_ranges(sino.T, B)]


# ----------------------------------------------------------------------------
# smoothed total variation
# ----------------------------------------------------------------------------

def _forward_diff(x, axis):
    d = np.diff(x, axis=axis, append=np.take(x, [-1], axis=axis))
    return d


def _forward_diff_t(d, axis):
    # transpose of the Neumann forward difference (last difference is zero)
    d = np.moveaxis(d, axis, 0).copy()
    d[-1] = 0.0
    out = np.empty_like(d)
    out[0] = -d[0]
    out[1:] = d[:-1] - d[1:]
    return np.moveaxis(out, 0, axis)


def tv_smooth(x: np.ndarray, mu: float = 1e-6):
    """Smoothed isotropic TV ``sum sqrt(|grad x|^2 + mu^2)`` and its gradient.

    Forward differences over the last two axes with a Neumann boundary, so
    a stack ``(T, nx, ny)`` is the sum of per-frame values.
    """
    if not mu > 0:
        raise ValueError("mu must be > 0")
    x = np.asarray(x, dtype=np.float64)
    dx = _forward_diff(x, -2)
    dy = _forward_diff(x, -1)
    mag = np.sqrt(dx * dx + dy * dy + mu * mu)
    grad = _forward_diff_t(dx / mag, -2) + _forward_diff_t(dy / mag, -1)
    return float(mag.sum()), grad


def _temporal(x: np.ndarray):
    d = np.diff(x, axis=0)
    grad = np.zeros_like(x)
    grad[:-1] -= 2.0 * d
    grad[1:] += 2.0 * d
    return float(np.sum(d * d)), grad


# ----------------------------------------------------------------------------
# objectives
# ----------------------------------------------------------------------------

def _static_vg(op: ProjectionOperator, data: np.ndarray, cfg: BaselineConfig) -> Callable:
    def value_grad(x):
        r = op.forward(x[None]) - data
        f = float(np.sum(r * r))
        g = 2.0 * op.adjoint(r)[0]
        if cfg.alpha_tv:
            tv, gtv = tv_smooth(x, cfg.tv_smoothing)
            f += cfg.alpha_tv * tv
            g += cfg.alpha_tv * gtv
        return f, g

    return value_grad


def _boxl2_vg(op: ProjectionOperator, data: np.ndarray, cfg: BaselineConfig) -> Callable:
    def value_grad(x):
        r = op.forward(x) - data
        f = float(np.sum(r * r))
        g = 2.0 * op.adjoint(r)
        if cfg.alpha_tv:
            tv, gtv = tv_smooth(x, cfg.tv_smoothing)
            f += cfg.alpha_tv * tv
            g += cfg.alpha_tv * gtv
        if cfg.beta_temporal:
            tq, gtq = _temporal(x)
            f += cfg.beta_temporal * tq
            g += cfg.beta_temporal * gtq
        return f, g

    return value_grad


def _static_operator(sino: Sinogram, grid: ImageGrid) -> ProjectionOperator:
    # every measurement sees the same (only) frame
    return sequence_operator(grid, sino.detector, sino.angles(), frames=np.zeros(sino.T, dtype=int), n_frames=1)


def _grid_for(sino: Sinogram, grid: ImageGrid | None) -> ImageGrid:
    grid = grid or sino.grid
    if grid is None:
        raise GeometryError("an image grid is required")
    if sino.grid is not None and sino.grid != grid:
        raise GeometryError(f"sinogram was recorded on {sino.grid}, not {grid}")
    return grid


def static_objective(x: np.ndarray, sino: Sinogram, grid: ImageGrid | None = None,
                     cfg: BaselineConfig | None = None) -> float:
    """``sum_t |A_t x - y_t|^2 + alpha_tv TV_mu(x)`` for one static image over all rows of ``sino``."""
    cfg = cfg or BaselineConfig()
    grid = _grid_for(sino, grid)
    return _static_vg(_static_operator(sino, grid), sino.data, cfg)(np.asarray(x, dtype=np.float64))[0]


def boxl2_objective(X: np.ndarray, sino: Sinogram, grid: ImageGrid | None = None,
                    cfg: BaselineConfig | None = None) -> float:
    """Single-shot misfit plus per-frame TV and ``beta`` times squared consecutive-frame differences."""
    cfg = cfg or BaselineConfig()
    grid = _grid_for(sino, grid)
    op = sequence_operator(grid, sino.detector, sino.angles())
    return _boxl2_vg(op, sino.data, cfg)(np.asarray(X, dtype=np.float64))[0]


# ----------------------------------------------------------------------------
# solver
# ----------------------------------------------------------------------------

def _projected_gradient(value_grad, x0, cfg: BaselineConfig, outer: int, trace: list):
    x = clamp01(x0)
    f, g = value_grad(x)
    prev = None
    for it in range(1, cfg.max_iters + 1):
        gamma0 = bb_step(*prev) if prev is not None else None
        if gamma0 is None:
            gmax = float(np.max(np.abs(g)))
            if gmax == 0.0:
                break
            gamma0 = 1.0 / gmax
        res = projected_armijo(lambda z: value_grad(z)[0], x, f, g, gamma0, clamp01)
        if not res.accepted:
            log.debug("bin %d: line search stalled at iteration %d", outer, it)
            break
        f_new, g_new = value_grad(res.x)
        prev = (res.x - x, g_new - g)
        decrease = f - f_new
        x, f, g = res.x, f_new, g_new
        trace.append(TraceRow(outer, it, f, res.gamma, 0.0, float(np.abs(x).sum())))
        if decrease <= cfg.tol * max(abs(f), 1.0):
            break
    return x


def static_tv_reconstruct(sino: Sinogram, grid: ImageGrid | None = None, cfg: BaselineConfig | None = None,
                          trace: list | None = None, index: int = 1) -> np.ndarray:
    """Box-constrained TV reconstruction of one static image from every row of ``sino``.

    Projected gradient from a zero start; ``trace`` (if given) receives one
    row per accepted step with ``outer = index``.
    """
    cfg = cfg or BaselineConfig()
    grid = _grid_for(sino, grid)
    op = _static_operator(sino, grid)
    trace = [] if trace is None else trace
    return _projected_gradient(_static_vg(op, sino.data, cfg), np.zeros(grid.shape), cfg, index, trace)


def css_reconstruct(sino: Sinogram, grid: ImageGrid | None = None, cfg: BaselineConfig | None = None,
                    solver: ReconConfig | None = None, trace: list | None = None, index: int = 1):
    """Binary static image from a level set in a spatial truncated DCT basis.

    The shape objective and annealed projected-gradient loop are those of
    the dynamic method with a single frame.  ``solver`` supplies the
    annealing and line-search constants; its ``tau`` and ``dct_fraction``
    are replaced by ``cfg.css_tau`` and ``cfg.css_fraction``.

    Returns ``(image, coeffs)``.
    """
    cfg = cfg or BaselineConfig()
    grid = _grid_for(sino, grid)
    solver = replace(solver or ReconConfig(), tau=cfg.css_tau, dct_fraction=cfg.css_fraction)
    op = _static_operator(sino, grid)
    mask = make_mask(DctDims(op.volume_shape), cfg.css_fraction)
    problem = ShapeProblem(op, sino.data, mask)
    phi0 = backprojection_init(op, sino.data, [(0, 1)])
    alpha0 = analyze_truncated(phi0, mask).values
    tau = solver.tau if solver.tau is not None else float(np.abs(alpha0).sum())
    alpha, rows, _, _ = anneal(problem, alpha0, tau, solver)
    if trace is not None:
        trace.extend(replace(r, outer=r.outer + (index - 1) * solver.M) for r in rows)
    coeffs = DctCoeffs(mask, alpha)
    return step(dct_synthesize(coeffs))[0], coeffs


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DYNSHAPE_THREADS", "1")))
    except ValueError:
        return 1


def binned_reconstruct(sino: Sinogram, method: str, grid: ImageGrid | None = None,
                       cfg: BaselineConfig | None = None, solver: ReconConfig | None = None) -> BaselineResult:
    """Run ``"static"`` or ``"css"`` on each bin and replicate results over the bin's frames.

    Bins are independent; ``DYNSHAPE_THREADS`` sets how many run at once.
    The trace is ordered by bin regardless of completion order.
    """
    cfg = cfg or BaselineConfig()
    grid = _grid_for(sino, grid)
    bins = bin_ranges(sino.T, min(cfg.bin_size, sino.T))
    if method not in ("static", "css"):
        raise ValueError(f"unknown binned method {method!r}")

    def run(k):
        rows: list[TraceRow] = []
        part = sino.frames(*bins[k])
        if method == "static":
            return static_tv_reconstruct(part, grid, cfg, rows, k + 1), None, rows
        img, coeffs = css_reconstruct(part, grid, cfg, solver, rows, k + 1)
        return img, coeffs, rows

    n_threads = min(_threads(), len(bins))
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            outs = list(pool.map(run, range(len(bins))))
    else:
        outs = [run(k) for k in range(len(bins))]

    seq = np.empty((sino.T,) + grid.shape)
    trace, coeffs = [], []
    for (s, e), (img, c, rows) in zip(bins, outs):
        seq[s:e] = img
        trace.extend(rows)
        if c is not None:
            coeffs.append(c)
    return BaselineResult(seq, trace, bins, coeffs)


def boxl2_reconstruct(sino: Sinogram, grid: ImageGrid | None = None, cfg: BaselineConfig | None = None) -> BaselineResult:
    """Joint reconstruction of all frames with spatial TV and a temporal l2 penalty on ``[0, 1]``."""
    cfg = cfg or BaselineConfig()
    grid = _grid_for(sino, grid)
    if sino.T < 2:
        raise GeometryError("Box-l2 needs at least two frames")
    op = sequence_operator(grid, sino.detector, sino.angles())
    trace: list[TraceRow] = []
    x = _projected_gradient(_boxl2_vg(op, sino.data, cfg), np.zeros(op.volume_shape), cfg, 1, trace)
    return BaselineResult(x, trace, [(0, sino.T)])
