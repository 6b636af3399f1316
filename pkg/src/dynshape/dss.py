"""Dynamic shape sensing: level-set reconstruction in a truncated DCT basis.

The unknown is a short vector ``alpha`` of low-frequency DCT coefficients of a
spatiotemporal level-set function ``phi``.  The image sequence is
``h_eps(phi)`` (or a multi-level or attenuation-scaled variant), and
``alpha`` minimises the projection misfit over an l1 ball by projected
gradient descent while the Heaviside width is annealed.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import GeometryError, NumericalError
from .levelset import dirac, dirac_derivative, epsilon_from_phi, heaviside, step
from .metrics import otsu_threshold
from .optim import StepResult, bb_step, projected_armijo
from .projector import (
    ImageGrid,
    ProjectionOperator,
    Sinogram,
    bin_ranges,
    sequence_operator,
)
from .transforms import DctCoeffs, DctDims, TruncationMask, analyze_truncated, dct_synthesize, make_mask

log = logging.getLogger(__name__)

__all__ = [
    "ReconConfig",
    "ExtensionConfig",
    "ImageMap",
    "ShapeProblem",
    "TraceRow",
    "ShapeResult",
    "project_l1_ball",
    "objective",
    "gradient",
    "line_search",
    "multilevel_image",
    "perimeter_penalty",
    "update_attenuation",
    "backprojection_init",
    "levelset_from_estimate",
    "anneal",
    "dss_reconstruct",
    "dss_attenuation",
    "trace_to_csv",
]


@dataclass
class ReconConfig:
    """Hyperparameters of the annealed projected-gradient solver.

    ``tau=None`` sets the l1 radius to the norm of the initial coefficients.
    ``init`` picks the initial estimate: ``"backprojection"`` (binned,
    normalised back-projection with ``init_bin`` frames per bin, clipped to
    T) or ``"boxl2"`` (a Box-l2 reconstruction with default baseline
    settings; back-projection is used for a single frame).
    """

    tau: float | None = None
    M: int = 20
    N: int = 30
    kappa0: float = 0.1
    kappa_decay: float = 0.8
    dct_fraction: float = 0.01
    ls_shrink: float = 0.5
    ls_c: float = 1e-4
    ls_max: int = 30
    init_bin: int = 36
    projection: str = "sort"
    init: str = "backprojection"

    def __post_init__(self):
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be > 0")
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be >= 1")
        if not 0 < self.kappa0 <= 1:
            raise ValueError("kappa0 must lie in (0, 1]")
        if not 0 < self.kappa_decay < 1:
            raise ValueError("kappa_decay must lie in (0, 1)")
        if not 0 < self.dct_fraction <= 1:
            raise ValueError("dct_fraction must lie in (0, 1]")
        if not 0 < self.ls_shrink < 1:
            raise ValueError("ls_shrink must lie in (0, 1)")
        if not self.ls_c > 0 or self.ls_max < 1 or self.init_bin < 1:
            raise ValueError("ls_c, ls_max and init_bin must be positive")
        if self.projection not in ("sort", "condat"):
            raise ValueError(f"unknown l1 projection method {self.projection!r}")
        if self.init not in ("backprojection", "boxl2"):
            raise ValueError(f"unknown initialiser {self.init!r}")


@dataclass
class ExtensionConfig:
    attenuation: Sequence[float] | None = None
    gray_levels: Sequence[float] | None = None
    perimeter_lambda: float = 0.0

    def __post_init__(self):
        if self.gray_levels is not None:
            levels = np.asarray(self.gray_levels, dtype=np.float64)
            if levels.ndim != 1 or levels.size < 1:
                raise ValueError("gray_levels must be a non-empty list")
            if levels[0] <= 0 or np.any(np.diff(levels) <= 0):
                raise ValueError("gray_levels must be positive and strictly increasing")
        if self.perimeter_lambda < 0:
            raise ValueError("perimeter_lambda must be >= 0")


# ----------------------------------------------------------------------------
# l1-ball projection
# ----------------------------------------------------------------------------

def _simplex_threshold_sort(u: np.ndarray, tau: float) -> float:
    srt = np.sort(u)[::-1]
    css = np.cumsum(srt)
    j = np.arange(1, srt.size + 1)
    rho = np.nonzero(srt - (css - tau) / j > 0)[0][-1]
    return (css[rho] - tau) / (rho + 1.0)


def _simplex_threshold_condat(u: np.ndarray, tau: float) -> float:
    # Condat (2016), Algorithm 1 of "Fast projection onto the simplex and the l1 ball"
    y = u.tolist()
    v = [y[0]]
    v_tilde: list[float] = []
    rho = y[0] - tau
    for yn in y[1:]:
        if yn > rho:
            rho += (yn - rho) / (len(v) + 1)
            if rho > yn - tau:
                v.append(yn)
            else:
                v_tilde.extend(v)
                v = [yn]
                rho = yn - tau
    for yn in v_tilde:
        if yn > rho:
            v.append(yn)
            rho += (yn - rho) / len(v)
    while True:
        count = len(v)
        keep = []
        for yn in v:
            if yn <= rho:
                count -= 1
                rho += (rho - yn) / count
            else:
                keep.append(yn)
        if len(keep) == len(v):
            return rho
        v = keep


def project_l1_ball(v, tau: float, method: str = "sort") -> np.ndarray:
    """Euclidean projection onto ``{w : |w|_1 <= tau}``.

    Points already inside (up to a relative 1e-12 slack) are returned
    unchanged, which makes the map exactly idempotent.  Otherwise the result
    soft-thresholds ``v`` at the unique ``theta`` with
    ``sum(max(|v_i| - theta, 0)) == tau``.  ``method`` selects how ``theta``
    is found: ``"sort"`` (O(n log n)) or ``"condat"`` (Condat's
    expected-linear-time scan).
    """
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if method not in ("sort", "condat"):
        raise ValueError(f"unknown method {method!r}")
    v = np.asarray(v, dtype=np.float64)
    u = np.abs(v)
    if u.sum() <= tau * (1.0 + 1e-12):
        return v.copy()
    flat = u.ravel()
    if method == "sort":
        theta = _simplex_threshold_sort(flat, tau)
    else:
        theta = _simplex_threshold_condat(flat, tau)
    return np.sign(v) * np.maximum(u - theta, 0.0)


# ----------------------------------------------------------------------------
# image maps
# ----------------------------------------------------------------------------

class ImageMap:
    """Pointwise map from level-set values to grey values, with its derivative.

    With ``levels=None`` this is the smooth Heaviside.  With levels
    ``u_1 < ... < u_m`` it is the multi-level sum
    ``u_1 h(phi - u_1) + sum_p (u_p - u_{p-1}) h(phi - (u_p - u_{p-1}))``.
    """

    def __init__(self, levels: Sequence[float] | None = None):
        if levels is None:
            self.weights = np.array([1.0])
            self.shifts = np.array([0.0])
        else:
            u = np.asarray(levels, dtype=np.float64)
            if u.ndim != 1 or u.size < 1 or u[0] <= 0 or np.any(np.diff(u) <= 0):
                raise ValueError("levels must be positive and strictly increasing")
            inc = np.diff(u, prepend=0.0)
            self.weights = inc
            self.shifts = inc.copy()
        self.levels = None if levels is None else np.asarray(levels, dtype=np.float64)

    def value(self, phi, epsilon):
        return sum(w * heaviside(phi - s, epsilon) for w, s in zip(self.weights, self.shifts))

    def derivative(self, phi, epsilon):
        return sum(w * dirac(phi - s, epsilon) for w, s in zip(self.weights, self.shifts))

    def sharp(self, phi):
        return sum(w * step(phi - s) for w, s in zip(self.weights, self.shifts))


def multilevel_image(alpha: DctCoeffs, epsilon: float, levels: Sequence[float]) -> np.ndarray:
    """Grey-level sequence of the multi-level Heaviside map applied to ``synth(alpha)``."""
    return ImageMap(levels).value(dct_synthesize(alpha), epsilon)


def perimeter_penalty(alpha: DctCoeffs, epsilon: float, lam: float):
    """``lam * sum delta_eps(phi)^2`` and its gradient with respect to ``alpha``."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    phi = dct_synthesize(alpha)
    d = dirac(phi, epsilon)
    value = lam * float(np.sum(d * d))
    grad = analyze_truncated(2.0 * lam * d * dirac_derivative(phi, epsilon), alpha.mask).values
    return value, grad


# ----------------------------------------------------------------------------
# objective
# ----------------------------------------------------------------------------

class ShapeProblem:
    """Least-squares shape objective for one projection operator.

    ``J(alpha) = sum_m |A_m(u_f I_eps(phi_f)) - y_m|^2 + lam sum |delta_eps(phi)|^2``
    with ``phi = synth(alpha)`` on the truncation mask, ``f`` the frame seen
    by measurement row ``m``, ``I_eps`` an :class:`ImageMap` and ``u`` an
    optional per-frame attenuation.
    """

    def __init__(self, op: ProjectionOperator, data: np.ndarray, mask: TruncationMask,
                 image_map: ImageMap | None = None, attenuation=None, perimeter_lambda: float = 0.0):
        data = np.asarray(data, dtype=np.float64)
        if data.shape != op.data_shape:
            raise GeometryError(f"data shape {data.shape} does not match operator {op.data_shape}")
        if mask.dims.shape != op.volume_shape:
            raise GeometryError(f"mask dims {mask.dims.shape} do not match volume {op.volume_shape}")
        if perimeter_lambda < 0:
            raise ValueError("perimeter_lambda must be >= 0")
        self.op = op
        self.data = data
        self.mask = mask
        self.image_map = image_map or ImageMap()
        self.perimeter_lambda = float(perimeter_lambda)
        self.attenuation = None if attenuation is None else self._check_u(attenuation)

    def _check_u(self, u):
        u = np.asarray(u, dtype=np.float64).ravel()
        if u.size != self.op.n_frames:
            raise GeometryError(f"{u.size} attenuation values for {self.op.n_frames} frames")
        return u

    def coeffs(self, values) -> DctCoeffs:
        return DctCoeffs(self.mask, values)

    def phi(self, values) -> np.ndarray:
        return dct_synthesize(self.coeffs(values))

    def _scale(self):
        if self.attenuation is None:
            return 1.0
        return self.attenuation[:, None, None]

    def images(self, values, epsilon) -> np.ndarray:
        return self._scale() * self.image_map.value(self.phi(values), epsilon)

    def _residual(self, phi, epsilon):
        img = self._scale() * self.image_map.value(phi, epsilon)
        return self.op.forward(img) - self.data

    def objective(self, values, epsilon: float) -> float:
        phi = self.phi(values)
        r = self._residual(phi, epsilon)
        J = float(np.sum(r * r))
        if self.perimeter_lambda:
            d = dirac(phi, epsilon)
            J += self.perimeter_lambda * float(np.sum(d * d))
        return J

    def value_and_gradient(self, values, epsilon: float):
        phi = self.phi(values)
        r = self._residual(phi, epsilon)
        J = float(np.sum(r * r))
        back = self.op.adjoint(r)
        volume_grad = 2.0 * self._scale() * self.image_map.derivative(phi, epsilon) * back
        if self.perimeter_lambda:
            d = dirac(phi, epsilon)
            J += self.perimeter_lambda * float(np.sum(d * d))
            volume_grad = volume_grad + 2.0 * self.perimeter_lambda * d * dirac_derivative(phi, epsilon)
        return J, analyze_truncated(volume_grad, self.mask).values

    def gradient(self, values, epsilon: float) -> np.ndarray:
        return self.value_and_gradient(values, epsilon)[1]


def _problem_for(sino: Sinogram, grid: ImageGrid | None, mask: TruncationMask, ext: ExtensionConfig | None):
    grid = grid or sino.grid
    if grid is None:
        raise GeometryError("an image grid is required")
    op = sequence_operator(grid, sino.detector, sino.angles())
    ext = ext or ExtensionConfig()
    return ShapeProblem(op, sino.data, mask, ImageMap(ext.gray_levels), ext.attenuation, ext.perimeter_lambda)


def objective(alpha: DctCoeffs, sino: Sinogram, epsilon: float, grid: ImageGrid | None = None,
              ext: ExtensionConfig | None = None) -> float:
    """Single-shot objective ``sum_t |A_t h_eps(Psi_t alpha) - y_t|^2``."""
    return _problem_for(sino, grid, alpha.mask, ext).objective(alpha.values, epsilon)


def gradient(alpha: DctCoeffs, sino: Sinogram, epsilon: float, grid: ImageGrid | None = None,
             ext: ExtensionConfig | None = None) -> np.ndarray:
    r"""Analytic gradient of :func:`objective`.

    ``2 Psi^H( delta_eps(phi) * A^H(A h_eps(phi) - y) )`` evaluated as:
    synthesise phi, back-project the residual frame by frame, weight by the
    smooth Dirac and analyse onto the kept coefficients.
    """
    return _problem_for(sino, grid, alpha.mask, ext).gradient(alpha.values, epsilon)


def line_search(problem: ShapeProblem, alpha: np.ndarray, direction: np.ndarray, epsilon: float,
                cfg: ReconConfig, tau: float, gamma0: float | None = None, J0: float | None = None) -> StepResult:
    """Backtracking step along ``direction = -gradient`` followed by projection onto the l1 ball.

    ``gamma0`` defaults to ``1 / |gradient|``; the driver passes a
    Barzilai-Borwein estimate once two iterates exist.  Returns a result with
    ``gamma == 0`` when ``cfg.ls_max`` reductions all fail.
    """
    grad = -np.asarray(direction, dtype=np.float64)
    if J0 is None:
        J0 = problem.objective(alpha, epsilon)
    if gamma0 is None:
        gnorm = float(np.linalg.norm(grad))
        gamma0 = 1.0 / gnorm if gnorm > 0 else 1.0
    return projected_armijo(
        lambda a: problem.objective(a, epsilon),
        alpha,
        J0,
        grad,
        gamma0,
        lambda a: project_l1_ball(a, tau, cfg.projection),
        cfg.ls_shrink,
        cfg.ls_c,
        cfg.ls_max,
    )


def update_attenuation(problem: ShapeProblem, values, epsilon: float, u_prev) -> np.ndarray:
    """Closed-form per-frame least-squares attenuation for a fixed shape.

    ``u_f = <A h_f, y_f> / |A h_f|^2`` over the measurement rows of frame
    ``f``, clamped at zero; frames whose projected shape vanishes keep
    ``u_prev``.
    """
    u_prev = np.asarray(u_prev, dtype=np.float64)
    shape = problem.image_map.value(problem.phi(values), epsilon)
    proj = problem.op.forward(shape)
    frames = problem.op.frames
    num = np.bincount(frames, weights=np.sum(proj * problem.data, axis=1), minlength=problem.op.n_frames)
    den = np.bincount(frames, weights=np.sum(proj * proj, axis=1), minlength=problem.op.n_frames)
    u = u_prev.copy()
    ok = den > 0
    u[ok] = np.maximum(num[ok] / den[ok], 0.0)
    return u


# ----------------------------------------------------------------------------
# Algorithm driver
# ----------------------------------------------------------------------------

@dataclass
class TraceRow:
    outer: int
    inner: int
    J: float
    gamma: float
    epsilon: float
    l1norm: float


TRACE_FIELDS = ("outer", "inner", "J", "gamma", "epsilon", "l1norm")


def trace_to_csv(trace: Sequence[TraceRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for row in trace:
        w.writerow([row.outer, row.inner] + [repr(float(getattr(row, k))) for k in TRACE_FIELDS[2:]])
    return buf.getvalue()


@dataclass
class ShapeResult:
    sequence: np.ndarray
    coeffs: DctCoeffs
    trace: list[TraceRow]
    tau: float
    phi: np.ndarray
    stalled: list[int] = field(default_factory=list)
    attenuation: np.ndarray | None = None


def backprojection_init(op: ProjectionOperator, data: np.ndarray, frame_bins: Sequence[tuple[int, int]]) -> np.ndarray:
    """Initial level set from binned, normalised back-projections.

    Each bin of frames shares the back-projection of all its measurements,
    rescaled to [0, 1]; the level set is that volume minus its Otsu threshold.
    """
    T = op.n_frames
    recon = np.zeros(op.volume_shape)
    bp_all = op.adjoint(data)
    for start, stop in frame_bins:
        bp = bp_all[start:stop].sum(axis=0)
        lo, hi = bp.min(), bp.max()
        recon[start:stop] = (bp - lo) / (hi - lo) if hi > lo else 0.0
    if T and np.ptp(recon) > 0:
        return recon - otsu_threshold(recon)
    raise NumericalError("back-projection is constant; cannot initialise the level set")


def anneal(problem: ShapeProblem, alpha0: np.ndarray, tau: float, cfg: ReconConfig,
           estimate_attenuation: bool = False, callback=None):
    """Outer loop over Heaviside widths, inner projected-gradient loop on ``alpha``.

    Returns ``(alpha, trace, stalled, attenuation)``.  Only accepted steps are
    traced.  An inner loop whose line search fails is abandoned and the next
    (narrower) width is tried; its outer index is listed in ``stalled``.
    """
    alpha = project_l1_ball(alpha0, tau, cfg.projection)
    kappa = cfg.kappa0
    trace: list[TraceRow] = []
    stalled: list[int] = []
    u = problem.attenuation
    for q in range(1, cfg.M + 1):
        eps = epsilon_from_phi(problem.phi(alpha), kappa)
        J, g = problem.value_and_gradient(alpha, eps)
        if not np.isfinite(J):
            raise NumericalError("objective is not finite")
        prev = None
        for p in range(1, cfg.N + 1):
            if not np.any(g):
                break
            gamma0 = bb_step(*prev) if prev is not None else None
            res = line_search(problem, alpha, -g, eps, cfg, tau, gamma0=gamma0, J0=J)
            if not res.accepted:
                stalled.append(q)
                log.debug("outer %d: line search stalled at inner %d", q, p)
                break
            J_new, g_new = problem.value_and_gradient(res.x, eps)
            prev = (res.x - alpha, g_new - g)
            alpha, J, g = res.x, res.f, g_new
            trace.append(TraceRow(q, p, J, res.gamma, eps, float(np.abs(alpha).sum())))
            if callback is not None:
                callback(trace[-1])
        if estimate_attenuation:
            u = update_attenuation(problem, alpha, eps, u)
            problem.attenuation = u
        kappa *= cfg.kappa_decay
    return alpha, trace, stalled, u


def levelset_from_estimate(volume: np.ndarray) -> np.ndarray:
    """Signed initial level set: the estimate minus its Otsu threshold."""
    volume = np.asarray(volume, dtype=np.float64)
    if not np.ptp(volume) > 0:
        raise NumericalError("initial estimate is constant; cannot initialise the level set")
    return volume - otsu_threshold(volume)


def _initial_phi(op, sino, grid, cfg, initial, one_per_frame):
    if initial is not None:
        initial = np.asarray(initial, dtype=np.float64)
        if initial.shape != op.volume_shape:
            raise GeometryError(f"initial estimate {initial.shape} does not match volume {op.volume_shape}")
        return levelset_from_estimate(initial)
    if cfg.init == "boxl2" and one_per_frame and sino.T > 1:
        from .baselines import boxl2_reconstruct

        return levelset_from_estimate(boxl2_reconstruct(sino, grid).sequence)
    T = op.n_frames
    return backprojection_init(op, sino.data, bin_ranges(T, min(T, cfg.init_bin)))


def _solve(sino: Sinogram, grid: ImageGrid, cfg: ReconConfig, ext: ExtensionConfig | None,
           estimate_attenuation: bool, attenuation0=None, initial=None, frames=None) -> ShapeResult:
    grid = grid or sino.grid
    if grid is None:
        raise GeometryError("an image grid is required")
    if sino.grid is not None and sino.grid != grid:
        raise GeometryError(f"sinogram was recorded on {sino.grid}, not {grid}")
    ext = ext or ExtensionConfig()
    if frames is None:
        op = sequence_operator(grid, sino.detector, sino.angles())
    else:
        frames = np.asarray(frames, dtype=np.int64)
        if frames.shape != (sino.T,) or frames.min() < 0 or np.any(np.diff(frames) < 0):
            raise GeometryError("frames must give a non-decreasing, non-negative frame index per measurement")
        op = sequence_operator(grid, sino.detector, sino.angles(), frames=frames, n_frames=int(frames[-1]) + 1)
    mask = make_mask(DctDims(op.volume_shape), cfg.dct_fraction)
    u0 = attenuation0 if attenuation0 is not None else ext.attenuation
    problem = ShapeProblem(op, sino.data, mask, ImageMap(ext.gray_levels), u0, ext.perimeter_lambda)

    phi0 = _initial_phi(op, sino, grid, cfg, initial, frames is None)
    # put the Otsu boundary on the first grey-level transition
    phi0 = phi0 + problem.image_map.shifts[0]
    alpha0 = analyze_truncated(phi0, mask).values
    tau = cfg.tau if cfg.tau is not None else float(np.abs(alpha0).sum())
    alpha, trace, stalled, u = anneal(problem, alpha0, tau, cfg, estimate_attenuation)
    coeffs = DctCoeffs(mask, alpha)
    phi = dct_synthesize(coeffs)
    seq = problem.image_map.sharp(phi)
    if u is not None:
        seq = u[:, None, None] * seq
    return ShapeResult(seq, coeffs, trace, tau, phi, stalled, None if u is None else np.asarray(u))


def dss_reconstruct(sino: Sinogram, grid: ImageGrid | None = None, cfg: ReconConfig | None = None,
                    ext: ExtensionConfig | None = None, initial=None, frames=None) -> ShapeResult:
    """Reconstruct a binary image sequence from single-shot projections.

    Parameters
    ----------
    sino
        One projection per frame.
    grid
        Image grid; defaults to the one recorded on ``sino``.
    cfg
        Solver settings.  ``cfg.tau=None`` ties the l1 radius to the
        initial coefficients.
    ext
        Optional known attenuation per frame, grey levels or perimeter
        weight.
    initial
        Optional ``(T, nx, ny)`` initial estimate; it overrides
        ``cfg.init`` and is shifted by its Otsu threshold to give ``phi0``.
    frames
        Optional non-decreasing frame index per measurement row.  The
        default is one frame per row; ``np.zeros(T)`` reconstructs a single
        static frame from every projection.

    Returns
    -------
    ShapeResult
        ``sequence`` is the sharp-Heaviside image of the final level set,
        ``trace`` holds one row per accepted step.
    """
    return _solve(sino, grid, cfg or ReconConfig(), ext, estimate_attenuation=False, initial=initial, frames=frames)


def dss_attenuation(sino: Sinogram, grid: ImageGrid | None = None, cfg: ReconConfig | None = None,
                    ext: ExtensionConfig | None = None, initial=None, frames=None) -> ShapeResult:
    """As :func:`dss_reconstruct`, with a free per-frame attenuation updated after every inner loop.

    ``ext.attenuation`` seeds the estimate (default all ones).
    """
    ext = ext or ExtensionConfig()
    T = sino.T if frames is None else int(np.max(frames)) + 1
    u0 = np.ones(T) if ext.attenuation is None else np.asarray(ext.attenuation, dtype=np.float64)
    return _solve(sino, grid, cfg or ReconConfig(), ext, estimate_attenuation=True, attenuation0=u0,
                  initial=initial, frames=frames)
