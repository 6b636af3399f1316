"""Synthetic dynamic phantoms and measurement noise.

All phantoms are frame-major binary sequences ``(T, n, n)`` with values in
{0, 1}.  Positions are in pixel units on ``[0, n]``; pixel ``(i, j)`` has its
centre at ``(i + 0.5, j + 0.5)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .projector import Sinogram

__all__ = [
    "Ball",
    "RigidBallSpec",
    "NonRigidSpec",
    "rigid_balls",
    "nonrigid_bell",
    "bell_shape",
    "disk",
    "add_awgn",
    "ball_trajectory",
]

# reference resolution for the default ball speeds
_REF_N = 512


@dataclass
class Ball:
    radius: float
    position: tuple[float, float]
    velocity: tuple[float, float]


@dataclass
class RigidBallSpec:
    n: int = 64
    T: int = 64
    balls: list[Ball] = field(default_factory=list)
    seed: int | None = None

    def __post_init__(self):
        if self.n < 1 or self.T < 1:
            raise ValueError("n and T must be >= 1")
        if not self.balls:
            self.balls = default_balls(self.n) if self.seed is None else random_balls(self.n, 2, self.seed)
        for b in self.balls:
            if not b.radius > 0:
                raise ValueError(f"ball radius must be > 0, got {b.radius}")
            if 2 * b.radius >= self.n:
                raise ValueError(f"ball of radius {b.radius} does not fit a {self.n}-pixel domain")
            if any(p - b.radius < 0 or p + b.radius > self.n for p in b.position):
                raise ValueError(f"ball at {b.position} with radius {b.radius} starts outside the domain")


def default_balls(n: int) -> list[Ball]:
    """Two balls of radius 0.08 n; speeds are given at n = 512 and scale with n."""
    scale = n / _REF_N
    return [
        Ball(0.08 * n, (0.3 * n, 0.5 * n), (1.2 * scale, 0.7 * scale)),
        Ball(0.08 * n, (0.7 * n, 0.4 * n), (-0.9 * scale, 1.1 * scale)),
    ]


def random_balls(n: int, count: int, seed: int) -> list[Ball]:
    rng = np.random.default_rng(seed)
    scale = n / _REF_N
    balls = []
    for _ in range(count):
        r = 0.08 * n
        pos = rng.uniform(r, n - r, size=2)
        vel = rng.uniform(-1.5, 1.5, size=2) * scale
        balls.append(Ball(r, (float(pos[0]), float(pos[1])), (float(vel[0]), float(vel[1]))))
    return balls


def _advance(pos, vel, radius, n):
    pos = pos + vel
    for k in range(2):
        if pos[k] - radius < 0:
            pos[k] = 2 * radius - pos[k]
            vel[k] = -vel[k]
        elif pos[k] + radius > n:
            pos[k] = 2 * (n - radius) - pos[k]
            vel[k] = -vel[k]
    return pos, vel


def ball_trajectory(ball: Ball, n: int, T: int) -> np.ndarray:
    """Centre of ``ball`` at every frame, shape ``(T, 2)``; frame 0 is the start position."""
    pos = np.array(ball.position, dtype=np.float64)
    vel = np.array(ball.velocity, dtype=np.float64)
    out = np.empty((T, 2))
    for t in range(T):
        out[t] = pos
        pos, vel = _advance(pos, vel, ball.radius, n)
    return out


def _centres(n):
    c = np.arange(n) + 0.5
    return c[:, None], c[None, :]


def disk(n: int, radius: float, centre: tuple[float, float] | None = None) -> np.ndarray:
    """Binary disk: a pixel is inside iff its centre lies within ``radius``."""
    cx, cy = (n / 2.0, n / 2.0) if centre is None else centre
    xi, yj = _centres(n)
    return ((xi - cx) ** 2 + (yj - cy) ** 2 <= radius**2).astype(np.float64)


def rigid_balls(spec: RigidBallSpec) -> np.ndarray:
    """Balls moving at constant speed with specular reflection at the walls."""
    paths = [ball_trajectory(b, spec.n, spec.T) for b in spec.balls]
    xi, yj = _centres(spec.n)
    seq = np.zeros((spec.T, spec.n, spec.n))
    for t in range(spec.T):
        frame = np.zeros((spec.n, spec.n), dtype=bool)
        for b, path in zip(spec.balls, paths):
            frame |= (xi - path[t, 0]) ** 2 + (yj - path[t, 1]) ** 2 <= b.radius**2
        seq[t] = frame
    return seq


def bell_shape(n: int) -> np.ndarray:
    """Bell silhouette (crown, dome, flared waist, lip and clapper) on an n x n grid."""
    xi, yj = _centres(n)
    x = xi / n
    y = yj / n
    dome = (x - 0.32) ** 2 + (y - 0.5) ** 2 <= 0.14**2
    crown = (x - 0.17) ** 2 + (y - 0.5) ** 2 <= 0.035**2
    half_width = 0.14 + 0.16 * np.clip((x - 0.32) / 0.40, 0.0, 1.0) ** 2
    body = (x >= 0.32) & (x <= 0.72) & (np.abs(y - 0.5) <= half_width)
    lip = ((x - 0.72) / 0.04) ** 2 + ((y - 0.5) / 0.32) ** 2 <= 1.0
    clapper = (x - 0.79) ** 2 + (y - 0.5) ** 2 <= 0.045**2
    return (dome | crown | body | lip | clapper).astype(np.float64)


@dataclass
class NonRigidSpec:
    base: np.ndarray | None = None
    n: int = 64
    T: int = 360
    frequency: float = 10.0
    amplitude: float = 2.0
    seed: int | None = None

    def __post_init__(self):
        if self.base is None:
            self.base = bell_shape(self.n)
        self.base = np.asarray(self.base) > 0.5
        if self.base.ndim != 2 or self.base.shape[0] != self.base.shape[1]:
            raise ValueError("base shape must be a square binary image")
        self.n = self.base.shape[0]
        if not self.base.any():
            raise ValueError("base shape is empty")
        if not self.frequency > 0:
            raise ValueError("frequency must be > 0")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.T < 1:
            raise ValueError("T must be >= 1")


def _warp_frame(spec: NonRigidSpec, t: int, phase) -> np.ndarray:
    n = spec.n
    xi, yj = np.meshgrid(np.arange(n) + 0.5, np.arange(n) + 0.5, indexing="ij")
    omega = 2 * np.pi * spec.frequency / n
    tphase = 2 * np.pi * t / spec.T
    sx = xi + spec.amplitude * np.sin(omega * yj + tphase + phase[0])
    sy = yj + spec.amplitude * np.sin(omega * xi + tphase + phase[1])
    ii = np.floor(sx).astype(np.int64)
    jj = np.floor(sy).astype(np.int64)
    inside = (ii >= 0) & (ii < n) & (jj >= 0) & (jj < n)
    frame = np.zeros((n, n), dtype=bool)
    frame[inside] = spec.base[ii[inside], jj[inside]]
    frame = ndimage.binary_closing(frame, structure=np.ones((3, 3), dtype=bool))
    return ndimage.binary_fill_holes(frame)


def nonrigid_bell(spec: NonRigidSpec, frames=None) -> np.ndarray:
    """Base shape resampled through a travelling sinusoidal warp, one phase step per frame.

    ``frames`` selects which time indices to render (default ``range(T)``);
    indices outside ``[0, T)`` are allowed and follow the T-periodic warp.
    """
    if spec.seed is None:
        phase = (0.0, 0.0)
    else:
        phase = tuple(np.random.default_rng(spec.seed).uniform(0, 2 * np.pi, size=2))
    frames = range(spec.T) if frames is None else frames
    return np.stack([_warp_frame(spec, t, phase) for t in frames]).astype(np.float64)


def add_awgn(sino: Sinogram, snr_db: float, seed: int | None = None) -> Sinogram:
    """Add white Gaussian noise at ``snr_db`` relative to the mean squared signal."""
    if np.isinf(snr_db) and snr_db > 0:
        return sino.with_data(sino.data.copy())
    power = float(np.mean(sino.data**2))
    if power == 0.0:
        raise ValueError("cannot set an SNR on an all-zero sinogram")
    sigma = np.sqrt(power * 10.0 ** (-snr_db / 10.0))
    rng = np.random.default_rng(seed)
    return sino.with_data(sino.data + sigma * rng.standard_normal(sino.data.shape))
