"""Independent reference implementations used by the tests."""

import numpy as np

from dynshape.projector import radon_forward


def dct_matrix(n):
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    C = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * m + 1) * k / (2 * n))
    C[0] /= np.sqrt(2.0)
    return C


def naive_synthesis(values, kept, dims):
    """Zero-padded inverse DCT from explicit cosine matrices."""
    full = np.zeros(dims)
    full[tuple(slice(0, k) for k in kept)] = np.reshape(values, kept)
    out = full
    for axis, n in enumerate(dims):
        out = np.moveaxis(np.tensordot(dct_matrix(n).T, np.moveaxis(out, axis, 0), axes=1), 0, axis)
    return out


def smooth_step(s, eps):
    z = np.clip(s / eps, -1, 1)
    h = 0.5 * (1 + z + np.sin(np.pi * z) / np.pi)
    return np.where(s <= -eps, 0.0, np.where(s >= eps, 1.0, h))


def shape_objective(values, kept, dims, angles, detector, eps):
    """Misfit data-free pieces: returns the projected images per frame."""
    phi = naive_synthesis(values, kept, dims)
    img = smooth_step(phi, eps)
    return np.stack([radon_forward(img[t], a, detector) for t, a in enumerate(angles)])


def central_differences(f, x, rel_step=1e-5):
    """Gradient of ``f`` by central differences with step ``rel_step * (1 + |x_i|)``."""
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * (1 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def gradient_rel_error(analytic, fd):
    """Largest per-component relative error; components that are zero in both count as exact."""
    denom = np.maximum(np.abs(analytic), np.abs(fd))
    err = np.abs(analytic - fd)
    mask = denom > 0
    return float(np.max(err[mask] / denom[mask])) if mask.any() else 0.0


def theta_bisection(v, tau, iters=200):
    """Soft-threshold level for the l1-ball projection by bisection on theta."""
    u = np.abs(v)
    if u.sum() <= tau:
        return 0.0
    lo, hi = 0.0, float(u.max())
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(u - mid, 0).sum() > tau:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def l1_project_oracle(v, tau):
    theta = theta_bisection(v, tau)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0)
