"""Row-wise maps onto the probability simplex: softmax, sparsemax, alpha-entmax.

These kernels operate on plain ndarrays (1-D vectors or 2-D arrays of row
vectors). The autodiff wrappers in :mod:`interpretabnet.numeric` call them
for the forward pass and use :func:`entmax_vjp` for the backward pass.
"""
import numpy as np

from .errors import ConfigError

BISECT_TOL = 1e-12
BISECT_MAX_ITER = 100


def _as_rows(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        return z[None, :], True
    if z.ndim != 2:
        raise ValueError(f"expected a vector or 2-D array of rows, got ndim={z.ndim}")
    return z, False


def _restore(out, squeeze):
    return out[0] if squeeze else out


def _check_alpha(alpha):
    if not (1.0 < alpha <= 2.0):
        raise ConfigError(f"entmax alpha must lie in (1, 2], got {alpha}")


def softmax(z):
    z, squeeze = _as_rows(z)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return _restore(e / e.sum(axis=1, keepdims=True), squeeze)


def sparsemax_threshold(z):
    """Return (tau, support_size) per row for the sort-and-threshold projection.

    Entries lying exactly on the threshold are left out of the support.
    """
    z, _ = _as_rows(z)
    n = z.shape[1]
    z_sorted = -np.sort(-z, axis=1)
    cumsum = np.cumsum(z_sorted, axis=1) - 1.0
    k = np.arange(1, n + 1, dtype=np.float64)
    support = k * z_sorted > cumsum
    support_size = support.sum(axis=1)
    tau = cumsum[np.arange(z.shape[0]), support_size - 1] / support_size
    return tau, support_size


def sparsemax(z):
    """Euclidean projection of each row onto the probability simplex."""
    z, squeeze = _as_rows(z)
    z = z - z.max(axis=1, keepdims=True)
    tau, _ = sparsemax_threshold(z)
    return _restore(np.maximum(z - tau[:, None], 0.0), squeeze)


def _entmax15(z):
    # closed form for alpha = 1.5: p = [z/2 - tau]_+^2
    z = z / 2.0
    z = z - z.max(axis=1, keepdims=True)
    n = z.shape[1]
    z_sorted = -np.sort(-z, axis=1)
    k = np.arange(1, n + 1, dtype=np.float64)
    mean = np.cumsum(z_sorted, axis=1) / k
    mean_sq = np.cumsum(z_sorted ** 2, axis=1) / k
    ss = k * (mean_sq - mean ** 2)
    delta = np.maximum((1.0 - ss) / k, 0.0)
    tau = mean - np.sqrt(delta)
    support_size = (tau <= z_sorted).sum(axis=1)
    tau_star = tau[np.arange(z.shape[0]), support_size - 1]
    p = np.maximum(z - tau_star[:, None], 0.0) ** 2
    return p / p.sum(axis=1, keepdims=True)


def entmax_bisect(z, alpha):
    """Alpha-entmax for any alpha in (1, 2] by bisection on the threshold."""
    _check_alpha(alpha)
    z, squeeze = _as_rows(z)
    n = z.shape[1]
    x = z * (alpha - 1.0)
    x = x - x.max(axis=1, keepdims=True)
    power = 1.0 / (alpha - 1.0)
    tau_lo = np.full(z.shape[0], -1.0)
    tau_hi = np.full(z.shape[0], -(1.0 / n) ** (alpha - 1.0))

    def mass(tau):
        return (np.maximum(x - tau[:, None], 0.0) ** power).sum(axis=1) - 1.0

    f_lo = mass(tau_lo)
    width = tau_hi - tau_lo
    for _ in range(BISECT_MAX_ITER):
        width = width / 2.0
        tau_mid = tau_lo + width
        f_mid = mass(tau_mid)
        move = f_mid * f_lo >= 0
        tau_lo = np.where(move, tau_mid, tau_lo)
        if np.all(width < BISECT_TOL):
            break
    p = np.maximum(x - tau_mid[:, None], 0.0) ** power
    p = p / p.sum(axis=1, keepdims=True)
    return _restore(p, squeeze)


def entmax(z, alpha=1.5):
    """Alpha-entmax of each row.

    ``alpha=2`` is sparsemax, ``alpha=1.5`` uses the exact sort-based solver,
    anything else in (1, 2) is solved by bisection.
    """
    _check_alpha(alpha)
    z, squeeze = _as_rows(z)
    if alpha == 2.0:
        out = sparsemax(z)
    elif alpha == 1.5:
        out = _entmax15(z)
    else:
        out = entmax_bisect(z, alpha)
    return _restore(out, squeeze)


def entmax_vjp(p, grad, alpha):
    """Vector-Jacobian product of alpha-entmax at output ``p``.

    Uses the support-restricted Jacobian diag(s) - s s^T / sum(s) with
    s = p^(2 - alpha) on the support and 0 elsewhere.
    """
    p, squeeze = _as_rows(p)
    grad, _ = _as_rows(grad)
    if alpha == 2.0:
        s = (p > 0).astype(np.float64)
    else:
        s = np.where(p > 0, p ** (2.0 - alpha), 0.0)
    sg = s * grad
    q = sg.sum(axis=1, keepdims=True) / s.sum(axis=1, keepdims=True)
    return _restore(sg - q * s, squeeze)


def softmax_vjp(p, grad):
    p, squeeze = _as_rows(p)
    grad, _ = _as_rows(grad)
    return _restore(p * (grad - (p * grad).sum(axis=1, keepdims=True)), squeeze)
