"""Discrete TV calculus and the proximal maps used by the primal-dual solver.

Gradients use forward differences with Neumann boundaries (last row/column
of each component is zero), so ``neg_div`` below is the exact matrix
transpose of ``grad`` and the pair satisfies <grad f, v> = <f, neg_div v>
to rounding. Vector fields are arrays of shape (2, nx, ny), component 0
differencing along axis 0.
"""

import numpy as np

from .errors import ConfigError


def grad(f: np.ndarray) -> np.ndarray:
    """Forward-difference gradient, shape (2,) + f.shape."""
    v = np.zeros((2,) + f.shape, dtype=float)
    v[0, :-1, :] = f[1:, :] - f[:-1, :]
    v[1, :, :-1] = f[:, 1:] - f[:, :-1]
    return v


def neg_div(v: np.ndarray) -> np.ndarray:
    """Negative divergence, the exact transpose of :func:`grad`.

    Entries in the last row of v[0] / last column of v[1] are ignored
    because grad never writes there.
    """
    out = np.zeros(v.shape[1:], dtype=float)
    out[:-1, :] -= v[0, :-1, :]
    out[1:, :] += v[0, :-1, :]
    out[:, :-1] -= v[1, :, :-1]
    out[:, 1:] += v[1, :, :-1]
    return out


def tv(f: np.ndarray) -> float:
    """Isotropic total variation: sum of pointwise gradient magnitudes."""
    v = grad(f)
    return float(np.sum(np.sqrt(v[0] ** 2 + v[1] ** 2)))


def tv_smoothed(f: np.ndarray, eps: float) -> float:
    """Differentiable TV surrogate sum(sqrt(|grad f|^2 + eps^2)) - N*eps.

    The -N*eps offset makes the value vanish for constant images and keeps
    |tv_smoothed - tv| <= N*eps.
    """
    if eps <= 0:
        raise ConfigError("smoothing eps must be positive")
    v = grad(f)
    return float(np.sum(np.sqrt(v[0] ** 2 + v[1] ** 2 + eps**2)) - f.size * eps)


def tv_smoothed_grad(f: np.ndarray, eps: float) -> np.ndarray:
    """Gradient of :func:`tv_smoothed` with respect to f."""
    if eps <= 0:
        raise ConfigError("smoothing eps must be positive")
    v = grad(f)
    v /= np.sqrt(v[0] ** 2 + v[1] ** 2 + eps**2)
    return neg_div(v)


def prox_l2_dual(y: np.ndarray, sigma: float, g: np.ndarray) -> np.ndarray:
    """Resolvent of the convex conjugate of 0.5*||. - g||^2: (y - sigma*g)/(1 + sigma)."""
    return (y - sigma * g) / (1.0 + sigma)


def project_dual_ball(v: np.ndarray, alpha: float) -> np.ndarray:
    """Project a vector field onto pointwise L2 balls of radius alpha."""
    if alpha < 0:
        raise ConfigError("ball radius must be non-negative")
    if alpha == 0.0:
        return np.zeros_like(v)
    # hypot and alpha / max(n, alpha) keep the shrink factor in [0, 1]
    # without overflow or underflow at extreme magnitudes
    n = np.hypot(v[0], v[1])
    return v * (alpha / np.maximum(n, alpha))


def prox_primal(
    f: np.ndarray,
    tau: float,
    variant: str = "nonneg",
    mu: float = 1.0,
    m0: float = 0.0,
) -> np.ndarray:
    """Proximal map of the primal penalty G.

    variant "nonneg": G = indicator of {f >= 0}, prox is pointwise clipping.
    variant "mean_penalty": G = mu*(mean(f) - m0)^2 with the non-negativity
    constraint removed; the prox shifts every pixel by the same amount
    -2*tau*mu*(mean(f) - m0) / (N + 2*tau*mu), the closed-form minimizer of
    tau*G(u) + 0.5*||u - f||^2 over uniform shifts (the optimal u - f is
    constant because G depends on u only through its mean).
    """
    if tau <= 0:
        raise ConfigError("prox step tau must be positive")
    if variant == "nonneg":
        return np.maximum(f, 0.0)
    if variant == "mean_penalty":
        if mu < 0:
            raise ConfigError("mean penalty weight must be non-negative")
        n = f.size
        shift = -2.0 * tau * mu * (float(f.mean()) - m0) / (n + 2.0 * tau * mu)
        return f + shift
    raise ConfigError(f"unknown primal variant {variant!r}")
