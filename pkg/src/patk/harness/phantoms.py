"""Synthetic non-negative piecewise-constant phantoms for simulation studies."""

import numpy as np

from ..errors import ConfigError, NumericalError
from ..geometry import Grid

KINDS = ("disks", "annulus_with_inclusions", "shepp_like")


def _grid_xy(grid: Grid):
    x, y = grid.coords()
    return x[:, None], y[None, :]


def _default_support(grid: Grid) -> float:
    return 0.3 * min(grid.extent)


def _sample_disks(rng: np.random.Generator, rr: float, dx: float):
    """Rejection-sample disjoint disks: list of (cx, cy, radius, amplitude)."""
    n = int(rng.integers(3, 7))
    margin = 2.0 * dx  # keep disks clearly separated
    disks: list[tuple[float, float, float, float]] = []
    for _ in range(n):
        for _attempt in range(200):
            rho = 0.72 * rr * np.sqrt(rng.uniform())
            ang = rng.uniform(0.0, 2.0 * np.pi)
            cx, cy = rho * np.cos(ang), rho * np.sin(ang)
            rad = rng.uniform(0.14, 0.30) * rr
            if np.hypot(cx, cy) + rad >= rr:
                continue
            if all(np.hypot(cx - px, cy - py) > rad + pr + margin
                   for px, py, pr, _ in disks):
                disks.append((cx, cy, rad, rng.uniform(0.4, 1.0)))
                break
    return disks


def make_phantom(grid: Grid, kind: str = "disks", seed: int = 0,
                 support_radius: float | None = None) -> np.ndarray:
    """Deterministic phantom with support strictly inside ``support_radius``.

    disks: 3..6 disjoint disks of varying amplitude.
    annulus_with_inclusions: a vessel-like ring plus small bright inclusions.
    shepp_like: overlapping rotated ellipses with additive positive amplitudes.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown phantom kind {kind!r}")
    rr = _default_support(grid) if support_radius is None else float(support_radius)
    if rr <= 0 or rr >= min(grid.extent) / 2:
        raise ConfigError("support radius must be positive and fit inside the grid")
    rng = np.random.default_rng(seed)
    x, y = _grid_xy(grid)
    f = np.zeros(grid.shape)

    if kind == "disks":
        for cx, cy, rad, amp in _sample_disks(rng, rr, grid.dx):
            f[(x - cx) ** 2 + (y - cy) ** 2 <= rad**2] = amp
        return f

    if kind == "annulus_with_inclusions":
        r_out = 0.92 * rr
        r_in = rng.uniform(0.70, 0.78) * rr
        rho2 = x**2 + y**2
        f[(rho2 <= r_out**2) & (rho2 >= r_in**2)] = rng.uniform(0.4, 0.7)
        for _ in range(int(rng.integers(3, 6))):
            rho = rng.uniform(0.0, 0.5) * rr
            ang = rng.uniform(0.0, 2.0 * np.pi)
            cx, cy = rho * np.cos(ang), rho * np.sin(ang)
            rad = rng.uniform(0.06, 0.14) * rr
            if np.hypot(cx, cy) + rad < r_in:
                f[(x - cx) ** 2 + (y - cy) ** 2 <= rad**2] = rng.uniform(0.6, 1.0)
        return f

    # shepp_like: positive additive ellipses, clipped to the support
    def add_ellipse(cx, cy, a, b, angle, amp):
        ct, st = np.cos(angle), np.sin(angle)
        xr = (x - cx) * ct + (y - cy) * st
        yr = -(x - cx) * st + (y - cy) * ct
        f[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += amp

    add_ellipse(0.0, 0.0, 0.9 * rr, 0.65 * rr, rng.uniform(0, np.pi), 0.3)
    for _ in range(int(rng.integers(3, 6))):
        a = rng.uniform(0.10, 0.28) * rr
        b = rng.uniform(0.06, 0.20) * rr
        rho = rng.uniform(0.0, 0.45) * rr
        ang = rng.uniform(0.0, 2.0 * np.pi)
        add_ellipse(rho * np.cos(ang), rho * np.sin(ang), a, b,
                    rng.uniform(0, np.pi), rng.uniform(0.15, 0.4))
    # hard cap so amplitudes stay in a sane display range
    np.minimum(f, 1.0, out=f)
    return f


def add_relative_noise(g: np.ndarray, eta: float, seed: int,
                       active: np.ndarray | None = None) -> np.ndarray:
    """g + delta with i.i.d. Gaussian delta scaled so ||delta|| = eta*||g||.

    Noise is only added on active detector rows.  When ``active`` is not
    given, rows that are identically zero are treated as inactive.
    """
    if not 0.0 <= eta < 1.0:
        raise ConfigError("eta must lie in [0, 1)")
    g = np.asarray(g, dtype=float)
    if eta == 0.0:
        return g.copy()
    norm_g = float(np.linalg.norm(g))
    if norm_g == 0.0:
        raise NumericalError("relative noise on identically zero data is undefined")
    if active is None:
        active = np.any(g != 0.0, axis=1)
    rng = np.random.default_rng(seed)
    delta = rng.standard_normal((int(np.count_nonzero(active)), g.shape[1]))
    delta *= eta * norm_g / np.linalg.norm(delta)
    out = g.copy()
    out[np.asarray(active, dtype=bool)] += delta
    return out
