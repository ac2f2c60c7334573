"""Reconstruction grid, time axis, and circular detector geometry.

Conventions: images are indexed ``f[ix, iy]`` with pixel centers at
``(ix - (nx-1)/2) * dx`` so the grid is centered on the origin.  Detector
angles are stored in radians measured counterclockwise from the +x axis;
device arcs are specified in degrees at the API surface because published
coverage figures are quoted in degrees and must reproduce exactly.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

_ALLOWED_PAD = (1, 2, 3, 4)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Grid:
    """Square-pixel reconstruction grid with sound speed and FFT padding."""

    nx: int
    ny: int
    dx: float
    c: float
    pad_factor: int = 2

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8 or self.nx % 2 or self.ny % 2:
            raise ConfigError(f"grid must be even and at least 8x8, got {self.nx}x{self.ny}")
        if self.dx <= 0 or self.c <= 0:
            raise ConfigError("dx and c must be positive")
        if self.pad_factor not in _ALLOWED_PAD:
            raise ConfigError(f"pad_factor must be one of {_ALLOWED_PAD}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def extent(self) -> tuple[float, float]:
        """Physical side lengths (nx*dx, ny*dx)."""
        return (self.nx * self.dx, self.ny * self.dx)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel-center coordinates (x of shape (nx,), y of shape (ny,))."""
        x = (np.arange(self.nx) - (self.nx - 1) / 2.0) * self.dx
        y = (np.arange(self.ny) - (self.ny - 1) / 2.0) * self.dx
        return x, y


@dataclass(frozen=True)
class TimeAxis:
    """Uniform sampling t_j = j*dt for j = 0..n_t-1."""

    n_t: int
    dt: float

    def __post_init__(self):
        if self.n_t < 2:
            raise ConfigError("need at least two time samples")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")

    @property
    def duration(self) -> float:
        return (self.n_t - 1) * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.n_t) * self.dt


@dataclass(frozen=True)
class DetectorRing:
    """Detectors on a circle of given radius, uniformly pitched over an arc.

    ``element_angles`` always lists all ``n_total`` elements; ``active``
    marks the contiguous subset currently in use.  Angles are radians.
    """

    radius: float
    n_total: int
    element_angles: np.ndarray
    active: np.ndarray
    arc_center: float
    device_arc_deg: float

    def __post_init__(self):
        object.__setattr__(self, "element_angles", _freeze(np.asarray(self.element_angles, dtype=float)))
        object.__setattr__(self, "active", _freeze(np.asarray(self.active, dtype=bool)))
        if self.element_angles.shape != (self.n_total,) or self.active.shape != (self.n_total,):
            raise ConfigError("element_angles and active must have length n_total")
        idx = np.flatnonzero(self.active)
        if idx.size and not np.array_equal(idx, np.arange(idx[0], idx[0] + idx.size)):
            raise ConfigError("active elements must form one contiguous run")

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active))

    @property
    def pitch_deg(self) -> float:
        return self.device_arc_deg / self.n_total

    def coverage_deg(self, n_active: int | None = None) -> float:
        """Angular coverage of ``n_active`` elements (defaults to current)."""
        if n_active is None:
            n_active = self.n_active
        return (n_active * self.device_arc_deg) / self.n_total

    def positions(self) -> np.ndarray:
        """(n_total, 2) array of (x, y) element centers."""
        return np.column_stack(
            (self.radius * np.cos(self.element_angles), self.radius * np.sin(self.element_angles))
        )


def make_ring(radius: float, n_total: int, device_arc_deg: float, arc_center_deg: float = 270.0) -> DetectorRing:
    """Build a fully active ring of ``n_total`` elements spanning ``device_arc_deg``.

    The elements are pitch ``device_arc_deg / n_total`` apart and centered, as a
    group, on ``arc_center_deg``.  The default orientation points the device
    arc downward, leaving the opening at the top.  A full 360 degree device
    wraps without a duplicated element (the pattern is periodic in the pitch).
    """
    if radius <= 0:
        raise ConfigError("ring radius must be positive")
    if n_total < 4:
        raise ConfigError("need at least 4 detector elements")
    if not 0.0 < device_arc_deg <= 360.0:
        raise ConfigError("device arc must lie in (0, 360] degrees")
    pitch = np.deg2rad(device_arc_deg) / n_total
    center = np.deg2rad(arc_center_deg)
    idx = np.arange(n_total)
    angles = center + (idx - (n_total - 1) / 2.0) * pitch
    return DetectorRing(
        radius=radius,
        n_total=n_total,
        element_angles=angles,
        active=np.ones(n_total, dtype=bool),
        arc_center=center,
        device_arc_deg=float(device_arc_deg),
    )


def subsample_arc(ring: DetectorRing, n_active: int, offset: int = 0) -> DetectorRing:
    """Keep a centered contiguous block of ``n_active`` elements active.

    The block is computed from the full device, not from the current active
    set, so nested subsampling is idempotent: subsampling to ``b`` after
    subsampling to ``a`` equals subsampling to ``b`` directly.  When the
    dropped count is odd the block sits one element counterclockwise of
    center.  ``offset`` shifts the block by whole elements for sensitivity
    studies.
    """
    if not 1 <= n_active <= ring.n_total:
        raise ConfigError(f"n_active must be in [1, {ring.n_total}], got {n_active}")
    lo = (ring.n_total - n_active + 1) // 2 + offset
    if lo < 0 or lo + n_active > ring.n_total:
        raise ConfigError("offset pushes active block outside the device")
    mask = np.zeros(ring.n_total, dtype=bool)
    mask[lo : lo + n_active] = True
    return replace(ring, active=mask)


def detector_positions(ring: DetectorRing, grid: Grid) -> np.ndarray:
    """Element centers as an (n_total, 2) array, validated against the grid.

    Raises ConfigError unless every element lies strictly inside the grid
    interior (sampling at or beyond the outermost pixel centers would make
    the bilinear stencil ill-defined).
    """
    pos = ring.positions()
    x, y = grid.coords()
    if (
        pos[:, 0].min() <= x[0]
        or pos[:, 0].max() >= x[-1]
        or pos[:, 1].min() <= y[0]
        or pos[:, 1].max() >= y[-1]
    ):
        raise ConfigError("detector ring does not fit strictly inside the grid")
    return pos
