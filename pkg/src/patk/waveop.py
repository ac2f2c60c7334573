"""Spectral forward and adjoint operators for the circular-detector wave problem.

The forward map propagates an initial pressure f through the free-space wave
equation with unit-speed-of-sound scaling c, using the closed-form Fourier
solution p(., t) = irfft2(cos(c|k| t) * rfft2(f_padded)), then samples the
field at detector positions with bilinear interpolation.  Padding by the
grid's pad_factor pushes periodic wraparound outside the measurement window.

The adjoint is the exact floating-point transpose: the bilinear gather is a
sparse matrix applied as its transpose scatter, and the spectral propagator
is symmetric because its Fourier multiplier is real and even.
"""

import logging

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, NumericalError
from .geometry import DetectorRing, Grid, TimeAxis, detector_positions
from .variational import grad as tv_grad
from .variational import neg_div

log = logging.getLogger(__name__)

_CHUNK_BYTES = 32 * 2**20
_DEFAULT_MULT_CACHE = 128 * 2**20


def default_time_axis(grid: Grid) -> TimeAxis:
    """Time axis with dt = dx/(2c) long enough for waves to cross the grid diagonal."""
    dt = grid.dx / (2.0 * grid.c)
    diag = float(np.hypot(grid.nx, grid.ny)) * grid.dx
    n_t = int(np.ceil(diag / (grid.c * dt))) + 1
    return TimeAxis(n_t=n_t, dt=dt)


class ForwardOperator:
    """Wave forward map from an (nx, ny) image to (n_total, n_t) detector traces.

    Rows of inactive detectors are identically zero in the output of
    :meth:`forward` and are ignored by :meth:`adjoint`.
    """

    def __init__(self, grid: Grid, ring: DetectorRing, time_axis: TimeAxis,
                 mult_cache_bytes: int = _DEFAULT_MULT_CACHE):
        self.grid = grid
        self.ring = ring
        self.time_axis = time_axis

        pos = detector_positions(ring, grid)  # validates strict interior fit
        nx, ny = grid.nx, grid.ny
        px, py = grid.pad_factor * nx, grid.pad_factor * ny
        half = grid.pad_factor * min(nx, ny) * grid.dx / 2.0
        horizon = grid.c * time_axis.duration
        if horizon > half + 1e-12 * half:
            raise ConfigError(
                f"c*T = {horizon:.6g} exceeds padded half-extent {half:.6g}; "
                "increase pad_factor or shorten the time axis"
            )

        self._pshape = (px, py)
        self._ox = (px - nx) // 2
        self._oy = (py - ny) // 2

        kx = 2.0 * np.pi * np.fft.fftfreq(px, d=grid.dx)
        ky = 2.0 * np.pi * np.fft.rfftfreq(py, d=grid.dx)
        self._ck = grid.c * np.sqrt(kx[:, None] ** 2 + ky[None, :] ** 2)
        self._t = time_axis.times()

        self._active_idx = np.flatnonzero(ring.active)
        self._sample = self._build_sampler(pos[self._active_idx])
        self._gather = self._sample.T.tocsr()

        n_mult = time_axis.n_t * self._ck.size
        self._mult = None
        if n_mult * 8 <= mult_cache_bytes:
            self._mult = np.cos(self._ck[None, :, :] * self._t[:, None, None])

        self._norm_cache: dict[bool, float] = {}

    def _build_sampler(self, pos: np.ndarray) -> sp.csr_matrix:
        """Sparse (padded_pixels, n_active) matrix of bilinear scatter weights.

        Column d holds the four interpolation weights of detector d; applying
        the transpose gathers field samples, applying it directly scatters
        detector values, so the pair is an exact transpose by construction.
        Weights are non-negative and each column sums to one.
        """
        g = self.grid
        u = pos[:, 0] / g.dx + self._ox + (g.nx - 1) / 2.0
        v = pos[:, 1] / g.dx + self._oy + (g.ny - 1) / 2.0
        i0 = np.floor(u).astype(int)
        j0 = np.floor(v).astype(int)
        wu = u - i0
        wv = v - j0
        py = self._pshape[1]
        rows = np.concatenate([
            i0 * py + j0,
            (i0 + 1) * py + j0,
            i0 * py + (j0 + 1),
            (i0 + 1) * py + (j0 + 1),
        ])
        cols = np.tile(np.arange(pos.shape[0]), 4)
        vals = np.concatenate([
            (1 - wu) * (1 - wv),
            wu * (1 - wv),
            (1 - wu) * wv,
            wu * wv,
        ])
        npad = self._pshape[0] * self._pshape[1]
        return sp.csr_matrix((vals, (rows, cols)), shape=(npad, pos.shape[0]))

    def _chunks(self):
        npad = self._pshape[0] * self._pshape[1]
        step = max(1, _CHUNK_BYTES // (8 * npad))
        for lo in range(0, self.time_axis.n_t, step):
            yield lo, min(lo + step, self.time_axis.n_t)

    @property
    def sampler(self) -> sp.csr_matrix:
        """(padded_pixels, n_active) bilinear stencil matrix (read-only use)."""
        return self._sample

    def multiplier(self, j: int) -> np.ndarray:
        """Fourier multiplier cos(c|k| t_j) on the padded rfft2 grid."""
        if self._mult is not None:
            return self._mult[j]
        return np.cos(self._ck * self._t[j])

    def _multipliers(self, lo: int, hi: int) -> np.ndarray:
        if self._mult is not None:
            return self._mult[lo:hi]
        return np.cos(self._ck[None, :, :] * self._t[lo:hi, None, None])

    def embed(self, f: np.ndarray) -> np.ndarray:
        """Zero-pad f into the center of the padded grid."""
        out = np.zeros(self._pshape)
        out[self._ox : self._ox + self.grid.nx, self._oy : self._oy + self.grid.ny] = f
        return out

    def crop(self, fp: np.ndarray) -> np.ndarray:
        return fp[self._ox : self._ox + self.grid.nx, self._oy : self._oy + self.grid.ny]

    def _check_image(self, f: np.ndarray):
        f = np.asarray(f)
        if f.shape != self.grid.shape:
            raise ConfigError(f"image shape {f.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(f)):
            raise NumericalError("image contains non-finite values")
        return f.astype(float, copy=False)

    def _check_data(self, g: np.ndarray):
        g = np.asarray(g)
        want = (self.ring.n_total, self.time_axis.n_t)
        if g.shape != want:
            raise ConfigError(f"data shape {g.shape} does not match {want}")
        if not np.all(np.isfinite(g)):
            raise NumericalError("data contains non-finite values")
        return g.astype(float, copy=False)

    def propagate(self, f: np.ndarray, j: int) -> np.ndarray:
        """Padded pressure field at time t_j started from initial value f."""
        f = self._check_image(f)
        if not 0 <= j < self.time_axis.n_t:
            raise ConfigError(f"time index {j} out of range")
        fhat = np.fft.rfft2(self.embed(f))
        return np.fft.irfft2(fhat * self.multiplier(j), s=self._pshape)

    def forward(self, f: np.ndarray) -> np.ndarray:
        """Detector traces of the propagated field, shape (n_total, n_t)."""
        f = self._check_image(f)
        fhat = np.fft.rfft2(self.embed(f))
        g = np.zeros((self.ring.n_total, self.time_axis.n_t))
        npad = self._pshape[0] * self._pshape[1]
        for lo, hi in self._chunks():
            fields = np.fft.irfft2(fhat[None, :, :] * self._multipliers(lo, hi),
                                   s=self._pshape, axes=(-2, -1))
            # (n_active, npad) @ (npad, chunk) -> samples at each detector
            g[self._active_idx, lo:hi] = self._gather @ fields.reshape(hi - lo, npad).T
        return g

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        """Exact transpose of :meth:`forward`; inactive rows are masked out."""
        g = self._check_data(g)
        ga = g[self._active_idx]
        acc = np.zeros(self._ck.shape, dtype=complex)
        for lo, hi in self._chunks():
            scat = (self._sample @ ga[:, lo:hi]).T.reshape(hi - lo, *self._pshape)
            acc += np.einsum("jkl,jkl->kl", self._multipliers(lo, hi),
                             np.fft.rfft2(scat, axes=(-2, -1)))
        return self.crop(np.fft.irfft2(acc, s=self._pshape))

    def norm(self, composite_with_gradient: bool = False) -> float:
        """Cached power-iteration operator norm (see :func:`operator_norm`)."""
        if composite_with_gradient not in self._norm_cache:
            self._norm_cache[composite_with_gradient] = operator_norm(
                self, composite_with_gradient=composite_with_gradient
            )
        return self._norm_cache[composite_with_gradient]


def forward(f: np.ndarray, op: ForwardOperator) -> np.ndarray:
    return op.forward(f)


def adjoint(g: np.ndarray, op: ForwardOperator) -> np.ndarray:
    return op.adjoint(g)


def propagate(f: np.ndarray, op: ForwardOperator, j: int) -> np.ndarray:
    return op.propagate(f, j)


def operator_norm(op, composite_with_gradient: bool = False, tol: float = 1e-6,
                  max_iter: int = 200, seed: int = 0) -> float:
    """Largest singular value of the operator by seeded power iteration.

    With ``composite_with_gradient`` the estimate is for the stacked map
    f -> (A f, grad f) used to scale primal-dual steps; it therefore
    dominates both the plain norm and the gradient norm.  Iteration stops
    when the Rayleigh quotient changes by less than ``tol`` relatively.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.grid.shape)
    x /= np.linalg.norm(x)
    lam = lam_prev = 0.0
    rel = np.inf
    for it in range(max_iter):
        y = op.adjoint(op.forward(x))
        if composite_with_gradient:
            y += neg_div(tv_grad(x))
        lam = float(np.vdot(x, y).real)
        n = np.linalg.norm(y)
        if n == 0.0:
            return 0.0
        x = y / n
        rel = abs(lam - lam_prev) / max(lam, 1e-300)
        if lam > 0 and abs(lam - lam_prev) <= tol * lam:
            break
        lam_prev = lam
    else:
        log.warning("power iteration hit the %d-iteration cap (rel change %.2e)",
                    max_iter, rel)
    if lam <= 0:
        raise NumericalError("power iteration failed to find a positive eigenvalue")
    return float(np.sqrt(lam))


def approximate_inverse(g: np.ndarray, op: ForwardOperator,
                        mode: str = "normalized_adjoint") -> np.ndarray:
    """Cheap single-shot reconstruction used to seed the network engine.

    "normalized_adjoint" returns A*g / ||A||^2, the first least-squares
    gradient iterate from zero with the largest provably convergent step.
    "time_reversal" runs a leapfrog wave solve backwards in time on the
    padded grid with the measured traces imposed at the nearest detector
    pixels, and returns the field at t = 0.
    """
    if mode == "normalized_adjoint":
        rho = op.norm(composite_with_gradient=False) ** 2
        return op.adjoint(g) / rho
    if mode == "time_reversal":
        return _time_reversal(g, op)
    raise ConfigError(f"unknown approximate inverse mode {mode!r}")


def _time_reversal(g: np.ndarray, op: ForwardOperator) -> np.ndarray:
    """March the cosine propagator backwards, re-emitting the traces.

    Uses the exact two-step recurrence of cosine solutions,
    q_{j-1} = 2 C_dt q_j - q_{j+1}, where C_dt is the one-step multiplier,
    and injects each recorded sample through the transposed detector
    stencil as the recursion passes its time index.
    """
    g = op._check_data(g)
    ga = g[op._active_idx]
    c_dt = np.cos(op._ck * op.time_axis.dt)

    def emit(j):
        return np.asarray(op._sample @ ga[:, j]).reshape(op._pshape)

    q_next = np.zeros(op._pshape)
    q = emit(op.time_axis.n_t - 1)
    for j in range(op.time_axis.n_t - 2, -1, -1):
        q_prev = 2.0 * np.fft.irfft2(c_dt * np.fft.rfft2(q), s=op._pshape) - q_next + emit(j)
        q_next, q = q, q_prev
    return op.crop(q / op.time_axis.n_t)


def simulate_data(f_fine: np.ndarray, fine_op: ForwardOperator,
                  coarse_op: ForwardOperator) -> np.ndarray:
    """Forward-simulate data on a finer grid sharing ring and time axis.

    Simulating on a grid at least twice as fine as the reconstruction grid
    avoids committing the inverse crime of inverting the exact discrete
    operator that generated the data.
    """
    fg, cg = fine_op.grid, coarse_op.grid
    if fine_op.time_axis != coarse_op.time_axis:
        raise ConfigError("fine and coarse operators must share the time axis")
    rf, rc = fine_op.ring, coarse_op.ring
    if (rf.n_total != rc.n_total or rf.radius != rc.radius
            or not np.array_equal(rf.element_angles, rc.element_angles)
            or not np.array_equal(rf.active, rc.active)):
        raise ConfigError("fine and coarse operators must share the detector ring")
    if fg.nx % cg.nx or fg.ny % cg.ny:
        raise ConfigError("fine grid must be an integer refinement of the coarse grid")
    m = fg.nx // cg.nx
    if m < 2 or fg.ny // cg.ny != m:
        raise ConfigError("fine grid must refine both axes by the same factor >= 2")
    if abs(fg.nx * fg.dx - cg.nx * cg.dx) > 1e-12 * cg.nx * cg.dx:
        raise ConfigError("fine and coarse grids must cover the same physical extent")
    return fine_op.forward(f_fine)


def block_average(f_fine: np.ndarray, factor: int) -> np.ndarray:
    """Downsample by averaging non-overlapping factor x factor blocks."""
    nx, ny = f_fine.shape
    if nx % factor or ny % factor:
        raise ConfigError("array dimensions must be divisible by the block factor")
    return f_fine.reshape(nx // factor, factor, ny // factor, factor).mean(axis=(1, 3))
