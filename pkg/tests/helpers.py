"""Shared construction helpers and brute-force oracles for the test suite."""

import numpy as np

from patk import ForwardOperator, Grid, TimeAxis, make_ring, subsample_arc


def build_op(nx=16, n_det=8, n_t=12, pad_factor=1, device_arc_deg=270.0,
             extent=0.1, c=1500.0, ring_frac=0.75, n_active=0,
             arc_center_deg=270.0, **op_kwargs) -> ForwardOperator:
    """Small wave operator with a time axis filling the padded horizon."""
    grid = Grid(nx, nx, extent / nx, c, pad_factor)
    ring = make_ring(ring_frac * extent / 2.0, n_det, device_arc_deg, arc_center_deg)
    if n_active:
        ring = subsample_arc(ring, n_active)
    dt = 0.98 * (pad_factor * extent / 2.0) / (c * (n_t - 1))
    return ForwardOperator(grid, ring, TimeAxis(n_t, dt), **op_kwargs)


def smooth_image(shape, seed=0, cutoff=4.0) -> np.ndarray:
    """Band-limited random image, normalized to max |value| 1."""
    rng = np.random.default_rng(seed)
    fhat = np.fft.rfft2(rng.standard_normal(shape))
    ky = np.fft.fftfreq(shape[0])[:, None] * shape[0]
    kx = np.fft.rfftfreq(shape[1])[None, :] * shape[1]
    fhat *= np.exp(-(np.hypot(ky, kx) / cutoff) ** 2)
    out = np.fft.irfft2(fhat, s=shape)
    return out / np.abs(out).max()


def centered_disk(grid: Grid, radius_frac=0.4, amp=1.0) -> np.ndarray:
    """Disk of given amplitude centered on the grid."""
    x, y = grid.coords()
    r = radius_frac * min(grid.extent) / 2.0
    return np.where(x[:, None] ** 2 + y[None, :] ** 2 <= r * r, amp, 0.0)


def dft_forward_oracle(op: ForwardOperator, f: np.ndarray) -> np.ndarray:
    """Brute-force forward: padded DFT sum at independently derived stencils.

    p(x, t) = (1/N_pad) * sum_k fhat(k) * cos(c|k|t) * exp(i k.x), evaluated
    at the four bilinear nodes around each detector with recomputed weights.
    """
    g = op.grid
    px, py = g.pad_factor * g.nx, g.pad_factor * g.ny
    ox, oy = (px - g.nx) // 2, (py - g.ny) // 2
    fp = np.zeros((px, py))
    fp[ox:ox + g.nx, oy:oy + g.ny] = f
    fhat = np.fft.fft2(fp)
    kx = 2.0 * np.pi * np.fft.fftfreq(px, g.dx)
    ky = 2.0 * np.pi * np.fft.fftfreq(py, g.dx)
    ck = g.c * np.hypot(kx[:, None], ky[None, :])
    aa = np.arange(px)[:, None]
    bb = np.arange(py)[None, :]
    pos = op.ring.positions()
    out = np.zeros((op.ring.n_total, op.time_axis.n_t))
    for d in np.flatnonzero(op.ring.active):
        u = pos[d, 0] / g.dx + ox + (g.nx - 1) / 2.0
        v = pos[d, 1] / g.dx + oy + (g.ny - 1) / 2.0
        i0, j0 = int(np.floor(u)), int(np.floor(v))
        wu, wv = u - i0, v - j0
        nodes = [(i0, j0, (1 - wu) * (1 - wv)), (i0 + 1, j0, wu * (1 - wv)),
                 (i0, j0 + 1, (1 - wu) * wv), (i0 + 1, j0 + 1, wu * wv)]
        for ii, jj, w in nodes:
            phase = np.exp(2j * np.pi * (aa * ii / px + bb * jj / py))
            for jt, t in enumerate(op.time_axis.times()):
                val = np.sum(np.cos(ck * t) * fhat * phase) / (px * py)
                out[d, jt] += w * float(val.real)
    return out
