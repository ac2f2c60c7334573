"""Deep-image-prior reconstruction: fit the network to one measurement.

The estimate is f = phi_theta(z) with z a fixed input image (normally the
approximate inverse of the data) and theta optimized to minimize

    ||A phi_theta(z) - g||^2 + lambda * tv_smoothed(phi_theta(z)) [+ mean penalty]

by Adam with cosine-annealed steps.  The squared norm carries no 1/2 factor,
so the data-term gradient is 2 A*(A phi - g) pulled back through the network
by the hand-written VJP.  No differentiation through A is ever needed beyond
its adjoint.
"""

import math
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .. import iqa
from ..errors import ConfigError
from ..records import RunRecord
from ..variational import tv_smoothed, tv_smoothed_grad
from ..waveop import ForwardOperator
from .optim import AdamState, adam_step, cosine_lr
from .unet import NetworkParams, UNetConfig, _backward, _forward_with_cache, unet_forward, unet_init

SELECTIONS = ("early_stop_psnr", "converged_psnr", "fixed_cutoff")


@dataclass
class DipConfig:
    lam: float = 0.1
    lr0: float = 5e-4
    max_iter: int = 400
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    tv_eps: float | None = None  # default: 1e-6 * dynamic range of z
    mean_penalty_mu: float | None = None
    mean_penalty_m0: float | None = None  # default: mean(z) when the penalty is on
    selection: str = "early_stop_psnr"
    burn_in: int = 40

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative")
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if not 0 <= self.burn_in < self.max_iter:
            raise ConfigError("burn_in must lie in [0, max_iter)")
        if self.selection not in SELECTIONS:
            raise ConfigError(f"selection must be one of {SELECTIONS}")
        if self.mean_penalty_mu is not None and self.mean_penalty_mu < 0:
            raise ConfigError("mean penalty weight must be non-negative")


def _resolve_tv_eps(config: DipConfig, z: np.ndarray) -> float:
    if config.tv_eps is not None:
        if config.tv_eps <= 0:
            raise ConfigError("tv_eps must be positive")
        return config.tv_eps
    dr = float(z.max() - z.min())
    return 1e-6 * dr if dr > 0 else 1e-6


def _resolve_m0(config: DipConfig, z: np.ndarray) -> float:
    if config.mean_penalty_m0 is not None:
        return config.mean_penalty_m0
    return float(z.mean())


def _loss_terms(phi: np.ndarray, g: np.ndarray, op: ForwardOperator,
                lam: float, eps: float, mu: float, m0: float):
    r = op.forward(phi) - g
    loss = float(np.vdot(r, r).real)
    if lam > 0:
        loss += lam * tv_smoothed(phi, eps)
    if mu > 0:
        loss += mu * (float(phi.mean()) - m0) ** 2
    return loss, r


def dip_loss(params: NetworkParams, z: np.ndarray, g: np.ndarray, op: ForwardOperator,
             dip_config: DipConfig, unet_config: UNetConfig) -> float:
    """Objective value at the given parameters."""
    phi = unet_forward(params, unet_config, z)
    eps = _resolve_tv_eps(dip_config, z)
    mu = dip_config.mean_penalty_mu or 0.0
    m0 = _resolve_m0(dip_config, z) if mu > 0 else 0.0
    loss, _ = _loss_terms(phi, g, op, dip_config.lam, eps, mu, m0)
    return loss


def _upstream(phi, r, op, lam, eps, mu, m0):
    u = 2.0 * op.adjoint(r)
    if lam > 0:
        u += lam * tv_smoothed_grad(phi, eps)
    if mu > 0:
        u += (2.0 * mu / phi.size) * (float(phi.mean()) - m0)
    return u


def dip_loss_grad(params: NetworkParams, z: np.ndarray, g: np.ndarray, op: ForwardOperator,
                  dip_config: DipConfig, unet_config: UNetConfig) -> NetworkParams:
    """Parameter gradients of dip_loss via the adjoint and the network VJP."""
    phi, cache = _forward_with_cache(params, unet_config, z)
    eps = _resolve_tv_eps(dip_config, z)
    mu = dip_config.mean_penalty_mu or 0.0
    m0 = _resolve_m0(dip_config, z) if mu > 0 else 0.0
    _, r = _loss_terms(phi, g, op, dip_config.lam, eps, mu, m0)
    u = _upstream(phi, r, op, dip_config.lam, eps, mu, m0)
    grads, _ = _backward(params, unet_config, cache, u)
    return grads


def select_iterate(history: RunRecord, mode: str, burn_in: int = 40) -> int:
    """Index of the iterate chosen by the given selection mode."""
    n = len(history.objective)
    if n == 0:
        raise ConfigError("empty history")
    if mode == "fixed_cutoff":
        return n - 1
    if mode not in SELECTIONS:
        raise ConfigError(f"unknown selection mode {mode!r}")
    psnr = np.asarray(history.psnr, dtype=float)
    if psnr.size != n or np.isnan(psnr).any():
        raise ConfigError("PSNR history required for PSNR-based selection")
    if mode == "early_stop_psnr":
        return int(np.argmax(psnr))
    if burn_in >= n:
        raise ConfigError("burn_in discards the whole history")
    return burn_in + int(np.argmax(psnr[burn_in:]))


def _optimize(g, z, op, dip_config, unet_config, gt):
    g = op._check_data(g)
    z = np.asarray(z, dtype=float)
    if z.shape != op.grid.shape:
        raise ConfigError("z shape does not match the reconstruction grid")
    if gt is None and dip_config.selection != "fixed_cutoff":
        raise ConfigError(f"selection {dip_config.selection!r} needs a ground truth")

    eps = _resolve_tv_eps(dip_config, z)
    mu = dip_config.mean_penalty_mu or 0.0
    m0 = _resolve_m0(dip_config, z) if mu > 0 else 0.0
    lam = dip_config.lam

    params = unet_init(unet_config, z.shape)
    state = AdamState()
    rec = RunRecord()

    # strict > keeps the first maximum, matching select_iterate's argmax
    best_all: list = [-math.inf, 0, None]
    best_burn: list = [-math.inf, 0, None]

    def record(t: int, phi: np.ndarray, loss: float):
        rec.iteration.append(t)
        rec.objective.append(loss)
        if gt is None:
            rec.psnr.append(float("nan"))
            rec.ssim.append(float("nan"))
            return
        p = iqa.psnr(phi, gt)
        rec.psnr.append(p)
        rec.ssim.append(iqa.ssim(phi, gt))
        if p > best_all[0]:
            best_all[:] = [p, t, phi.copy()]
        if t >= dip_config.burn_in and p > best_burn[0]:
            best_burn[:] = [p, t, phi.copy()]

    for t in range(dip_config.max_iter):
        phi, cache = _forward_with_cache(params, unet_config, z)
        loss, r = _loss_terms(phi, g, op, lam, eps, mu, m0)
        record(t, phi, loss)
        u = _upstream(phi, r, op, lam, eps, mu, m0)
        grads, _ = _backward(params, unet_config, cache, u)
        adam_step(params, grads, state, cosine_lr(t, dip_config.max_iter, dip_config.lr0),
                  dip_config.adam_betas, dip_config.adam_eps)

    phi_final, _ = _forward_with_cache(params, unet_config, z)
    loss_final, _ = _loss_terms(phi_final, g, op, lam, eps, mu, m0)
    record(dip_config.max_iter, phi_final, loss_final)

    rec.iterations_run = dip_config.max_iter

    choices: dict[str, tuple[int, np.ndarray]] = {"fixed_cutoff": (dip_config.max_iter, phi_final)}
    if gt is not None:
        choices["early_stop_psnr"] = (best_all[1], best_all[2])
        choices["converged_psnr"] = (best_burn[1], best_burn[2])
    return choices, rec


def dip_reconstruct(g: np.ndarray, z: np.ndarray, op: ForwardOperator,
                    dip_config: DipConfig, unet_config: UNetConfig,
                    gt: np.ndarray | None = None) -> tuple[np.ndarray, RunRecord]:
    """Optimize the network on one measurement and return the selected iterate.

    Per-iteration loss (and PSNR/SSIM when ``gt`` is given) are recorded
    before each update, so entry 0 describes the freshly initialized network
    and entry max_iter the final iterate.  Deterministic for fixed seeds and
    thread counts.
    """
    with threadpool_limits(limits=1):
        choices, rec = _optimize(g, z, op, dip_config, unet_config, gt)
    idx, img = choices[dip_config.selection]
    rec.selected_index = idx
    return img, rec


def dip_reconstruct_all(g: np.ndarray, z: np.ndarray, op: ForwardOperator,
                        dip_config: DipConfig, unet_config: UNetConfig,
                        gt: np.ndarray) -> tuple[dict[str, tuple[int, np.ndarray]], RunRecord]:
    """Run one optimization and return every selection rule's iterate.

    The mapping has one ``(index, image)`` entry per selection mode, all taken
    from the same training trajectory, so comparing stopping rules costs a
    single run.
    """
    with threadpool_limits(limits=1):
        return _optimize(g, z, op, dip_config, unet_config, gt)
