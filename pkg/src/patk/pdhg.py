"""Primal-dual hybrid gradient (Chambolle-Pock) solver for TV-regularized
least squares,

    min_f  0.5*||A f - g||^2 + alpha * TV(f)   subject to f >= 0,

or, in the mean-penalty variant, with the constraint replaced by a quadratic
penalty on the mean intensity.  Dual variables are kept for the data term
and the TV term separately; over-relaxation uses theta = 1.
"""

from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from . import iqa
from .errors import ConfigError
from .records import RunRecord
from .variational import grad, neg_div, project_dual_ball, prox_l2_dual, prox_primal, tv
from .waveop import ForwardOperator

# safety factor applied to the power-iteration norm estimate so that
# tau*sigma*L^2 <= 1 holds even if the iteration stopped slightly short
_L_SAFETY = 1.01


@dataclass
class PdhgConfig:
    alpha: float
    max_iter: int = 1000
    tol: float = 1e-4
    step_ratio: float = 1.0
    variant: str = "nonneg"
    mu: float = 1.0
    m0: float = 0.0
    record_metrics_every: int = 1
    L: float | None = None

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if self.step_ratio <= 0:
            raise ConfigError("step_ratio must be positive")
        if self.variant not in ("nonneg", "mean_penalty"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.record_metrics_every < 1:
            raise ConfigError("record_metrics_every must be at least 1")


def objective(f: np.ndarray, g: np.ndarray, op: ForwardOperator, alpha: float) -> float:
    """Primal objective 0.5*||Af - g||^2 + alpha*tv(f)."""
    r = op.forward(f) - g
    return 0.5 * float(np.vdot(r, r).real) + alpha * tv(f)


def solve(g: np.ndarray, op: ForwardOperator, config: PdhgConfig,
          gt: np.ndarray | None = None) -> tuple[np.ndarray, RunRecord]:
    """Run PDHG until the relative iterate change drops below config.tol.

    Records the primal objective, relative change, the running-average
    (ergodic) iterate's objective, and PSNR/SSIM against ``gt`` when given,
    every ``record_metrics_every`` iterations.  Non-convergence within
    max_iter is reported through RunRecord.converged, not an error.
    """
    with threadpool_limits(limits=1):
        return _solve(g, op, config, gt)


def _solve(g, op, config, gt):
    g = op._check_data(g)
    if np.any(g[~op.ring.active]):
        raise ConfigError("data rows of inactive detectors must be zero")

    L = config.L if config.L is not None else op.norm(composite_with_gradient=True)
    L = L * _L_SAFETY
    tau = np.sqrt(config.step_ratio) / L
    sigma = 1.0 / (np.sqrt(config.step_ratio) * L)

    f = np.zeros(op.grid.shape)
    f_bar = f
    af = np.zeros_like(g)
    af_bar = af
    y = np.zeros_like(g)
    v = np.zeros((2,) + op.grid.shape)

    # running sums for the ergodic (averaged) iterate; A(mean f) = mean(Af)
    f_sum = np.zeros_like(f)
    af_sum = np.zeros_like(g)

    rec = RunRecord()
    converged = False
    k = 0
    for k in range(1, config.max_iter + 1):
        y = prox_l2_dual(y + sigma * af_bar, sigma, g)
        v = project_dual_ball(v + sigma * grad(f_bar), config.alpha)
        f_new = prox_primal(f - tau * (op.adjoint(y) + neg_div(v)), tau,
                            config.variant, mu=config.mu, m0=config.m0)
        af_new = op.forward(f_new)
        f_bar = 2.0 * f_new - f
        af_bar = 2.0 * af_new - af

        nf = float(np.linalg.norm(f_new))
        nd = float(np.linalg.norm(f_new - f))
        rel = 0.0 if nd == 0.0 else (np.inf if nf == 0.0 else nd / nf)
        f, af = f_new, af_new
        f_sum += f
        af_sum += af

        if k % config.record_metrics_every == 0 or rel <= config.tol or k == config.max_iter:
            r = af - g
            rec.iteration.append(k)
            rec.objective.append(0.5 * float(np.vdot(r, r).real) + config.alpha * tv(f))
            rec.rel_change.append(rel)
            r_avg = af_sum / k - g
            rec.ergodic_objective.append(
                0.5 * float(np.vdot(r_avg, r_avg).real) + config.alpha * tv(f_sum / k))
            if gt is not None:
                rec.psnr.append(iqa.psnr(f, gt))
                rec.ssim.append(iqa.ssim(f, gt))
            else:
                rec.psnr.append(float("nan"))
                rec.ssim.append(float("nan"))

        if rel <= config.tol:
            converged = True
            break

    rec.iterations_run = k
    rec.converged = converged
    return f, rec
