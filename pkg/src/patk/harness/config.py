"""Experiment configuration: key=value parsing, validation, echo round-trip.

The on-disk format is one ``key=value`` per line with ``#`` comments.  The
``echo`` serialization is sorted and normalized so that a run directory's
``config.echo`` re-parses to an equivalent configuration (closure property),
and equal configs produce byte-identical echoes.
"""

import math
from dataclasses import dataclass, fields, replace

from ..dipnet import DipConfig, UNetConfig
from ..errors import ConfigError
from ..geometry import Grid, TimeAxis, make_ring, subsample_arc
from ..pdhg import PdhgConfig
from ..waveop import default_time_axis
from .phantoms import KINDS

_METHODS = ("tv", "dip", "both")
_INIT_MODES = ("normalized_adjoint", "time_reversal")


@dataclass
class ExperimentConfig:
    """All knobs of one simulated experiment.

    Zero means "auto" for n_active (all detectors), n_t/dt (derived time
    axis), tv_eps (scaled to z), and mean_penalty_mu (penalty off).  A
    negative roi_threshold selects the full-image ROI; mean_penalty_m0 nan
    defaults to mean(z).
    """

    outdir: str = "out"
    nx: int = 128
    fine_factor: int = 2
    extent: float = 0.1
    c: float = 1500.0
    pad_factor: int = 3
    ring_radius: float = 0.04
    n_detectors: int = 128
    device_arc_deg: float = 270.0
    arc_center_deg: float = 270.0
    n_active: int = 0
    n_t: int = 0
    dt: float = 0.0
    noise_eta: float = 0.1
    seed_phantom: int = 1
    seed_noise: int = 2
    seed_network: int = 3
    phantom: str = "disks"
    support_frac: float = 0.8
    roi_threshold: float = -1.0
    method: str = "both"
    init_mode: str = "normalized_adjoint"
    alpha: float = 0.05
    tv_max_iter: int = 1000
    tv_tol: float = 1e-4
    step_ratio: float = 1.0
    tv_variant: str = "nonneg"
    tv_mu: float = 1.0
    tv_m0: float = 0.0
    lam: float = 0.1
    lr0: float = 5e-4
    dip_max_iter: int = 400
    burn_in: int = 40
    dip_selection: str = "early_stop_psnr"
    tv_eps: float = 0.0
    head: str = "conv3x3_relu"
    channels: tuple[int, ...] = (32, 64, 128, 256)
    mean_penalty_mu: float = 0.0
    mean_penalty_m0: float = math.nan
    record_timings: bool = False
    record_metrics_every: int = 1

    def validate(self) -> None:
        if self.fine_factor < 2:
            raise ConfigError("fine_factor must be >= 2 (inverse-crime guard)")
        if self.method not in _METHODS:
            raise ConfigError(f"method must be one of {_METHODS}")
        if self.init_mode not in _INIT_MODES:
            raise ConfigError(f"init_mode must be one of {_INIT_MODES}")
        if self.phantom not in KINDS:
            raise ConfigError(f"phantom must be one of {KINDS}")
        if not 0.0 <= self.noise_eta < 1.0:
            raise ConfigError("noise_eta must lie in [0, 1)")
        if self.roi_threshold >= 1.0:
            raise ConfigError("roi_threshold must be below 1")
        if not 0.0 < self.support_frac < 1.0:
            raise ConfigError("support_frac must lie in (0, 1)")
        if (self.n_t > 0) != (self.dt > 0):
            raise ConfigError("set both n_t and dt, or neither")
        # constructing the value objects runs their own validation
        self.recon_grid()
        self.fine_grid()
        self.ring()
        self.time_axis()
        self.pdhg_config()
        self.dip_config()
        self.unet_config()

    # ---- builders -------------------------------------------------------
    def recon_grid(self) -> Grid:
        return Grid(self.nx, self.nx, self.extent / self.nx, self.c, self.pad_factor)

    def fine_grid(self) -> Grid:
        n = self.nx * self.fine_factor
        return Grid(n, n, self.extent / n, self.c, self.pad_factor)

    def ring(self):
        ring = make_ring(self.ring_radius, self.n_detectors,
                         self.device_arc_deg, self.arc_center_deg)
        if self.n_active:
            ring = subsample_arc(ring, self.n_active)
        return ring

    def time_axis(self) -> TimeAxis:
        if self.n_t > 0:
            return TimeAxis(self.n_t, self.dt)
        return default_time_axis(self.recon_grid())

    def support_radius(self) -> float:
        return self.support_frac * self.ring_radius

    def pdhg_config(self) -> PdhgConfig:
        return PdhgConfig(alpha=self.alpha, max_iter=self.tv_max_iter, tol=self.tv_tol,
                          step_ratio=self.step_ratio, variant=self.tv_variant,
                          mu=self.tv_mu, m0=self.tv_m0,
                          record_metrics_every=self.record_metrics_every)

    def dip_config(self) -> DipConfig:
        return DipConfig(lam=self.lam, lr0=self.lr0, max_iter=self.dip_max_iter,
                         tv_eps=self.tv_eps if self.tv_eps > 0 else None,
                         mean_penalty_mu=self.mean_penalty_mu if self.mean_penalty_mu > 0 else None,
                         mean_penalty_m0=None if math.isnan(self.mean_penalty_m0) else self.mean_penalty_m0,
                         selection=self.dip_selection, burn_in=self.burn_in)

    def unet_config(self) -> UNetConfig:
        return UNetConfig(channels=self.channels, head=self.head,
                          init_seed=self.seed_network)


def _coerce(name: str, kind: type, raw: str):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        # tuple of ints (channels)
        return tuple(int(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config_text(text: str) -> dict[str, str]:
    """key=value lines -> dict; '#' starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key=value, got {line!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


_DEFAULTS = ExperimentConfig()


def make_config(kv: dict[str, str], base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply string key=value pairs on top of ``base`` (or the defaults)."""
    cfg = base if base is not None else ExperimentConfig()
    types = {f.name: type(getattr(_DEFAULTS, f.name))
             for f in fields(ExperimentConfig)}
    updates = {}
    for key, raw in kv.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        updates[key] = _coerce(key, types[key], raw)
    cfg = replace(cfg, **updates)
    cfg.validate()
    return cfg


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def echo_config(cfg: ExperimentConfig) -> str:
    lines = [f"{f.name}={_fmt(getattr(cfg, f.name))}" for f in fields(ExperimentConfig)]
    return "\n".join(sorted(lines)) + "\n"
