"""Encoder-decoder network with skip connections, written directly in numpy
with hand-coded reverse-mode differentiation.

The architecture follows the usual U-Net pattern: len(channels) encoder
stages of two [3x3 conv -> per-channel norm -> ReLU] blocks with 2x2 max
pooling between stages (the deepest stage is the bottleneck, so there are
len(channels)-1 pooling steps), then mirrored decoder stages of [2x2
transposed conv -> skip concat -> two conv blocks], and a 1-channel head.
Normalization always uses the statistics of the single current input
(training-mode batch of one); there are no running averages.

Parameters live in a plain ordered dict name -> float64 array, which keeps
the optimizer generic and the gradient checks straightforward.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError

HEADS = ("conv3x3_relu", "conv1x1_nobias_leakyrelu", "conv1x1_nobias_linear")
LEAKY_SLOPE = 0.125

NetworkParams = dict[str, np.ndarray]


@dataclass(frozen=True)
class UNetConfig:
    channels: tuple[int, ...] = (32, 64, 128, 256)
    conv_kernel: int = 3
    pool: int = 2
    head: str = "conv3x3_relu"
    norm_eps: float = 1e-5
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if len(self.channels) < 2:
            raise ConfigError("need at least two channel stages")
        if any(b <= a for a, b in zip(self.channels, self.channels[1:])):
            raise ConfigError("channels must be strictly increasing")
        if self.conv_kernel != 3:
            raise ConfigError("conv_kernel is fixed at 3")
        if self.pool != 2:
            raise ConfigError("pool is fixed at 2")
        if self.head not in HEADS:
            raise ConfigError(f"head must be one of {HEADS}")
        if self.norm_eps <= 0:
            raise ConfigError("norm_eps must be positive")

    @property
    def n_pool(self) -> int:
        return len(self.channels) - 1


# ---------------------------------------------------------------------------
# primitive layers: each forward returns (output, context) and each backward
# consumes (upstream, context)

def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    ci, h, w = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))
    return win.transpose(1, 2, 0, 3, 4).reshape(h * w, ci * k * k)


def _conv_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray | None):
    co, ci, k, _ = w.shape
    _, h, wd = x.shape
    out = _im2col(x, k) @ w.reshape(co, -1).T
    if b is not None:
        out += b
    return np.ascontiguousarray(out.T).reshape(co, h, wd)


def _conv_bwd(u: np.ndarray, x: np.ndarray, w: np.ndarray, with_bias: bool):
    co, ci, k, _ = w.shape
    h, wd = x.shape[1:]
    um = u.reshape(co, h * wd)
    dw = (um @ _im2col(x, k)).reshape(co, ci, k, k)
    db = um.sum(axis=1) if with_bias else None
    # input gradient = same-padding convolution with the flipped, swapped kernel
    w_t = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    dx = _conv_fwd(u, w_t, None)
    return dx, dw, db


def _norm_fwd(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float):
    mu = x.mean(axis=(1, 2), keepdims=True)
    var = x.var(axis=(1, 2), keepdims=True)
    istd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * istd
    out = gamma[:, None, None] * xhat + beta[:, None, None]
    return out, (xhat, istd)


def _norm_bwd(u: np.ndarray, ctx, gamma: np.ndarray):
    xhat, istd = ctx
    dgamma = (u * xhat).sum(axis=(1, 2))
    dbeta = u.sum(axis=(1, 2))
    du = u * gamma[:, None, None]
    m1 = du.mean(axis=(1, 2), keepdims=True)
    m2 = (du * xhat).mean(axis=(1, 2), keepdims=True)
    dx = istd * (du - m1 - xhat * m2)
    return dx, dgamma, dbeta


def _pool_fwd(x: np.ndarray):
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ConfigError("pooling needs even spatial dimensions")
    xb = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
    idx = xb.argmax(axis=-1)  # first maximum wins on ties, deterministic
    out = np.take_along_axis(xb, idx[..., None], axis=-1)[..., 0]
    return out, (idx, (c, h, w))


def _pool_bwd(u: np.ndarray, ctx):
    idx, (c, h, w) = ctx
    zb = np.zeros((c, h // 2, w // 2, 4))
    np.put_along_axis(zb, idx[..., None], u[..., None], axis=-1)
    return zb.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h, w)


def _up_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    # 2x2 stride-2 transposed convolution: non-overlapping block expansion
    ci, h, wd = x.shape
    co = w.shape[1]
    out = np.tensordot(x, w, axes=([0], [0]))  # (h, wd, co, 2, 2)
    out = out.transpose(2, 0, 3, 1, 4).reshape(co, 2 * h, 2 * wd)
    return out + b[:, None, None]


def _up_bwd(u: np.ndarray, x: np.ndarray, w: np.ndarray):
    co, h2, w2 = u.shape
    ub = u.reshape(co, h2 // 2, 2, w2 // 2, 2).transpose(1, 3, 0, 2, 4)  # (h, wd, co, 2, 2)
    dw = np.tensordot(x, ub, axes=([1, 2], [0, 1]))
    dx = np.tensordot(ub, w, axes=([2, 3, 4], [1, 2, 3])).transpose(2, 0, 1)
    db = u.sum(axis=(1, 2))
    return dx, dw, db


def _relu_fwd(x):
    return np.maximum(x, 0.0), x


def _relu_bwd(u, x):
    return u * (x > 0.0)


def _leaky_fwd(x):
    return np.where(x > 0.0, x, LEAKY_SLOPE * x), x


def _leaky_bwd(u, x):
    return u * np.where(x > 0.0, 1.0, LEAKY_SLOPE)


# ---------------------------------------------------------------------------
# parameter bookkeeping

def _param_shapes(config: UNetConfig) -> dict[str, tuple]:
    ch = config.channels
    k = config.conv_kernel
    shapes: dict[str, tuple] = {}

    def block(prefix, c_in, c_out):
        shapes[f"{prefix}_conv1_w"] = (c_out, c_in, k, k)
        shapes[f"{prefix}_conv1_b"] = (c_out,)
        shapes[f"{prefix}_norm1_gamma"] = (c_out,)
        shapes[f"{prefix}_norm1_beta"] = (c_out,)
        shapes[f"{prefix}_conv2_w"] = (c_out, c_out, k, k)
        shapes[f"{prefix}_conv2_b"] = (c_out,)
        shapes[f"{prefix}_norm2_gamma"] = (c_out,)
        shapes[f"{prefix}_norm2_beta"] = (c_out,)

    c_in = 1
    for s, c in enumerate(ch):
        block(f"enc{s}", c_in, c)
        c_in = c
    for d in range(len(ch) - 2, -1, -1):
        shapes[f"up{d}_w"] = (ch[d + 1], ch[d], config.pool, config.pool)
        shapes[f"up{d}_b"] = (ch[d],)
        block(f"dec{d}", 2 * ch[d], ch[d])
    if config.head == "conv3x3_relu":
        shapes["head_w"] = (1, ch[0], k, k)
        shapes["head_b"] = (1,)
    else:
        shapes["head_w"] = (1, ch[0], 1, 1)
    return shapes


def unet_init(config: UNetConfig, input_shape: tuple[int, int]) -> NetworkParams:
    """Seeded Kaiming-style initialization; norm scales 1, shifts/biases 0."""
    h, w = input_shape
    div = config.pool ** config.n_pool
    if h % div or w % div:
        raise ConfigError(f"input sides must be divisible by {div}")
    rng = np.random.default_rng(config.init_seed)
    params: NetworkParams = {}
    for name, shape in _param_shapes(config).items():
        if name.endswith("_w"):
            fan_in = int(np.prod(shape[1:])) if name.startswith(("enc", "dec", "head")) else None
            if fan_in is None:  # transposed conv: fan-in is the input channel count x kernel
                fan_in = shape[0] * config.pool * config.pool
            params[name] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        elif name.endswith("gamma"):
            params[name] = np.ones(shape)
        else:  # biases and norm shifts start at zero
            params[name] = np.zeros(shape)
    return params


def parameter_count(config: UNetConfig) -> int:
    return sum(int(np.prod(s)) for s in _param_shapes(config).values())


# ---------------------------------------------------------------------------
# forward / backward

def _block_fwd(x, params, config, prefix, cache):
    for i in (1, 2):
        w = params[f"{prefix}_conv{i}_w"]
        b = params[f"{prefix}_conv{i}_b"]
        gamma = params[f"{prefix}_norm{i}_gamma"]
        beta = params[f"{prefix}_norm{i}_beta"]
        x_in = x
        x = _conv_fwd(x, w, b)
        x, nctx = _norm_fwd(x, gamma, beta, config.norm_eps)
        x, rctx = _relu_fwd(x)
        cache[f"{prefix}_{i}"] = (x_in, nctx, rctx)
    return x


def _block_bwd(u, params, grads, prefix, cache):
    for i in (2, 1):
        x_in, nctx, rctx = cache[f"{prefix}_{i}"]
        u = _relu_bwd(u, rctx)
        u, dgamma, dbeta = _norm_bwd(u, nctx, params[f"{prefix}_norm{i}_gamma"])
        grads[f"{prefix}_norm{i}_gamma"] = dgamma
        grads[f"{prefix}_norm{i}_beta"] = dbeta
        u, dw, db = _conv_bwd(u, x_in, params[f"{prefix}_conv{i}_w"], True)
        grads[f"{prefix}_conv{i}_w"] = dw
        grads[f"{prefix}_conv{i}_b"] = db
    return u


def _forward_with_cache(params: NetworkParams, config: UNetConfig, z: np.ndarray):
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise ConfigError("network input must be a 2-D image")
    div = config.pool ** config.n_pool
    if z.shape[0] % div or z.shape[1] % div:
        raise ConfigError(f"input sides must be divisible by {div}")
    cache: dict = {}
    x = z[None, :, :]
    skips = {}
    n = len(config.channels)
    for s in range(n):
        x = _block_fwd(x, params, config, f"enc{s}", cache)
        if s < n - 1:
            skips[s] = x
            x, pctx = _pool_fwd(x)
            cache[f"pool{s}"] = pctx
    for d in range(n - 2, -1, -1):
        cache[f"up{d}_in"] = x
        x = _up_fwd(x, params[f"up{d}_w"], params[f"up{d}_b"])
        x = np.concatenate([x, skips[d]], axis=0)
        x = _block_fwd(x, params, config, f"dec{d}", cache)

    cache["head_in"] = x
    head_w = params["head_w"]
    if config.head == "conv3x3_relu":
        pre = _conv_fwd(x, head_w, params["head_b"])
        out, hctx = _relu_fwd(pre)
    elif config.head == "conv1x1_nobias_leakyrelu":
        pre = _conv_fwd(x, head_w, None)
        out, hctx = _leaky_fwd(pre)
    else:
        out = _conv_fwd(x, head_w, None)
        hctx = None
    cache["head_ctx"] = hctx
    return out[0], cache


def _backward(params: NetworkParams, config: UNetConfig, cache: dict, upstream: np.ndarray):
    grads: NetworkParams = {}
    u = np.asarray(upstream, dtype=float)[None, :, :]
    if config.head == "conv3x3_relu":
        u = _relu_bwd(u, cache["head_ctx"])
        u, dw, db = _conv_bwd(u, cache["head_in"], params["head_w"], True)
        grads["head_w"] = dw
        grads["head_b"] = db
    elif config.head == "conv1x1_nobias_leakyrelu":
        u = _leaky_bwd(u, cache["head_ctx"])
        u, dw, _ = _conv_bwd(u, cache["head_in"], params["head_w"], False)
        grads["head_w"] = dw
    else:
        u, dw, _ = _conv_bwd(u, cache["head_in"], params["head_w"], False)
        grads["head_w"] = dw

    n = len(config.channels)
    skip_grads = {}
    for d in range(0, n - 1):
        u = _block_bwd(u, params, grads, f"dec{d}", cache)
        c_up = config.channels[d]
        u_up, u_skip = u[:c_up], u[c_up:]
        skip_grads[d] = u_skip
        u_up, dw, db = _up_bwd(u_up, cache[f"up{d}_in"], params[f"up{d}_w"])
        grads[f"up{d}_w"] = dw
        grads[f"up{d}_b"] = db
        u = u_up
    for s in range(n - 1, -1, -1):
        if s < n - 1:
            u = _pool_bwd(u, cache[f"pool{s}"])
            u = u + skip_grads[s]
        u = _block_bwd(u, params, grads, f"enc{s}", cache)
    return grads, u[0]


def unet_forward(params: NetworkParams, config: UNetConfig, z: np.ndarray) -> np.ndarray:
    """Network output for input image z; same shape as z."""
    out, _ = _forward_with_cache(params, config, z)
    return out


def unet_vjp(params: NetworkParams, config: UNetConfig, z: np.ndarray,
             upstream: np.ndarray) -> tuple[NetworkParams, np.ndarray]:
    """Gradients of <unet_forward(params, z), upstream> w.r.t. params and z."""
    out, cache = _forward_with_cache(params, config, z)
    if np.asarray(upstream).shape != out.shape:
        raise ConfigError("upstream shape must match the network output")
    return _backward(params, config, cache, upstream)
