"""Interactive convolutional network: forward pass and its reverse-mode gradient.

Arrays carry a leading batch axis throughout: demand ``(B, N, T)``, weather
``(B, N_w, T)``.  Each ``*_forward`` returns its output and a cache; the
matching ``*_backward`` consumes the cache and an upstream gradient.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataset import FEATURE_GROUPS, check_window
from .errors import ConfigError, DimensionError

MODULE_NAMES = ("a", "b", "c", "d")


@dataclass(frozen=True)
class IcnConfig:
    n_areas: int
    window: int
    horizon: int = 1
    n_weather: int = 3
    channels: tuple[str, ...] = FEATURE_GROUPS
    k1: int = 5
    k2: int = 3
    hidden_scale: float = 0.5
    levels: int = 2
    dropout: float = 0.5
    leaky_slope: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.n_areas < 2:
            raise ConfigError("need at least 2 areas")
        if self.horizon < 1 or self.n_weather < 0:
            raise ConfigError("horizon must be >= 1 and n_weather >= 0")
        check_window(self.window, self.levels)
        for name in ("k1", "k2"):
            k = getattr(self, name)
            if k < 1 or k % 2 == 0:
                raise ConfigError(f"{name}={k} must be a positive odd kernel width")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout={self.dropout} must lie in [0, 1)")
        if self.hidden_scale <= 0:
            raise ConfigError("hidden_scale must be positive")
        bad = set(self.channels) - set(FEATURE_GROUPS)
        if bad or len(set(self.channels)) != len(self.channels):
            raise ConfigError(f"invalid dilation channels {self.channels}")

    @property
    def n_channels(self) -> int:
        return 1 + len(self.channels)

    @property
    def hidden(self) -> int:
        return max(1, int(math.floor(self.n_areas * self.hidden_scale + 0.5)))

    @property
    def use_weather(self) -> bool:
        return self.n_weather > 0

    @property
    def n_blocks(self) -> int:
        return 2**self.levels - 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "IcnConfig":
        return cls(**{**d, "channels": tuple(d["channels"])})

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def without(self, component: str) -> "IcnConfig":
        """Config with one dilation channel or the weather branch removed."""
        if component == "weather":
            if not self.use_weather:
                raise ConfigError("weather is already disabled")
            return replace(self, n_weather=0)
        if component not in self.channels:
            raise ConfigError(f"cannot ablate {component!r}; channels are {self.channels}")
        return replace(self, channels=tuple(c for c in self.channels if c != component))


def param_shapes(cfg: IcnConfig) -> dict[str, tuple[int, ...]]:
    C, N, H = cfg.n_channels, cfg.n_areas, cfg.hidden
    shapes = {}
    for b in range(cfg.n_blocks):
        for m in MODULE_NAMES:
            p = f"block{b}.{m}."
            shapes[p + "demand_w"] = (H, C, N, cfg.k1)
            shapes[p + "demand_b"] = (H,)
            if cfg.use_weather:
                shapes[p + "weather_w"] = (H, C, cfg.n_weather, cfg.k1)
                shapes[p + "weather_b"] = (H,)
            shapes[p + "out_w"] = (N, H, cfg.k2)
            shapes[p + "out_b"] = (N,)
    shapes["fc.w"] = (cfg.horizon, cfg.window)
    shapes["fc.b"] = (cfg.horizon,)
    return shapes


def param_count(cfg: IcnConfig) -> int:
    C, N, H, Nw = cfg.n_channels, cfg.n_areas, cfg.hidden, cfg.n_weather
    per_module = H * (C * N * cfg.k1 + 1) + N * (H * cfg.k2 + 1)
    if cfg.use_weather:
        per_module += H * (C * Nw * cfg.k1 + 1)
    return 4 * cfg.n_blocks * per_module + cfg.horizon * (cfg.window + 1)


@dataclass
class IcnParams:
    config: IcnConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        shapes = param_shapes(self.config)
        if list(self.arrays) != list(shapes):
            raise DimensionError(
                f"parameter names do not match the config: {sorted(set(self.arrays) ^ set(shapes))}"
            )
        for k, s in shapes.items():
            if self.arrays[k].shape != s:
                raise DimensionError(f"{k}: shape {self.arrays[k].shape} != {s}")

    def __getitem__(self, k):
        return self.arrays[k]

    @property
    def dtype(self):
        return self.arrays["fc.w"].dtype

    def module(self, block: int, name: str) -> dict[str, np.ndarray]:
        p = f"block{block}.{name}."
        return {k[len(p):]: v for k, v in self.arrays.items() if k.startswith(p)}

    def copy(self) -> "IcnParams":
        return IcnParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def astype(self, dtype) -> "IcnParams":
        return IcnParams(self.config, {k: v.astype(dtype) for k, v in self.arrays.items()})

    def size(self) -> int:
        return sum(v.size for v in self.arrays.values())


def init_params(cfg: IcnConfig, seed: int = 0, dtype=np.float32) -> IcnParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) kernels and biases; FC bias zero."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in param_shapes(cfg).items():
        kind = name.rsplit(".", 1)[-1]
        if name == "fc.b":
            arrays[name] = np.zeros(shape, dtype=dtype)
            continue
        if kind.endswith("_w") or name == "fc.w":
            fan_in = int(np.prod(shape[1:]))
        else:
            wshape = param_shapes(cfg)[name[:-1] + "w"]
            fan_in = int(np.prod(wshape[1:]))
        bound = 1.0 / math.sqrt(fan_in)
        arrays[name] = rng.uniform(-bound, bound, shape).astype(dtype)
    return IcnParams(cfg, arrays)


def zero_conv_params(cfg: IcnConfig, dtype=np.float64) -> IcnParams:
    """All conv weights and biases zero (the tree becomes the identity); FC zero too."""
    return IcnParams(cfg, {k: np.zeros(s, dtype=dtype) for k, s in param_shapes(cfg).items()})


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def _im2col(xt: np.ndarray, k: int) -> np.ndarray:
    """Time-major (B, T+k-1, F) -> (B, T, F*k), columns ordered (feature, tap)."""
    v = sliding_window_view(xt, k, axis=1)  # (B, T, F, k)
    return np.ascontiguousarray(v).reshape(v.shape[0], v.shape[1], -1)


def _col2im(dz: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the padded time-major input of ``_im2col(.) @ w.reshape(H, -1).T``.

    dz: (B, T, H); w: (H, F, k) -> (B, T+k-1, F)
    """
    B, T, _ = dz.shape
    F, k = w.shape[1], w.shape[2]
    out = np.zeros((B, T + k - 1, F), dtype=dz.dtype)
    for j in range(k):
        out[:, j : j + T] += dz @ w[:, :, j]
    return out


def _pad_time(xt: np.ndarray, p: int) -> np.ndarray:
    """Replicate-pad axis 1 of a time-major array."""
    if p == 0:
        return xt
    return np.concatenate([np.repeat(xt[:, :1], p, axis=1), xt, np.repeat(xt[:, -1:], p, axis=1)], axis=1)


def _unpad_time(g: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return g
    out = g[:, p:-p].copy()
    out[:, 0] += g[:, :p].sum(axis=1)
    out[:, -1] += g[:, -p:].sum(axis=1)
    return out


def scatter_matrix(gather: np.ndarray, dtype=np.float64) -> np.ndarray:
    """(C*N, N) one-hot map from dilated rows to their source rows."""
    C, N = gather.shape
    S = np.zeros((C * N, N), dtype=dtype)
    S[np.arange(C * N), gather.reshape(-1)] = 1.0
    return S


def split_even_odd(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split the last (time) axis into 0-based even and odd positions."""
    if s.shape[-1] % 2:
        raise DimensionError(f"cannot split an odd-length sequence (T={s.shape[-1]})")
    return s[..., 0::2], s[..., 1::2]


def interleave(even: np.ndarray, odd: np.ndarray) -> np.ndarray:
    if even.shape != odd.shape:
        raise DimensionError(f"interleave: {even.shape} vs {odd.shape}")
    out = np.empty(even.shape[:-1] + (2 * even.shape[-1],), dtype=np.result_type(even, odd))
    out[..., 0::2] = even
    out[..., 1::2] = odd
    return out


def split_tree(s: np.ndarray, levels: int) -> list[np.ndarray]:
    """``levels`` rounds of even/odd splitting; leaves in tree order (even branch first)."""
    leaves = [s]
    for _ in range(levels):
        leaves = [part for leaf in leaves for part in split_even_odd(leaf)]
    return leaves


def realign(leaves: Sequence[np.ndarray]) -> np.ndarray:
    """Inverse of ``split_tree``: interleave sibling pairs bottom-up."""
    n = len(leaves)
    if n == 0 or n & (n - 1):
        raise DimensionError(f"realign needs 2^L leaves, got {n}")
    if len({leaf.shape for leaf in leaves}) != 1:
        raise DimensionError("realign: leaves differ in shape")
    level = list(leaves)
    while len(level) > 1:
        level = [interleave(level[i], level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


# ---------------------------------------------------------------------------
# convolution module
# ---------------------------------------------------------------------------


def conv_module_forward(p, x, w, gather, cfg: IcnConfig, train=False, rng=None):
    """One convolution module.  ``gather`` is the (C, N) dilation index.

    Returns ``(y, cache)`` with ``y`` of shape ``(B, N, T_s)`` in (-1, 1).

    The dilated input ``x[:, gather]`` is only ever hit by the demand kernels,
    so the kernel slices that read the same source row are summed first and
    the convolution runs on ``x`` itself.  The result equals convolving the
    C-channel dilated tensor.  Weather is copied onto all C channels, so its
    kernels are summed over the channel axis in the same way.
    """
    B, N, T = x.shape
    if N != cfg.n_areas or gather.shape != (cfg.n_channels, N):
        raise DimensionError(f"conv module: demand {x.shape} / dilation {gather.shape} vs config")
    if cfg.use_weather and w.shape != (B, cfg.n_weather, T):
        raise DimensionError(f"conv module: weather {w.shape} != {(B, cfg.n_weather, T)}")
    H, C = cfg.hidden, cfg.n_channels
    p1, p2 = (cfg.k1 - 1) // 2, (cfg.k2 - 1) // 2

    S = scatter_matrix(gather, x.dtype)
    wd = p["demand_w"].reshape(H, C * N, cfg.k1)
    wd_eff = np.einsum("rm,hrk->hmk", S, wd)  # (H, N, k1)
    col_d = _im2col(_pad_time(x.transpose(0, 2, 1), p1), cfg.k1)  # (B, T, N*k1)
    z = col_d @ wd_eff.reshape(H, -1).T + p["demand_b"]  # (B, T, H)
    col_w = None
    if cfg.use_weather:
        ww_eff = p["weather_w"].sum(axis=1)  # (H, N_w, k1)
        col_w = _im2col(_pad_time(w.transpose(0, 2, 1), p1), cfg.k1)
        z = z + col_w @ ww_eff.reshape(H, -1).T + p["weather_b"]
    a = np.where(z > 0, z, cfg.leaky_slope * z)
    mask = None
    if train and cfg.dropout > 0:
        keep = rng.random(a.shape) >= cfg.dropout
        mask = keep.astype(a.dtype) / a.dtype.type(1.0 - cfg.dropout)
        a = a * mask
    col_o = _im2col(_pad_time(a, p2), cfg.k2)  # (B, T, H*k2)
    o = col_o @ p["out_w"].reshape(N, -1).T + p["out_b"]  # (B, T, N)
    y = np.tanh(o)
    cache = (col_d, col_w, z, mask, col_o, y, S, wd_eff)
    return y.transpose(0, 2, 1), cache


def conv_module_backward(p, dy, cache, cfg: IcnConfig):
    """Returns ``(dx, grads)``; weather is data, so no gradient flows to it."""
    col_d, col_w, z, mask, col_o, y, S, wd_eff = cache
    H, C, N = cfg.hidden, cfg.n_channels, cfg.n_areas
    p1, p2 = (cfg.k1 - 1) // 2, (cfg.k2 - 1) // 2
    B, T = y.shape[:2]
    g = {}

    do = dy.transpose(0, 2, 1) * (1.0 - y * y)  # (B, T, N)
    do2 = do.reshape(B * T, N)
    g["out_w"] = (do2.T @ col_o.reshape(B * T, -1)).reshape(N, H, cfg.k2)
    g["out_b"] = do2.sum(axis=0)
    da = _unpad_time(_col2im(do, p["out_w"]), p2)  # (B, T, H)
    if mask is not None:
        da = da * mask
    dz = da * np.where(z > 0, 1.0, cfg.leaky_slope).astype(da.dtype)
    dz2 = dz.reshape(B * T, H)

    dwd_eff = (dz2.T @ col_d.reshape(B * T, -1)).reshape(H, N, cfg.k1)
    # every dilated kernel slice receives the gradient of the source row it reads
    g["demand_w"] = np.einsum("rm,hmk->hrk", S, dwd_eff).reshape(H, C, N, cfg.k1)
    g["demand_b"] = dz2.sum(axis=0)
    if cfg.use_weather:
        dww = (dz2.T @ col_w.reshape(B * T, -1)).reshape(H, 1, cfg.n_weather, cfg.k1)
        g["weather_w"] = np.repeat(dww, C, axis=1)
        g["weather_b"] = g["demand_b"].copy()
    g = {k: g[k] for k in p}
    dx = _unpad_time(_col2im(dz, wd_eff), p1).transpose(0, 2, 1)
    return dx, g


# ---------------------------------------------------------------------------
# interactive convolution block and tree
# ---------------------------------------------------------------------------


def ic_block_forward(mods, s, w, gather, cfg, train=False, rng=None):
    """``mods`` maps 'a'..'d' to conv-module parameters."""
    s1, s2 = split_even_odd(s)
    w1, w2 = split_even_odd(w)
    ya, ca = conv_module_forward(mods["a"], s2, w2, gather, cfg, train, rng)
    yb, cb = conv_module_forward(mods["b"], s1, w1, gather, cfg, train, rng)
    ea, eb = np.exp(ya), np.exp(yb)
    s1p = s1 * ea
    s2p = s2 * eb
    yc, cc = conv_module_forward(mods["c"], s2p, w2, gather, cfg, train, rng)
    yd, cd = conv_module_forward(mods["d"], s1p, w1, gather, cfg, train, rng)
    out1 = s1p + yc
    out2 = s2p - yd
    return (out1, out2), (s1p, s2p, ea, eb, ca, cb, cc, cd)


def ic_block_backward(mods, d1, d2, cache, cfg):
    s1p, s2p, ea, eb, ca, cb, cc, cd = cache
    grads = {}
    ds1p = d1.copy()
    ds2p = d2.copy()
    dx, grads["c"] = conv_module_backward(mods["c"], d1, cc, cfg)
    ds2p += dx
    dx, grads["d"] = conv_module_backward(mods["d"], -d2, cd, cfg)
    ds1p += dx
    ds1 = ds1p * ea
    ds2 = ds2p * eb
    dx, grads["a"] = conv_module_backward(mods["a"], ds1p * s1p, ca, cfg)
    ds2 += dx
    dx, grads["b"] = conv_module_backward(mods["b"], ds2p * s2p, cb, cfg)
    ds1 += dx
    return interleave(ds1, ds2), grads


def _block_modules(params: IcnParams, b: int) -> dict:
    return {m: params.module(b, m) for m in MODULE_NAMES}


def tree_forward(params: IcnParams, x, w, gather, train=False, rng=None):
    """Binary tree of IC blocks followed by realignment (no residual)."""
    cfg = params.config
    caches = {}
    nodes = {0: (x, w)}
    leaves = []
    for b in range(cfg.n_blocks):  # heap order: children of b are 2b+1, 2b+2
        s, ws = nodes.pop(b)
        (o1, o2), caches[b] = ic_block_forward(_block_modules(params, b), s, ws, gather, cfg, train, rng)
        w1, w2 = split_even_odd(ws)
        if 2 * b + 1 < cfg.n_blocks:
            nodes[2 * b + 1] = (o1, w1)
            nodes[2 * b + 2] = (o2, w2)
        else:
            leaves += [o1, o2]
    return realign(leaves), caches


def tree_backward(params: IcnParams, dr, caches):
    cfg = params.config
    grads = {}
    leaf_grads = split_tree(dr, cfg.levels)
    first_leaf_block = 2 ** (cfg.levels - 1) - 1
    pending = {}
    for k, b in enumerate(range(first_leaf_block, cfg.n_blocks)):
        pending[b] = (leaf_grads[2 * k], leaf_grads[2 * k + 1])
    for b in reversed(range(cfg.n_blocks)):
        d1, d2 = pending.pop(b)
        ds, gb = ic_block_backward(_block_modules(params, b), d1, d2, caches[b], cfg)
        for m, gm in gb.items():
            for k, v in gm.items():
                grads[f"block{b}.{m}.{k}"] = v
        if b > 0:
            parent = (b - 1) // 2
            pending.setdefault(parent, [None, None])[(b - 1) % 2] = ds
    return grads


def _prepare(params: IcnParams, x, w):
    cfg = params.config
    dt = params.dtype
    x = np.asarray(x, dtype=dt)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.shape[1:] != (cfg.n_areas, cfg.window):
        raise DimensionError(f"input window {x.shape[1:]} != {(cfg.n_areas, cfg.window)}")
    if cfg.use_weather:
        w = np.asarray(w, dtype=dt)
        if w.ndim == 2:
            w = w[None]
        if w.shape != (x.shape[0], cfg.n_weather, cfg.window):
            raise DimensionError(f"weather window {w.shape} != {(x.shape[0], cfg.n_weather, cfg.window)}")
    else:
        w = np.zeros((x.shape[0], 0, cfg.window), dtype=dt)
    return x, w, squeeze


def icn_forward(params: IcnParams, x, w, gather, train=False, rng=None, return_cache=False):
    """Prediction ``(B, N, M)`` on the normalized scale (or ``(N, M)`` for a single window)."""
    x, w, squeeze = _prepare(params, x, w)
    gather = np.asarray(gather, dtype=np.intp)
    r, caches = tree_forward(params, x, w, gather, train, rng)
    r = r + x
    pred = r @ params["fc.w"].T + params["fc.b"]
    if squeeze:
        pred = pred[0]
    if return_cache:
        return pred, (r, caches)
    return pred


def icn_backward(params: IcnParams, dpred, cache) -> dict[str, np.ndarray]:
    """Gradients of a scalar whose derivative w.r.t. the (B, N, M) prediction is ``dpred``."""
    r, caches = cache
    grads = {}
    tree_g = tree_backward(params, dpred @ params["fc.w"], caches)
    grads.update(tree_g)
    grads["fc.w"] = np.tensordot(dpred, r, axes=([0, 1], [0, 1]))
    grads["fc.b"] = dpred.sum(axis=(0, 1))
    return {k: grads[k] for k in params.arrays}
