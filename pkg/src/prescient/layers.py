"""Neural building blocks: dilated causal TCN stack, GRU, Transformer
encoder, mean pooling, and the dual (continuous/discrete) linear heads.

All forwards accept a single window (T, D) or a batch (B, T, D) and
return the matching rank. Parameters live in flat name->Tensor dicts;
the init_* functions produce the arrays in a deterministic order from a
caller-supplied RNG.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import ndtensor as nd
from .errors import ConfigError, ShapeError


@dataclass
class TcnConfig:
    in_features: int
    channels: int
    layers: int = 2
    kernel_size: int = 3
    dilations: list = field(default_factory=list)

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError(f"tcn layers must be >= 1, got {self.layers}")
        if self.kernel_size < 1:
            raise ConfigError(f"tcn kernel_size must be >= 1, got {self.kernel_size}")
        if self.channels < 1 or self.in_features < 1:
            raise ConfigError("tcn channels and in_features must be >= 1")
        if not self.dilations:
            self.dilations = [2**i for i in range(self.layers)]
        if len(self.dilations) != self.layers or any(d < 1 for d in self.dilations):
            raise ConfigError(f"bad dilation schedule {self.dilations} for {self.layers} layers")


@dataclass
class GruConfig:
    input_size: int
    hidden_size: int

    def __post_init__(self):
        if self.hidden_size < 1 or self.input_size < 1:
            raise ConfigError("gru sizes must be >= 1")


@dataclass
class TransformerConfig:
    model_dim: int
    heads: int = 2
    feedforward_dim: int = 0
    layers: int = 1
    positional_encoding: str = "sinusoidal"

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError(f"transformer layers must be >= 1, got {self.layers}")
        if self.model_dim % self.heads != 0:
            raise ConfigError(
                f"model_dim {self.model_dim} not divisible by heads {self.heads}"
            )
        if self.feedforward_dim <= 0:
            self.feedforward_dim = 4 * self.model_dim
        if self.positional_encoding not in ("none", "sinusoidal"):
            raise ConfigError(f"unknown positional_encoding {self.positional_encoding!r}")


# ---------------------------------------------------------------------------
# parameter initialization (uniform fan-in scaling, seeded)


def _uniform(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def init_tcn_params(cfg: TcnConfig, rng) -> dict:
    params = {}
    cin = cfg.in_features
    for i in range(cfg.layers):
        fan = cin * cfg.kernel_size
        params[f"tcn.{i}.w"] = _uniform(rng, (cfg.channels, cin, cfg.kernel_size), fan)
        params[f"tcn.{i}.b"] = _uniform(rng, (cfg.channels,), fan)
        if cin != cfg.channels:
            params[f"tcn.{i}.skip_w"] = _uniform(rng, (cfg.channels, cin, 1), cin)
        cin = cfg.channels
    return params


def init_gru_params(cfg: GruConfig, rng) -> dict:
    h = cfg.hidden_size
    return {
        "gru.w_ih": _uniform(rng, (cfg.input_size, 3 * h), cfg.input_size),
        "gru.w_hh": _uniform(rng, (h, 3 * h), h),
        "gru.b_ih": _uniform(rng, (3 * h,), h),
        "gru.b_hh": _uniform(rng, (3 * h,), h),
    }


def init_transformer_params(cfg: TransformerConfig, rng) -> dict:
    m, f = cfg.model_dim, cfg.feedforward_dim
    params = {}
    for i in range(cfg.layers):
        p = f"tf.{i}."
        for name in ("wq", "wk", "wv", "wo"):
            params[p + name] = _uniform(rng, (m, m), m)
        for name in ("bq", "bk", "bv", "bo"):
            params[p + name] = _uniform(rng, (m,), m)
        params[p + "ff_w1"] = _uniform(rng, (m, f), m)
        params[p + "ff_b1"] = _uniform(rng, (f,), m)
        params[p + "ff_w2"] = _uniform(rng, (f, m), f)
        params[p + "ff_b2"] = _uniform(rng, (m,), f)
        params[p + "ln1_g"] = np.ones(m)
        params[p + "ln1_b"] = np.zeros(m)
        params[p + "ln2_g"] = np.ones(m)
        params[p + "ln2_b"] = np.zeros(m)
    return params


def init_head_params(model_dim: int, horizon: int, n_cont: int, n_disc: int, rng) -> dict:
    params = {}
    if n_cont > 0:
        params["head.cont_w"] = _uniform(rng, (model_dim, horizon * n_cont), model_dim)
        params["head.cont_b"] = _uniform(rng, (horizon * n_cont,), model_dim)
    if n_disc > 0:
        params["head.disc_w"] = _uniform(rng, (model_dim, horizon * n_disc), model_dim)
        params["head.disc_b"] = _uniform(rng, (horizon * n_disc,), model_dim)
    return params


def bernoulli_mask(rng, shape, keep_prob):
    return (rng.random(shape) < keep_prob).astype(np.float64)


# ---------------------------------------------------------------------------
# forwards


def _batched(x):
    if x.ndim == 2:
        return nd.reshape(x, (1,) + x.shape), True
    if x.ndim == 3:
        return x, False
    raise ShapeError("layer_forward", x.shape, detail="expected (T, D) or (B, T, D)")


def _linear(x, w, b):
    return nd.add_bias(nd.matmul(x, w), b)


def tcn_forward(x, cfg: TcnConfig, params) -> nd.Tensor:
    """Stack of causal dilated conv blocks: relu(conv(x)) + skip(x)."""
    x, single = _batched(x)
    if x.shape[-1] != cfg.in_features:
        raise ShapeError("tcn_forward", x.shape, (cfg.in_features,), detail="feature count")
    h = x
    for i, d in enumerate(cfg.dilations):
        conv = nd.causal_dilated_conv1d(h, params[f"tcn.{i}.w"], d)
        act = nd.relu(nd.add_bias(conv, params[f"tcn.{i}.b"]))
        skip_w = params.get(f"tcn.{i}.skip_w")
        skip = h if skip_w is None else nd.causal_dilated_conv1d(h, skip_w, 1)
        h = nd.add(act, skip)
    return nd.reshape(h, h.shape[1:]) if single else h


def gru_forward(h, cfg: GruConfig, params) -> nd.Tensor:
    """Standard GRU over the time axis, zero initial state, full sequence out."""
    h, single = _batched(h)
    if h.shape[-1] != cfg.input_size:
        raise ShapeError("gru_forward", h.shape, (cfg.input_size,), detail="feature count")
    b, t, _ = h.shape
    hs = cfg.hidden_size
    w_ih, w_hh = params["gru.w_ih"], params["gru.w_hh"]
    b_ih, b_hh = params["gru.b_ih"], params["gru.b_hh"]
    state = nd.Tensor(np.zeros((b, hs), dtype=h.dtype))
    outs = []
    for step in range(t):
        x_t = nd.reshape(nd.slice_axis(h, 1, step, step + 1), (b, cfg.input_size))
        gi = nd.add_bias(nd.matmul(x_t, w_ih), b_ih)
        gh = nd.add_bias(nd.matmul(state, w_hh), b_hh)
        r = nd.sigmoid(nd.add(nd.slice_axis(gi, 1, 0, hs), nd.slice_axis(gh, 1, 0, hs)))
        z = nd.sigmoid(
            nd.add(nd.slice_axis(gi, 1, hs, 2 * hs), nd.slice_axis(gh, 1, hs, 2 * hs))
        )
        n = nd.tanh(
            nd.add(
                nd.slice_axis(gi, 1, 2 * hs, 3 * hs),
                nd.mul(r, nd.slice_axis(gh, 1, 2 * hs, 3 * hs)),
            )
        )
        # h' = (1-z)*n + z*h  ==  n + z*(h - n)
        state = nd.add(n, nd.mul(z, nd.sub(state, n)))
        outs.append(nd.reshape(state, (b, 1, hs)))
    out = outs[0] if t == 1 else nd.concat(outs, axis=1)
    return nd.reshape(out, (t, hs)) if single else out


def sinusoidal_encoding(length, dim, dtype=np.float64):
    pe = np.zeros((length, dim), dtype=dtype)
    pos = np.arange(length, dtype=dtype)[:, None]
    div = np.exp(-math.log(10000.0) * np.arange(0, dim, 2, dtype=dtype) / dim)
    pe[:, 0::2] = np.sin(pos * div)
    pe[:, 1::2] = np.cos(pos * div[: dim // 2])
    return pe


def _attention(x, cfg: TransformerConfig, params, prefix, collect_attn):
    b, t, m = x.shape
    nh = cfg.heads
    dh = m // nh
    heads = []
    for name in ("wq", "wk", "wv"):
        proj = _linear(x, params[prefix + name], params[prefix + "b" + name[1]])
        proj = nd.transpose(nd.reshape(proj, (b, t, nh, dh)), (0, 2, 1, 3))
        heads.append(proj)
    q, k, v = heads
    scores = nd.mul(nd.matmul(q, nd.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    attn = nd.softmax_over_axis(scores, -1)
    if collect_attn is not None:
        collect_attn.append(attn.data.copy())
    ctx = nd.transpose(nd.matmul(attn, v), (0, 2, 1, 3))
    ctx = nd.reshape(ctx, (b, t, m))
    return _linear(ctx, params[prefix + "wo"], params[prefix + "bo"])


def transformer_forward(h, cfg: TransformerConfig, params, collect_attn=None) -> nd.Tensor:
    """Post-norm encoder: self-attention + residual + LN, then FF + residual + LN."""
    h, single = _batched(h)
    if h.shape[-1] != cfg.model_dim:
        raise ShapeError("transformer_forward", h.shape, (cfg.model_dim,), detail="model_dim")
    b, t, m = h.shape
    if cfg.positional_encoding == "sinusoidal":
        pe = sinusoidal_encoding(t, m, dtype=h.dtype)
        h = nd.add(h, nd.Tensor(np.broadcast_to(pe, (b, t, m)).copy()))
    x = h
    for i in range(cfg.layers):
        p = f"tf.{i}."
        att = _attention(x, cfg, params, p, collect_attn)
        x = nd.layer_norm(nd.add(x, att), params[p + "ln1_g"], params[p + "ln1_b"])
        ff = _linear(
            nd.gelu(_linear(x, params[p + "ff_w1"], params[p + "ff_b1"])),
            params[p + "ff_w2"],
            params[p + "ff_b2"],
        )
        x = nd.layer_norm(nd.add(x, ff), params[p + "ln2_g"], params[p + "ln2_b"])
    return nd.reshape(x, (t, m)) if single else x


def mean_pool(z) -> nd.Tensor:
    """Mean over the time axis: (B, T, M) -> (B, M) or (T, M) -> (M,)."""
    if z.ndim not in (2, 3):
        raise ShapeError("mean_pool", z.shape, detail="expected 2-D or 3-D")
    if z.shape[-2] < 1:
        raise ShapeError("mean_pool", z.shape, detail="empty time axis")
    return nd.mean_over_axis(z, z.ndim - 2)


def dual_heads(z, horizon, n_cont, n_disc, params):
    """Affine heads mapping the latent to (horizon, n) blocks; logits for discrete."""
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    single = z.ndim == 1
    zb = nd.reshape(z, (1,) + z.shape) if single else z
    b = zb.shape[0]

    def head(w, b_, n):
        out = _linear(zb, params[w], params[b_])
        out = nd.reshape(out, (b, horizon, n))
        return nd.reshape(out, (horizon, n)) if single else out

    y_cont = head("head.cont_w", "head.cont_b", n_cont) if n_cont > 0 else None
    y_disc = head("head.disc_w", "head.disc_b", n_disc) if n_disc > 0 else None
    return y_cont, y_disc
