"""Forecasting models assembled from the layer stack.

A forward model maps the past window (W rows) to the next H rows; a
backward model maps the future H rows to a reconstruction of the past W
rows. Both run the same TCN -> GRU -> Transformer -> mean-pool encoder
and emit continuous values plus discrete logits through dual affine
heads. Training minimizes alpha * Huber + beta * BCE-with-logits.
"""

from dataclasses import dataclass

import numpy as np

from . import layers, ndtensor as nd
from .data import FeatureSchema
from .errors import ConfigError, ShapeError
from .layers import GruConfig, TcnConfig, TransformerConfig


@dataclass
class ModelSpec:
    direction: str
    window: int
    horizon: int
    schema: FeatureSchema
    tcn: TcnConfig
    gru: GruConfig
    transformer: TransformerConfig
    alpha: float = 1.0
    beta: float = 1.0
    huber_delta: float = 1.0
    dropout: float = 0.1

    def __post_init__(self):
        if self.direction not in ("forward", "backward"):
            raise ConfigError(f"direction must be forward or backward, got {self.direction!r}")
        if self.window < 1 or self.horizon < 1:
            raise ConfigError("window and horizon must be >= 1")
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ConfigError("need alpha >= 0, beta >= 0, alpha + beta > 0")
        if self.huber_delta <= 0:
            raise ConfigError("huber_delta must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must be in [0, 1)")
        if self.tcn.in_features != self.schema.n_features:
            raise ConfigError("tcn.in_features must equal the schema feature count")
        if self.gru.input_size != self.tcn.channels:
            raise ConfigError("gru.input_size must equal tcn.channels")
        if self.transformer.model_dim != self.gru.hidden_size:
            raise ConfigError("transformer.model_dim must equal gru.hidden_size")

    @property
    def input_length(self) -> int:
        return self.window if self.direction == "forward" else self.horizon

    @property
    def output_length(self) -> int:
        return self.horizon if self.direction == "forward" else self.window


def default_spec(
    direction: str,
    schema: FeatureSchema,
    window: int = 5,
    horizon: int = 1,
    channels: int = 8,
    hidden: int = 16,
    tcn_layers: int = 2,
    kernel_size: int = 3,
    heads: int = 2,
    transformer_layers: int = 1,
    positional_encoding: str = "sinusoidal",
    alpha: float = 1.0,
    beta: float = 1.0,
    huber_delta: float = 1.0,
    dropout: float = 0.1,
) -> ModelSpec:
    return ModelSpec(
        direction=direction,
        window=window,
        horizon=horizon,
        schema=schema,
        tcn=TcnConfig(
            in_features=schema.n_features,
            channels=channels,
            layers=tcn_layers,
            kernel_size=kernel_size,
        ),
        gru=GruConfig(input_size=channels, hidden_size=hidden),
        transformer=TransformerConfig(
            model_dim=hidden,
            heads=heads,
            layers=transformer_layers,
            positional_encoding=positional_encoding,
        ),
        alpha=alpha,
        beta=beta,
        huber_delta=huber_delta,
        dropout=dropout,
    )


def init_params(spec: ModelSpec, seed: int) -> dict:
    """Fresh parameter registry; names and shapes are a function of the spec."""
    rng = np.random.default_rng(seed)
    arrays = {}
    arrays.update(layers.init_tcn_params(spec.tcn, rng))
    arrays.update(layers.init_gru_params(spec.gru, rng))
    arrays.update(layers.init_transformer_params(spec.transformer, rng))
    arrays.update(
        layers.init_head_params(
            spec.transformer.model_dim,
            spec.output_length,
            spec.schema.n_cont,
            spec.schema.n_disc,
            rng,
        )
    )
    return {k: nd.Tensor(v, requires_grad=True) for k, v in arrays.items()}


def _check_input(x, spec):
    expected = (spec.input_length, spec.schema.n_features)
    if x.shape[-2:] != expected:
        raise ShapeError("model_forward", x.shape, expected, detail="window/feature mismatch")


def model_forward(x, spec: ModelSpec, params, train=False, rng=None):
    """Shared encoder + heads; returns (continuous, discrete logits)."""
    x = x if isinstance(x, nd.Tensor) else nd.Tensor(x)
    _check_input(x, spec)
    h = layers.tcn_forward(x, spec.tcn, params)
    h = layers.gru_forward(h, spec.gru, params)
    h = layers.transformer_forward(h, spec.transformer, params)
    z = layers.mean_pool(h)
    if train and spec.dropout > 0.0:
        if rng is None:
            raise ConfigError("training forward pass needs an rng for the dropout mask")
        keep = 1.0 - spec.dropout
        z = nd.dropout(z, layers.bernoulli_mask(rng, z.shape, keep), keep)
    return layers.dual_heads(
        z, spec.output_length, spec.schema.n_cont, spec.schema.n_disc, params
    )


def ffm_forward(x_past, spec: ModelSpec, params, train=False, rng=None):
    """Past window (.., W, D) -> (continuous forecast, discrete logits)."""
    if spec.direction != "forward":
        raise ConfigError("ffm_forward needs a forward-direction spec")
    return model_forward(x_past, spec, params, train=train, rng=rng)


def brm_forward(x_future, spec: ModelSpec, params, train=False, rng=None):
    """Future window (.., H, D) -> reconstruction (.., W, D); discrete columns are logits."""
    if spec.direction != "backward":
        raise ConfigError("brm_forward needs a backward-direction spec")
    y_cont, y_disc = model_forward(x_future, spec, params, train=train, rng=rng)
    return assemble_columns(y_cont, y_disc, spec.schema)


def assemble_columns(y_cont, y_disc, schema: FeatureSchema):
    """Interleave head outputs back into the original column order."""
    parts = [p for p in (y_cont, y_disc) if p is not None]
    merged = parts[0] if len(parts) == 1 else nd.concat(parts, axis=-1)
    order = schema.column_order()
    if np.array_equal(order, np.arange(schema.n_features)):
        return merged
    inverse = np.empty_like(order)
    inverse[order] = np.arange(schema.n_features)
    return nd.gather_last(merged, inverse)


def split_columns(values: np.ndarray, schema: FeatureSchema):
    """Numpy split of target arrays into (continuous, discrete) blocks."""
    cont = values[..., schema.continuous_idx] if schema.n_cont else None
    disc = values[..., schema.discrete_idx] if schema.n_disc else None
    return cont, disc


def hybrid_loss(pred_cont, true_cont, pred_disc_logits, true_disc, alpha, beta, delta):
    """alpha * mean-Huber(delta) + beta * mean BCE-with-logits; absent class = 0."""
    if alpha < 0 or beta < 0 or alpha + beta <= 0:
        raise ConfigError("need alpha >= 0, beta >= 0, alpha + beta > 0")
    total = None
    if pred_cont is not None and true_cont is not None:
        term = nd.mul(nd.huber_mean(pred_cont, true_cont, delta), float(alpha))
        total = term
    if pred_disc_logits is not None and true_disc is not None:
        term = nd.mul(nd.bce_logits_mean(pred_disc_logits, true_disc), float(beta))
        total = term if total is None else nd.add(total, term)
    if total is None:
        raise ConfigError("hybrid_loss needs at least one (prediction, target) pair")
    return total


# ---------------------------------------------------------------------------
# cost model


@dataclass
class CostReport:
    """Multiply counts per forward pass, bucketed to mirror the runtime counter.

    tcn / gru / attention / heads are the four architecture terms
    (attention holds only the sequence-length-quadratic work so its
    scaling in the window length is exactly quadratic); pointwise holds
    the transformer's per-position projections, feedforward, norms, and
    pooling, which are linear in the window length.
    """

    tcn: int
    gru: int
    attention: int
    heads: int
    pointwise: int
    batch_size: int

    @property
    def total(self) -> int:
        return self.tcn + self.gru + self.attention + self.heads + self.pointwise

    @property
    def dominant(self) -> str:
        terms = self.terms()
        return max(terms, key=lambda kv: kv[1])[0]

    def terms(self):
        return [
            ("tcn", self.tcn),
            ("gru", self.gru),
            ("attention", self.attention),
            ("heads", self.heads),
            ("pointwise", self.pointwise),
        ]


def estimate_cost(spec: ModelSpec, batch_size: int = 1) -> CostReport:
    """Analytic multiply counts for one forward pass at the given batch size.

    Counting convention matches ndtensor's instrumentation: matmul m*k*n,
    elementwise multiply/divide n, layer norm 4n, GELU 6n, softmax n;
    additions, activations' internal transcendentals, and data movement
    are free.
    """
    b = batch_size
    t = spec.input_length
    d = spec.schema.n_features
    c = spec.tcn.channels
    k = spec.tcn.kernel_size
    m = spec.gru.hidden_size
    nh = spec.transformer.heads
    f = spec.transformer.feedforward_dim
    out_elems = spec.output_length * d

    tcn = 0
    cin = d
    for _ in range(spec.tcn.layers):
        tcn += b * t * c * cin * k
        if cin != c:
            tcn += b * t * c * cin
        cin = c

    gru = t * (b * c * 3 * m + b * m * 3 * m + 2 * b * m)

    attention = spec.transformer.layers * (2 * b * t * t * m + 2 * b * nh * t * t)
    pointwise = spec.transformer.layers * (
        4 * b * t * m * m + 2 * b * t * m * f + 6 * b * t * f + 8 * b * t * m
    )
    pointwise += b * m  # mean pooling

    heads = b * m * out_elems
    return CostReport(
        tcn=tcn,
        gru=gru,
        attention=attention,
        heads=heads,
        pointwise=pointwise,
        batch_size=b,
    )
