"""Turn model outputs into per-timestamp anomaly scores and flags.

Alignment conventions (scores are attributed to timestamps):
  - forward (forecast) scores attach to the first forecast row, t+1 for a
    window anchored at t; they are computable at tick t (emission), which
    is what makes the path proactive.
  - backward (reconstruction) scores attach to the window end t and are
    computable once the future rows have arrived (emission t+H).
  - reactive scores reuse the forecast-error formula but are only
    emitted after the target row is observed (emission t+1).

Higher score = more anomalous, everywhere.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import detectors, kernels, models, ndtensor as nd
from .errors import ConfigError, DataError, ShapeError

ALIGNMENTS = ("forecast_target", "window_end")


@dataclass
class ScoreSeries:
    scores: np.ndarray
    timestamps: np.ndarray
    alignment: str
    emission: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.intp)
        self.emission = np.asarray(self.emission, dtype=np.intp)
        if self.alignment not in ALIGNMENTS:
            raise ConfigError(f"alignment must be one of {ALIGNMENTS}")
        if not (len(self.scores) == len(self.timestamps) == len(self.emission)):
            raise ShapeError("ScoreSeries", self.scores.shape, self.timestamps.shape)
        if len(self.scores) and not np.all(np.isfinite(self.scores)):
            raise DataError("scores must be finite")

    def __len__(self):
        return len(self.scores)

    @property
    def coverage(self):
        if not len(self.timestamps):
            return None
        return int(self.timestamps[0]), int(self.timestamps[-1])


@dataclass
class FlagSeries:
    flags: np.ndarray
    timestamps: np.ndarray
    k: Optional[int] = None
    tau: Optional[float] = None

    def __post_init__(self):
        self.flags = np.asarray(self.flags, dtype=np.uint8)
        self.timestamps = np.asarray(self.timestamps, dtype=np.intp)
        if self.flags.shape != self.timestamps.shape:
            raise ShapeError("FlagSeries", self.flags.shape, self.timestamps.shape)

    def __len__(self):
        return len(self.flags)


def predict_windows(windows, spec, params, batch_size=512) -> np.ndarray:
    """Model predictions for every window: (N, out_len, D) in column order.

    Discrete columns come out as probabilities (sigmoid of the logits) so
    one mean-squared-error formula covers both feature classes.
    """
    inputs = windows.inputs
    n = len(inputs)
    schema = spec.schema
    dtype = next(iter(params.values())).dtype
    out = np.zeros((n, spec.output_length, schema.n_features), dtype=dtype)
    with nd.no_grad():
        for start in range(0, n, batch_size):
            xb = np.ascontiguousarray(inputs[start : start + batch_size], dtype=dtype)
            y_cont, y_disc = models.model_forward(xb, spec, params)
            if y_cont is not None:
                out[start : start + batch_size, :, schema.continuous_idx] = y_cont.data
            if y_disc is not None:
                probs = 1.0 / (1.0 + np.exp(-y_disc.data))
                out[start : start + batch_size, :, schema.discrete_idx] = probs
    return out


def _mse_scores(preds, targets):
    n = len(preds)
    p = np.ascontiguousarray(preds, dtype=np.float64).reshape(n, -1)
    t = np.ascontiguousarray(targets, dtype=np.float64).reshape(n, -1)
    return kernels.window_mse(p, t)


def forward_score(windows, spec, params, batch_size=512) -> ScoreSeries:
    """Mean squared forecast error per window, attributed to the forecast target."""
    if spec.direction != "forward" or windows.direction != "forward":
        raise ConfigError("forward_score needs forward-direction spec and windows")
    preds = predict_windows(windows, spec, params, batch_size)
    scores = _mse_scores(preds, windows.targets)
    return ScoreSeries(
        scores=scores,
        timestamps=windows.anchors + 1,
        alignment="forecast_target",
        emission=windows.anchors.copy(),
    )


def backward_score(windows, spec, params, batch_size=512) -> ScoreSeries:
    """Mean squared reconstruction error per window, attributed to the window end."""
    if spec.direction != "backward" or windows.direction != "backward":
        raise ConfigError("backward_score needs backward-direction spec and windows")
    preds = predict_windows(windows, spec, params, batch_size)
    scores = _mse_scores(preds, windows.targets)
    return ScoreSeries(
        scores=scores,
        timestamps=windows.anchors.copy(),
        alignment="window_end",
        emission=windows.anchors + spec.horizon,
    )


def reactive_score(series, spec, params, batch_size=512) -> ScoreSeries:
    """Forecast-error scores emitted only after the target row is observed.

    Same values as forward_score on the same data; only the emission tick
    moves from t to t+1. Exists for lead-time comparison against the
    proactive path.
    """
    from .data import make_windows

    windows = make_windows(series, spec.window, spec.horizon, "forward")
    proactive = forward_score(windows, spec, params, batch_size)
    return ScoreSeries(
        scores=proactive.scores,
        timestamps=proactive.timestamps,
        alignment=proactive.alignment,
        emission=proactive.timestamps.copy(),
    )


def log_stabilize(scores):
    """s <- log(1 + s); rank order preserved. Accepts arrays or ScoreSeries."""
    if isinstance(scores, ScoreSeries):
        return ScoreSeries(
            scores=log_stabilize(scores.scores),
            timestamps=scores.timestamps,
            alignment=scores.alignment,
            emission=scores.emission,
        )
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size and arr.min() < 0:
        raise DataError("log_stabilize needs non-negative scores")
    return np.log1p(arr)


def _score_values(scores):
    if isinstance(scores, ScoreSeries):
        return scores.scores, scores.timestamps
    arr = np.asarray(scores, dtype=np.float64)
    return arr, np.arange(len(arr), dtype=np.intp)


def topk_flags(scores, k) -> FlagSeries:
    """Flag exactly min(k, n) highest scores; ties go to earlier timestamps."""
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    values, timestamps = _score_values(scores)
    n = len(values)
    flags = np.zeros(n, dtype=np.uint8)
    take = min(int(k), n)
    if take:
        order = np.lexsort((np.arange(n), -values))
        flags[order[:take]] = 1
    return FlagSeries(flags=flags, timestamps=timestamps, k=int(k))


def threshold_flags(scores, tau) -> FlagSeries:
    """Flag scores strictly above tau."""
    if not np.isfinite(tau):
        raise ConfigError(f"tau must be finite, got {tau}")
    values, timestamps = _score_values(scores)
    return FlagSeries(flags=(values > tau).astype(np.uint8), timestamps=timestamps, tau=float(tau))


def calibration_threshold(train_scores, quantile=0.99) -> float:
    """Threshold for streaming: the q-th quantile of train-split scores."""
    values, _ = _score_values(train_scores)
    if len(values) == 0:
        raise DataError("cannot calibrate a threshold on empty scores")
    if not (0.0 < quantile < 1.0):
        raise ConfigError(f"quantile must be in (0, 1), got {quantile}")
    return float(np.quantile(values, quantile))


def posthoc_detector_scores(
    train_preds,
    test_preds,
    detector: str,
    timestamps=None,
    alignment="forecast_target",
    emission=None,
    **detector_kwargs,
):
    """Fit an unsupervised detector on flattened train predictions, score test ones."""
    train = np.asarray(train_preds, dtype=np.float64).reshape(len(train_preds), -1)
    test = np.asarray(test_preds, dtype=np.float64).reshape(len(test_preds), -1)
    if len(train) == 0:
        raise DataError("cannot fit a detector on an empty prediction set")
    model = detectors.fit(detector, train, **detector_kwargs)
    scores = detectors.score(model, test)
    if timestamps is None:
        timestamps = np.arange(len(test), dtype=np.intp)
    if emission is None:
        emission = np.asarray(timestamps, dtype=np.intp)
    return ScoreSeries(
        scores=scores, timestamps=timestamps, alignment=alignment, emission=emission
    )
