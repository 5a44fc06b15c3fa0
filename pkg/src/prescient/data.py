"""Dataset ingestion, feature-schema detection, normalization, sliding
windows, and the synthetic generator used by the acceptance suite.

Column convention: a feature is discrete when every training value is 0
or 1; everything else is continuous and gets z-scored with train-split
statistics (constant columns use sigma = 1 so they normalize to 0).
"""

import configparser
import logging
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)


@dataclass
class FeatureSchema:
    n_features: int
    continuous_idx: np.ndarray
    discrete_idx: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.continuous_idx = np.asarray(self.continuous_idx, dtype=np.intp)
        self.discrete_idx = np.asarray(self.discrete_idx, dtype=np.intp)
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        combined = np.sort(np.concatenate([self.continuous_idx, self.discrete_idx]))
        if not np.array_equal(combined, np.arange(self.n_features)):
            raise ConfigError("schema indices do not partition the feature set")
        if self.mean.shape != self.continuous_idx.shape or self.std.shape != self.continuous_idx.shape:
            raise ConfigError("schema stats must cover every continuous feature")
        if np.any(self.std <= 0):
            raise ConfigError("schema std values must be positive")

    @property
    def n_cont(self) -> int:
        return len(self.continuous_idx)

    @property
    def n_disc(self) -> int:
        return len(self.discrete_idx)

    def column_order(self) -> np.ndarray:
        """Continuous columns first, then discrete, as model heads emit them."""
        return np.concatenate([self.continuous_idx, self.discrete_idx])


@dataclass
class TimeSeries:
    values: np.ndarray
    schema: Optional[FeatureSchema] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"series values must be 2-D, got shape {self.values.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (self.values.shape[0],):
                raise DataError(
                    f"labels length {self.labels.shape} does not match T={self.values.shape[0]}"
                )
            if not np.all(np.isin(self.labels, (0, 1))):
                raise DataError("labels must be 0/1")
            self.labels = self.labels.astype(np.uint8)

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def anomaly_ratio(self) -> float:
        return float(self.labels.mean()) if self.labels is not None else 0.0


@dataclass
class WindowSet:
    past: np.ndarray      # (N, W, D), rows anchor-W+1 .. anchor
    future: np.ndarray    # (N, H, D), rows anchor+1 .. anchor+H
    anchors: np.ndarray   # (N,) index of the last past row, strictly increasing
    direction: str

    def __len__(self):
        return len(self.anchors)

    @property
    def inputs(self) -> np.ndarray:
        return self.past if self.direction == "forward" else self.future

    @property
    def targets(self) -> np.ndarray:
        return self.future if self.direction == "forward" else self.past


def _sniff_header(path) -> bool:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            for cell in line.split(","):
                cell = cell.strip()
                if not cell:
                    continue  # empty cell = missing value, not header text
                try:
                    float(cell)
                except ValueError:
                    return True
            return False
    raise DataError(f"{path}: empty file")


def load_csv(path, label_path=None, schema_hint=None) -> TimeSeries:
    """Load a T x D CSV (optional single header row, auto-detected) plus labels.

    NaN cells are forward-filled then zero-filled; the imputed count is
    logged. Labels are one 0/1 integer per row.
    """
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    header = 0 if _sniff_header(path) else None
    try:
        df = pd.read_csv(path, header=header, dtype=np.float64)
    except (pd.errors.ParserError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    n_nan = int(df.isna().to_numpy().sum())
    if n_nan:
        df = df.ffill().fillna(0.0)
        log.info("%s: imputed %d missing cells (forward-fill then zero)", path, n_nan)
    values = df.to_numpy(dtype=np.float64)
    labels = None
    if label_path is not None:
        raw = np.loadtxt(label_path, dtype=np.float64, ndmin=1)
        if raw.ndim != 1 or len(raw) != len(values):
            raise DataError(
                f"{label_path}: {len(raw)} labels for {len(values)} rows"
            )
        labels = raw
    series = TimeSeries(values=values, labels=labels, schema=schema_hint)
    log.info(
        "%s: T=%d D=%d anomaly_ratio=%.4f",
        path,
        series.length,
        series.n_features,
        series.anomaly_ratio,
    )
    return series


def infer_schema(train: TimeSeries, max_distinct: int = 2) -> FeatureSchema:
    """Classify columns from the train split and fit z-score statistics."""
    values = train.values
    disc, cont = [], []
    for j in range(values.shape[1]):
        col = values[:, j]
        if len(np.unique(col)) <= max_distinct and np.all(np.isin(col, (0.0, 1.0))):
            disc.append(j)
        else:
            cont.append(j)
    cont = np.array(cont, dtype=np.intp)
    mean = values[:, cont].mean(axis=0) if len(cont) else np.zeros(0)
    std = values[:, cont].std(axis=0) if len(cont) else np.zeros(0)
    std = np.where(std == 0.0, 1.0, std)
    return FeatureSchema(
        n_features=values.shape[1],
        continuous_idx=cont,
        discrete_idx=np.array(disc, dtype=np.intp),
        mean=mean,
        std=std,
    )


def normalize(series: TimeSeries, schema: FeatureSchema) -> TimeSeries:
    """Z-score continuous columns with train statistics; discrete untouched."""
    values = series.values.copy()
    idx = schema.continuous_idx
    values[:, idx] = (values[:, idx] - schema.mean) / schema.std
    return TimeSeries(values=values, schema=schema, labels=series.labels)


def denormalize(values: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    out = np.asarray(values, dtype=np.float64).copy()
    idx = schema.continuous_idx
    out[..., idx] = out[..., idx] * schema.std + schema.mean
    return out


def make_windows(series: TimeSeries, window: int, horizon: int, direction: str) -> WindowSet:
    """Slide a (past W, future H) pair over every anchor; stride 1.

    Anchor t (0-based) is the last past row: past covers t-W+1..t and
    future covers t+1..t+H. Forward models map past->future; backward
    models map future->past.
    """
    if direction not in ("forward", "backward"):
        raise ConfigError(f"direction must be forward or backward, got {direction!r}")
    values = series.values
    t_len = len(values)
    if window < 1 or horizon < 1:
        raise ConfigError("window and horizon must be >= 1")
    if t_len < window + horizon:
        raise DataError(f"series length {t_len} < window {window} + horizon {horizon}")
    n = t_len - window - horizon + 1
    past = np.lib.stride_tricks.sliding_window_view(values, window, axis=0)
    past = past.transpose(0, 2, 1)[:n]
    future = np.lib.stride_tricks.sliding_window_view(values, horizon, axis=0)
    future = future.transpose(0, 2, 1)[window:]
    anchors = np.arange(window - 1, t_len - horizon, dtype=np.intp)
    return WindowSet(past=past, future=future, anchors=anchors, direction=direction)


# ---------------------------------------------------------------------------
# synthetic data


SYNTH_KINDS = ("sine_spike", "level_shift", "mixed_discrete")


def _place_events(rng, length, target, margin=10, gap=20):
    """Non-overlapping (start, length) event list totalling ~target points."""
    labels = np.zeros(length, dtype=np.uint8)
    events = []
    remaining = target
    attempts = 0
    while remaining > 0 and attempts < 20000:
        attempts += 1
        if remaining < 5:
            ln = 1
        elif rng.random() < 0.15:
            ln = 1
        else:
            ln = int(rng.integers(5, 16))
        ln = min(ln, remaining)
        start = int(rng.integers(margin, length - margin - ln))
        lo, hi = max(0, start - gap), min(length, start + ln + gap)
        if labels[lo:hi].any():
            continue
        labels[start : start + ln] = 1
        events.append((start, ln))
        remaining -= ln
    if remaining > 0.2 * target:
        raise DataError("could not place the requested anomaly mass; lower the rate")
    return labels, events


def synth_generate(
    kind: str,
    length: int,
    n_features: int,
    anomaly_rate: float,
    seed: int,
    noise_std: float = 0.1,
) -> TimeSeries:
    """Deterministic multi-sinusoid series with injected anomalies.

    sine_spike adds point/collective spikes of magnitude >= 5 sigma (ramping
    up over the first steps of collective events); level_shift adds sustained
    offsets; mixed_discrete also carries binary channels that flip inside
    anomalous regions. Labels mark the injected regions.
    """
    if kind not in SYNTH_KINDS:
        raise ConfigError(f"unknown synthetic kind {kind!r}; choose from {SYNTH_KINDS}")
    if length < 100:
        raise DataError(f"synthetic length must be >= 100, got {length}")
    if not (0.0 <= anomaly_rate < 0.5):
        raise ConfigError(f"anomaly_rate must be in [0, 0.5), got {anomaly_rate}")
    rng = np.random.default_rng(seed)
    period = 100
    n_disc = max(1, n_features // 4) if kind == "mixed_discrete" else 0
    n_cont = n_features - n_disc
    if n_cont < 1:
        raise ConfigError("need at least one continuous feature")

    steps = np.arange(period)
    pattern = np.zeros((period, n_cont))
    for f in range(n_cont):
        for c in range(2):
            if f < 2 and c == 0:
                # quadrature fundamentals on the first two features pin the
                # phase uniquely, so each row determines its period position
                cycles, amp, phase = 1, 0.9, (0.0 if f == 0 else 0.5 * math.pi)
            else:
                cycles = int(rng.integers(1, 6))
                amp = rng.uniform(0.3, 0.6)
                phase = rng.uniform(0.0, 2.0 * math.pi)
            pattern[:, f] += amp * np.sin(2.0 * math.pi * cycles * steps / period + phase)
    reps = -(-length // period)
    cont = np.tile(pattern, (reps, 1))[:length]
    if noise_std > 0:
        cont = cont + noise_std * rng.standard_normal((length, n_cont))

    disc = None
    if n_disc:
        disc = np.zeros((length, n_disc))
        for j in range(n_disc):
            cycles = int(rng.integers(1, 4))
            phase = rng.uniform(0.0, 2.0 * math.pi)
            wave = np.sin(2.0 * math.pi * cycles * steps / period + phase)
            disc[:, j] = np.tile(wave > 0, reps)[:length].astype(np.float64)

    target = int(round(anomaly_rate * length))
    if target > 0:
        labels, events = _place_events(rng, length, target)
    else:
        labels, events = np.zeros(length, dtype=np.uint8), []

    sigma = noise_std if noise_std > 0 else 0.1
    for start, ln in events:
        n_hit = max(1, int(math.ceil(0.6 * n_cont)))
        hit = rng.choice(n_cont, size=n_hit, replace=False)
        amp = rng.uniform(5.0, 8.0) * sigma
        signs = rng.choice((-1.0, 1.0), size=n_hit)
        if kind == "level_shift" or ln == 1:
            scale = np.ones(ln)
        else:
            ramp = min(3, ln)
            scale = np.ones(ln)
            scale[:ramp] = np.linspace(1.0 / ramp, 1.0, ramp)
        deviation = scale[:, None] * amp
        if kind != "level_shift" and ln > 1:
            # sustained one-sided >= 5 sigma jitter keeps every step of a
            # collective event forecast-breaking, not just its onset
            burst = rng.uniform(5.0, 8.0) * sigma
            deviation = deviation + burst * np.abs(rng.standard_normal((ln, n_hit)))
        cont[start : start + ln, hit] += deviation * signs[None, :]
        if disc is not None:
            disc[start : start + ln, :] = 1.0 - disc[start : start + ln, :]

    values = cont if disc is None else np.concatenate([cont, disc], axis=1)
    return TimeSeries(values=values, labels=labels)


# ---------------------------------------------------------------------------
# dataset manifest


def load_manifest(path) -> dict:
    """Parse an INI manifest mapping dataset name -> train/test/labels paths."""
    if not os.path.exists(path):
        raise DataError(f"no such manifest: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    root = os.path.dirname(os.path.abspath(path))
    out = {}
    for name in parser.sections():
        section = parser[name]
        entry = {}
        for key in ("train", "test", "labels"):
            if key in section:
                p = section[key]
                entry[key] = p if os.path.isabs(p) else os.path.join(root, p)
        if "train" not in entry:
            raise DataError(f"manifest section [{name}] is missing a train path")
        out[name] = entry
    return out
