"""Evaluation metrics: point F1, F1-@K, composite F1 (event recall,
point precision), range-based F1, and lead-time statistics.

Range-based convention pinned here: flat positional bias; every credit
blends existence and overlap as 0.5 * existence + 0.5 * overlap_fraction.
A ground-truth event's overlap fraction is the share of its points that
are flagged; a predicted event's is the share of its points that are
truly anomalous. Recall averages credits over ground-truth events,
precision over predicted events.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError
from .scoring import topk_flags


def events_from_labels(labels) -> list:
    """Inclusive [start, end] intervals of consecutive 1s."""
    labels = np.asarray(labels).astype(np.int8)
    if labels.ndim != 1:
        raise DataError("labels must be 1-D")
    edges = np.diff(np.concatenate([[0], labels, [0]]))
    starts = np.where(edges == 1)[0]
    ends = np.where(edges == -1)[0] - 1
    return list(zip(starts.tolist(), ends.tolist()))


def _check_pair(flags, labels):
    flags = np.asarray(flags).astype(np.int8)
    labels = np.asarray(labels).astype(np.int8)
    if flags.shape != labels.shape or flags.ndim != 1:
        raise DataError(f"flags/labels length mismatch: {flags.shape} vs {labels.shape}")
    return flags, labels


def _f1(p, r):
    return 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0


def f1_point(flags, labels):
    """Point-wise (precision, recall, F1)."""
    flags, labels = _check_pair(flags, labels)
    tp = int(np.sum((flags == 1) & (labels == 1)))
    fp = int(np.sum((flags == 1) & (labels == 0)))
    fn = int(np.sum((flags == 0) & (labels == 1)))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return p, r, _f1(p, r)


def f1_at_k(scores, labels) -> float:
    """Point F1 of top-K flags where K is the number of true anomalies."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int8)
    if scores.shape != labels.shape:
        raise DataError(f"scores/labels length mismatch: {scores.shape} vs {labels.shape}")
    k = int(labels.sum())
    flags = topk_flags(scores, k).flags
    return f1_point(flags, labels)[2]


def f1_composite(flags, labels) -> float:
    """Harmonic mean of point precision and event recall (any overlap detects)."""
    flags, labels = _check_pair(flags, labels)
    p = f1_point(flags, labels)[0]
    events = events_from_labels(labels)
    if events:
        detected = sum(1 for s, e in events if flags[s : e + 1].any())
        r = detected / len(events)
    else:
        r = 0.0
    return _f1(p, r)


def _blend_credit(event, other_points):
    s, e = event
    length = e - s + 1
    overlap = int(other_points[s : e + 1].sum())
    exists = 1.0 if overlap else 0.0
    return 0.5 * exists + 0.5 * (overlap / length)


def f1_range(flags, labels, bias: str = "flat") -> float:
    """Range-based F1 under the pinned flat-bias 0.5/0.5 blend convention."""
    if bias != "flat":
        raise ConfigError(f"only the flat positional bias is supported, got {bias!r}")
    flags, labels = _check_pair(flags, labels)
    gt_events = events_from_labels(labels)
    pred_events = events_from_labels(flags)
    r = (
        float(np.mean([_blend_credit(ev, flags) for ev in gt_events]))
        if gt_events
        else 0.0
    )
    p = (
        float(np.mean([_blend_credit(ev, labels) for ev in pred_events]))
        if pred_events
        else 0.0
    )
    return _f1(p, r)


@dataclass
class LeadTimeStats:
    leads: list
    n_detected: int
    n_missed: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.leads)) if self.leads else float("nan")

    @property
    def median(self) -> float:
        return float(np.median(self.leads)) if self.leads else float("nan")


def lead_time(flag_times, events, l_max: int = 10) -> LeadTimeStats:
    """Per event: lead = start - earliest flag in [start - l_max, end].

    Positive lead = early warning; negative = late detection; events with
    no flag in range are counted as missed and excluded from the stats.
    """
    if not events:
        raise DataError("lead_time needs at least one event")
    flag_times = np.asarray(sorted(flag_times), dtype=np.int64)
    leads = []
    missed = 0
    for s, e in events:
        inside = flag_times[(flag_times >= s - l_max) & (flag_times <= e)]
        if len(inside):
            leads.append(int(s - inside.min()))
        else:
            missed += 1
    return LeadTimeStats(leads=leads, n_detected=len(leads), n_missed=missed)


@dataclass
class MetricReport:
    f1: float
    precision: float
    recall: float
    f1_at_k: float
    f1_c: float
    f1_r: float
    n_flags: int
    n_anomalies: int
    n_events: int
    lead: Optional[LeadTimeStats] = None

    def lines(self):
        out = [
            ("f1", self.f1),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1_at_k", self.f1_at_k),
            ("f1_c", self.f1_c),
            ("f1_r", self.f1_r),
        ]
        text = [f"{name} {value:.4f}" for name, value in out]
        text.append(f"n_flags {self.n_flags}")
        text.append(f"n_anomalies {self.n_anomalies}")
        text.append(f"n_events {self.n_events}")
        if self.lead is not None:
            text.append(f"lead_detected {self.lead.n_detected}")
            text.append(f"lead_missed {self.lead.n_missed}")
            text.append(f"lead_mean {self.lead.mean:.4f}")
            text.append(f"lead_median {self.lead.median:.4f}")
        return text

    def render(self) -> str:
        return "\n".join(self.lines()) + "\n"


def evaluate(scores, flags, labels, flag_times=None, l_max: int = 10) -> MetricReport:
    """All four metrics (plus lead time when events exist) for one run."""
    flags_arr, labels_arr = _check_pair(flags, labels)
    p, r, f1 = f1_point(flags_arr, labels_arr)
    events = events_from_labels(labels_arr)
    lead = None
    if events:
        if flag_times is None:
            flag_times = np.where(flags_arr == 1)[0]
        lead = lead_time(flag_times, events, l_max=l_max)
    return MetricReport(
        f1=f1,
        precision=p,
        recall=r,
        f1_at_k=f1_at_k(scores, labels_arr),
        f1_c=f1_composite(flags_arr, labels_arr),
        f1_r=f1_range(flags_arr, labels_arr),
        n_flags=int(flags_arr.sum()),
        n_anomalies=int(labels_arr.sum()),
        n_events=len(events),
        lead=lead,
    )
