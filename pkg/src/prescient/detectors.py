"""Downstream unsupervised detectors: diagonal-covariance GMM fitted by
EM, empirical-tail (ECOD-style) scoring, and a centered-hypersphere
stand-in for deep SVDD. All three fit on train data only and share the
orientation higher score = more anomalous.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, NumericError

VAR_FLOOR = 1e-6

DETECTOR_KINDS = ("gmm", "ecod", "svdd")


# ---------------------------------------------------------------------------
# Gaussian mixture (diagonal covariance)


@dataclass
class GmmModel:
    weights: np.ndarray      # (K,), sums to 1
    means: np.ndarray        # (K, D)
    variances: np.ndarray    # (K, D), floored at VAR_FLOOR
    loglik_trace: list = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return len(self.weights)


def _kmeanspp_centers(data, k, rng):
    n = len(data)
    centers = [data[rng.integers(n)]]
    for _ in range(k - 1):
        d2 = np.min(
            [np.sum((data - c) ** 2, axis=1) for c in centers], axis=0
        )
        total = d2.sum()
        if total <= 0:
            centers.append(data[rng.integers(n)])
            continue
        centers.append(data[rng.choice(n, p=d2 / total)])
    return np.array(centers)


def _log_norms(weights, variances):
    # log w_k - 0.5 * sum_j log(2 pi var_kj)
    return np.log(weights) - 0.5 * np.sum(np.log(2.0 * np.pi * variances), axis=1)


def _logsumexp_rows(a):
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=1, keepdims=True)))[:, 0]


def gmm_fit(data, n_components=4, seed=0, max_iter=100, tol=1e-6, _retry=True) -> GmmModel:
    """EM fit with k-means++-style seeding; trace of accepted log-likelihoods.

    A component that loses all responsibility mass triggers one re-seeded
    refit, then an error.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or len(data) == 0:
        raise DataError("gmm_fit needs a non-empty (N, D) matrix")
    k = int(n_components)
    if k < 1:
        raise ConfigError("n_components must be >= 1")
    if len(data) < k:
        raise DataError(f"need at least {k} rows to fit {k} components")
    rng = np.random.default_rng(seed)
    n, d = data.shape
    means = _kmeanspp_centers(data, k, rng)
    base_var = np.maximum(data.var(axis=0), VAR_FLOOR)
    variances = np.tile(base_var, (k, 1))
    weights = np.full(k, 1.0 / k)
    trace = []
    for _ in range(max_iter):
        log_joint = kernels.gmm_log_joint(
            data, means, 1.0 / variances, _log_norms(weights, variances)
        )
        row_lse = _logsumexp_rows(log_joint)
        ll = float(row_lse.sum())
        if trace and ll - trace[-1] < tol * (1.0 + abs(trace[-1])):
            break
        trace.append(ll)
        resp = np.exp(log_joint - row_lse[:, None])
        mass = resp.sum(axis=0)
        if np.any(mass < 1e-10):
            if _retry:
                return gmm_fit(
                    data, n_components, seed=seed + 1, max_iter=max_iter, tol=tol, _retry=False
                )
            raise NumericError("gmm_fit: degenerate component after re-seeding")
        weights = mass / n
        means = (resp.T @ data) / mass[:, None]
        second = (resp.T @ (data * data)) / mass[:, None]
        variances = np.maximum(second - means * means, VAR_FLOOR)
    return GmmModel(weights=weights, means=means, variances=variances, loglik_trace=trace)


def gmm_score(model: GmmModel, x):
    """Negative log-likelihood under the mixture; scalar for a single row."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    rows = arr[None, :] if single else arr
    log_joint = kernels.gmm_log_joint(
        rows, model.means, 1.0 / model.variances, _log_norms(model.weights, model.variances)
    )
    nll = -_logsumexp_rows(log_joint)
    return float(nll[0]) if single else nll


# ---------------------------------------------------------------------------
# empirical-tail scoring


@dataclass
class EcodModel:
    sorted_cols: np.ndarray   # (n, D), each column sorted ascending
    skew_signs: np.ndarray    # (D,), +1 right tail, -1 left tail for the auto rule


def _skew_sign(col):
    c = col - col.mean()
    m2 = np.mean(c * c)
    if m2 == 0:
        return 1.0
    return 1.0 if np.mean(c**3) >= 0 else -1.0


def ecod_fit(data) -> EcodModel:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or len(data) == 0:
        raise DataError("ecod_fit needs a non-empty (N, D) matrix")
    return EcodModel(
        sorted_cols=np.sort(data, axis=0),
        skew_signs=np.array([_skew_sign(data[:, j]) for j in range(data.shape[1])]),
    )


def ecod_score(model: EcodModel, x):
    """Sum over features of the aggregated negative-log tail probability.

    Per feature: left tail p_l = |{v <= x}| / n and right tail
    p_r = |{v >= x}| / n, both clipped to [1/(n+1), 1]; the skewness rule
    picks p_l for left-skewed features and p_r otherwise; the feature's
    contribution is max(-log p_l, -log p_r, -log p_auto), i.e. the
    smaller tail wins. Higher = more anomalous.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    rows = arr[None, :] if single else arr
    total = np.zeros(len(rows))
    for j in range(model.sorted_cols.shape[1]):
        left, right = kernels.ecod_tails(
            np.ascontiguousarray(model.sorted_cols[:, j]),
            np.ascontiguousarray(rows[:, j]),
        )
        ul = -np.log(left)
        ur = -np.log(right)
        uauto = ul if model.skew_signs[j] < 0 else ur
        total += np.maximum(np.maximum(ul, ur), uauto)
    return float(total[0]) if single else total


# ---------------------------------------------------------------------------
# centered hypersphere ("SVDD-lite")


@dataclass
class SvddModel:
    center: np.ndarray
    projection: Optional[np.ndarray] = None  # (D, p) orthonormal columns
    mean_radius_sq: float = 0.0


def svdd_fit(data, seed=0, projection_dim=None) -> SvddModel:
    """Center-of-mass hypersphere; optionally score in the projection that
    minimizes mean squared distance to the center (the smallest-variance
    principal directions, orthonormal so the map cannot collapse).

    The seed is accepted for interface stability; the fit is closed-form
    and deterministic.
    """
    del seed
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or len(data) == 0:
        raise DataError("svdd_fit needs a non-empty (N, D) matrix")
    mean = data.mean(axis=0)
    projection = None
    if projection_dim is not None:
        d = data.shape[1]
        if not (1 <= projection_dim <= d):
            raise ConfigError(f"projection_dim must be in [1, {d}]")
        cov = np.cov(data - mean, rowvar=False, bias=True).reshape(d, d)
        eigvals, eigvecs = np.linalg.eigh(cov)
        projection = eigvecs[:, :projection_dim]
        # fix eigenvector sign for determinism
        for c in range(projection.shape[1]):
            pivot = np.argmax(np.abs(projection[:, c]))
            if projection[pivot, c] < 0:
                projection[:, c] = -projection[:, c]
    center = mean if projection is None else mean @ projection
    model = SvddModel(center=center, projection=projection)
    model.mean_radius_sq = float(np.mean(svdd_score(model, data)))
    return model


def svdd_score(model: SvddModel, x):
    """Squared distance to the center, in the projected space when present."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    rows = arr[None, :] if single else arr
    if model.projection is not None:
        rows = rows @ model.projection
    diff = rows - model.center
    out = np.sum(diff * diff, axis=1)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# uniform dispatch


def fit(kind: str, data, **kwargs):
    if kind == "gmm":
        return gmm_fit(data, **kwargs)
    if kind == "ecod":
        return ecod_fit(data, **kwargs)
    if kind == "svdd":
        return svdd_fit(data, **kwargs)
    raise ConfigError(f"unknown detector {kind!r}; choose from {DETECTOR_KINDS}")


def score(model, x):
    if isinstance(model, GmmModel):
        return gmm_score(model, x)
    if isinstance(model, EcodModel):
        return ecod_score(model, x)
    if isinstance(model, SvddModel):
        return svdd_score(model, x)
    raise ConfigError(f"unknown detector model type {type(model).__name__}")
