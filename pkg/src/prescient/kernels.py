"""Hot numeric kernels, each in a numba and a pure-numpy variant.

The dispatching wrappers (causal_conv1d_fwd, ...) pick the variant from
backend.USE_NUMBA. The numpy variants lean on BLAS/vectorized ops; the
numba variants are explicit loops. Numeric results agree to floating
round-off, not bit-for-bit (different summation orders).

Convention for the causal convolution: tap j of a length-k kernel reads
the input at offset t + j*dilation into an input that was left-padded by
(k-1)*dilation, so tap k-1 aligns with the current timestep and the
output at step t never reads past it.
"""

import numpy as np

from .backend import USE_NUMBA, njit


# ---------------------------------------------------------------------------
# causal dilated 1-D convolution


def causal_conv1d_fwd_numpy(xpad, w, dilation):
    b, tp, cin = xpad.shape
    cout, _, k = w.shape
    t = tp - (k - 1) * dilation
    y = np.zeros((b, t, cout), dtype=xpad.dtype)
    for j in range(k):
        off = j * dilation
        y += xpad[:, off : off + t, :] @ w[:, :, j].T
    return y


@njit(cache=True)
def causal_conv1d_fwd_numba(xpad, w, dilation):
    b, tp, cin = xpad.shape
    cout, _, k = w.shape
    t = tp - (k - 1) * dilation
    y = np.zeros((b, t, cout), dtype=xpad.dtype)
    for bi in range(b):
        for ti in range(t):
            for o in range(cout):
                acc = 0.0
                for j in range(k):
                    src = ti + j * dilation
                    for ci in range(cin):
                        acc += xpad[bi, src, ci] * w[o, ci, j]
                y[bi, ti, o] = acc
    return y


def causal_conv1d_bwd_numpy(xpad, w, dilation, gy):
    b, tp, cin = xpad.shape
    cout, _, k = w.shape
    t = gy.shape[1]
    gxpad = np.zeros_like(xpad)
    gw = np.zeros_like(w)
    for j in range(k):
        off = j * dilation
        xs = xpad[:, off : off + t, :]
        gw[:, :, j] = np.einsum("bto,btc->oc", gy, xs)
        gxpad[:, off : off + t, :] += gy @ w[:, :, j]
    return gxpad, gw


@njit(cache=True)
def causal_conv1d_bwd_numba(xpad, w, dilation, gy):
    b, tp, cin = xpad.shape
    cout, _, k = w.shape
    t = gy.shape[1]
    gxpad = np.zeros_like(xpad)
    gw = np.zeros_like(w)
    for bi in range(b):
        for ti in range(t):
            for o in range(cout):
                g = gy[bi, ti, o]
                if g == 0.0:
                    continue
                for j in range(k):
                    src = ti + j * dilation
                    for ci in range(cin):
                        gxpad[bi, src, ci] += g * w[o, ci, j]
                        gw[o, ci, j] += g * xpad[bi, src, ci]
    return gxpad, gw


def causal_conv1d_fwd(xpad, w, dilation):
    if USE_NUMBA:
        return causal_conv1d_fwd_numba(xpad, w, dilation)
    return causal_conv1d_fwd_numpy(xpad, w, dilation)


def causal_conv1d_bwd(xpad, w, dilation, gy):
    if USE_NUMBA:
        return causal_conv1d_bwd_numba(xpad, w, dilation, gy)
    return causal_conv1d_bwd_numpy(xpad, w, dilation, gy)


# ---------------------------------------------------------------------------
# diagonal-covariance Gaussian mixture: joint log density per (row, component)


def gmm_log_joint_numpy(x, means, inv_vars, log_norms):
    diff = x[:, None, :] - means[None, :, :]
    maha = np.sum(diff * diff * inv_vars[None, :, :], axis=2)
    return log_norms[None, :] - 0.5 * maha


@njit(cache=True)
def gmm_log_joint_numba(x, means, inv_vars, log_norms):
    n, d = x.shape
    k = means.shape[0]
    out = np.empty((n, k), dtype=x.dtype)
    for i in range(n):
        for c in range(k):
            maha = 0.0
            for j in range(d):
                diff = x[i, j] - means[c, j]
                maha += diff * diff * inv_vars[c, j]
            out[i, c] = log_norms[c] - 0.5 * maha
    return out


def gmm_log_joint(x, means, inv_vars, log_norms):
    if USE_NUMBA:
        return gmm_log_joint_numba(x, means, inv_vars, log_norms)
    return gmm_log_joint_numpy(x, means, inv_vars, log_norms)


# ---------------------------------------------------------------------------
# per-window mean squared error over flattened (window x feature) blocks


def window_mse_numpy(pred, target):
    diff = pred - target
    return np.mean(diff * diff, axis=1)


@njit(cache=True)
def window_mse_numba(pred, target):
    n, m = pred.shape
    out = np.empty(n, dtype=pred.dtype)
    for i in range(n):
        acc = 0.0
        for j in range(m):
            diff = pred[i, j] - target[i, j]
            acc += diff * diff
        out[i] = acc / m
    return out


def window_mse(pred, target):
    if USE_NUMBA:
        return window_mse_numba(pred, target)
    return window_mse_numpy(pred, target)


# ---------------------------------------------------------------------------
# empirical tail probabilities against sorted reference columns


def ecod_tails_numpy(sorted_ref, probes):
    n = sorted_ref.shape[0]
    le = np.searchsorted(sorted_ref, probes, side="right")
    ge = n - np.searchsorted(sorted_ref, probes, side="left")
    lo = 1.0 / (n + 1.0)
    left = np.clip(le / n, lo, 1.0)
    right = np.clip(ge / n, lo, 1.0)
    return left, right


@njit(cache=True)
def ecod_tails_numba(sorted_ref, probes):
    n = sorted_ref.shape[0]
    m = probes.shape[0]
    left = np.empty(m, dtype=probes.dtype)
    right = np.empty(m, dtype=probes.dtype)
    lo = 1.0 / (n + 1.0)
    for i in range(m):
        le = np.searchsorted(sorted_ref, probes[i], side="right")
        ge = n - np.searchsorted(sorted_ref, probes[i], side="left")
        pl = le / n
        pr = ge / n
        left[i] = min(max(pl, lo), 1.0)
        right[i] = min(max(pr, lo), 1.0)
    return left, right


def ecod_tails(sorted_ref, probes):
    if USE_NUMBA:
        return ecod_tails_numba(sorted_ref, probes)
    return ecod_tails_numpy(sorted_ref, probes)
