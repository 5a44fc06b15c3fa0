"""Shared test utilities: the central finite-difference gradient oracle."""

import numpy as np

from prescient import ndtensor as nd


def numeric_grad(f, arrays, which, eps=1e-5):
    """Central-difference gradient of scalar f(arrays) w.r.t. arrays[which]."""
    base = [a.copy() for a in arrays]
    g = np.zeros_like(base[which])
    flat = base[which].reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(base)
        flat[i] = orig - eps
        fm = f(base)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def rel_err(a, b):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return np.max(np.abs(a - b) / denom) if a.size else 0.0


def gradcheck(build, arrays, eps=1e-5, tol=1e-4, seed=0):
    """Compare analytic gradients of a scalar graph against central differences.

    build(tensors) must return a scalar Tensor from the given leaf tensors;
    it is re-invoked on perturbed copies for the numeric side, so it must be
    a pure function of its inputs.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    tensors = [nd.Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build(tensors)
    nd.backward(loss)

    def f_at(mod):
        probe = [nd.Tensor(m.copy(), requires_grad=False) for m in mod]
        return float(build(probe).data)

    worst = 0.0
    for i, t in enumerate(tensors):
        assert t.grad is not None, f"input {i} missing grad after backward"
        num = numeric_grad(f_at, arrays, i, eps=eps)
        worst = max(worst, rel_err(t.grad, num))
    assert worst < tol, f"gradient mismatch: max rel err {worst:.3e} >= {tol}"
    return worst


def linear_probe(out, rng):
    """Fixed random linear functional, turning any output into a scalar loss."""
    r = rng.standard_normal(out.shape)
    return nd.sum_all(nd.mul(out, nd.Tensor(r)))
